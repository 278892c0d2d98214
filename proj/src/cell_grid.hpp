#pragma once

// Uniform bucket grid over planar points for fixed-radius neighbor queries.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

namespace treecat::detail {

class CellGrid {
 public:
  explicit CellGrid(double cell) : cell_(cell) {}

  void insert(std::size_t i, const Eigen::Vector2d& p) { cells_[pack(cell_of(p.x()), cell_of(p.y()))].push_back(i); }

  /// Visits every item in the (2 reach + 1)^2 block of cells around `p`;
  /// with reach r this covers all items closer than r cell sizes.
  template <typename F>
  void for_each_near(const Eigen::Vector2d& p, int reach, F&& f) const {
    const std::int64_t cx = cell_of(p.x()), cy = cell_of(p.y());
    for (std::int64_t dx = -reach; dx <= reach; ++dx) {
      for (std::int64_t dy = -reach; dy <= reach; ++dy) {
        auto it = cells_.find(pack(cx + dx, cy + dy));
        if (it == cells_.end()) continue;
        for (std::size_t i : it->second) f(i);
      }
    }
  }

 private:
  std::int64_t cell_of(double v) const { return std::int64_t(std::floor(v / cell_)); }
  static std::int64_t pack(std::int64_t cx, std::int64_t cy) { return (cx << 32) ^ (cy & 0xffffffffLL); }

  double cell_;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> cells_;
};

}  // namespace treecat::detail
