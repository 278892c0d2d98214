#pragma once

// Road rasters and the distance-to-road field used by the map potential.
//
// Rasters are windows of the global Mercator pixel frame at their own zoom
// level; row r, column c covers global pixel (origin_x + c, origin_y + r).

#include "treecat/geo_projection.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>

namespace treecat {

template <typename T>
using RasterArray = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using GrayImage = RasterArray<std::uint8_t>;
using Mask = RasterArray<bool>;
using DistanceGrid = RasterArray<double>;

struct RasterGeometry {
  std::int64_t origin_x = 0;
  std::int64_t origin_y = 0;
  int zoom = 18;

  friend bool operator==(const RasterGeometry&, const RasterGeometry&) = default;
};

struct MapRaster {
  RasterGeometry geometry;
  GrayImage values;
};

struct DistanceField {
  RasterGeometry geometry;
  double pixel_size_m = 1.0;
  DistanceGrid values;   // meters; +inf everywhere when no_roads
  bool no_roads = false;
};

inline constexpr std::uint8_t kRoadGray = 255;
inline constexpr int kDefaultOpenRadius = 3;
inline constexpr int kDefaultCloseRadius = 5;

/// Pixels within Euclidean distance `radius` of the center, inclusive.
/// Neighborhoods are clipped to the raster: pixels outside neither add nor
/// remove support.
Mask dilate(const Mask& mask, int radius);
Mask erode(const Mask& mask, int radius);
inline Mask open_mask(const Mask& m, int radius) { return dilate(erode(m, radius), radius); }
inline Mask close_mask(const Mask& m, int radius) { return erode(dilate(m, radius), radius); }

/// White (255) pixels, opened to drop small symbols and then closed to
/// fill text printed on roads.
Mask binarize_roads(const MapRaster& raster, int open_radius = kDefaultOpenRadius,
                    int close_radius = kDefaultCloseRadius);

/// Exact squared Euclidean distance, in pixels^2, to the nearest true pixel
/// (separable lower-envelope transform). +inf when the mask is empty.
DistanceGrid squared_distance_transform(const Mask& mask);

DistanceField distance_transform(const Mask& mask, const RasterGeometry& geometry, double pixel_size_m);

/// Ground size of a pixel at the raster's center row.
double raster_pixel_size(const RasterGeometry& geometry, Eigen::Index rows);

/// Bilinear sample of the field at the Mercator position of `t`. Points in
/// the outer half-pixel rim use the nearest edge samples.
double road_distance_at(const DistanceField& field, const GeoPoint& t);

// PGM (P5) raster with a JSON sidecar "<path>.json" holding the geometry.
MapRaster read_map_raster(const std::filesystem::path& pgm_path);
void write_map_raster(const std::filesystem::path& pgm_path, const MapRaster& raster);

// Little-endian float32 grid with a JSON sidecar "<path>.json".
DistanceField read_distance_field(const std::filesystem::path& bin_path);
void write_distance_field(const std::filesystem::path& bin_path, const DistanceField& field);

}  // namespace treecat
