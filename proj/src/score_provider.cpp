#include "treecat/score_provider.hpp"

#include "treecat/error.hpp"

#include <algorithm>
#include <cmath>

namespace treecat {
namespace {

void check_config(const ScoreProviderConfig& c) {
  if (!(c.sigma_px > 0.0) || !std::isfinite(c.floor)) {
    throw Error(Errc::InvalidArgument, "score provider needs sigma_px > 0 and a finite floor");
  }
}

double wrapped_dx(double dx, double wrap_width) {
  if (wrap_width <= 0.0) return dx;
  dx = std::fmod(std::abs(dx), wrap_width);
  return std::min(dx, wrap_width - dx);
}

double kernel_peak(double floor, double score, double dx, double dy, double sigma) {
  const double lift = score - floor;
  if (lift <= 0.0) return floor;
  return floor + lift * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

}  // namespace

FileBackedScoreProvider::FileBackedScoreProvider(const ViewIndex& index, std::span<const Proposal> proposals,
                                                 ScoreProviderConfig config)
    : config_(std::move(config)) {
  check_config(config_);
  views_[index.aerial().id] = View{};
  for (const auto& p : index.panoramas()) views_[p.id] = View{double(p.width_px), {}};
  for (const auto& p : proposals) {
    auto it = views_.find(p.view_id);
    if (it == views_.end()) throw Error(Errc::UnknownView, "proposal for unknown view '" + p.view_id + "'");
    it->second.peaks.push_back({p.box.x, p.box.y, p.score});
  }
}

double FileBackedScoreProvider::query_score(std::string_view view_id, const PixelBox& box) const {
  auto it = views_.find(std::string(view_id));
  if (it == views_.end()) throw Error(Errc::UnknownView, "no scores for view '" + std::string(view_id) + "'");
  const View& view = it->second;
  double best = config_.floor;
  for (const Peak& p : view.peaks) {
    const double dx = wrapped_dx(box.x - p.x, view.wrap_width);
    best = std::max(best, kernel_peak(config_.floor, p.score, dx, box.y - p.y, config_.sigma_px));
  }
  return best;
}

PlantedScoreProvider::PlantedScoreProvider(const ViewIndex& index, std::vector<PlantedObject> objects,
                                           ScoreProviderConfig config)
    : index_(&index), objects_(std::move(objects)), config_(std::move(config)) {
  check_config(config_);
}

double PlantedScoreProvider::query_score(std::string_view view_id, const PixelBox& box) const {
  double best = config_.floor;
  if (index_->is_aerial(view_id)) {
    const int zoom = index_->aerial().zoom;
    for (const auto& o : objects_) {
      const PixelPoint c = mercator_geo_to_pixel(o.geo, zoom);
      best = std::max(best, kernel_peak(config_.floor, o.aerial_score, box.x - c.x(), box.y - c.y(),
                                        config_.sigma_px));
    }
    return best;
  }
  const CameraPose* cam = index_->find_panorama(view_id);
  if (cam == nullptr) throw Error(Errc::UnknownView, "no scores for view '" + std::string(view_id) + "'");
  const PixelPoint query = box.bottom_center();
  for (const auto& o : objects_) {
    const EnuVector e = enu_from_geo(o.geo, *cam);
    if (std::hypot(e.x(), e.y()) == 0.0) continue;
    const PixelPoint c = make_street_box(o.geo, *cam).bottom_center();
    const double dx = wrapped_dx(query.x() - c.x(), cam->width_px);
    best = std::max(best, kernel_peak(config_.floor, o.street_score, dx, query.y() - c.y(), config_.sigma_px));
  }
  return best;
}

}  // namespace treecat
