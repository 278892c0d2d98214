#include "treecat/geo_projection.hpp"

#include "treecat/error.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace treecat {
namespace {

constexpr double kTwoPi = 2.0 * kPi;

void check_zoom(int zoom) {
  if (zoom < 0 || zoom > kMaxZoom) {
    throw Error(Errc::InvalidZoom, "zoom " + std::to_string(zoom) + " outside [0, 23]");
  }
}

std::string describe(const GeoPoint& p) {
  std::ostringstream os;
  os.precision(17);
  os << "(lat=" << p.lat << ", lng=" << p.lng << ")";
  return os.str();
}

double column_for_azimuth(double azimuth, const CameraPose& cam) {
  const double width = cam.width_px;
  double x = std::fmod((kPi + azimuth - cam.yaw) * width / kTwoPi, width);
  if (x < 0.0) x += width;
  if (x >= width) x -= width;
  return x;
}

double row_for_elevation(double up, double range, const CameraPose& cam) {
  return (kPi / 2.0 - std::atan2(up, range)) * cam.height_px / kPi;
}

void check_panorama(const CameraPose& cam) {
  if (cam.width_px <= 0 || cam.height_px <= 0 || !(cam.height_m > 0.0)) {
    throw Error(Errc::InvalidArgument, "panorama '" + cam.id + "' has non-positive size or height");
  }
}

}  // namespace

double exact_degrees(double rad) {
  const double naive = rad2deg(rad);
  if (deg2rad(naive) == rad) return naive;
  double up = naive;
  double down = naive;
  for (int i = 0; i < 8; ++i) {
    up = std::nextafter(up, std::numeric_limits<double>::infinity());
    if (deg2rad(up) == rad) return up;
    down = std::nextafter(down, -std::numeric_limits<double>::infinity());
    if (deg2rad(down) == rad) return down;
  }
  return naive;
}

GeoPoint degree_representable(const GeoPoint& g) {
  return GeoPoint::from_degrees(exact_degrees(g.lat), exact_degrees(g.lng));
}

double wrap_longitude(double lng) {
  if (lng >= -kPi && lng < kPi) return lng;
  double w = std::fmod(lng + kPi, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  w -= kPi;
  return w >= kPi ? w - kTwoPi : w;
}

double mercator_frame_size(int zoom) {
  check_zoom(zoom);
  return 256.0 * std::ldexp(1.0, zoom);
}

PixelPoint mercator_geo_to_pixel(const GeoPoint& p, int zoom) {
  const double scale = mercator_frame_size(zoom);
  if (!(std::abs(p.lat) <= kMaxMercatorLat) || !std::isfinite(p.lng)) {
    throw Error(Errc::LatOutOfMercatorBand, describe(p));
  }
  const double x = scale * (p.lng + kPi) / kTwoPi;
  const double y = scale * (0.5 - std::log(std::tan(kPi / 4.0 + p.lat / 2.0)) / kTwoPi);
  return {x, y};
}

GeoPoint mercator_pixel_to_geo(const PixelPoint& px, int zoom) {
  const double scale = mercator_frame_size(zoom);
  if (!(px.x() >= 0.0 && px.x() <= scale && px.y() >= 0.0 && px.y() <= scale)) {
    std::ostringstream os;
    os << "pixel (" << px.x() << ", " << px.y() << ") outside zoom-" << zoom << " frame";
    throw Error(Errc::PixelOutOfFrame, os.str());
  }
  const double half = scale / 2.0;  // 128 * 2^zoom
  GeoPoint g;
  g.lng = kPi * px.x() / half - kPi;
  g.lat = 2.0 * std::atan(std::exp(kPi - px.y() * kPi / half)) - kPi / 2.0;
  return g;
}

double meters_per_pixel(double lat, int zoom) {
  return kTwoPi * kEarthRadius * std::cos(lat) / mercator_frame_size(zoom);
}

EnuVector enu_from_geo(const GeoPoint& target, const GeoPoint& origin, double height_m) {
  return {kEarthRadius * std::cos(origin.lat) * std::sin(target.lng - origin.lng),
          kEarthRadius * std::sin(target.lat - origin.lat), -height_m};
}

EnuVector enu_from_geo(const GeoPoint& target, const CameraPose& cam) {
  return enu_from_geo(target, cam.geo, cam.height_m);
}

GeoPoint geo_from_enu(const EnuVector& v, const GeoPoint& origin) {
  const double north = v.y() / kEarthRadius;
  const double east = v.x() / (kEarthRadius * std::cos(origin.lat));
  if (!(std::abs(north) <= 1.0) || !(std::abs(east) <= 1.0)) {
    std::ostringstream os;
    os << "ENU offset (" << v.x() << ", " << v.y() << ") not invertible at " << describe(origin);
    throw Error(Errc::EnuOutOfRange, os.str());
  }
  return {origin.lat + std::asin(north), wrap_longitude(origin.lng + std::asin(east))};
}

GeoPoint geo_from_enu(const EnuVector& v, const CameraPose& cam) { return geo_from_enu(v, cam.geo); }

Eigen::Vector2d LocalFrame::to_local(const GeoPoint& p) const {
  return enu_from_geo(p, anchor_, 0.0).head<2>();
}

GeoPoint LocalFrame::to_geo(const Eigen::Vector2d& xy) const {
  return geo_from_enu(EnuVector(xy.x(), xy.y(), 0.0), anchor_);
}

PixelPoint streetview_geo_to_pixel(const GeoPoint& target, const CameraPose& cam) {
  check_panorama(cam);
  const EnuVector e = enu_from_geo(target, cam);
  const double range = std::hypot(e.x(), e.y());
  if (range == 0.0) {
    throw Error(Errc::ZeroRange, "target coincides with panorama '" + cam.id + "'");
  }
  return {column_for_azimuth(std::atan2(e.x(), e.y()), cam), row_for_elevation(e.z(), range, cam)};
}

GeoPoint streetview_pixel_to_geo(const PixelPoint& px, const CameraPose& cam) {
  check_panorama(cam);
  const double width = cam.width_px;
  const double height = cam.height_px;
  if (!(px.y() > height / 2.0)) {
    std::ostringstream os;
    os << "row " << px.y() << " is not below the horizon of panorama '" << cam.id << "'";
    throw Error(Errc::NoGroundIntersection, os.str());
  }
  if (!(px.y() <= height) || !std::isfinite(px.x())) {
    std::ostringstream os;
    os << "pixel (" << px.x() << ", " << px.y() << ") outside panorama '" << cam.id << "'";
    throw Error(Errc::PixelOutOfFrame, os.str());
  }
  const double azimuth = kTwoPi * px.x() / width - kPi + cam.yaw;
  const double tilt = kPi / 2.0 - kPi * px.y() / height;
  const double range = cam.height_m / std::tan(-tilt);
  return geo_from_enu(EnuVector(range * std::sin(azimuth), range * std::cos(azimuth), -cam.height_m), cam);
}

PixelBox make_aerial_box(const GeoPoint& target, int zoom) {
  const PixelPoint c = mercator_geo_to_pixel(target, zoom);
  return {c.x(), c.y(), kAerialBoxPx, kAerialBoxPx};
}

PixelBox make_street_box(const GeoPoint& target, const CameraPose& cam) {
  check_panorama(cam);
  const EnuVector e = enu_from_geo(target, cam);
  const double range = std::hypot(e.x(), e.y());
  if (range == 0.0) {
    throw Error(Errc::ZeroRange, "target coincides with panorama '" + cam.id + "'");
  }
  const double half_angle = std::atan(0.5 * kStreetObjectWidthM / range);
  const double bottom = row_for_elevation(-cam.height_m, range, cam);
  const double top = row_for_elevation(kStreetObjectHeightM - cam.height_m, range, cam);
  PixelBox box;
  box.x = column_for_azimuth(std::atan2(e.x(), e.y()), cam);
  box.w = 2.0 * half_angle * cam.width_px / kTwoPi;
  box.y = 0.5 * (top + bottom);
  box.h = bottom - top;
  return box;
}

}  // namespace treecat
