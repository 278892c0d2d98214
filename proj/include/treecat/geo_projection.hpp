#pragma once

// Transforms between geographic coordinates, local East-North-Up frames,
// global Web Mercator pixels and equirectangular panorama pixels.
//
// All angles are radians. Mercator pixels live in the global frame of a
// zoom level (256 * 2^zoom pixels square); tiles are 256x256 windows of it.
// Panorama rows grow downward from the zenith (row 0) to the nadir (row H).

#include <Eigen/Core>

#include <cmath>
#include <numbers>
#include <string>

namespace treecat {

inline constexpr double kPi = std::numbers::pi;

/// WGS84 equatorial radius, used as the spherical earth radius.
inline constexpr double kEarthRadius = 6378137.0;

/// Largest latitude representable in Web Mercator, atan(sinh(pi)).
inline constexpr double kMaxMercatorLat = 1.4844222297453324;

inline constexpr int kMaxZoom = 23;

inline constexpr double kAerialBoxPx = 100.0;
inline constexpr double kStreetObjectWidthM = 8.0;
inline constexpr double kStreetObjectHeightM = 12.0;

inline constexpr double deg2rad(double deg) { return deg * (kPi / 180.0); }
inline constexpr double rad2deg(double rad) { return rad * (180.0 / kPi); }

/// Degree value whose deg2rad() is bit-identical to `rad` when one exists
/// within a few ulps of the naive conversion. Used by writers so that text
/// files in degrees reload to the exact same radians.
double exact_degrees(double rad);

/// Wraps a longitude into [-pi, pi).
double wrap_longitude(double lng);

struct GeoPoint {
  double lat = 0.0;
  double lng = 0.0;

  static GeoPoint from_degrees(double lat_deg, double lng_deg) {
    return {deg2rad(lat_deg), deg2rad(lng_deg)};
  }
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

/// Nearest point (within a few ulps) that survives a trip through degree
/// text unchanged. Computed positions are snapped with it before they can
/// reach a file.
GeoPoint degree_representable(const GeoPoint& g);

using EnuVector = Eigen::Vector3d;
using PixelPoint = Eigen::Vector2d;

/// Axis-aligned box given by its center and extent, in pixels.
struct PixelBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  PixelPoint center() const { return {x, y}; }
  /// Ground-contact pixel of an upright object.
  PixelPoint bottom_center() const { return {x, y + 0.5 * h}; }
  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

/// Pose of a full equirectangular panorama.
struct CameraPose {
  std::string id;
  GeoPoint geo;
  double yaw = 0.0;       // clockwise from north, [0, 2pi)
  double height_m = 2.5;  // camera height above ground
  int width_px = 1664;
  int height_px = 832;
  std::string epoch;

  friend bool operator==(const CameraPose&, const CameraPose&) = default;
};

// --- Web Mercator ----------------------------------------------------------

/// Side length of the global pixel frame at `zoom`.
double mercator_frame_size(int zoom);

PixelPoint mercator_geo_to_pixel(const GeoPoint& p, int zoom);
GeoPoint mercator_pixel_to_geo(const PixelPoint& px, int zoom);

/// Ground size of one Mercator pixel at latitude `lat`.
double meters_per_pixel(double lat, int zoom);

// --- Local tangent frame ---------------------------------------------------

/// ENU offset of `target` relative to a ground point `origin`, for a sensor
/// `height_m` above the ground (the up component is -height_m).
EnuVector enu_from_geo(const GeoPoint& target, const GeoPoint& origin, double height_m);
EnuVector enu_from_geo(const GeoPoint& target, const CameraPose& cam);

GeoPoint geo_from_enu(const EnuVector& v, const GeoPoint& origin);
GeoPoint geo_from_enu(const EnuVector& v, const CameraPose& cam);

/// Planar metric frame around a fixed anchor. Distances between scene
/// objects are measured here so they are symmetric in their arguments.
class LocalFrame {
 public:
  LocalFrame() = default;
  explicit LocalFrame(const GeoPoint& anchor) : anchor_(anchor) {}

  const GeoPoint& anchor() const { return anchor_; }
  Eigen::Vector2d to_local(const GeoPoint& p) const;
  GeoPoint to_geo(const Eigen::Vector2d& xy) const;

 private:
  GeoPoint anchor_;
};

// --- Panoramas -------------------------------------------------------------

PixelPoint streetview_geo_to_pixel(const GeoPoint& target, const CameraPose& cam);

/// Back-projects a pixel below the horizon onto the flat ground plane.
GeoPoint streetview_pixel_to_geo(const PixelPoint& px, const CameraPose& cam);

// --- Training box conventions ----------------------------------------------

/// Fixed 100x100 px box centered at the Mercator projection.
PixelBox make_aerial_box(const GeoPoint& target, int zoom);

/// Box occupied by an 8 m wide, 12 m tall upright object standing at
/// `target`: columns span the azimuths of the ground points 4 m to either
/// side of the line of sight, rows span ground level to 12 m above it.
PixelBox make_street_box(const GeoPoint& target, const CameraPose& cam);

}  // namespace treecat
