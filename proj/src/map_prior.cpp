#include "treecat/map_prior.hpp"

#include "io_util.hpp"
#include "treecat/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

namespace treecat {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

fs::path sidecar(const fs::path& p) { return fs::path(p.string() + ".json"); }

json geometry_json(const RasterGeometry& g, Eigen::Index rows, Eigen::Index cols) {
  return {{"origin_x", g.origin_x}, {"origin_y", g.origin_y}, {"zoom", g.zoom},
          {"width", cols},          {"height", rows}};
}

RasterGeometry geometry_from(const json& doc, const std::string& where, Eigen::Index& rows, Eigen::Index& cols) {
  RasterGeometry g;
  g.origin_x = detail::json_field<std::int64_t>(doc, "origin_x", where);
  g.origin_y = detail::json_field<std::int64_t>(doc, "origin_y", where);
  g.zoom = detail::json_field<int>(doc, "zoom", where);
  cols = detail::json_field<Eigen::Index>(doc, "width", where);
  rows = detail::json_field<Eigen::Index>(doc, "height", where);
  if (rows <= 0 || cols <= 0) throw Error(Errc::ParseError, where + ": raster dimensions must be positive");
  return g;
}

// Half-width of the disk at vertical offset dy.
std::vector<int> disk_spans(int radius) {
  std::vector<int> spans(2 * radius + 1);
  for (int dy = -radius; dy <= radius; ++dy) {
    spans[dy + radius] = static_cast<int>(std::floor(std::sqrt(double(radius) * radius - double(dy) * dy)));
  }
  return spans;
}

// 1-D squared distance to the nearest site along a line; sites carry
// finite costs f, all others are +inf. Lower envelope of parabolas.
void envelope_1d(const std::vector<double>& f, std::vector<double>& out, std::vector<int>& v,
                 std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  auto intersect = [&](int q, int p) {
    return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
  };
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s = intersect(q, v[k]);
    while (s <= z[k]) {
      --k;
      s = intersect(q, v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  if (k < 0) {
    std::fill(out.begin(), out.end(), kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double d = double(q) - v[j];
    out[q] = d * d + f[v[j]];
  }
}

}  // namespace

Mask dilate(const Mask& mask, int radius) {
  if (radius <= 0) return mask;
  const Eigen::Index rows = mask.rows();
  const Eigen::Index cols = mask.cols();
  const auto spans = disk_spans(radius);
  // Horizontal dilation of each row for every distinct half-width, via
  // prefix counts.
  std::vector<int> prefix(cols + 1);
  Mask out = Mask::Constant(rows, cols, false);
  std::vector<Mask> widened(radius + 1);
  for (int hw = 0; hw <= radius; ++hw) widened[hw].resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    prefix[0] = 0;
    for (Eigen::Index c = 0; c < cols; ++c) prefix[c + 1] = prefix[c] + (mask(r, c) ? 1 : 0);
    for (int hw = 0; hw <= radius; ++hw) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, c - hw);
        const Eigen::Index hi = std::min<Eigen::Index>(cols - 1, c + hw);
        widened[hw](r, c) = prefix[hi + 1] - prefix[lo] > 0;
      }
    }
  }
  for (int dy = -radius; dy <= radius; ++dy) {
    const Mask& src = widened[spans[dy + radius]];
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Eigen::Index sr = r + dy;
      if (sr < 0 || sr >= rows) continue;
      out.row(r) = out.row(r) || src.row(sr);
    }
  }
  return out;
}

Mask erode(const Mask& mask, int radius) {
  if (radius <= 0) return mask;
  return !dilate(!mask, radius);
}

Mask binarize_roads(const MapRaster& raster, int open_radius, int close_radius) {
  const Mask white = raster.values == kRoadGray;
  return close_mask(open_mask(white, open_radius), close_radius);
}

DistanceGrid squared_distance_transform(const Mask& mask) {
  const Eigen::Index rows = mask.rows();
  const Eigen::Index cols = mask.cols();
  DistanceGrid column_pass(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    double gap = kInf;
    for (Eigen::Index r = 0; r < rows; ++r) {
      gap = mask(r, c) ? 0.0 : gap + 1.0;
      column_pass(r, c) = gap;
    }
    gap = kInf;
    for (Eigen::Index r = rows - 1; r >= 0; --r) {
      gap = mask(r, c) ? 0.0 : gap + 1.0;
      column_pass(r, c) = std::min(column_pass(r, c), gap);
    }
  }
  DistanceGrid out(rows, cols);
  std::vector<double> f(cols), line(cols), z(cols + 1);
  std::vector<int> v(cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double g = column_pass(r, c);
      f[c] = std::isfinite(g) ? g * g : kInf;
    }
    envelope_1d(f, line, v, z);
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = line[c];
  }
  return out;
}

DistanceField distance_transform(const Mask& mask, const RasterGeometry& geometry, double pixel_size_m) {
  if (mask.size() == 0) throw Error(Errc::InvalidArgument, "empty mask");
  if (!(pixel_size_m > 0.0)) throw Error(Errc::InvalidArgument, "pixel size must be positive");
  DistanceField field;
  field.geometry = geometry;
  field.pixel_size_m = pixel_size_m;
  field.no_roads = !mask.any();
  field.values = squared_distance_transform(mask).sqrt() * pixel_size_m;
  return field;
}

double raster_pixel_size(const RasterGeometry& geometry, Eigen::Index rows) {
  const double center_y = double(geometry.origin_y) + 0.5 * double(rows);
  const double center_x = double(geometry.origin_x);
  const GeoPoint c = mercator_pixel_to_geo(PixelPoint(std::max(0.0, center_x), center_y), geometry.zoom);
  return meters_per_pixel(c.lat, geometry.zoom);
}

double road_distance_at(const DistanceField& field, const GeoPoint& t) {
  const PixelPoint p = mercator_geo_to_pixel(t, field.geometry.zoom);
  const double u = p.x() - double(field.geometry.origin_x) - 0.5;
  const double v = p.y() - double(field.geometry.origin_y) - 0.5;
  const Eigen::Index rows = field.values.rows();
  const Eigen::Index cols = field.values.cols();
  if (!(u >= -0.5 && u <= double(cols) - 0.5 && v >= -0.5 && v <= double(rows) - 0.5)) {
    throw Error(Errc::OutsideExtent, "point (" + detail::format_double(rad2deg(t.lat)) + ", " +
                                         detail::format_double(rad2deg(t.lng)) + ") lies outside the road field");
  }
  const double uc = std::clamp(u, 0.0, double(cols - 1));
  const double vc = std::clamp(v, 0.0, double(rows - 1));
  const Eigen::Index c0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(uc), std::max<Eigen::Index>(cols - 2, 0));
  const Eigen::Index r0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(vc), std::max<Eigen::Index>(rows - 2, 0));
  const Eigen::Index c1 = std::min(c0 + 1, cols - 1);
  const Eigen::Index r1 = std::min(r0 + 1, rows - 1);
  const double fu = uc - double(c0);
  const double fv = vc - double(r0);
  const double w[4] = {(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv};
  const double val[4] = {field.values(r0, c0), field.values(r0, c1), field.values(r1, c0), field.values(r1, c1)};
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (w[i] == 0.0) continue;
    if (!std::isfinite(val[i])) return kInf;
    acc += w[i] * val[i];
  }
  return acc;
}

MapRaster read_map_raster(const fs::path& pgm_path) {
  Eigen::Index rows = 0, cols = 0;
  MapRaster raster;
  raster.geometry = geometry_from(detail::read_json_file(sidecar(pgm_path)), sidecar(pgm_path).string(), rows, cols);

  auto in = detail::open_input(pgm_path, true);
  std::string magic;
  in >> magic;
  auto next_int = [&]() {
    while (true) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string comment;
        std::getline(in, comment);
        continue;
      }
      long v = -1;
      in >> v;
      return v;
    }
  };
  const long w = next_int();
  const long h = next_int();
  const long maxval = next_int();
  if (magic != "P5" || w <= 0 || h <= 0 || maxval != 255) {
    throw Error(Errc::ParseError, pgm_path.string() + ": expected an 8-bit binary PGM (P5)");
  }
  if (w != cols || h != rows) {
    throw Error(Errc::ParseError, pgm_path.string() + ": size disagrees with its sidecar");
  }
  in.get();  // single whitespace before the payload
  raster.values.resize(rows, cols);
  in.read(reinterpret_cast<char*>(raster.values.data()), rows * cols);
  if (in.gcount() != rows * cols) throw Error(Errc::ParseError, pgm_path.string() + ": truncated payload");
  return raster;
}

void write_map_raster(const fs::path& pgm_path, const MapRaster& raster) {
  const auto rows = raster.values.rows();
  const auto cols = raster.values.cols();
  {
    auto out = detail::open_output(pgm_path, true);
    out << "P5\n" << cols << ' ' << rows << "\n255\n";
    out.write(reinterpret_cast<const char*>(raster.values.data()), rows * cols);
    if (!out) throw Error(Errc::IoError, "failed writing '" + pgm_path.string() + "'");
  }
  detail::write_json_file(sidecar(pgm_path), geometry_json(raster.geometry, rows, cols));
}

DistanceField read_distance_field(const fs::path& bin_path) {
  Eigen::Index rows = 0, cols = 0;
  const json doc = detail::read_json_file(sidecar(bin_path));
  DistanceField field;
  field.geometry = geometry_from(doc, sidecar(bin_path).string(), rows, cols);
  field.pixel_size_m = detail::json_field<double>(doc, "pixel_size_m", sidecar(bin_path).string());
  field.no_roads = doc.value("no_roads", false);
  auto in = detail::open_input(bin_path, true);
  const auto values = detail::read_le<float>(in, std::size_t(rows * cols), bin_path.string());
  field.values = Eigen::Map<const DistanceGrid>(values.data(), rows, cols);
  return field;
}

void write_distance_field(const fs::path& bin_path, const DistanceField& field) {
  const auto rows = field.values.rows();
  const auto cols = field.values.cols();
  {
    auto out = detail::open_output(bin_path, true);
    detail::write_le<float>(out, std::span<const double>(field.values.data(), std::size_t(rows * cols)));
    if (!out) throw Error(Errc::IoError, "failed writing '" + bin_path.string() + "'");
  }
  json doc = geometry_json(field.geometry, rows, cols);
  doc["pixel_size_m"] = field.pixel_size_m;
  doc["no_roads"] = field.no_roads;
  doc["encoding"] = "float32-le";
  detail::write_json_file(sidecar(bin_path), doc);
}

}  // namespace treecat
