#include "test_util.hpp"
#include "treecat/error.hpp"
#include "treecat/map_prior.hpp"

#include <doctest.h>

#include <random>

using namespace treecat;
using treecat::test::TempDir;

namespace {

Mask random_mask(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double density) {
  std::bernoulli_distribution on(density);
  Mask m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = on(rng);
  return m;
}

DistanceGrid brute_force_sq(const Mask& m) {
  DistanceGrid out = DistanceGrid::Constant(m.rows(), m.cols(), std::numeric_limits<double>::infinity());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index rr = 0; rr < m.rows(); ++rr) {
        for (Eigen::Index cc = 0; cc < m.cols(); ++cc) {
          if (!m(rr, cc)) continue;
          const double d = double((r - rr) * (r - rr) + (c - cc) * (c - cc));
          out(r, c) = std::min(out(r, c), d);
        }
      }
    }
  }
  return out;
}

// Same clipped-disk rule as the library, written out naively.
Mask brute_dilate(const Mask& m, int radius) {
  Mask out = Mask::Constant(m.rows(), m.cols(), false);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
          if (dr * dr + dc * dc > radius * radius) continue;
          const Eigen::Index rr = r + dr, cc = c + dc;
          if (rr >= 0 && rr < m.rows() && cc >= 0 && cc < m.cols() && m(rr, cc)) out(r, c) = true;
        }
      }
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("map_prior") {

TEST_CASE("distance transform equals brute force on random masks") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> density(0.005, 0.3);
  int mismatches = 0;
  for (int k = 0; k < 200; ++k) {
    const Mask m = random_mask(rng, 64, 64, density(rng));
    if ((squared_distance_transform(m) != brute_force_sq(m)).any()) ++mismatches;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("distance transform of degenerate masks") {
  const Mask empty = Mask::Constant(5, 7, false);
  CHECK(squared_distance_transform(empty).isInf().all());
  const DistanceField f = distance_transform(empty, {}, 0.5);
  CHECK(f.no_roads);

  const Mask full = Mask::Constant(4, 4, true);
  CHECK((squared_distance_transform(full) == 0.0).all());

  Mask single = Mask::Constant(1, 9, false);
  single(0, 4) = true;
  const DistanceGrid d = squared_distance_transform(single);
  CHECK(d(0, 0) == 16.0);
  CHECK(d(0, 8) == 16.0);
  CHECK_THROWS_AS(distance_transform(Mask(0, 0), {}, 1.0), Error);
  CHECK_THROWS_AS(distance_transform(single, {}, 0.0), Error);
}

TEST_CASE("field is idempotent on its own zero set") {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 20; ++k) {
    const Mask m = random_mask(rng, 40, 50, 0.05);
    const DistanceGrid d = squared_distance_transform(m);
    const Mask zeros = d == 0.0;
    CHECK((zeros == m).all());
    CHECK((squared_distance_transform(zeros) == d).all());
  }
}

TEST_CASE("dilation matches the clipped disk") {
  std::mt19937_64 rng(21);
  for (int radius : {0, 1, 2, 3, 5}) {
    const Mask m = random_mask(rng, 30, 37, 0.03);
    CHECK((dilate(m, radius) == brute_dilate(m, radius)).all());
    // Erosion is the dual of dilation.
    CHECK((erode(m, radius) == !dilate(!m, radius)).all());
  }
}

TEST_CASE("opening and closing are idempotent") {
  std::mt19937_64 rng(34);
  for (int k = 0; k < 10; ++k) {
    const Mask m = random_mask(rng, 48, 48, 0.4);
    const Mask opened = open_mask(m, 3);
    const Mask closed = close_mask(m, 5);
    CHECK((open_mask(opened, 3) == opened).all());
    CHECK((close_mask(closed, 5) == closed).all());
    const Mask both = close_mask(open_mask(m, 3), 5);
    CHECK((close_mask(open_mask(both, 3), 5) == both).all());
  }
}

TEST_CASE("road binarization drops speckles and fills text") {
  MapRaster raster;
  raster.values = GrayImage::Constant(60, 80, 200);
  raster.values.block(15, 0, 30, 80).setConstant(kRoadGray);  // horizontal road
  raster.values.block(28, 30, 4, 10).setConstant(40);         // street name
  raster.values.block(5, 5, 2, 2).setConstant(kRoadGray);     // map symbol
  const Mask roads = binarize_roads(raster);
  CHECK(roads.block(15, 0, 30, 80).all());
  CHECK_FALSE(roads.block(0, 0, 12, 80).any());
  CHECK_FALSE(roads.block(48, 0, 12, 80).any());
}

TEST_CASE("road distance sampling") {
  MapRaster raster;
  raster.geometry = {1000, 2000, 18};
  raster.values = GrayImage::Constant(50, 50, 0);
  raster.values.col(10).setConstant(kRoadGray);
  Mask m = raster.values == kRoadGray;
  const DistanceField f = distance_transform(m, raster.geometry, 2.0);
  auto geo_at = [&](double col, double row) {
    return mercator_pixel_to_geo({double(raster.geometry.origin_x) + col, double(raster.geometry.origin_y) + row}, 18);
  };
  // Pixel centers sit at +0.5.
  CHECK(road_distance_at(f, geo_at(10.5, 25.5)) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(road_distance_at(f, geo_at(13.5, 25.5)) == doctest::Approx(6.0).epsilon(1e-6));
  CHECK(road_distance_at(f, geo_at(14.0, 25.5)) == doctest::Approx(7.0).epsilon(1e-6));
  try {
    road_distance_at(f, geo_at(-3.0, 10.0));
    FAIL("expected OutsideExtent");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::OutsideExtent);
  }
}

TEST_CASE("pixel size of a raster follows its center latitude") {
  const GeoPoint pasadena = GeoPoint::from_degrees(34.1478, -118.1445);
  const PixelPoint p = mercator_geo_to_pixel(pasadena, 18);
  const RasterGeometry g{std::int64_t(p.x()) - 100, std::int64_t(p.y()) - 100, 18};
  CHECK(raster_pixel_size(g, 200) == doctest::Approx(meters_per_pixel(pasadena.lat, 18)).epsilon(1e-6));
}

TEST_CASE("raster and field files round trip") {
  TempDir dir;
  std::mt19937_64 rng(4);
  MapRaster raster;
  raster.geometry = {123, 456, 17};
  raster.values.resize(13, 21);
  std::uniform_int_distribution<int> byte(0, 255);
  for (Eigen::Index i = 0; i < raster.values.size(); ++i) raster.values.data()[i] = std::uint8_t(byte(rng));
  write_map_raster(dir / "m.pgm", raster);
  const MapRaster back = read_map_raster(dir / "m.pgm");
  CHECK(back.geometry == raster.geometry);
  CHECK((back.values == raster.values).all());

  const DistanceField f = distance_transform(random_mask(rng, 13, 21, 0.1), raster.geometry, 0.6);
  write_distance_field(dir / "f.bin", f);
  const DistanceField g = read_distance_field(dir / "f.bin");
  CHECK(g.geometry == f.geometry);
  CHECK(g.pixel_size_m == f.pixel_size_m);
  CHECK((g.values - f.values.cast<float>().cast<double>()).abs().maxCoeff() == 0.0);

  treecat::test::write_text(dir / "f.bin", "abc");
  CHECK_THROWS_AS(read_distance_field(dir / "f.bin"), Error);
}

}  // TEST_SUITE
