#include "test_util.hpp"
#include "treecat/error.hpp"
#include "treecat/pipeline.hpp"
#include "treecat/synth_bench.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace treecat;

namespace {

double segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double road_distance(const Eigen::Vector2d& p, const std::vector<Polyline>& roads) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& line : roads) {
    for (std::size_t i = 0; i + 1 < line.size(); ++i) best = std::min(best, segment_distance(p, line[i], line[i + 1]));
  }
  return best;
}

}  // namespace

TEST_SUITE("synth_bench") {

TEST_CASE("truncated normal stays in its bounds") {
  std::mt19937_64 rng(1);
  const TruncatedNormal t{7.5, 2.0, 4.0, 20.0};
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double v = t.sample(rng);
    CHECK(v >= 4.0);
    CHECK(v <= 20.0);
    sum += v;
  }
  CHECK(sum / 20000.0 > 7.5);  // the lower cut is closer to the mean
  CHECK(sum / 20000.0 < 8.5);
}

TEST_CASE("scenes and observations are deterministic per seed") {
  SynthConfig c;
  c.seed = 17;
  const SynthScene a = generate_scene(c), b = generate_scene(c);
  CHECK(a.trees == b.trees);
  CHECK(a.views.panoramas() == b.views.panoramas());
  CHECK((a.map.values == b.map.values).all());
  CHECK(generate_observations(a, c).proposals == generate_observations(b, c).proposals);
  c.seed = 18;
  CHECK(generate_scene(c).trees != a.trees);
}

TEST_CASE("trees sit beside the roads and apart from each other") {
  SynthConfig c;
  c.seed = 3;
  const SynthScene s = generate_scene(c);
  REQUIRE(s.trees.size() > 100);
  const LocalFrame frame(s.anchor);
  std::vector<Eigen::Vector2d> xy;
  for (const auto& t : s.trees) xy.push_back(frame.to_local(t.geo));
  const double half = 0.5 * c.road_width_m;
  for (std::size_t i = 0; i < xy.size(); ++i) {
    const double d = road_distance(xy[i], s.roads);
    CHECK(d >= half + c.offset.lo - 1e-6);
    CHECK(d <= half + c.offset.hi + 1e-6);
    for (std::size_t j = i + 1; j < xy.size(); ++j) CHECK((xy[i] - xy[j]).norm() >= c.min_tree_separation_m);
  }
}

TEST_CASE("rendered map agrees with the road geometry") {
  SynthConfig c;
  c.seed = 4;
  const SynthScene s = generate_scene(c);
  const DistanceField field = preprocess_map(s.map);
  const LocalFrame frame(s.anchor);
  const double half = 0.5 * c.road_width_m;
  for (const auto& t : s.trees) {
    const double truth = road_distance(frame.to_local(t.geo), s.roads) - half;
    CHECK(std::abs(road_distance_at(field, t.geo) - truth) < 2.0 * field.pixel_size_m);
  }
}

TEST_CASE("noise-free observations are one exact box per covering view") {
  const SynthConfig c = SynthConfig::noise_free(8);
  const SynthScene s = generate_scene(c);
  const SynthObservations obs = generate_observations(s, c);
  CHECK(obs.planted.size() == s.trees.size());
  std::size_t expected = 0;
  std::vector<Proposal> want;
  for (const auto& t : s.trees) {
    const PixelBox a = make_aerial_box(t.geo, s.views.aerial().zoom);
    if (s.views.aerial().contains(a.center())) want.push_back({s.views.aerial().id, a, 0.0});
    for (const auto& cam : s.views.panoramas()) {
      const EnuVector e = enu_from_geo(t.geo, cam);
      const double range = std::hypot(e.x(), e.y());
      if (range >= 0.5 && range <= c.street_range_m) want.push_back({cam.id, make_street_box(t.geo, cam), 0.0});
    }
  }
  expected = want.size();
  REQUIRE(obs.proposals.size() == expected);
  for (std::size_t i = 0; i < expected; ++i) {
    CHECK(obs.proposals[i].view_id == want[i].view_id);
    CHECK(obs.proposals[i].box == want[i].box);
    CHECK(obs.proposals[i].score >= c.true_score.lo);
  }
}

TEST_CASE("clutter and detection rate") {
  SynthConfig c;
  c.seed = 9;
  const SynthScene s = generate_scene(c);
  const SynthObservations obs = generate_observations(s, c);
  CHECK(obs.planted.size() > s.trees.size());
  for (std::size_t i = s.trees.size(); i < obs.planted.size(); ++i) {
    const auto& p = obs.planted[i];
    CHECK((p.aerial_score == kNegInf) != (p.street_score == kNegInf));
  }
  c.p_det = 0.0;
  CHECK(generate_observations(s, c).proposals.empty());
}

TEST_CASE("config validation") {
  SynthConfig c;
  c.roads = {{Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0)}};
  CHECK_THROWS_AS(generate_scene(c), Error);
  try {
    generate_scene(c);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DegenerateRoad);
  }
  SynthConfig p;
  p.p_det = 1.5;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("written scenes load back") {
  treecat::test::TempDir dir;
  const SynthConfig c = SynthConfig::noise_free(2);
  const SynthScene s = generate_scene(c);
  const SynthObservations obs = generate_observations(s, c);
  write_synth_scene(dir.path(), s, obs);
  const SceneData back = load_scene(dir.path());
  CHECK(back.truth == s.trees);
  CHECK(back.views.panoramas() == s.views.panoramas());
  CHECK(back.proposals == obs.proposals);
}

TEST_CASE("exhaustive search oracle") {
  CrfTestCase tc = generate_crf_instance(3, 6);
  tc.instance.terms.setZero();
  tc.model.spatial.weights.setZero();
  const GreedyResult e = exhaustive_infer(tc.instance, tc.model);
  CHECK(e.members.empty());  // every subset scores 0; the empty list sorts first
  CHECK(e.objective == 0.0);

  tc.instance.terms.col(0).setConstant(1.0);
  tc.model.mode = SpatialMode::Nms;
  tc.model.tau_nms = 1e9;
  const GreedyResult one = exhaustive_infer(tc.instance, tc.model);
  REQUIRE(one.members.size() == 1);
  const auto smallest = *std::min_element(tc.instance.ids.begin(), tc.instance.ids.end());
  CHECK(tc.instance.ids[one.members[0]] == smallest);

  const CrfTestCase big = generate_crf_instance(1, 13);
  try {
    exhaustive_infer(big.instance, big.model);
    FAIL("expected TooManyCandidates");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TooManyCandidates);
  }
}

TEST_CASE("species features") {
  const FeatureDataset d = generate_species_features(1, 5, 10, 8, 6.0);
  CHECK(d.features.rows() == 50);
  CHECK(d.features.cols() == 32);
  CHECK(d.classes.size() == 5);
  CHECK(d.labels.size() == 50);
  CHECK_THROWS_AS(generate_species_features(1, 40, 10, 8, 6.0), Error);
}

}  // TEST_SUITE
