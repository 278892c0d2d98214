#include "test_util.hpp"
#include "treecat/crf_model.hpp"
#include "treecat/error.hpp"
#include "treecat/synth_bench.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace treecat;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Bin counts computed independently of PriorHistogram::bin_of.
std::vector<double> bin_counts(std::span<const double> values, const std::vector<double>& edges) {
  std::vector<double> counts(edges.size() + 1, 0.0);
  for (double v : values) {
    std::size_t b = 0;
    while (b < edges.size() && v >= edges[b]) ++b;
    counts[b] += 1.0;
  }
  return counts;
}

}  // namespace

TEST_SUITE("crf_model") {

TEST_CASE("histogram bins are half open") {
  const PriorHistogram h;
  CHECK(h.bins() == 9);
  CHECK(h.bin_of(0.0) == 0);
  CHECK(h.bin_of(0.4999) == 0);
  CHECK(h.bin_of(0.5) == 1);
  CHECK(h.bin_of(3.0) == 3);
  CHECK(h.bin_of(8.0) == 5);
  CHECK(h.bin_of(63.9) == 7);
  CHECK(h.bin_of(64.0) == 8);
  CHECK(h.bin_of(std::numeric_limits<double>::infinity()) == 8);
  CHECK(h.saturation() == 64.0);

  PriorHistogram bad;
  bad.edges = {1.0, 1.0};
  bad.weights = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("spatial potential with and without neighbors") {
  CrfModel m;
  m.spatial.weights << -4, -3, -2, -1, 1, 2, 0.5, -0.5, -3;
  m.k[2] = 2.0;
  const std::vector<Eigen::Vector2d> none;
  CHECK(spatial_term({0, 0}, none, m) == 2.0 * -3.0);
  const std::vector<Eigen::Vector2d> one{{3.0, 4.0}};
  CHECK(spatial_term({0, 0}, one, m) == 2.0 * 1.0);  // 5 m lies in [4, 8)

  m.mode = SpatialMode::Nms;
  m.tau_nms = 4.0;
  CHECK(spatial_value(3.99, m) == kNegInf);
  CHECK(spatial_value(4.0, m) == 0.0);
  CHECK(spatial_term({0, 0}, none, m) == 0.0);
}

TEST_CASE("greedy gains equal full recomputation") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    for (SpatialMode mode : {SpatialMode::Learned, SpatialMode::Nms}) {
      CrfTestCase tc = generate_crf_instance(seed, 8 + seed % 30);
      tc.model.mode = mode;
      const GreedyResult g = greedy_infer(tc.instance, tc.model);
      CHECK(g.members.size() <= tc.instance.size());
      std::vector<std::size_t> prefix;
      double prev = 0.0;
      for (std::size_t i = 0; i < g.members.size(); ++i) {
        prefix.push_back(g.members[i]);
        const double now = objective(tc.instance, prefix, tc.model);
        worst = std::max(worst, std::abs((now - prev) - g.gains[i]));
        CHECK(g.gains[i] > 0.0);
        prev = now;
      }
      CHECK(std::abs(prev - g.objective) < 1e-9);
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("greedy gains hold on large instances with a grid") {
  // Spread-out instances exercise the cell grid beyond the saturation range.
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> pos(0.0, 400.0), score(-2.0, 4.0);
  for (int rep = 0; rep < 5; ++rep) {
    CrfTestCase tc = generate_crf_instance(rep, 10);
    CrfInstance inst;
    const std::size_t n = 400;
    inst.terms.resize(Eigen::Index(n), 3);
    for (std::size_t i = 0; i < n; ++i) {
      inst.ids.push_back(std::int64_t(i));
      inst.xy.emplace_back(pos(rng), pos(rng) / 8.0);
      inst.geo.push_back({});
      inst.terms.row(Eigen::Index(i)) << score(rng), score(rng), score(rng);
    }
    const GreedyResult g = greedy_infer(inst, tc.model);
    std::vector<std::size_t> prefix;
    double prev = 0.0;
    for (std::size_t i = 0; i < g.members.size(); ++i) {
      prefix.push_back(g.members[i]);
      const double now = objective(inst, prefix, tc.model);
      CHECK(std::abs((now - prev) - g.gains[i]) < 1e-9);
      prev = now;
    }
  }
}

TEST_CASE("greedy never beats exhaustive search") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const CrfTestCase tc = generate_crf_instance(seed, 10);
    const GreedyResult g = greedy_infer(tc.instance, tc.model);
    const GreedyResult e = exhaustive_infer(tc.instance, tc.model);
    CHECK(g.objective <= e.objective + 1e-12);
    CHECK(e.objective >= 0.0);
  }
  const CrfTestCase big = generate_crf_instance(1, 13);
  CHECK_THROWS_AS(exhaustive_infer(big.instance, big.model), Error);
}

TEST_CASE("nms output keeps members apart") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CrfTestCase tc = generate_crf_instance(seed, 30);
    tc.model.mode = SpatialMode::Nms;
    tc.model.tau_nms = 4.0;
    const GreedyResult g = greedy_infer(tc.instance, tc.model);
    for (std::size_t a = 0; a < g.members.size(); ++a) {
      for (std::size_t b = a + 1; b < g.members.size(); ++b) {
        CHECK((tc.instance.xy[g.members[a]] - tc.instance.xy[g.members[b]]).norm() >= 4.0);
      }
    }
  }
}

TEST_CASE("tau2 removes weak candidates from consideration") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CrfTestCase tc = generate_crf_instance(seed, 20);
    tc.model.tau2 = 1.0;
    const GreedyResult g = greedy_infer(tc.instance, tc.model);
    for (std::size_t m : g.members) CHECK(static_score(tc.instance, m, tc.model) >= 1.0);
  }
}

TEST_CASE("common positive scaling leaves the selection unchanged") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CrfTestCase tc = generate_crf_instance(seed, 25);
    tc.model.tau2 = -1.0;
    const double c = 0.37 + 0.1 * double(seed % 17);
    CrfInstance scaled = tc.instance;
    scaled.terms *= c;
    CrfModel m = tc.model;
    m.spatial.weights *= c;
    m.tau2 *= c;
    const auto a = greedy_infer(tc.instance, tc.model).members;
    const auto b = greedy_infer(scaled, m).members;
    CHECK(a == b);
  }
}

TEST_CASE("detections carry weighted contributions") {
  const CrfTestCase tc = generate_crf_instance(5, 15);
  const GreedyResult g = greedy_infer(tc.instance, tc.model);
  const auto dets = to_detections(tc.instance, g, tc.model);
  REQUIRE(dets.size() == g.members.size());
  double sum = 0.0;
  for (const auto& d : dets) {
    CHECK(d.score == d.contribution_sum());
    sum += d.score;
  }
  CHECK(sum == doctest::Approx(g.objective).epsilon(1e-12));
}

TEST_CASE("prior fit matches the per-bin closed form") {
  const std::vector<double> edges = default_bin_edges();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::vector<double> pos, neg;
  for (int i = 0; i < 500; ++i) pos.push_back(u(rng) * u(rng) / 100.0);
  for (int i = 0; i < 700; ++i) neg.push_back(u(rng));
  const auto np = bin_counts(pos, edges), nn = bin_counts(neg, edges);

  PriorFitConfig unreg;
  unreg.lambda = 0.0;
  const PriorFit f0 = fit_prior_histogram(pos, neg, edges, unreg);
  for (std::size_t b = 0; b < np.size(); ++b) {
    if (np[b] > 0 && nn[b] > 0) CHECK(f0.weights[Eigen::Index(b)] == doctest::Approx(std::log(np[b] / nn[b])).epsilon(1e-8));
  }

  const PriorFit f = fit_prior_histogram(pos, neg, edges);
  for (std::size_t b = 0; b < np.size(); ++b) {
    const double w = f.weights[Eigen::Index(b)];
    const double grad = -np[b] * sigmoid(-w) + nn[b] * sigmoid(w) + 2.0 * 0.1 * w;
    CHECK(std::abs(grad) < 1e-6);
  }
  for (std::size_t i = 1; i < f.loss_history.size(); ++i) CHECK(f.loss_history[i] <= f.loss_history[i - 1]);
}

TEST_CASE("prior fit warns about bins without data") {
  const std::vector<double> pos{3.0, 3.5}, neg{20.0};
  PriorFitConfig unreg;
  unreg.lambda = 0.0;
  const PriorFit f = fit_prior_histogram(pos, neg, default_bin_edges(), unreg);
  CHECK_FALSE(f.warnings.empty());
  CHECK(f.weights.allFinite());
  CHECK(f.weights[3] > 0.0);
  CHECK(f.weights[6] < 0.0);
  CHECK_THROWS_AS(fit_prior_histogram({}, neg, default_bin_edges()), Error);
}

TEST_CASE("prior fit recovers the mode bins") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n2(0.0, 2.0), n05(3.0, 0.5);
  std::uniform_real_distribution<double> u64(0.0, 64.0), u32(0.0, 32.0);
  std::vector<double> sp_pos, sp_neg, map_pos, map_neg;
  for (int i = 0; i < 2000; ++i) {
    sp_pos.push_back(8.0 + std::abs(n2(rng)));
    sp_neg.push_back(u64(rng));
    map_pos.push_back(std::max(0.0, n05(rng)));
    map_neg.push_back(u32(rng));
  }
  const PriorFit a = fit_prior_histogram(sp_pos, sp_neg, default_bin_edges());
  const PriorFit b = fit_prior_histogram(map_pos, map_neg, default_bin_edges());
  Eigen::Index ia = 0, ib = 0;
  a.weights.maxCoeff(&ia);
  b.weights.maxCoeff(&ib);
  CHECK(ia == 5);  // [8, 16)
  CHECK(ib == 3);  // [2, 4)
}

TEST_CASE("scalar search reaches the best grid point of a separable metric") {
  const std::vector<double> grid = default_scalar_grid();
  const Eigen::Vector4d target(0.5, 2.0, 1.0, 3.0);
  auto metric = [&](const CrfModel& m) { return -(m.k - target).squaredNorm(); };
  const ScalarSearchResult r = search_scalars(CrfModel{}, metric, grid, {true, true, true, true});
  CHECK(r.k == target);
  CHECK(r.score == 0.0);
  CHECK(r.initial_score == -(Eigen::Vector4d::Ones() - target).squaredNorm());
  CHECK(r.rounds >= 1);

  CrfModel base;
  base.k[1] = 0.0;
  const ScalarSearchResult lesioned = search_scalars(base, metric, grid, {true, false, true, true});
  CHECK(lesioned.k[1] == 0.0);
  CHECK(lesioned.k[3] == 3.0);
}

TEST_CASE("scalar search keeps the start on flat metrics") {
  int calls = 0;
  auto flat = [&](const CrfModel&) {
    ++calls;
    return 0.5;
  };
  const ScalarSearchResult r = search_scalars(CrfModel{}, flat, default_scalar_grid(), {true, true, true, true});
  CHECK(r.k == Eigen::Vector4d::Ones());
  CHECK(r.evaluations == calls);
  CHECK(r.rounds == 1);
}

TEST_CASE("model files round trip") {
  treecat::test::TempDir dir;
  CrfModel m;
  m.k << 0.25, 1.5, 3.0, 0.0;
  m.spatial.weights << -4.1, -3.2, -2.3, -1.4, 0.5, 0.6, 0.7, -0.8, -0.9;
  m.map.weights << 1, 2, 3, 4, 5, 6, 7, 8, 9.125;
  m.tau2 = 0.123456789;
  m.mode = SpatialMode::Nms;
  m.tau_nms = 3.5;
  write_model(dir / "m.json", m);
  const CrfModel back = read_model(dir / "m.json");
  CHECK(back.k == m.k);
  CHECK(back.spatial.weights == m.spatial.weights);
  CHECK(back.map.weights == m.map.weights);
  CHECK(back.tau2 == m.tau2);
  CHECK(back.mode == SpatialMode::Nms);
  CHECK(back.tau_nms == 3.5);

  m.tau2 = kNegInf;
  write_model(dir / "inf.json", m);
  CHECK(read_model(dir / "inf.json").tau2 == kNegInf);

  treecat::test::write_text(dir / "bad.json", "{\"format_version\": 1}");
  CHECK_THROWS_AS(read_model(dir / "bad.json"), Error);
}

}  // TEST_SUITE
