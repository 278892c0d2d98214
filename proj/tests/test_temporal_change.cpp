#include "test_util.hpp"
#include "treecat/error.hpp"
#include "treecat/temporal_change.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

using namespace treecat;
using treecat::test::TempDir;

namespace {

const LocalFrame kFrame(GeoPoint::from_degrees(34.15, -118.14));

std::vector<DetectionRecord> random_epoch(std::mt19937_64& rng, const std::string& prefix, int n) {
  std::uniform_real_distribution<double> u(0.0, 150.0), s(0.0, 5.0);
  std::vector<DetectionRecord> out;
  for (int i = 0; i < n; ++i) {
    DetectionRecord d;
    d.id = prefix + std::to_string(i);
    d.geo = degree_representable(kFrame.to_geo({u(rng), u(rng)}));
    d.score = s(rng);
    out.push_back(d);
  }
  return out;
}

std::vector<ChangePair> labeled_pairs(int same, int added, int removed) {
  std::vector<ChangePair> pairs;
  auto add = [&](int n, ChangeLabel l) {
    for (int i = 0; i < n; ++i) {
      ChangePair p;
      p.id = "p" + std::to_string(pairs.size());
      p.label = l;
      pairs.push_back(p);
    }
  };
  add(same, ChangeLabel::Same);
  add(added, ChangeLabel::New);
  add(removed, ChangeLabel::Removed);
  return pairs;
}

}  // namespace

TEST_SUITE("temporal_change") {

TEST_CASE("label names") {
  CHECK(parse_change_label(" Unchanged") == ChangeLabel::Same);
  CHECK(parse_change_label("NEW") == ChangeLabel::New);
  CHECK(std::string(change_label_name(ChangeLabel::Removed)) == "removed");
  CHECK_THROWS_AS(parse_change_label("moved"), Error);
}

TEST_CASE("simple pairing") {
  std::vector<DetectionRecord> a(2), b(2);
  a[0].id = "a0"; a[0].geo = kFrame.to_geo({0, 0}); a[0].score = 1;
  a[1].id = "a1"; a[1].geo = kFrame.to_geo({50, 0}); a[1].score = 1;
  b[0].id = "b0"; b[0].geo = kFrame.to_geo({2, 0}); b[0].score = 1;
  b[1].id = "b1"; b[1].geo = kFrame.to_geo({0, 80}); b[1].score = 1;
  const PairingResult r = pair_epochs(a, b, 4.0, "2011", "2016");
  CHECK(r.matched == 1);
  CHECK(r.only_a == 1);
  CHECK(r.only_b == 1);
  REQUIRE(r.pairs.size() == 3);
  const auto matched = std::find_if(r.pairs.begin(), r.pairs.end(), [](const auto& p) { return p.present_in_a && p.present_in_b; });
  REQUIRE(matched != r.pairs.end());
  CHECK(matched->detection_a == "a0");
  CHECK(matched->detection_b == "b0");
  CHECK(kFrame.to_local(matched->geo).x() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(matched->epoch_a == "2011");
  CHECK_THROWS_AS(pair_epochs(a, b, 0.0), Error);
  CHECK(pair_epochs({}, {}).pairs.empty());
}

TEST_CASE("pairing is symmetric in the epochs and leaves no double entries") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const auto a = random_epoch(rng, "a", 60);
    const auto b = random_epoch(rng, "b", 60);
    const PairingResult ab = pair_epochs(a, b);
    const PairingResult ba = pair_epochs(b, a);
    CHECK(ab.matched + ab.only_a + ab.only_b == ab.pairs.size() + ab.suppressed);
    CHECK(ab.matched == ba.matched);
    CHECK(ab.only_a == ba.only_b);
    REQUIRE(ab.pairs.size() == ba.pairs.size());
    for (std::size_t i = 0; i < ab.pairs.size(); ++i) {
      const ChangePair &x = ab.pairs[i], &y = ba.pairs[i];
      CHECK(x.id == y.id);
      CHECK(x.geo == y.geo);
      CHECK(x.present_in_a == y.present_in_b);
      CHECK(x.present_in_b == y.present_in_a);
      CHECK(x.detection_a == y.detection_b);
    }
    std::vector<Eigen::Vector2d> xy;
    for (const auto& p : ab.pairs) xy.push_back(kFrame.to_local(p.geo));
    for (std::size_t i = 0; i < xy.size(); ++i) {
      for (std::size_t j = i + 1; j < xy.size(); ++j) CHECK((xy[i] - xy[j]).norm() >= 4.0 - 1e-6);
    }
  }
}

TEST_CASE("split sizes follow the ratios and stay stratified") {
  const auto pairs = labeled_pairs(200, 131, 148);
  SplitConfig cfg;
  cfg.seed = 5;
  const ChangeSplits s = assemble_change_dataset(pairs, {}, cfg);
  CHECK(s.train.size() == 306);
  CHECK(s.validation.size() == 77);
  CHECK(s.test.size() == 96);

  std::map<std::string, ChangeLabel> label_of;
  for (const auto& p : pairs) label_of[p.id] = *p.label;
  const std::array<double, 3> ratio{0.64, 0.16, 0.20};
  const std::array<const std::vector<std::string>*, 3> splits{&s.train, &s.validation, &s.test};
  const std::array<int, 3> class_size{200, 131, 148};
  std::set<std::string> seen;
  for (std::size_t k = 0; k < 3; ++k) {
    std::array<int, 3> count{};
    for (const auto& id : *splits[k]) {
      CHECK(seen.insert(id).second);
      ++count[std::size_t(label_of[id])];
    }
    for (std::size_t c = 0; c < 3; ++c) {
      const double ideal = class_size[c] * ratio[k];
      CHECK(count[c] >= int(std::floor(ideal)));
      CHECK(count[c] <= int(std::ceil(ideal)));
    }
  }
  CHECK(seen.size() == pairs.size());

  REQUIRE(s.folds.size() == 5);
  std::set<std::string> fold_ids;
  for (const auto& f : s.folds) {
    CHECK(std::abs(int(f.size()) - 383 / 5) <= 1);
    for (const auto& id : f) CHECK(fold_ids.insert(id).second);
  }
  std::set<std::string> pool(s.train.begin(), s.train.end());
  pool.insert(s.validation.begin(), s.validation.end());
  CHECK(fold_ids == pool);

  const ChangeSplits again = assemble_change_dataset(pairs, {}, cfg);
  CHECK(again.train == s.train);
  cfg.seed = 6;
  CHECK(assemble_change_dataset(pairs, {}, cfg).train != s.train);
}

TEST_CASE("balancing and label overrides") {
  auto pairs = labeled_pairs(50, 10, 20);
  SplitConfig cfg;
  cfg.balance = true;
  const ChangeSplits s = assemble_change_dataset(pairs, {}, cfg);
  CHECK(s.train.size() + s.validation.size() + s.test.size() == 30);

  pairs.push_back(ChangePair{});
  pairs.back().id = "unlabeled";
  CHECK_THROWS_AS(assemble_change_dataset(pairs, {}, cfg), Error);
  const std::map<std::string, ChangeLabel> extra{{"unlabeled", ChangeLabel::New}};
  CHECK_NOTHROW(assemble_change_dataset(pairs, extra, cfg));

  cfg.folds = 0;
  CHECK_THROWS_AS(assemble_change_dataset(pairs, extra, cfg), Error);
}

TEST_CASE("pair and label files round trip") {
  TempDir dir;
  std::mt19937_64 rng(2);
  const auto a = random_epoch(rng, "a", 30);
  const auto b = random_epoch(rng, "b", 30);
  auto pairs = pair_epochs(a, b, 4.0, "2011", "2016").pairs;
  pairs[0].label = ChangeLabel::Removed;
  write_change_pairs(dir / "pairs.jsonl", pairs);
  const auto back = read_change_pairs(dir / "pairs.jsonl");
  REQUIRE(back.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(back[i].id == pairs[i].id);
    CHECK(back[i].geo == pairs[i].geo);
    CHECK(back[i].present_in_a == pairs[i].present_in_a);
    CHECK(back[i].detection_b == pairs[i].detection_b);
    CHECK(back[i].label == pairs[i].label);
  }

  const std::map<std::string, ChangeLabel> labels{{"p1", ChangeLabel::Same}, {"p2", ChangeLabel::New}};
  write_change_labels(dir / "labels.jsonl", labels);
  CHECK(read_change_labels(dir / "labels.jsonl") == labels);
  treecat::test::write_text(dir / "bad.jsonl", "{\"pair_id\": \"x\", \"label\": \"moved\"}\n");
  CHECK_THROWS_AS(read_change_labels(dir / "bad.jsonl"), Error);

  SplitConfig cfg;
  const ChangeSplits s = assemble_change_dataset(labeled_pairs(10, 10, 10), {}, cfg);
  write_split_manifest(dir / "split.json", s, cfg);
  CHECK(std::filesystem::file_size(dir / "split.json") > 0);
}

}  // TEST_SUITE
