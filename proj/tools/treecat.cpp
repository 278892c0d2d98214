// treecat: command-line driver for the street-tree cataloging pipeline.
//
// Every subcommand reads one JSON config (built-in defaults, then --config,
// then --set overrides), echoes the resolved section to stderr and writes
// its report to stdout.
//
// Exit codes: 0 ok, 1 config error, 2 data error, 3 internal error.

#include "treecat/error.hpp"
#include "treecat/evaluation.hpp"
#include "treecat/pipeline.hpp"
#include "treecat/species_pipeline.hpp"
#include "treecat/synth_bench.hpp"
#include "treecat/temporal_change.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace treecat;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json default_config() {
  const ScoreProviderConfig provider;
  const SynthConfig synth;
  const TrainConfig train;
  const SplitConfig split;
  const SpeciesTrainConfig species;
  const json provider_json = {{"kind", provider.kind}, {"sigma_px", provider.sigma_px}, {"floor", provider.floor}};
  return {
      {"seed", nullptr},
      {"jobs", 1},
      {"synth",
       {{"out", nullptr},
        {"noise_free", false},
        {"p_det", synth.p_det},
        {"sigma_loc", synth.sigma_loc},
        {"clutter_per_km", synth.clutter_per_km},
        {"p_occ", synth.p_occ},
        {"panorama_spacing_m", synth.panorama_spacing_m},
        {"street_range_m", synth.street_range_m},
        {"species_per_class", 40},
        {"species_dim_per_view", 8},
        {"species_separation", 6.0}}},
      {"preprocess-map", {{"scene", nullptr}}},
      {"fuse", {{"scene", nullptr}, {"tau1", nullptr}, {"provider", provider_json}}},
      {"train",
       {{"train", nullptr},
        {"validation", nullptr},
        {"model", nullptr},
        {"bin_edges", train.edges},
        {"lambda", train.prior.lambda},
        {"negative_ratio", train.negative_ratio},
        {"exclusion_m", train.exclusion_m},
        {"spatial_negatives", "candidates"},
        {"scalar_grid", train.grid},
        {"max_rounds", train.max_rounds},
        {"spatial_mode", "learned"},
        {"tau_nms", train.tau_nms},
        {"match_radius", train.match_radius},
        {"select_tau2", train.select_tau2},
        {"provider", provider_json}}},
      {"infer", {{"scene", nullptr}, {"model", nullptr}, {"detections", nullptr}}},
      {"eval-detect", {{"scene", nullptr}, {"detections", nullptr}, {"out", nullptr}, {"radius", kMatchRadiusM}}},
      {"lesion",
       {{"model", nullptr},
        {"validation", nullptr},
        {"test", nullptr},
        {"out", nullptr},
        {"scalar_grid", default_scalar_grid()},
        {"max_rounds", 5},
        {"radius", kMatchRadiusM}}},
      {"species-train",
       {{"features", nullptr},
        {"model", nullptr},
        {"epochs", species.epochs},
        {"learning_rate", species.learning_rate},
        {"lambda", species.lambda}}},
      {"species-eval", {{"features", nullptr}, {"model", nullptr}, {"out", nullptr}, {"predictions", nullptr}}},
      {"pair",
       {{"a", nullptr}, {"b", nullptr}, {"out", nullptr}, {"radius", 4.0}, {"epoch_a", "a"}, {"epoch_b", "b"}}},
      {"eval-change",
       {{"truth", nullptr}, {"predictions", nullptr}, {"out", nullptr}, {"classes", {"same", "new", "removed"}}}},
      {"split-change",
       {{"pairs", nullptr},
        {"labels", nullptr},
        {"out", nullptr},
        {"train", split.train},
        {"validation", split.validation},
        {"test", split.test},
        {"folds", split.folds},
        {"balance", split.balance}}},
  };
}

/// Typed access to one config section with key paths in every error.
class Section {
 public:
  Section(const json& root, std::string name) : root_(root), name_(std::move(name)) {}

  std::string key(const std::string& k) const { return name_ + "." + k; }

  const json& raw(const std::string& k) const {
    const json& s = root_.at(name_);
    auto it = s.find(k);
    if (it == s.end() || it->is_null()) throw ConfigError(key(k) + ": required key is missing");
    return *it;
  }

  bool has(const std::string& k) const {
    const json& s = root_.at(name_);
    auto it = s.find(k);
    return it != s.end() && !it->is_null();
  }

  template <typename T>
  T get(const std::string& k) const {
    try {
      return raw(k).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(key(k) + ": " + e.what());
    }
  }

  fs::path input(const std::string& k) const {
    fs::path p = get<std::string>(k);
    if (!fs::exists(p)) throw ConfigError(key(k) + ": path does not exist: " + p.string());
    return p;
  }

  fs::path output(const std::string& k) const {
    fs::path p = get<std::string>(k);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
  }

  fs::path output_or(const std::string& k, const fs::path& fallback) const {
    return has(k) ? output(k) : fallback;
  }

 private:
  const json& root_;
  std::string name_;
};

std::uint64_t required_seed(const json& cfg) {
  const auto it = cfg.find("seed");
  if (it == cfg.end() || it->is_null()) throw ConfigError("seed: required key is missing (stochastic command)");
  if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0)) {
    throw ConfigError("seed: must be a non-negative integer");
  }
  return it->get<std::uint64_t>();
}

int jobs_of(const json& cfg) {
  const int jobs = cfg.value("jobs", 1);
  if (jobs < 1) throw ConfigError("jobs: must be at least 1");
  return jobs;
}

ScoreProviderConfig provider_of(const json& j, const std::string& where) {
  try {
    ScoreProviderConfig p;
    p.kind = j.at("kind").get<std::string>();
    p.sigma_px = j.at("sigma_px").get<double>();
    p.floor = j.at("floor").get<double>();
    return p;
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

// --- config assembly -------------------------------------------------------------

void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  std::string pointer;
  std::stringstream parts(key);
  for (std::string part; std::getline(parts, part, '.');) {
    if (part.empty()) throw ConfigError("--set: empty component in key '" + key + "'");
    pointer += "/" + part;
  }
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  cfg[json::json_pointer(pointer)] = std::move(value);
}

json resolve_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  json cfg = default_config();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("--config: cannot open " + config_path);
    json user = json::parse(in, nullptr, false);
    if (user.is_discarded() || !user.is_object()) throw ConfigError("--config: " + config_path + " is not a JSON object");
    cfg.merge_patch(user);
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  return cfg;
}

void echo_config(const json& cfg, const std::string& command) {
  json shown = {{"command", command}, {"seed", cfg.value("seed", json())}, {"jobs", cfg.value("jobs", json())}};
  if (cfg.contains(command)) shown[command] = cfg.at(command);
  std::cerr << "resolved config: " << shown.dump() << "\n";
}

void report(const json& r, bool as_json) {
  if (as_json) {
    std::cout << r.dump(2) << "\n";
    return;
  }
  for (const auto& [k, v] : r.items()) std::cout << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

// --- scene helpers ----------------------------------------------------------------

LabeledScene labeled_scene(const fs::path& dir) {
  const SceneData s = load_scene(dir);
  const fs::path cand = dir / kCandidatesName;
  const fs::path dist = dir / kDistanceFieldName;
  if (!fs::exists(cand)) throw Error(Errc::IoError, cand.string() + ": missing; run fuse first");
  if (!fs::exists(dist)) throw Error(Errc::IoError, dist.string() + ": missing; run preprocess-map first");
  return {read_candidates(cand), s.truth, read_distance_field(dist), s.manifest.aerial, s.manifest.anchor};
}

DistanceField cached_distance_field(const SceneData& scene) {
  const fs::path dist = scene.dir / kDistanceFieldName;
  if (fs::exists(dist)) return read_distance_field(dist);
  DistanceField field = preprocess_map(read_map_raster(scene.dir / scene.manifest.map_raster));
  write_distance_field(dist, field);
  return field;
}

json pr_summary(const PrCurve& curve, std::size_t detections) {
  std::size_t tp = 0, fp = 0;
  if (!curve.points.empty()) {
    tp = curve.points.back().tp;
    fp = curve.points.back().fp;
  }
  return {{"map", curve.average_precision},
          {"ground_truth", curve.ground_truth},
          {"detections", detections},
          {"true_positives", tp},
          {"false_positives", fp},
          {"false_negatives", curve.ground_truth - tp}};
}

// --- commands ------------------------------------------------------------------------

json cmd_synth(const json& cfg) {
  const Section s(cfg, "synth");
  const std::uint64_t seed = required_seed(cfg);
  const fs::path out = s.get<std::string>("out");
  SynthConfig base = s.get<bool>("noise_free") ? SynthConfig::noise_free(seed) : SynthConfig{};
  if (!s.get<bool>("noise_free")) {
    base.p_det = s.get<double>("p_det");
    base.sigma_loc = s.get<double>("sigma_loc");
    base.clutter_per_km = s.get<double>("clutter_per_km");
    base.p_occ = s.get<double>("p_occ");
  }
  base.panorama_spacing_m = s.get<double>("panorama_spacing_m");
  base.street_range_m = s.get<double>("street_range_m");
  try {
    base.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }

  json splits = json::object();
  const char* names[] = {"train", "validation", "test"};
  for (int i = 0; i < 3; ++i) {
    SynthConfig c = base;
    c.seed = seed + std::uint64_t(i);
    const SynthScene scene = generate_scene(c);
    const SynthObservations obs = generate_observations(scene, c);
    const fs::path dir = out / names[i];
    fs::create_directories(dir);
    write_synth_scene(dir, scene, obs);
    splits[names[i]] = {{"dir", dir.string()},
                        {"seed", c.seed},
                        {"trees", scene.trees.size()},
                        {"panoramas", scene.views.panoramas().size()},
                        {"proposals", obs.proposals.size()}};
  }

  const auto per_class = s.get<std::size_t>("species_per_class");
  const int dim = s.get<int>("species_dim_per_view");
  const double separation = s.get<double>("species_separation");
  const std::size_t classes = base.species.size();
  fs::create_directories(out / "species");
  const FeatureDataset sp_train = generate_species_features(seed, classes, per_class, dim, separation);
  const FeatureDataset sp_test = generate_species_features(seed + 1, classes, per_class, dim, separation);
  write_feature_dataset(out / "species" / "train.json", sp_train);
  write_feature_dataset(out / "species" / "test.json", sp_test);
  return {{"out", out.string()}, {"scenes", splits}, {"species_samples", sp_train.ids.size() + sp_test.ids.size()}};
}

json cmd_preprocess_map(const json& cfg) {
  const Section s(cfg, "preprocess-map");
  const fs::path dir = s.input("scene");
  const SceneManifest m = load_scene_manifest(dir / kSceneManifestName);
  const MapRaster raster = read_map_raster(dir / m.map_raster);
  const DistanceField field = preprocess_map(raster);
  write_distance_field(dir / kDistanceFieldName, field);
  return {{"distance_field", (dir / kDistanceFieldName).string()},
          {"rows", field.values.rows()},
          {"cols", field.values.cols()},
          {"pixel_size_m", field.pixel_size_m},
          {"no_roads", field.no_roads}};
}

json cmd_fuse(const json& cfg) {
  const Section s(cfg, "fuse");
  const SceneData scene = load_scene(s.input("scene"));
  FuseConfig fc;
  if (s.has("tau1")) fc.tau1 = s.get<double>("tau1");
  fc.provider = provider_of(s.raw("provider"), s.key("provider"));
  fc.jobs = jobs_of(cfg);
  const DistanceField roads = cached_distance_field(scene);
  const FuseOutput fo = fuse_scene(scene, roads, fc);
  for (const auto& w : fo.warnings) std::cerr << "warning: " << w << "\n";
  write_candidates(scene.dir / kCandidatesName, fo.candidates);
  return {{"candidates_file", (scene.dir / kCandidatesName).string()},
          {"proposals", scene.proposals.size()},
          {"proposals_kept", fo.proposals_kept},
          {"pooled", fo.pooled},
          {"candidates", fo.candidates.size()},
          {"warnings", fo.warnings.size()}};
}

json cmd_train(const json& cfg) {
  const Section s(cfg, "train");
  TrainConfig tc;
  tc.seed = required_seed(cfg);
  tc.edges = s.get<std::vector<double>>("bin_edges");
  tc.prior.lambda = s.get<double>("lambda");
  tc.negative_ratio = s.get<double>("negative_ratio");
  tc.exclusion_m = s.get<double>("exclusion_m");
  const auto negatives = s.get<std::string>("spatial_negatives");
  if (negatives == "candidates") {
    tc.spatial_negatives = SpatialNegatives::Candidates;
  } else if (negatives == "uniform") {
    tc.spatial_negatives = SpatialNegatives::Uniform;
  } else {
    throw ConfigError(s.key("spatial_negatives") + ": expected candidates or uniform, got '" + negatives + "'");
  }
  tc.grid = s.get<std::vector<double>>("scalar_grid");
  tc.max_rounds = s.get<int>("max_rounds");
  const auto mode = s.get<std::string>("spatial_mode");
  if (mode == "learned") {
    tc.mode = SpatialMode::Learned;
  } else if (mode == "nms") {
    tc.mode = SpatialMode::Nms;
  } else {
    throw ConfigError(s.key("spatial_mode") + ": expected learned or nms, got '" + mode + "'");
  }
  tc.tau_nms = s.get<double>("tau_nms");
  tc.match_radius = s.get<double>("match_radius");
  tc.select_tau2 = s.get<bool>("select_tau2");
  tc.provider = provider_of(s.raw("provider"), s.key("provider"));
  const fs::path train_dir = s.input("train");
  const fs::path val_dir = s.input("validation");
  const fs::path model_path = s.output("model");

  const TrainReport rep = train_model(labeled_scene(train_dir), labeled_scene(val_dir), tc);
  for (const auto& w : rep.spatial_fit.warnings) std::cerr << "warning: spatial prior: " << w << "\n";
  for (const auto& w : rep.map_fit.warnings) std::cerr << "warning: map prior: " << w << "\n";
  write_model(model_path, rep.model);
  const auto& k = rep.model.k;
  return {{"model", model_path.string()},
          {"k", {k[0], k[1], k[2], k[3]}},
          {"tau2", finite_or_null(rep.model.tau2)},
          {"validation_map", rep.validation_map},
          {"spatial_samples", {rep.spatial_positives, rep.spatial_negatives}},
          {"map_samples", {rep.map_positives, rep.map_negatives}},
          {"search_rounds", rep.search.rounds},
          {"search_evaluations", rep.search.evaluations}};
}

json cmd_infer(const json& cfg) {
  const Section s(cfg, "infer");
  const fs::path dir = s.input("scene");
  const CrfModel model = read_model(s.input("model"));
  const fs::path cand = dir / kCandidatesName;
  if (!fs::exists(cand)) throw ConfigError(s.key("scene") + ": no " + std::string(kCandidatesName) + "; run fuse first");
  const SceneManifest m = load_scene_manifest(dir / kSceneManifestName);
  const auto detections = infer_detections(read_candidates(cand), model, m.anchor);
  const fs::path out = s.output_or("detections", dir / kDetectionsName);
  write_detections(out, detections);
  return {{"detections_file", out.string()}, {"detections", detections.size()}};
}

json cmd_eval_detect(const json& cfg) {
  const Section s(cfg, "eval-detect");
  const fs::path dir = s.input("scene");
  const SceneData scene = load_scene(dir);
  const fs::path det_path = s.has("detections") ? s.input("detections") : dir / kDetectionsName;
  if (!fs::exists(det_path)) throw ConfigError(s.key("detections") + ": path does not exist: " + det_path.string());
  const auto detections = read_detections(det_path);
  const PrCurve curve = pr_curve_and_map(detections, scene.truth, s.get<double>("radius"));
  json r = pr_summary(curve, detections.size());
  if (s.has("out")) {
    const fs::path out = s.get<std::string>("out");
    fs::create_directories(out);
    write_pr_csv(out / "pr.csv", curve);
    std::ofstream(out / "metrics.json") << r.dump(2) << "\n";
    r["out"] = out.string();
  }
  return r;
}

json cmd_lesion(const json& cfg) {
  const Section s(cfg, "lesion");
  const CrfModel model = read_model(s.input("model"));
  const LabeledScene val = labeled_scene(s.input("validation"));
  const LabeledScene test = labeled_scene(s.input("test"));
  LesionConfig lc;
  lc.grid = s.get<std::vector<double>>("scalar_grid");
  lc.max_rounds = s.get<int>("max_rounds");
  lc.radius = s.get<double>("radius");
  lc.jobs = jobs_of(cfg);
  const auto rows = lesion_suite(model, {make_scene_instance(val, model), val.truth},
                                 {make_scene_instance(test, model), test.truth}, lc);
  json table = json::array();
  for (const auto& row : rows) {
    const auto& k = row.model.k;
    table.push_back({{"variant", row.variant},
                     {"validation_map", row.validation_map},
                     {"test_map", row.test_map},
                     {"k", {k[0], k[1], k[2], k[3]}}});
  }
  if (s.has("out")) std::ofstream(s.output("out")) << table.dump(2) << "\n";
  return {{"variants", table}};
}

json cmd_species_train(const json& cfg) {
  const Section s(cfg, "species-train");
  SpeciesTrainConfig tc;
  tc.seed = required_seed(cfg);
  tc.epochs = s.get<int>("epochs");
  tc.learning_rate = s.get<double>("learning_rate");
  tc.lambda = s.get<double>("lambda");
  const FeatureDataset data = read_feature_dataset(s.input("features"));
  if (data.labels.empty()) throw Error(Errc::EmptyData, s.get<std::string>("features") + ": dataset has no labels");
  const fs::path model_path = s.output("model");
  const SpeciesModel model = train_linear(data.features, data.labels, tc);
  write_species_model(model_path, model);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
    correct += predict_species(model, data.features.row(i).transpose()).label == data.labels[std::size_t(i)];
  }
  return {{"model", model_path.string()},
          {"classes", model.classes},
          {"samples", data.features.rows()},
          {"dim", data.features.cols()},
          {"final_objective", model.objective_history.empty() ? json() : json(model.objective_history.back())},
          {"training_accuracy", double(correct) / double(data.features.rows())}};
}

json cmd_species_eval(const json& cfg) {
  const Section s(cfg, "species-eval");
  const FeatureDataset data = read_feature_dataset(s.input("features"));
  const SpeciesModel model = read_species_model(s.input("model"));
  if (data.labels.empty()) throw Error(Errc::EmptyData, s.get<std::string>("features") + ": dataset has no labels");
  std::vector<std::string> predicted;
  for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
    predicted.push_back(predict_species(model, data.features.row(i).transpose()).label);
  }
  const SpeciesMetrics m = species_metrics(predicted, data.labels, model.classes);
  json r = {{"dataset_precision", m.dataset_precision},
            {"average_class_precision", m.average_class_precision},
            {"classes", m.classes},
            {"class_counts", m.class_counts},
            {"class_precision", m.class_precision},
            {"cumulative_dataset_precision", m.cumulative_dataset_precision},
            {"cumulative_average_class_precision", m.cumulative_average_class_precision}};
  if (s.has("predictions")) {
    std::ofstream out(s.output("predictions"));
    out << "id,truth,predicted\n";
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      out << data.ids[i] << "," << data.labels[i] << "," << predicted[i] << "\n";
    }
  }
  if (s.has("out")) std::ofstream(s.output("out")) << r.dump(2) << "\n";
  return r;
}

json cmd_pair(const json& cfg) {
  const Section s(cfg, "pair");
  const auto a = read_detections(s.input("a"));
  const auto b = read_detections(s.input("b"));
  const PairingResult pr = pair_epochs(a, b, s.get<double>("radius"), s.get<std::string>("epoch_a"),
                                       s.get<std::string>("epoch_b"));
  const fs::path out = s.output("out");
  write_change_pairs(out, pr.pairs);
  return {{"pairs_file", out.string()},
          {"pairs", pr.pairs.size()},
          {"matched", pr.matched},
          {"only_a", pr.only_a},
          {"only_b", pr.only_b},
          {"suppressed", pr.suppressed}};
}

// Raw label strings by pair id; classes are checked by the metric.
std::map<std::string, std::string> read_label_strings(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, path.string() + ": cannot open");
  std::map<std::string, std::string> out;
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(n);
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(Errc::ParseError, where + ": not a JSON object");
    auto id = j.find("pair_id");
    auto label = j.find("label");
    if (id == j.end() || !id->is_string() || label == j.end() || !label->is_string()) {
      throw Error(Errc::ParseError, where + ": expected string fields pair_id and label");
    }
    out[id->get<std::string>()] = label->get<std::string>();
  }
  return out;
}

json cmd_eval_change(const json& cfg) {
  const Section s(cfg, "eval-change");
  const auto truth = read_label_strings(s.input("truth"));
  const auto predicted = read_label_strings(s.input("predictions"));
  const auto classes = s.get<std::vector<std::string>>("classes");
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& [id, t] : truth) {
    auto it = predicted.find(id);
    if (it == predicted.end()) throw Error(Errc::UnlabeledPair, "no prediction for pair '" + id + "'");
    rows.emplace_back(t, it->second);
  }
  const ConfusionMatrix cm = change_metrics(rows, classes);
  json per_class = json::object();
  for (std::size_t c = 0; c < cm.labels().size(); ++c) {
    per_class[cm.labels()[c]] = {{"precision", cm.precision(c)}, {"recall", cm.recall(c)}};
  }
  json counts = json::array();
  for (Eigen::Index i = 0; i < cm.counts().rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < cm.counts().cols(); ++j) row.push_back(cm.counts()(i, j));
    counts.push_back(row);
  }
  json r = {{"labels", cm.labels()}, {"counts", counts}, {"classes", per_class}, {"moa", cm.moa()}, {"total", cm.total()}};
  if (cm.labels().size() == 3) {
    const ConfusionMatrix bin = cm.collapse_binary();
    json bin_classes = json::object();
    for (std::size_t c = 0; c < 2; ++c) {
      bin_classes[bin.labels()[c]] = {{"precision", bin.precision(c)}, {"recall", bin.recall(c)}};
    }
    r["binary"] = {{"labels", bin.labels()}, {"classes", bin_classes}, {"moa", bin.moa()}};
  }
  if (s.has("out")) std::ofstream(s.output("out")) << r.dump(2) << "\n";
  return r;
}

json cmd_split_change(const json& cfg) {
  const Section s(cfg, "split-change");
  SplitConfig sc;
  sc.seed = required_seed(cfg);
  sc.train = s.get<double>("train");
  sc.validation = s.get<double>("validation");
  sc.test = s.get<double>("test");
  sc.folds = s.get<int>("folds");
  sc.balance = s.get<bool>("balance");
  const auto pairs = read_change_pairs(s.input("pairs"));
  std::map<std::string, ChangeLabel> labels;
  if (s.has("labels")) labels = read_change_labels(s.input("labels"));
  const fs::path out = s.output("out");
  const ChangeSplits splits = assemble_change_dataset(pairs, labels, sc);
  for (const auto& w : splits.warnings) std::cerr << "warning: " << w << "\n";
  write_split_manifest(out, splits, sc);
  return {{"manifest", out.string()},
          {"train", splits.train.size()},
          {"validation", splits.validation.size()},
          {"test", splits.test.size()},
          {"folds", splits.folds.size()}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Street-tree detection, species and change pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::vector<std::string> overrides;
  bool as_json = false;
  std::optional<int> jobs;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--set", overrides, "Override a config key: dotted.key=value (value parsed as JSON, else string)");
  app.add_flag("--json", as_json, "Print the report as JSON");
  app.add_option("--jobs", jobs, "Worker threads for scoring and evaluation");

  using Command = json (*)(const json&);
  const std::vector<std::tuple<const char*, const char*, Command>> commands{
      {"synth", "Generate train/validation/test scenes and species features", cmd_synth},
      {"preprocess-map", "Cache the distance-to-road field of a scene", cmd_preprocess_map},
      {"fuse", "Pool proposals into scored candidates", cmd_fuse},
      {"train", "Fit priors, search scalars and pick the threshold", cmd_train},
      {"infer", "Greedy inference to a detections GeoJSON", cmd_infer},
      {"eval-detect", "Precision-recall curve and mAP", cmd_eval_detect},
      {"lesion", "Lesion table over model components", cmd_lesion},
      {"species-train", "Train the linear species classifier", cmd_species_train},
      {"species-eval", "Species precision metrics", cmd_species_eval},
      {"pair", "Pair detections of two epochs", cmd_pair},
      {"eval-change", "Change confusion metrics", cmd_eval_change},
      {"split-change", "Stratified splits of labeled change pairs", cmd_split_change},
  };
  const json defaults = default_config();
  for (const auto& [name, help, fn] : commands) {
    app.add_subcommand(name, help)->footer("Config keys under \"" + std::string(name) + "\" (defaults):\n" +
                                           defaults.at(name).dump(2));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    json cfg = resolve_config(config_path, overrides);
    if (jobs) cfg["jobs"] = *jobs;
    echo_config(cfg, command);
    for (const auto& [name, help, fn] : commands) {
      if (command == name) report(fn(cfg), as_json);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << errc_name(e.code()) << ": " << e.what() << "\n";
    if (e.code() == Errc::InvalidArgument) return 1;
    if (e.code() == Errc::InvariantViolation) return 3;
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
