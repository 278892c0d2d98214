#include "treecat/species_pipeline.hpp"

#include "io_util.hpp"
#include "treecat/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace treecat {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kFormatVersion = 1;

fs::path payload_path(const fs::path& header, const std::string& name) { return header.parent_path() / name; }

// Objective of one binary problem: lambda/2 |w|^2 + mean hinge.
double binary_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b,
                        double lambda) {
  const Eigen::ArrayXd margins = y.array() * ((x * w).array() + b);
  return 0.5 * lambda * w.squaredNorm() + (1.0 - margins).max(0.0).mean();
}

}  // namespace

Eigen::VectorXd concat_features(const FeatureVector& fv) {
  Eigen::Index total = 0;
  for (const auto& name : kSpeciesViews) {
    auto it = fv.views.find(name);
    if (it == fv.views.end()) throw Error(Errc::MissingView, "tree '" + fv.tree_id + "' lacks view '" + name + "'");
    total += it->second.size();
  }
  Eigen::VectorXd out(total);
  Eigen::Index at = 0;
  for (const auto& name : kSpeciesViews) {
    const Eigen::VectorXd& v = fv.views.at(name);
    out.segment(at, v.size()) = v;
    at += v.size();
  }
  return out;
}

FeatureVector FeatureDataset::row(Eigen::Index i) const {
  FeatureVector fv;
  fv.tree_id = ids[std::size_t(i)];
  Eigen::Index at = 0;
  for (std::size_t v = 0; v < kSpeciesViews.size(); ++v) {
    fv.views[kSpeciesViews[v]] = features.row(i).segment(at, view_dims[v]).transpose();
    at += view_dims[v];
  }
  return fv;
}

void write_feature_dataset(const fs::path& header_path, const FeatureDataset& data) {
  const auto n = std::size_t(data.features.rows());
  if (data.features.cols() != data.dim() || data.ids.size() != n || (!data.labels.empty() && data.labels.size() != n)) {
    throw Error(Errc::DimensionMismatch, "feature dataset rows, ids and labels disagree");
  }
  const std::string payload = header_path.filename().string() + ".f32";
  json views = json::array();
  for (std::size_t v = 0; v < kSpeciesViews.size(); ++v) {
    views.push_back({{"name", kSpeciesViews[v]}, {"dim", data.view_dims[v]}});
  }
  json doc = {{"format_version", kFormatVersion}, {"views", views},     {"classes", data.classes},
              {"ids", data.ids},                  {"labels", data.labels}, {"rows", n},
              {"payload", payload},               {"encoding", "float32-le"}};
  detail::write_json_file(header_path, doc);

  auto out = detail::open_output(payload_path(header_path, payload), true);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = data.features;
  detail::write_le<float>(out, std::span<const double>(rows.data(), std::size_t(rows.size())));
  if (!out) throw Error(Errc::IoError, "failed writing feature payload for " + header_path.string());
}

FeatureDataset read_feature_dataset(const fs::path& header_path) {
  const json doc = detail::read_json_file(header_path);
  const std::string where = header_path.string();
  if (detail::json_field<int>(doc, "format_version", where) != kFormatVersion) {
    throw Error(Errc::ParseError, where + ": unsupported format_version");
  }
  FeatureDataset data;
  const json views = detail::json_field<json>(doc, "views", where);
  if (!views.is_array() || views.size() != kSpeciesViews.size()) {
    throw Error(Errc::ParseError, where + ": expected four views");
  }
  for (std::size_t v = 0; v < kSpeciesViews.size(); ++v) {
    const auto name = detail::json_field<std::string>(views[v], "name", where);
    if (name != kSpeciesViews[v]) {
      throw Error(Errc::MissingView, where + ": view " + std::to_string(v) + " is '" + name + "', expected '" +
                                         kSpeciesViews[v] + "'");
    }
    data.view_dims[v] = detail::json_field<int>(views[v], "dim", where);
    if (data.view_dims[v] < 0) throw Error(Errc::ParseError, where + ": negative view dimension");
  }
  data.classes = detail::json_field<std::vector<std::string>>(doc, "classes", where);
  data.ids = detail::json_field<std::vector<std::string>>(doc, "ids", where);
  data.labels = detail::json_field<std::vector<std::string>>(doc, "labels", where);
  const auto n = detail::json_field<std::size_t>(doc, "rows", where);
  if (data.ids.size() != n || (!data.labels.empty() && data.labels.size() != n)) {
    throw Error(Errc::ParseError, where + ": ids/labels do not match the row count");
  }
  for (auto& l : data.labels) l = detail::trim(l);
  auto in = detail::open_input(payload_path(header_path, detail::json_field<std::string>(doc, "payload", where)), true);
  const auto values = detail::read_le<float>(in, n * std::size_t(data.dim()), where);
  data.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), Eigen::Index(n), data.dim());
  return data;
}

SpeciesModel train_linear(const Eigen::MatrixXd& features, std::span<const std::string> labels,
                          const SpeciesTrainConfig& config) {
  const Eigen::Index n = features.rows(), d = features.cols();
  if (n == 0) throw Error(Errc::EmptyData, "no training samples");
  if (std::size_t(n) != labels.size()) throw Error(Errc::DimensionMismatch, "one label per feature row required");
  if (config.epochs < 0 || !(config.learning_rate > 0.0) || !(config.lambda >= 0.0)) {
    throw Error(Errc::InvalidArgument, "species training needs epochs >= 0, learning_rate > 0, lambda >= 0");
  }

  SpeciesModel model;
  model.config = config;
  model.classes.assign(labels.begin(), labels.end());
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  if (model.classes.size() < 2) throw Error(Errc::SingleClass, "species training needs at least two classes");
  const auto c_count = Eigen::Index(model.classes.size());

  Eigen::MatrixXd targets(n, c_count);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < c_count; ++c) targets(i, c) = labels[std::size_t(i)] == model.classes[std::size_t(c)] ? 1.0 : -1.0;
  }

  // Visiting orders are shared by all classes.
  std::mt19937_64 rng(config.seed);
  std::vector<std::vector<Eigen::Index>> orders(std::size_t(config.epochs));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (auto& o : orders) {
    std::shuffle(order.begin(), order.end(), rng);
    o = order;
  }

  model.weights = Eigen::MatrixXd::Zero(c_count, d);
  model.bias = Eigen::VectorXd::Zero(c_count);
  model.objective_history.assign(std::size_t(config.epochs), 0.0);
  const double eta0 = config.learning_rate, lambda = config.lambda;

  for (Eigen::Index c = 0; c < c_count; ++c) {
    const Eigen::VectorXd y = targets.col(c);
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d), w_avg = w, w_best = w;
    double b = 0.0, b_avg = 0.0, b_best = 0.0;
    double best = binary_objective(features, y, w, b, lambda);
    double t = 0.0;
    for (int e = 0; e < config.epochs; ++e) {
      for (Eigen::Index i : orders[std::size_t(e)]) {
        const double eta = eta0 / (1.0 + eta0 * lambda * t);
        const double margin = y[i] * (features.row(i).dot(w) + b);
        w *= 1.0 - eta * lambda;
        if (margin < 1.0) {
          w.noalias() += eta * y[i] * features.row(i).transpose();
          b += eta * y[i];
        }
        t += 1.0;
        w_avg += (w - w_avg) / t;
        b_avg += (b - b_avg) / t;
      }
      const double obj = binary_objective(features, y, w_avg, b_avg, lambda);
      if (obj < best) {
        best = obj;
        w_best = w_avg;
        b_best = b_avg;
      }
      model.objective_history[std::size_t(e)] += best / double(c_count);
    }
    model.weights.row(c) = w_best.transpose();
    model.bias[c] = b_best;
  }
  return model;
}

SpeciesPrediction predict_species(const SpeciesModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.weights.cols()) {
    throw Error(Errc::DimensionMismatch, "feature length " + std::to_string(x.size()) + " but model expects " +
                                             std::to_string(model.weights.cols()));
  }
  SpeciesPrediction p;
  p.scores = model.weights * x + model.bias;
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < p.scores.size(); ++c) {
    if (p.scores[c] > p.scores[best]) best = c;
  }
  p.label = model.classes[std::size_t(best)];
  return p;
}

void write_species_model(const fs::path& path, const SpeciesModel& model) {
  const auto c = model.weights.rows(), d = model.weights.cols();
  if (std::size_t(c) != model.classes.size() || model.bias.size() != c) {
    throw Error(Errc::DimensionMismatch, "species model shape disagrees with its class list");
  }
  const std::string payload = path.filename().string() + ".f64";
  json doc = {{"format_version", kFormatVersion},
              {"classes", model.classes},
              {"dim", d},
              {"config",
               {{"epochs", model.config.epochs},
                {"learning_rate", model.config.learning_rate},
                {"lambda", model.config.lambda},
                {"seed", model.config.seed}}},
              {"objective_history", model.objective_history},
              {"payload", payload},
              {"encoding", "float64-le"}};
  detail::write_json_file(path, doc);
  auto out = detail::open_output(payload_path(path, payload), true);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = model.weights;
  detail::write_le<double>(out, std::span<const double>(w.data(), std::size_t(w.size())));
  detail::write_le<double>(out, std::span<const double>(model.bias.data(), std::size_t(c)));
  if (!out) throw Error(Errc::IoError, "failed writing species weights for " + path.string());
}

SpeciesModel read_species_model(const fs::path& path) {
  const json doc = detail::read_json_file(path);
  const std::string where = path.string();
  if (detail::json_field<int>(doc, "format_version", where) != kFormatVersion) {
    throw Error(Errc::ParseError, where + ": unsupported format_version");
  }
  SpeciesModel m;
  m.classes = detail::json_field<std::vector<std::string>>(doc, "classes", where);
  if (m.classes.empty()) throw Error(Errc::ParseError, where + ": empty class list");
  const auto d = detail::json_field<Eigen::Index>(doc, "dim", where);
  const json cfg = detail::json_field<json>(doc, "config", where);
  m.config.epochs = detail::json_field<int>(cfg, "epochs", where);
  m.config.learning_rate = detail::json_field<double>(cfg, "learning_rate", where);
  m.config.lambda = detail::json_field<double>(cfg, "lambda", where);
  m.config.seed = detail::json_field<std::uint64_t>(cfg, "seed", where);
  m.objective_history = detail::json_field<std::vector<double>>(doc, "objective_history", where);
  const auto c = Eigen::Index(m.classes.size());
  auto in = detail::open_input(payload_path(path, detail::json_field<std::string>(doc, "payload", where)), true);
  const auto w = detail::read_le<double>(in, std::size_t(c * d), where);
  const auto b = detail::read_le<double>(in, std::size_t(c), where);
  m.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data(), c, d);
  m.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), c);
  if (!m.weights.allFinite() || !m.bias.allFinite()) throw Error(Errc::ParseError, where + ": non-finite weights");
  return m;
}

}  // namespace treecat
