#include "empathy/models/model.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "empathy/hash.hpp"
#include "empathy/kernels.hpp"
#include "empathy/models/families.hpp"
#include "empathy/text.hpp"

namespace empathy::models {

using nlohmann::json;

std::string_view to_string(ClassifierFamily family) {
  switch (family) {
    case ClassifierFamily::LR: return "LR";
    case ClassifierFamily::SVC: return "SVC";
    case ClassifierFamily::DT: return "DT";
    case ClassifierFamily::RF: return "RF";
    case ClassifierFamily::MLP: return "MLP";
  }
  return "?";
}

ClassifierFamily parse_family(std::string_view text) {
  const auto upper = text::to_upper(text::trim(text));
  for (auto f : kAllFamilies) {
    if (upper == to_string(f)) return f;
  }
  throw PreconditionError("unknown classifier family: " + std::string(text));
}

json default_hyperparameters(ClassifierFamily family) {
  switch (family) {
    case ClassifierFamily::LR: return {{"C", 1.0}, {"max_iter", 1000}, {"tol", 1e-6}};
    case ClassifierFamily::SVC:
      return {{"C", 1.0}, {"kernel", "rbf"}, {"gamma", "scale"}, {"tol", 1e-3}, {"max_iter", 10000000}};
    case ClassifierFamily::DT: return {{"max_depth", nullptr}, {"min_samples_split", 2}, {"max_features", nullptr}};
    case ClassifierFamily::RF:
      return {{"n_estimators", 100},
              {"max_depth", nullptr},
              {"min_samples_split", 2},
              {"max_features", "sqrt"},
              {"bootstrap", true}};
    case ClassifierFamily::MLP:
      return {{"hidden_units", 100}, {"learning_rate", 1e-3}, {"alpha", 1e-4}, {"batch_size", 200},
              {"max_iter", 200},     {"tol", 1e-4},           {"n_iter_no_change", 10}};
  }
  return json::object();
}

namespace {

[[noreturn]] void bad(ClassifierFamily family, const std::string& name, const std::string& why) {
  throw PreconditionError(std::string(to_string(family)) + " hyperparameter '" + name + "' " + why);
}

void positive_number(ClassifierFamily f, const json& hp, const std::string& name) {
  const auto& v = hp.at(name);
  if (!v.is_number() || !(v.get<double>() > 0.0) || !std::isfinite(v.get<double>())) bad(f, name, "must be > 0");
}

void non_negative_number(ClassifierFamily f, const json& hp, const std::string& name) {
  const auto& v = hp.at(name);
  if (!v.is_number() || !(v.get<double>() >= 0.0)) bad(f, name, "must be >= 0");
}

void int_at_least(ClassifierFamily f, const json& hp, const std::string& name, long minimum) {
  const auto& v = hp.at(name);
  if (!v.is_number_integer() || v.get<long>() < minimum) bad(f, name, "must be an integer >= " + std::to_string(minimum));
}

void tree_shape(ClassifierFamily f, const json& hp) {
  const auto& depth = hp.at("max_depth");
  if (!depth.is_null() && (!depth.is_number_integer() || depth.get<long>() < 1)) bad(f, "max_depth", "must be null or >= 1");
  int_at_least(f, hp, "min_samples_split", 2);
  const auto& mf = hp.at("max_features");
  const bool ok = mf.is_null() || (mf.is_string() && (mf == "sqrt" || mf == "log2")) ||
                  (mf.is_number_integer() && mf.get<long>() >= 1);
  if (!ok) bad(f, "max_features", "must be null, \"sqrt\", \"log2\" or a positive integer");
}

}  // namespace

void validate_hyperparameters(ClassifierFamily family, const json& hp) {
  if (!hp.is_object()) throw PreconditionError("hyperparameters must be an object");
  const auto defaults = default_hyperparameters(family);
  for (const auto& [name, value] : hp.items()) {
    if (!defaults.contains(name)) bad(family, name, "is not recognized");
  }
  for (const auto& [name, value] : defaults.items()) {
    if (!hp.contains(name)) bad(family, name, "is missing");
  }
  switch (family) {
    case ClassifierFamily::LR:
      positive_number(family, hp, "C");
      int_at_least(family, hp, "max_iter", 1);
      positive_number(family, hp, "tol");
      break;
    case ClassifierFamily::SVC: {
      positive_number(family, hp, "C");
      const auto& kernel = hp.at("kernel");
      if (!kernel.is_string() || (kernel != "rbf" && kernel != "linear")) bad(family, "kernel", "must be \"rbf\" or \"linear\"");
      const auto& gamma = hp.at("gamma");
      if (!(gamma == "scale") && !(gamma.is_number() && gamma.get<double>() > 0.0)) {
        bad(family, "gamma", "must be \"scale\" or > 0");
      }
      positive_number(family, hp, "tol");
      int_at_least(family, hp, "max_iter", 1);
      break;
    }
    case ClassifierFamily::DT: tree_shape(family, hp); break;
    case ClassifierFamily::RF:
      int_at_least(family, hp, "n_estimators", 1);
      tree_shape(family, hp);
      if (!hp.at("bootstrap").is_boolean()) bad(family, "bootstrap", "must be a boolean");
      break;
    case ClassifierFamily::MLP:
      int_at_least(family, hp, "hidden_units", 1);
      positive_number(family, hp, "learning_rate");
      non_negative_number(family, hp, "alpha");
      int_at_least(family, hp, "batch_size", 1);
      int_at_least(family, hp, "max_iter", 1);
      non_negative_number(family, hp, "tol");
      int_at_least(family, hp, "n_iter_no_change", 1);
      break;
  }
}

ClassifierSpec ClassifierSpec::make(ClassifierFamily family, const json& overrides, std::uint64_t seed) {
  ClassifierSpec spec;
  spec.family = family;
  spec.seed = seed;
  spec.hyperparameters = default_hyperparameters(family);
  if (!overrides.is_null()) {
    if (!overrides.is_object()) throw PreconditionError("hyperparameter overrides must be an object");
    for (const auto& [name, value] : overrides.items()) spec.hyperparameters[name] = value;
  }
  validate_hyperparameters(family, spec.hyperparameters);
  return spec;
}

nlohmann::ordered_json ClassifierSpec::to_json() const {
  nlohmann::ordered_json out;
  out["family"] = to_string(family);
  out["hyperparameters"] = nlohmann::ordered_json::parse(hyperparameters.dump());
  out["seed"] = seed;
  return out;
}

ClassifierSpec ClassifierSpec::from_json(const json& doc) {
  return make(parse_family(doc.at("family").get<std::string>()), doc.value("hyperparameters", json::object()),
              doc.value("seed", std::uint64_t{0}));
}

namespace {

std::string matrix_fingerprint(const FeatureMatrix& x, std::span<const int> y) {
  std::string bytes;
  for (const auto& name : x.schema) bytes += name + '\x1f';
  bytes += '\x1e';
  bytes.append(reinterpret_cast<const char*>(x.values.data.data()), x.values.data.size() * sizeof(double));
  bytes += '\x1e';
  for (int label : y) bytes += static_cast<char>('0' + label);
  return sha256_hex(bytes);
}

using FitFn = std::shared_ptr<const Model> (*)(const Matrix&, std::span<const int>, detail::FitContext);
using LoadFn = std::shared_ptr<const Model> (*)(const json&);

FitFn fit_for(ClassifierFamily family) {
  switch (family) {
    case ClassifierFamily::LR: return detail::fit_logistic;
    case ClassifierFamily::SVC: return detail::fit_svc;
    case ClassifierFamily::DT: return detail::fit_tree;
    case ClassifierFamily::RF: return detail::fit_forest;
    case ClassifierFamily::MLP: return detail::fit_mlp;
  }
  throw PreconditionError("unknown family");
}

LoadFn load_for(ClassifierFamily family) {
  switch (family) {
    case ClassifierFamily::LR: return detail::load_logistic;
    case ClassifierFamily::SVC: return detail::load_svc;
    case ClassifierFamily::DT: return detail::load_tree;
    case ClassifierFamily::RF: return detail::load_forest;
    case ClassifierFamily::MLP: return detail::load_mlp;
  }
  throw PreconditionError("unknown family");
}

std::vector<int> label_indices(std::span<const EmpathyLabel> y) {
  std::vector<int> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i].index();
  return out;
}

void check_schema(const TrainedModel& model, const FeatureMatrix& x) {
  if (x.schema != model.schema || x.cols() != model.schema.size()) {
    throw PreconditionError("schema mismatch: model trained on " + std::to_string(model.schema.size()) +
                            " columns [" + text::join(model.schema, ",") + "], got " + std::to_string(x.cols()) +
                            " [" + text::join(x.schema, ",") + "]");
  }
}

}  // namespace

TrainedModel train(const ClassifierSpec& spec, const FeatureMatrix& x) { return train(spec, x, x.labels); }

TrainedModel train(const ClassifierSpec& spec, const FeatureMatrix& x, std::span<const EmpathyLabel> y) {
  if (x.rows() == 0) throw PreconditionError("cannot train on an empty matrix");
  if (y.size() != x.rows()) {
    throw DataError("label misalignment: " + std::to_string(x.rows()) + " rows but " + std::to_string(y.size()) +
                    " labels");
  }
  if (x.schema.size() != x.cols()) throw DataError("schema has " + std::to_string(x.schema.size()) + " names for " +
                                                   std::to_string(x.cols()) + " columns");
  for (std::size_t i = 0; i < x.values.data.size(); ++i) {
    if (!std::isfinite(x.values.data[i])) {
      throw DataError("non-finite feature at row " + std::to_string(i / x.cols()) + ", column '" +
                      x.schema[i % x.cols()] + "'");
    }
  }
  const auto labels = label_indices(y);
  ClassCounts counts{};
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  for (int c = 0; c < EmpathyLabel::kNumClasses; ++c) {
    if (counts[c] == 0) throw PreconditionError("missing class " + std::to_string(c + 1) + " in training labels");
  }
  validate_hyperparameters(spec.family, spec.hyperparameters);

  TrainedModel out;
  out.spec = spec;
  out.schema = x.schema;
  out.training_fingerprint = matrix_fingerprint(x, labels);
  out.model = fit_for(spec.family)(x.values, labels, {spec.hyperparameters, spec.seed, out.warnings});
  return out;
}

int argmax_lowest(std::span<const double> scores) {
  int best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c) {
    if (scores[c] > scores[best]) best = static_cast<int>(c);
  }
  return best;
}

PredictionBatch predict(const TrainedModel& model, const FeatureMatrix& x) {
  PredictionBatch out;
  out.record_ids = x.record_ids;
  if (x.rows() == 0) return out;
  check_schema(model, x);
  out.scores = model.model->class_scores(x.values);
  out.labels.reserve(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out.labels.emplace_back(EmpathyLabel::from_index(argmax_lowest(out.scores.row(r))));
  return out;
}

double accuracy(std::span<const std::optional<EmpathyLabel>> prediction, std::span<const EmpathyLabel> truth) {
  if (prediction.size() != truth.size()) {
    throw PreconditionError("accuracy: " + std::to_string(prediction.size()) + " predictions for " +
                            std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += prediction[i] && *prediction[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double accuracy(const PredictionBatch& prediction, std::span<const EmpathyLabel> truth) {
  return accuracy(std::span<const std::optional<EmpathyLabel>>(prediction.labels), truth);
}

bool supports_intrinsic(const ClassifierSpec& spec) {
  switch (spec.family) {
    case ClassifierFamily::LR:
    case ClassifierFamily::DT:
    case ClassifierFamily::RF: return true;
    case ClassifierFamily::SVC: return spec.hyperparameters.value("kernel", std::string("rbf")) == "linear";
    case ClassifierFamily::MLP: return false;
  }
  return false;
}

std::vector<double> importance(const TrainedModel& model, const FeatureMatrix& x, std::span<const EmpathyLabel> y,
                               ImportanceMethod method, const ImportanceOptions& options) {
  if (method == ImportanceMethod::intrinsic) {
    auto values = model.model->intrinsic_importance();
    if (!values) {
      throw PreconditionError("intrinsic importance is not available for " + model.spec.name() +
                              (model.spec.family == ClassifierFamily::SVC ? " with a non-linear kernel" : ""));
    }
    return *values;
  }
  check_schema(model, x);
  if (y.size() != x.rows()) throw DataError("importance: label misalignment");
  const auto labels = label_indices(y);
  const Model& m = *model.model;
  kernels::BatchPredictor predictor = [&m](const Matrix& values) {
    const Matrix scores = m.class_scores(values);
    std::vector<int> out(values.rows);
    for (std::size_t r = 0; r < values.rows; ++r) out[r] = argmax_lowest(scores.row(r));
    return out;
  };
  return kernels::permutation_importance(predictor, x.values, labels, options.repeats, options.seed);
}

std::string TrainedModel::fingerprint() const { return sha256_hex(to_json().dump()); }

nlohmann::ordered_json TrainedModel::to_json() const {
  nlohmann::ordered_json out;
  out["spec"] = spec.to_json();
  out["schema"] = schema;
  out["training_fingerprint"] = training_fingerprint;
  out["warnings"] = warnings;
  out["parameters"] = nlohmann::ordered_json::parse(model->parameters().dump());
  return out;
}

TrainedModel TrainedModel::from_json(const json& doc) {
  TrainedModel out;
  out.spec = ClassifierSpec::from_json(doc.at("spec"));
  out.schema = doc.at("schema").get<std::vector<std::string>>();
  out.training_fingerprint = doc.at("training_fingerprint").get<std::string>();
  out.warnings = doc.value("warnings", std::vector<std::string>{});
  out.model = load_for(out.spec.family)(doc.at("parameters"));
  return out;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file " + path.string());
  out << model.to_json().dump() << '\n';
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read model file " + path.string());
  try {
    return TrainedModel::from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw DataError("corrupt model file " + path.string() + ": " + e.what());
  }
}

}  // namespace empathy::models
