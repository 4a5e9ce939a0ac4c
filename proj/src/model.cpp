#include "pinf/model.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "pinf/rng.hpp"

namespace pinf {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw Error("learning rate must be > 0");
  if (batch_size < 1) throw Error("batch size must be >= 1");
  if (patience < 1) throw Error("patience must be >= 1");
  if (max_epochs < 1) throw Error("max epochs must be >= 1");
  if (hidden < 1) throw Error("hidden width must be >= 1");
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience < 1) throw Error("patience must be >= 1");
}

bool EarlyStopping::observe(double loss) {
  ++epochs_;
  if (best_epoch_ == 0 || loss < best_loss_) {
    best_loss_ = loss;
    best_epoch_ = epochs_;
    bad_epochs_ = 0;
    return true;
  }
  ++bad_epochs_;
  return false;
}

TrainResult train(std::span<const Example> train_set, std::span<const Example> val_set,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw Error("training and validation sets must be non-empty");

  std::vector<FeatureVector> raw;
  raw.reserve(train_set.size());
  for (const auto& ex : train_set) raw.push_back(ex.x);
  const Scaler scaler = fit_scaler(raw);

  auto standardize = [&](std::span<const Example> set) {
    std::vector<Example> out(set.begin(), set.end());
    for (auto& ex : out) ex.x = scaler.apply(ex.x);
    return out;
  };
  const std::vector<Example> train_std = standardize(train_set);
  const std::vector<Example> val_std = standardize(val_set);
  const TaskMask& mask = cfg.single_task ? kSingleTask : kMultiTask;

  MlpParams params = init_params(cfg.seed, cfg.hidden);
  AdamState adam = AdamState::fresh(params);
  const AdamConfig adam_cfg{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon};

  TrainHistory history;
  history.initial_val_loss = batch_loss(params, val_std, mask);
  EarlyStopping stopper(cfg.patience);
  MlpParams best = params;

  std::vector<std::size_t> order(train_std.size());
  std::vector<Example> batch;
  batch.reserve(cfg.batch_size);
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, epoch));
    rng.shuffle(std::span<std::size_t>(order));

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_std[order[i]]);
      LossAndGrad lg = loss_and_grad(params, batch, mask);
      epoch_loss += lg.loss * static_cast<double>(batch.size());
      adam_step(params, lg.grad, adam, adam_cfg);
    }
    if (!params.finite()) throw Error("training diverged (non-finite parameters)");
    history.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    const double val = batch_loss(params, val_std, mask);
    history.val_loss.push_back(val);
    if (stopper.observe(val)) best = params;
    if (stopper.should_stop()) {
      history.stopped_early = true;
      break;
    }
  }
  history.best_epoch = stopper.best_epoch();
  history.stop_epoch = stopper.epochs();

  TrainMeta meta{cfg.seed, cfg.learning_rate, history.stop_epoch, history.best_epoch,
                 cfg.single_task};
  return {Model{std::move(best), scaler, meta}, std::move(history)};
}

QualityPrediction predict_features(const Model& model, const FeatureVector& raw) {
  return QualityPrediction::from_array(forward(model.params, model.scaler.apply(raw)));
}

QualityPrediction predict(const Model& model, const RasterImage& img) {
  return predict_features(model, extract_features(img));
}

// ---------------------------------------------------------------- JSON

namespace {

std::vector<double> finite_array(const json& doc, const char* key, std::size_t expected) {
  if (!doc.contains(key) || !doc.at(key).is_array()) {
    throw SchemaError(std::string("model file: missing array '") + key + "'");
  }
  std::vector<double> out;
  for (const auto& v : doc.at(key)) {
    if (!v.is_number()) throw SchemaError(std::string("model file: '") + key + "' holds a non-number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw SchemaError(std::string("model file: non-finite value in '") + key + "'");
    out.push_back(d);
  }
  if (out.size() != expected) {
    throw SchemaError(std::string("model file: '") + key + "' has " + std::to_string(out.size()) +
                      " entries, expected " + std::to_string(expected));
  }
  return out;
}

}  // namespace

std::string model_to_json(const Model& model) {
  json doc;
  doc["version"] = kModelFormatVersion;
  doc["feature_layout"] = std::string(kFeatureLayout);
  doc["scaler"] = {{"mean", model.scaler.mean}, {"std", model.scaler.std}};
  doc["hidden"] = model.params.hidden;
  doc["w1"] = model.params.w1;
  doc["b1"] = model.params.b1;
  doc["w2"] = model.params.w2;
  doc["b2"] = model.params.b2;
  doc["outputs"] = output_names();
  doc["train_meta"] = {{"seed", model.meta.seed},
                       {"lr", model.meta.learning_rate},
                       {"epochs_run", model.meta.epochs_run},
                       {"best_epoch", model.meta.best_epoch},
                       {"single_task", model.meta.single_task}};
  return doc.dump(1);
}

Model model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("model file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("version") || !doc.at("version").is_number_integer()) {
    throw SchemaError("model file: missing integer 'version'");
  }
  const int version = doc.at("version").get<int>();
  if (version != kModelFormatVersion) {
    throw SchemaError("model file: unsupported version " + std::to_string(version) +
                      " (expected " + std::to_string(kModelFormatVersion) + ")");
  }
  if (doc.value("feature_layout", std::string{}) != kFeatureLayout) {
    throw SchemaError("model file: feature_layout must be '" + std::string(kFeatureLayout) + "'");
  }
  if (!doc.contains("outputs") || doc.at("outputs") != json(output_names())) {
    throw SchemaError(
        "model file: 'outputs' must list unrecognizable, framing, blur, dark, bright, obscured, "
        "rotation in order");
  }
  if (!doc.contains("hidden") || !doc.at("hidden").is_number_unsigned() ||
      doc.at("hidden").get<std::size_t>() == 0) {
    throw SchemaError("model file: 'hidden' must be a positive integer");
  }
  if (!doc.contains("scaler") || !doc.at("scaler").is_object()) {
    throw SchemaError("model file: missing 'scaler'");
  }
  Model m;
  const std::size_t hidden = doc.at("hidden").get<std::size_t>();
  m.params.hidden = hidden;
  m.params.w1 = finite_array(doc, "w1", kFeatureCount * hidden);
  m.params.b1 = finite_array(doc, "b1", hidden);
  m.params.w2 = finite_array(doc, "w2", hidden * kOutputCount);
  m.params.b2 = finite_array(doc, "b2", kOutputCount);
  const auto mean = finite_array(doc.at("scaler"), "mean", kFeatureCount);
  const auto sd = finite_array(doc.at("scaler"), "std", kFeatureCount);
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (sd[i] < Scaler::kStdFloor) throw SchemaError("model file: scaler std below floor");
    m.scaler.mean[i] = mean[i];
    m.scaler.std[i] = sd[i];
  }
  if (doc.contains("train_meta") && doc.at("train_meta").is_object()) {
    const json& meta = doc.at("train_meta");
    m.meta.seed = meta.value("seed", std::uint64_t{0});
    m.meta.learning_rate = meta.value("lr", 0.0);
    m.meta.epochs_run = meta.value("epochs_run", std::size_t{0});
    m.meta.best_epoch = meta.value("best_epoch", std::size_t{0});
    m.meta.single_task = meta.value("single_task", false);
  }
  return m;
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write model file " + path);
  out << model_to_json(model) << '\n';
  if (!out) throw Error("write failed for model file " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read model file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return model_from_json(buffer.str());
}

}  // namespace pinf
