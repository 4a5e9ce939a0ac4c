#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pinf/features.hpp"
#include "pinf/mlp.hpp"
#include "pinf/quality.hpp"

namespace pinf {

struct TrainConfig {
  double learning_rate = 1e-3;  // 1e-5 reproduces the deep-encoder setting
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 100;
  std::size_t patience = 3;
  std::uint64_t seed = 1;
  std::size_t hidden = 64;
  bool single_task = false;

  void validate() const;
};

struct TrainHistory {
  double initial_val_loss = 0.0;
  std::vector<double> train_loss;  // per epoch, index 0 = epoch 1
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;  // 1-based
  std::size_t stop_epoch = 0;  // 1-based; epochs actually run
  bool stopped_early = false;
};

/// Patience-based stopping on a monitored loss: a new strict minimum resets
/// the counter; `patience` consecutive non-improving epochs stop training.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  /// Records the loss of the next epoch. Returns true when this epoch set a
  /// new minimum (the caller should checkpoint).
  bool observe(double loss);
  bool should_stop() const { return bad_epochs_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t epochs() const { return epochs_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t bad_epochs_ = 0;
  double best_loss_ = 0.0;
};

struct TrainMeta {
  std::uint64_t seed = 0;
  double learning_rate = 0.0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  bool single_task = false;
};

/// A trained regressor together with the scaler fitted on its training set.
struct Model {
  MlpParams params;
  Scaler scaler;
  TrainMeta meta;
};

struct TrainResult {
  Model model;
  TrainHistory history;
};

/// Seeded mini-batch Adam with early stopping on the validation loss. The
/// returned parameters are those of the best epoch.
TrainResult train(std::span<const Example> train_set, std::span<const Example> val_set,
                  const TrainConfig& cfg);

/// Raw features in, raw predictions out (scaler applied internally).
QualityPrediction predict_features(const Model& model, const FeatureVector& raw);
QualityPrediction predict(const Model& model, const RasterImage& img);

inline constexpr int kModelFormatVersion = 1;

std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text);
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace pinf
