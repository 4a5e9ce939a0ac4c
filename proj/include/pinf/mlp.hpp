#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pinf/features.hpp"
#include "pinf/quality.hpp"

namespace pinf {

using OutputVector = std::array<double, kOutputCount>;

/// Weights of the 29 -> H -> 7 regressor. Rectifier on the hidden layer,
/// identity on the output. Outputs are ordered as output_names().
struct MlpParams {
  std::size_t hidden = 0;
  std::vector<double> w1;  // kFeatureCount x hidden, input-major
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden x kOutputCount, hidden-major
  std::vector<double> b2;  // kOutputCount

  /// Zero-initialized parameters of the given width.
  static MlpParams zeros(std::size_t hidden);

  std::size_t size() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
  bool same_shape(const MlpParams& other) const;
  bool finite() const;

  /// Concatenation w1 | b1 | w2 | b2, and its inverse.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Weights uniform in +-sqrt(6 / fan_in), biases zero.
MlpParams init_params(std::uint64_t seed, std::size_t hidden);

OutputVector forward(const MlpParams& p, const FeatureVector& x);

struct Example {
  FeatureVector x;
  OutputVector target{};
};

/// Per-output loss weights; all ones for multi-task training. Single-task
/// training zeroes the six flaw terms but keeps the divisor at 7.
using TaskMask = std::array<double, kOutputCount>;
inline constexpr TaskMask kMultiTask = {1, 1, 1, 1, 1, 1, 1};
inline constexpr TaskMask kSingleTask = {1, 0, 0, 0, 0, 0, 0};

struct LossAndGrad {
  double loss = 0.0;
  MlpParams grad;
};

/// Mean over the batch and the 7 outputs of the (masked) squared error, with
/// exact analytic gradients.
LossAndGrad loss_and_grad(const MlpParams& p, std::span<const Example> batch,
                          const TaskMask& mask = kMultiTask);

/// Loss only; same definition as loss_and_grad.
double batch_loss(const MlpParams& p, std::span<const Example> batch,
                  const TaskMask& mask = kMultiTask);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  static AdamState fresh(const MlpParams& p);
};

/// One bias-corrected Adam update of `p` in place.
void adam_step(MlpParams& p, const MlpParams& grad, AdamState& state, const AdamConfig& cfg);

}  // namespace pinf
