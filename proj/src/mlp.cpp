#include "pinf/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "pinf/rng.hpp"

namespace pinf {

MlpParams MlpParams::zeros(std::size_t hidden) {
  MlpParams p;
  p.hidden = hidden;
  p.w1.assign(kFeatureCount * hidden, 0.0);
  p.b1.assign(hidden, 0.0);
  p.w2.assign(hidden * kOutputCount, 0.0);
  p.b2.assign(kOutputCount, 0.0);
  return p;
}

bool MlpParams::same_shape(const MlpParams& other) const {
  return hidden == other.hidden && w1.size() == other.w1.size() && b1.size() == other.b1.size() &&
         w2.size() == other.w2.size() && b2.size() == other.b2.size();
}

bool MlpParams::finite() const {
  auto ok = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return ok(w1) && ok(b1) && ok(w2) && ok(b2);
}

std::vector<double> MlpParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(size());
  for (const auto* part : {&w1, &b1, &w2, &b2}) flat.insert(flat.end(), part->begin(), part->end());
  return flat;
}

void MlpParams::assign(std::span<const double> flat) {
  if (flat.size() != size()) throw Error("flat parameter vector has the wrong length");
  auto it = flat.begin();
  for (auto* part : {&w1, &b1, &w2, &b2}) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(part->size()), part->begin());
    it += static_cast<std::ptrdiff_t>(part->size());
  }
}

MlpParams init_params(std::uint64_t seed, std::size_t hidden) {
  if (hidden < 1) throw Error("hidden width must be at least 1");
  MlpParams p = MlpParams::zeros(hidden);
  Rng rng(seed);
  const double bound1 = std::sqrt(6.0 / static_cast<double>(kFeatureCount));
  for (double& w : p.w1) w = rng.uniform(-bound1, bound1);
  const double bound2 = std::sqrt(6.0 / static_cast<double>(hidden));
  for (double& w : p.w2) w = rng.uniform(-bound2, bound2);
  return p;
}

namespace {

void check_shape(const MlpParams& p) {
  if (p.hidden == 0 || p.w1.size() != kFeatureCount * p.hidden || p.b1.size() != p.hidden ||
      p.w2.size() != p.hidden * kOutputCount || p.b2.size() != kOutputCount) {
    throw SizeError("MLP parameter dimensions are inconsistent");
  }
}

// Pre-activation of the hidden layer.
void hidden_preactivation(const MlpParams& p, const FeatureVector& x, std::vector<double>& z) {
  z.assign(p.b1.begin(), p.b1.end());
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const double xi = x[i];
    const double* row = p.w1.data() + i * p.hidden;
    for (std::size_t h = 0; h < p.hidden; ++h) z[h] += xi * row[h];
  }
}

OutputVector output_from_hidden(const MlpParams& p, const std::vector<double>& a) {
  OutputVector out{};
  std::copy(p.b2.begin(), p.b2.end(), out.begin());
  for (std::size_t h = 0; h < p.hidden; ++h) {
    const double ah = a[h];
    if (ah == 0.0) continue;
    const double* row = p.w2.data() + h * kOutputCount;
    for (std::size_t o = 0; o < kOutputCount; ++o) out[o] += ah * row[o];
  }
  return out;
}

void check_example(const Example& ex) {
  for (double v : ex.x.values)
    if (!std::isfinite(v)) throw Error("non-finite feature in training batch");
  for (double v : ex.target)
    if (!std::isfinite(v)) throw Error("non-finite target in training batch");
}

}  // namespace

OutputVector forward(const MlpParams& p, const FeatureVector& x) {
  check_shape(p);
  std::vector<double> a;
  hidden_preactivation(p, x, a);
  for (double& v : a) v = std::max(v, 0.0);
  return output_from_hidden(p, a);
}

LossAndGrad loss_and_grad(const MlpParams& p, std::span<const Example> batch,
                          const TaskMask& mask) {
  check_shape(p);
  if (batch.empty()) throw Error("loss_and_grad needs a non-empty batch");
  LossAndGrad result{0.0, MlpParams::zeros(p.hidden)};
  MlpParams& g = result.grad;
  const double scale = 1.0 / (static_cast<double>(batch.size()) * kOutputCount);

  std::vector<double> z, a, da(p.hidden);
  for (const Example& ex : batch) {
    check_example(ex);
    hidden_preactivation(p, ex.x, z);
    a = z;
    for (double& v : a) v = std::max(v, 0.0);
    const OutputVector out = output_from_hidden(p, a);

    OutputVector dout{};
    for (std::size_t o = 0; o < kOutputCount; ++o) {
      const double e = out[o] - ex.target[o];
      result.loss += mask[o] * e * e * scale;
      dout[o] = 2.0 * mask[o] * e * scale;
      g.b2[o] += dout[o];
    }
    for (std::size_t h = 0; h < p.hidden; ++h) {
      const double* w2row = p.w2.data() + h * kOutputCount;
      double* g2row = g.w2.data() + h * kOutputCount;
      double acc = 0.0;
      for (std::size_t o = 0; o < kOutputCount; ++o) {
        g2row[o] += a[h] * dout[o];
        acc += w2row[o] * dout[o];
      }
      da[h] = z[h] > 0.0 ? acc : 0.0;
      g.b1[h] += da[h];
    }
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      const double xi = ex.x[i];
      double* g1row = g.w1.data() + i * p.hidden;
      for (std::size_t h = 0; h < p.hidden; ++h) g1row[h] += xi * da[h];
    }
  }
  return result;
}

double batch_loss(const MlpParams& p, std::span<const Example> batch, const TaskMask& mask) {
  if (batch.empty()) throw Error("batch_loss needs a non-empty batch");
  const double scale = 1.0 / (static_cast<double>(batch.size()) * kOutputCount);
  double loss = 0.0;
  for (const Example& ex : batch) {
    const OutputVector out = forward(p, ex.x);
    for (std::size_t o = 0; o < kOutputCount; ++o) {
      const double e = out[o] - ex.target[o];
      loss += mask[o] * e * e * scale;
    }
  }
  return loss;
}

AdamState AdamState::fresh(const MlpParams& p) {
  return AdamState{std::vector<double>(p.size(), 0.0), std::vector<double>(p.size(), 0.0), 0};
}

void adam_step(MlpParams& p, const MlpParams& grad, AdamState& state, const AdamConfig& cfg) {
  if (!p.same_shape(grad) || state.m.size() != p.size() || state.v.size() != p.size()) {
    throw SizeError("Adam step: parameter, gradient and state shapes differ");
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  std::size_t k = 0;
  auto update = [&](std::vector<double>& param, const std::vector<double>& g) {
    for (std::size_t i = 0; i < param.size(); ++i, ++k) {
      state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g[i];
      state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = state.m[k] / bc1;
      const double v_hat = state.v[k] / bc2;
      param[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  };
  update(p.w1, grad.w1);
  update(p.b1, grad.b1);
  update(p.w2, grad.w2);
  update(p.b2, grad.b2);
}

}  // namespace pinf
