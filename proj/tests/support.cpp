#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

#include "pinf/app.hpp"
#include "pinf/image.hpp"
#include "pinf/rng.hpp"

namespace pinf::test {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::path(PINF_TEST_SCRATCH_DIR) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string data_path(const std::string& name) { return (fs::path(PINF_TEST_DATA_DIR) / name).string(); }

CliRun cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"pinf"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.status = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

const TrainedFixture& trained_fixture() {
  static TrainedFixture f;
  static std::once_flag once;
  std::call_once(once, [] {
    f.dir = scratch_dir("trained_fixture");
    const std::string corpus = (f.dir / "corpus").string();
    f.model_path = (f.dir / "model.json").string();
    f.calib_path = (f.dir / "calib.json").string();
    for (const auto& args : std::vector<std::vector<std::string>>{
             {"gen-corpus", "--out", corpus, "--count", "800", "--seed", "7"},
             {"train", "--corpus", corpus, "--out", f.model_path},
             {"calibrate", "--corpus", corpus, "--model", f.model_path, "--out", f.calib_path}}) {
      const CliRun r = cli(args);
      if (r.status != 0) throw Error("fixture step " + args.front() + " failed: " + r.err);
    }
    f.model = load_model(f.model_path);
    f.calibration = load_calibration(f.calib_path);
    f.train = load_annotations(corpus + "/train.json");
    f.val_pool = load_annotations(corpus + "/val.json");
    f.test = split_validation(f.val_pool, f.val_pool.seed).test;
  });
  return f;
}

RasterImage clean_scene(std::uint64_t seed) { return render_scene(seed).image; }

RasterImage degraded_scene(std::uint64_t seed, FlawKind flaw, int severity) {
  DegradationSpec spec;
  spec.severity[flaw] = SeverityLabel(severity);
  spec.seed = seed;
  return degrade_image(render_scene(seed).image, spec);
}

std::vector<std::uint8_t> ppm(const RasterImage& img) { return encode_ppm(img); }

Model constant_model(const OutputVector& out, std::size_t hidden) {
  Model m;
  m.params = MlpParams::zeros(hidden);
  m.params.b2.assign(out.begin(), out.end());
  m.scaler.std.fill(1.0);
  return m;
}

}  // namespace pinf::test

namespace pinf::test {

OutputVector naive_forward(const MlpParams& p, const FeatureVector& x, std::vector<double>* preact) {
  const std::size_t H = p.hidden;
  std::vector<double> h(H);
  if (preact) preact->assign(H, 0.0);
  for (std::size_t j = 0; j < H; ++j) {
    double z = p.b1[j];
    for (std::size_t i = 0; i < kFeatureCount; ++i) z += x[i] * p.w1[i * H + j];
    if (preact) (*preact)[j] = z;
    h[j] = z > 0.0 ? z : 0.0;
  }
  OutputVector out{};
  for (std::size_t k = 0; k < kOutputCount; ++k) {
    double y = p.b2[k];
    for (std::size_t j = 0; j < H; ++j) y += h[j] * p.w2[j * kOutputCount + k];
    out[k] = y;
  }
  return out;
}

namespace {

double naive_loss(const MlpParams& p, const std::vector<Example>& batch, const TaskMask& mask) {
  double sum = 0.0;
  for (const Example& e : batch) {
    const OutputVector y = naive_forward(p, e.x);
    for (std::size_t k = 0; k < kOutputCount; ++k) sum += mask[k] * (y[k] - e.target[k]) * (y[k] - e.target[k]);
  }
  return sum / static_cast<double>(batch.size() * kOutputCount);
}

std::vector<bool> active_pattern(const MlpParams& p, const std::vector<Example>& batch) {
  std::vector<bool> out;
  std::vector<double> z;
  for (const Example& e : batch) {
    naive_forward(p, e.x, &z);
    for (double v : z) out.push_back(v > 0.0);
  }
  return out;
}

}  // namespace

GradCheck gradient_check(std::uint64_t seed, std::size_t hidden, std::size_t batch_size, const TaskMask& mask) {
  Rng rng(seed);
  MlpParams p = init_params(derive_seed(seed, 1), hidden);
  for (double& b : p.b1) b = rng.uniform(-0.5, 0.5);
  for (double& b : p.b2) b = rng.uniform(-0.5, 0.5);
  std::vector<Example> batch(batch_size);
  for (Example& e : batch) {
    for (double& v : e.x.values) v = rng.uniform(-2.0, 2.0);
    for (double& t : e.target) t = static_cast<double>(rng.uniform_int(0, 5));
  }
  const LossAndGrad lg = loss_and_grad(p, batch, mask);
  const std::vector<double> analytic = lg.grad.flatten();
  const std::vector<double> base = p.flatten();
  constexpr double h = 1e-5;
  GradCheck out;
  std::vector<double> probe = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    MlpParams plus = p, minus = p;
    probe[i] = base[i] + h;
    plus.assign(probe);
    probe[i] = base[i] - h;
    minus.assign(probe);
    probe[i] = base[i];
    if (active_pattern(plus, batch) != active_pattern(minus, batch)) {
      ++out.skipped_kinks;
      continue;
    }
    const double numeric = (naive_loss(plus, batch, mask) - naive_loss(minus, batch, mask)) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic[i] - numeric) / denom);
    ++out.checked;
  }
  return out;
}

}  // namespace pinf::test

namespace pinf::test {

double auc_roc_pairwise(const ScoredLabels& d) {
  double sum = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!d.labels[i]) continue;
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (d.labels[j]) continue;
      pairs += 1.0;
      if (d.scores[i] > d.scores[j]) sum += 1.0;
      if (d.scores[i] == d.scores[j]) sum += 0.5;
    }
  }
  return sum / pairs;
}

namespace {

std::vector<double> distinct_scores(const ScoredLabels& d) {
  std::vector<double> s = d.scores;
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

std::pair<double, double> counts_at(const ScoredLabels& d, double tau) {
  std::size_t tp = 0, fp = 0, pos = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    pos += d.labels[i];
    if (d.scores[i] >= tau) (d.labels[i] ? tp : fp) += 1;
  }
  const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  return {precision, static_cast<double>(tp) / static_cast<double>(pos)};
}

}  // namespace

double auc_pr_cuts(const ScoredLabels& d) {
  const std::vector<double> taus = distinct_scores(d);
  double ap = 0.0, prev_recall = 0.0;
  for (auto it = taus.rbegin(); it != taus.rend(); ++it) {
    const auto [precision, recall] = counts_at(d, *it);
    ap += precision * (recall - prev_recall);
    prev_recall = recall;
  }
  return ap;
}

double threshold_exhaustive(const ScoredLabels& d) {
  double best = -1.0, best_tau = 0.0;
  for (double tau : distinct_scores(d)) {
    const auto [precision, recall] = counts_at(d, tau);
    if (precision * recall > best) {
      best = precision * recall;
      best_tau = tau;
    }
  }
  return best_tau;
}

ScoredLabels random_scored(std::uint64_t seed, std::size_t max_n) {
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(rng.uniform_int(2, static_cast<std::int64_t>(max_n)));
  const double grid = static_cast<double>(rng.uniform_int(2, 60));
  const double bias = rng.uniform(0.0, 1.5);
  ScoredLabels d;
  for (std::size_t i = 0; i < n; ++i) {
    const bool label = rng.uniform() < 0.6;
    const double raw = rng.uniform(0.0, 1.0) + (label ? bias : 0.0);
    d.labels.push_back(label);
    d.scores.push_back(std::round(raw * grid) / grid);
  }
  d.labels[0] = true;
  d.labels[1] = false;
  return d;
}

}  // namespace pinf::test
