#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pinf/calibration.hpp"
#include "pinf/corpus.hpp"
#include "pinf/mlp.hpp"
#include "pinf/model.hpp"

namespace pinf::test {

/// Fresh, empty directory under the build tree.
std::filesystem::path scratch_dir(const std::string& name);

std::string data_path(const std::string& name);

/// run_cli with a vector of arguments; stdout/stderr captured.
struct CliRun {
  int status = 0;
  std::string out;
  std::string err;
};
CliRun cli(const std::vector<std::string>& args);

/// Small generated corpus with a model and calibration trained through the
/// CLI. Built once per process.
struct TrainedFixture {
  std::filesystem::path dir;
  std::string model_path;
  std::string calib_path;
  Model model;
  Calibration calibration;
  AnnotatedCorpus train;
  AnnotatedCorpus val_pool;
  AnnotatedCorpus test;
};
const TrainedFixture& trained_fixture();

/// A clean scene and the same scene with one flaw at `severity`.
RasterImage clean_scene(std::uint64_t seed);
RasterImage degraded_scene(std::uint64_t seed, FlawKind flaw, int severity);

std::vector<std::uint8_t> ppm(const RasterImage& img);

/// Zero-weight model whose prediction is `out` for every image.
Model constant_model(const OutputVector& out, std::size_t hidden = 4);

/// Independent forward pass with explicit index arithmetic; optionally
/// returns the hidden pre-activations.
OutputVector naive_forward(const MlpParams& p, const FeatureVector& x, std::vector<double>* preact = nullptr);

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;  // directions where h crossed a ReLU kink
};
/// Central differences (h = 1e-5) of the masked mean squared error against
/// loss_and_grad for a seeded random net and batch. Relative error is
/// |a - n| / max(|a|, |n|, 1e-6).
GradCheck gradient_check(std::uint64_t seed, std::size_t hidden, std::size_t batch,
                         const TaskMask& mask = kMultiTask);

// Brute-force detection oracles.
double auc_roc_pairwise(const ScoredLabels& d);
/// Recomputes precision and recall from scratch at every distinct score,
/// highest first, and sums precision times the recall increment.
double auc_pr_cuts(const ScoredLabels& d);
/// Tries every distinct score in ascending order, keeping the first maximum
/// of precision x recall.
double threshold_exhaustive(const ScoredLabels& d);
/// Random instance with scores on a coarse grid so ties are common; always
/// at least one positive and one negative.
ScoredLabels random_scored(std::uint64_t seed, std::size_t max_n);

}  // namespace pinf::test
