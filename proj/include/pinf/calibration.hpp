#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace pinf {

/// Parallel (score, label) arrays; label true = positive (poor image).
struct ScoredLabels {
  std::vector<double> scores;
  std::vector<bool> labels;

  std::size_t size() const { return scores.size(); }
  std::size_t positives() const;
  std::size_t negatives() const { return size() - positives(); }

  /// Throws pinf::Error on length mismatch, empty input or non-finite scores.
  void validate() const;
};

/// Mann-Whitney form: mean over (positive, negative) pairs of
/// 1 / 0.5 / 0 for higher / tied / lower positive score. Computed with a
/// sorted sweep over tie blocks.
double auc_roc(const ScoredLabels& d);

/// Average precision: descending sweep over tie blocks, summing
/// precision-at-cut times recall increment.
double auc_pr(const ScoredLabels& d);

struct PrecisionRecall {
  double precision = 0.0;  // 0 when nothing is predicted positive
  double recall = 0.0;
};

/// Positive prediction iff score >= tau.
PrecisionRecall precision_recall_at(const ScoredLabels& d, double tau);

struct Calibration {
  double tau_unrecognizable = 2.0;
  double flaw_feedback_threshold = 2.0;
  double val_precision = 0.0;
  double val_recall = 0.0;
  double val_auc_roc = 0.0;
  double val_auc_pr = 0.0;
  std::uint64_t seed = 0;
};

/// Picks tau among the distinct observed scores maximizing precision x recall;
/// ties go to the smallest tau.
Calibration select_threshold(const ScoredLabels& validation);

double mse(std::span<const double> pred, std::span<const double> gt);

/// Sample Pearson correlation. Throws DegenerateInputError when either side
/// is constant.
double pearson_corr(std::span<const double> pred, std::span<const double> gt);

inline constexpr int kCalibrationFormatVersion = 1;

std::string calibration_to_json(const Calibration& c);
Calibration calibration_from_json(const std::string& text);
void save_calibration(const Calibration& c, const std::string& path);
Calibration load_calibration(const std::string& path);

}  // namespace pinf
