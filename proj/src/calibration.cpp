#include "pinf/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "pinf/quality.hpp"

namespace pinf {

using nlohmann::json;

std::size_t ScoredLabels::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
}

void ScoredLabels::validate() const {
  if (scores.size() != labels.size()) throw Error("scores and labels differ in length");
  if (scores.empty()) throw Error("scored labels must be non-empty");
  for (double s : scores)
    if (!std::isfinite(s)) throw Error("scores must be finite");
}

namespace {

struct TieBlock {
  double score;
  std::size_t pos;
  std::size_t neg;
};

// Tie blocks in descending score order.
std::vector<TieBlock> descending_blocks(const ScoredLabels& d) {
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return d.scores[a] > d.scores[b]; });
  std::vector<TieBlock> blocks;
  for (std::size_t i : idx) {
    if (blocks.empty() || blocks.back().score != d.scores[i]) blocks.push_back({d.scores[i], 0, 0});
    (d.labels[i] ? blocks.back().pos : blocks.back().neg) += 1;
  }
  return blocks;
}

double precision_of(std::size_t tp, std::size_t fp) {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

}  // namespace

double auc_roc(const ScoredLabels& d) {
  d.validate();
  const std::size_t p = d.positives();
  const std::size_t n = d.negatives();
  if (p == 0 || n == 0) throw DegenerateInputError("AUC-ROC needs at least one positive and one negative");
  // Walk from the lowest score upwards, counting negatives already passed.
  const auto blocks = descending_blocks(d);
  double wins = 0.0;
  std::size_t neg_below = 0;
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
    wins += static_cast<double>(it->pos) * static_cast<double>(neg_below) +
            0.5 * static_cast<double>(it->pos) * static_cast<double>(it->neg);
    neg_below += it->neg;
  }
  return wins / (static_cast<double>(p) * static_cast<double>(n));
}

double auc_pr(const ScoredLabels& d) {
  d.validate();
  const std::size_t p = d.positives();
  if (p == 0) throw DegenerateInputError("AUC-PR needs at least one positive");
  double ap = 0.0;
  std::size_t tp = 0, fp = 0;
  for (const TieBlock& b : descending_blocks(d)) {
    tp += b.pos;
    fp += b.neg;
    if (b.pos > 0) {
      ap += precision_of(tp, fp) * (static_cast<double>(b.pos) / static_cast<double>(p));
    }
  }
  return ap;
}

PrecisionRecall precision_recall_at(const ScoredLabels& d, double tau) {
  d.validate();
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool predicted = d.scores[i] >= tau;
    if (predicted && d.labels[i]) ++tp;
    if (predicted && !d.labels[i]) ++fp;
    if (!predicted && d.labels[i]) ++fn;
  }
  PrecisionRecall pr;
  pr.precision = precision_of(tp, fp);
  pr.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return pr;
}

Calibration select_threshold(const ScoredLabels& validation) {
  validation.validate();
  const std::size_t p = validation.positives();
  if (p == 0 || validation.negatives() == 0) {
    throw DegenerateInputError("threshold selection needs at least one positive and one negative");
  }
  // Lowering tau through the descending blocks admits one block at a time;
  // ">=" keeps the latest (smallest) tau on ties.
  double best_product = -1.0;
  Calibration cal;
  std::size_t tp = 0, fp = 0;
  for (const TieBlock& b : descending_blocks(validation)) {
    tp += b.pos;
    fp += b.neg;
    const double precision = precision_of(tp, fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(p);
    const double product = precision * recall;
    if (product >= best_product) {
      best_product = product;
      cal.tau_unrecognizable = b.score;
      cal.val_precision = precision;
      cal.val_recall = recall;
    }
  }
  cal.val_auc_roc = auc_roc(validation);
  cal.val_auc_pr = auc_pr(validation);
  return cal;
}

double mse(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size()) throw Error("mse: length mismatch");
  if (pred.empty()) throw Error("mse: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += (pred[i] - gt[i]) * (pred[i] - gt[i]);
  return sum / static_cast<double>(pred.size());
}

double pearson_corr(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size()) throw Error("pearson_corr: length mismatch");
  if (pred.size() < 2) throw Error("pearson_corr: need at least two samples");
  const double n = static_cast<double>(pred.size());
  const double mx = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
  const double my = std::accumulate(gt.begin(), gt.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i] - mx, dy = gt[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInputError("correlation undefined for a constant array");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::string calibration_to_json(const Calibration& c) {
  json doc;
  doc["version"] = kCalibrationFormatVersion;
  doc["tau_unrecognizable"] = c.tau_unrecognizable;
  doc["flaw_feedback_threshold"] = c.flaw_feedback_threshold;
  doc["val"] = {{"precision", c.val_precision},
                {"recall", c.val_recall},
                {"auc_roc", c.val_auc_roc},
                {"auc_pr", c.val_auc_pr}};
  doc["seed"] = c.seed;
  doc["meta"] = {{"threshold_candidates", "distinct validation scores"},
                 {"tie_rule", "smallest tau"},
                 {"pr_curve", "average precision (step)"},
                 {"positive_rule", "score >= tau"}};
  return doc.dump(1);
}

Calibration calibration_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("calibration file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("version", -1) != kCalibrationFormatVersion) {
    throw SchemaError("calibration file: unsupported or missing version");
  }
  auto number = [&](const json& obj, const char* key) {
    if (!obj.contains(key) || !obj.at(key).is_number()) {
      throw SchemaError(std::string("calibration file: missing number '") + key + "'");
    }
    const double v = obj.at(key).get<double>();
    if (!std::isfinite(v)) throw SchemaError(std::string("calibration file: non-finite '") + key + "'");
    return v;
  };
  Calibration c;
  c.tau_unrecognizable = number(doc, "tau_unrecognizable");
  c.flaw_feedback_threshold = number(doc, "flaw_feedback_threshold");
  if (doc.contains("val") && doc.at("val").is_object()) {
    const json& val = doc.at("val");
    c.val_precision = number(val, "precision");
    c.val_recall = number(val, "recall");
    c.val_auc_roc = number(val, "auc_roc");
    c.val_auc_pr = number(val, "auc_pr");
  }
  c.seed = doc.value("seed", std::uint64_t{0});
  return c;
}

void save_calibration(const Calibration& c, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write calibration file " + path);
  out << calibration_to_json(c) << '\n';
}

Calibration load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read calibration file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return calibration_from_json(buffer.str());
}

}  // namespace pinf
