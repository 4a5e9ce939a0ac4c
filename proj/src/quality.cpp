#include "pinf/quality.hpp"

#include <algorithm>
#include <cmath>

namespace pinf {

namespace {
constexpr std::array<std::string_view, kFlawCount> kFlawNames = {
    "framing", "blur", "dark", "bright", "obscured", "rotation"};
}

std::string_view flaw_name(FlawKind kind) { return kFlawNames[flaw_index(kind)]; }

std::optional<FlawKind> parse_flaw(std::string_view name) {
  for (FlawKind k : kAllFlaws) {
    if (kFlawNames[flaw_index(k)] == name) return k;
  }
  return std::nullopt;
}

const std::array<std::string, kOutputCount>& output_names() {
  static const std::array<std::string, kOutputCount> names = {
      "unrecognizable", "framing", "blur", "dark", "bright", "obscured", "rotation"};
  return names;
}

SeverityLabel::SeverityLabel(int value) : value_(value) {
  if (value < 0 || value > 5) {
    throw SchemaError("severity label " + std::to_string(value) + " outside 0..5");
  }
}

std::array<double, kOutputCount> QualityPrediction::as_array() const {
  std::array<double, kOutputCount> out{};
  out[0] = unrecognizable_hat;
  for (std::size_t i = 0; i < kFlawCount; ++i) out[i + 1] = flaws_hat.values()[i];
  return out;
}

QualityPrediction QualityPrediction::from_array(const std::array<double, kOutputCount>& values) {
  QualityPrediction p;
  p.unrecognizable_hat = values[0];
  for (FlawKind k : kAllFlaws) p.flaws_hat[k] = values[flaw_index(k) + 1];
  return p;
}

bool QualityPrediction::finite() const {
  const auto values = as_array();
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

bool binarize_ground_truth(const QualityAnnotation& ann, int cutoff) {
  if (cutoff < 1 || cutoff > 5) throw Error("binarization cutoff must be in 1..5");
  return ann.unrecognizable.value() >= cutoff;
}

double display_severity(double x) {
  if (!std::isfinite(x)) throw Error("cannot display a non-finite severity");
  const double clamped = std::clamp(x, 0.0, 5.0);
  return std::round(clamped * 100.0) / 100.0;
}

}  // namespace pinf
