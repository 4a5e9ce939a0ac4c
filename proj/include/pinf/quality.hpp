#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pinf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

class SizeError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Image flaws in canonical order. The order is part of every serialized
/// format and must not change.
enum class FlawKind { Framing, Blur, Dark, Bright, Obscured, Rotation };

inline constexpr std::size_t kFlawCount = 6;
inline constexpr std::size_t kOutputCount = 7;  // unrecognizable + flaws

inline constexpr std::array<FlawKind, kFlawCount> kAllFlaws = {
    FlawKind::Framing, FlawKind::Blur,     FlawKind::Dark,
    FlawKind::Bright,  FlawKind::Obscured, FlawKind::Rotation};

/// Lowercase wire name ("framing", "blur", ...).
std::string_view flaw_name(FlawKind kind);
std::optional<FlawKind> parse_flaw(std::string_view name);
constexpr std::size_t flaw_index(FlawKind kind) { return static_cast<std::size_t>(kind); }

/// Output names in model order: "unrecognizable" followed by the flaws.
const std::array<std::string, kOutputCount>& output_names();

/// Integer grade 0 (none) .. 5 (worst).
class SeverityLabel {
 public:
  constexpr SeverityLabel() = default;
  explicit SeverityLabel(int value);

  constexpr int value() const { return value_; }
  friend constexpr bool operator==(SeverityLabel, SeverityLabel) = default;

 private:
  int value_ = 0;
};

/// A total map FlawKind -> T stored in canonical order.
template <typename T>
class FlawMap {
 public:
  constexpr FlawMap() = default;
  constexpr explicit FlawMap(const std::array<T, kFlawCount>& values) : values_(values) {}

  constexpr T& operator[](FlawKind k) { return values_[flaw_index(k)]; }
  constexpr const T& operator[](FlawKind k) const { return values_[flaw_index(k)]; }
  constexpr const std::array<T, kFlawCount>& values() const { return values_; }

  friend constexpr bool operator==(const FlawMap&, const FlawMap&) = default;

 private:
  std::array<T, kFlawCount> values_{};
};

struct QualityAnnotation {
  std::string image_id;
  SeverityLabel unrecognizable;
  FlawMap<SeverityLabel> flaws;
  std::vector<std::string> captions;
};

/// Raw model output. Values are deliberately not clamped to [0, 5].
struct QualityPrediction {
  double unrecognizable_hat = 0.0;
  FlawMap<double> flaws_hat;

  std::array<double, kOutputCount> as_array() const;
  static QualityPrediction from_array(const std::array<double, kOutputCount>& values);
  bool finite() const;
};

/// True (poor image) iff the unrecognizable grade is at least `cutoff`.
bool binarize_ground_truth(const QualityAnnotation& ann, int cutoff = 2);

/// Clamp to [0, 5] and round to two decimals. Only for presentation; gating
/// always uses the raw value. Throws pinf::Error on non-finite input.
double display_severity(double x);

}  // namespace pinf
