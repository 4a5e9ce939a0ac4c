#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pinf/corpus.hpp"
#include "pinf/model.hpp"
#include "pinf/quality.hpp"

namespace pinf {

struct GateConfig {
  double tau_unrecognizable = 2.0;
  double flaw_feedback_threshold = 2.0;
  std::size_t max_attempts = 5;

  void validate() const;
};

enum class Verdict { Pass, Retake };
std::string_view verdict_name(Verdict v);

struct FeedbackEntry {
  std::optional<FlawKind> flaw;  // empty for an undecodable upload
  double raw_severity = 0.0;
  double display_severity = 0.0;
  std::string message;
};

struct GateDecision {
  Verdict verdict = Verdict::Pass;
  std::vector<FeedbackEntry> feedback;  // descending raw severity; empty on Pass
};

/// Retake iff unrecognizable_hat >= tau. A retake always names at least one
/// flaw: every flaw at or above the feedback threshold, otherwise the single
/// most severe one. Ties keep canonical flaw order.
GateDecision gate(const QualityPrediction& pred, const GateConfig& cfg);

/// Fixed sentence per flaw with the display severity at one decimal.
std::string feedback_message(FlawKind kind, double severity);

// ---------------------------------------------------------------- captioners

struct CaptionRequest {
  std::string image_id;
  std::span<const std::uint8_t> bytes;
  std::string media_type;
};

class CaptionerUnavailable : public Error {
 public:
  using Error::Error;
};

class Captioner {
 public:
  virtual ~Captioner() = default;
  /// Throws CaptionerUnavailable (or pinf::Error) on failure.
  virtual std::string caption(const CaptionRequest& request) = 0;
  virtual std::string identity() const = 0;
};

/// Desk stand-in for a neural captioner: the clean caption when the image's
/// ground-truth unrecognizable grade is at most 1, otherwise the degraded one.
class StubCaptioner : public Captioner {
 public:
  StubCaptioner(CaptionCatalog catalog, std::map<std::string, int> unrecognizable);

  static StubCaptioner from_corpus(const CaptionCatalog& catalog,
                                   const std::vector<const AnnotatedCorpus*>& corpora);

  std::string caption(const CaptionRequest& request) override;
  std::string identity() const override { return "stub"; }

 private:
  CaptionCatalog catalog_;
  std::map<std::string, int> unrecognizable_;
};

/// Returns the same text for every image; used when no catalog is available.
class FixedCaptioner : public Captioner {
 public:
  explicit FixedCaptioner(std::string text) : text_(std::move(text)) {}
  std::string caption(const CaptionRequest&) override { return text_; }
  std::string identity() const override { return "fixed"; }

 private:
  std::string text_;
};

/// POSTs the raw image bytes to an HTTP endpoint and expects
/// {"caption": "..."}. Transport failures and 5xx responses are retried
/// `retries` times; the whole call is bounded by `deadline`.
class RemoteCaptioner : public Captioner {
 public:
  RemoteCaptioner(std::string endpoint, std::chrono::milliseconds deadline = std::chrono::seconds(10),
                  int retries = 1);

  std::string caption(const CaptionRequest& request) override;
  std::string identity() const override { return "remote:" + endpoint_; }

 private:
  std::string endpoint_;
  std::string host_;  // scheme://host:port
  std::string path_;
  std::chrono::milliseconds deadline_;
  int retries_;
};

// ---------------------------------------------------------------- sessions

enum class SessionState { Open, Captioned, Exhausted };
std::string_view session_state_name(SessionState s);

struct Attempt {
  std::size_t index = 0;  // 1-based, contiguous
  std::optional<QualityPrediction> prediction;  // empty when decoding failed
  GateDecision decision;
  std::int64_t timestamp_ms = 0;
  std::string note;  // decode or captioner errors
};

struct Session {
  std::string session_id;
  std::size_t max_attempts = 5;
  std::vector<Attempt> attempts;
  SessionState state = SessionState::Open;
  std::string caption;   // set on Captioned / Exhausted
  bool warning = false;  // true on Exhausted

  bool terminal() const { return state != SessionState::Open; }
  bool attempts_left() const { return attempts.size() < max_attempts; }

  /// Appends an attempt; throws pinf::Error when the session is terminal, the
  /// index is not the next one, or the attempt budget is spent.
  void add_attempt(Attempt attempt);
  void finish_captioned(std::string text);
  void finish_exhausted(std::string text);

  /// Attempt (0-based position) with the lowest unrecognizable_hat among
  /// decoded attempts; earliest wins a tie.
  std::optional<std::size_t> best_attempt() const;
};

using Clock = std::function<std::int64_t()>;
/// Milliseconds since the Unix epoch from the system clock.
std::int64_t system_clock_ms();

struct AttemptImage {
  std::string image_id;
  std::vector<std::uint8_t> bytes;
  std::string media_type;
};

/// Decodes, upscales if tiny, predicts and gates one upload. Decode failures become a Retake
/// with a single decode feedback entry and no prediction.
Attempt evaluate_attempt(const AttemptImage& image, const Model& model, const GateConfig& cfg,
                         std::size_t index, std::int64_t timestamp_ms);

/// Nearest-neighbour upscale so both sides are at least 8 pixels; larger
/// images are returned unchanged. Lets tiny uploads reach the regressor.
RasterImage upscale_to_feature_minimum(const RasterImage& img);

using AttemptSupplier = std::function<std::optional<AttemptImage>()>;

/// Predict -> gate until a Pass is captioned, or until max_attempts retakes
/// have been made, in which case the attempt with the lowest
/// unrecognizable_hat is captioned and the session ends Exhausted with a
/// warning. A captioner failure leaves the session Open with a note on the
/// attempt. An empty supplier also leaves it Open.
Session run_session(const std::string& session_id, const AttemptSupplier& supplier, const Model& model,
                    Captioner& captioner, const GateConfig& cfg, const Clock& clock = system_clock_ms);

std::string session_to_json(const Session& s);
Session session_from_json(const std::string& text);

// ---------------------------------------------------------------- filtering

struct FilterResult {
  std::vector<CorpusEntry> qualified;
  std::size_t excluded = 0;
  std::vector<QualityPrediction> predictions;  // one per input entry, input order
};

/// Keeps entries whose predicted unrecognizable_hat is below tau. Decode
/// failures abort with an error naming the image id.
FilterResult filter_dataset(const AnnotatedCorpus& corpus, const Model& model, double tau);

}  // namespace pinf
