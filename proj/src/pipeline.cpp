#include "pinf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "pinf/image.hpp"
#include "pinf/pipeline_json.hpp"

namespace pinf {

using nlohmann::json;

void GateConfig::validate() const {
  if (max_attempts < 1) throw Error("max_attempts must be at least 1");
  if (!std::isfinite(tau_unrecognizable) || !std::isfinite(flaw_feedback_threshold)) {
    throw Error("gate thresholds must be finite");
  }
}

std::string_view verdict_name(Verdict v) { return v == Verdict::Pass ? "pass" : "retake"; }

std::string feedback_message(FlawKind kind, double severity) {
  char sev[16];
  std::snprintf(sev, sizeof sev, "%.1f", display_severity(severity));
  const std::string s = std::string("(severity ") + sev + "/5)";
  switch (kind) {
    case FlawKind::Framing:
      return "The object is not well framed " + s + ". Point the camera at the object and step back a little.";
    case FlawKind::Blur:
      return "The picture is blurry " + s + ". Hold the camera steady.";
    case FlawKind::Dark:
      return "The picture is too dark " + s + ". Turn on a light or move somewhere brighter.";
    case FlawKind::Bright:
      return "The picture is too bright " + s + ". Avoid pointing the camera at a light or the sun.";
    case FlawKind::Obscured:
      return "Something is covering the lens " + s + ". Move your fingers away from the camera.";
    case FlawKind::Rotation:
      return "The picture is rotated " + s + ". Hold the phone upright.";
  }
  return {};
}

GateDecision gate(const QualityPrediction& pred, const GateConfig& cfg) {
  if (!pred.finite()) throw Error("gate: prediction contains non-finite values");
  GateDecision d;
  if (pred.unrecognizable_hat < cfg.tau_unrecognizable) return d;
  d.verdict = Verdict::Retake;

  std::vector<FlawKind> order(kAllFlaws.begin(), kAllFlaws.end());
  std::stable_sort(order.begin(), order.end(), [&](FlawKind a, FlawKind b) {
    return pred.flaws_hat[a] > pred.flaws_hat[b];
  });
  for (FlawKind k : order) {
    const double raw = pred.flaws_hat[k];
    if (raw < cfg.flaw_feedback_threshold) break;
    d.feedback.push_back({k, raw, display_severity(raw), feedback_message(k, raw)});
  }
  if (d.feedback.empty()) {
    const FlawKind k = order.front();
    const double raw = pred.flaws_hat[k];
    d.feedback.push_back({k, raw, display_severity(raw), feedback_message(k, raw)});
  }
  return d;
}

// ---------------------------------------------------------------- sessions

std::string_view session_state_name(SessionState s) {
  switch (s) {
    case SessionState::Open: return "open";
    case SessionState::Captioned: return "captioned";
    case SessionState::Exhausted: return "exhausted";
  }
  return "open";
}

void Session::add_attempt(Attempt attempt) {
  if (terminal()) throw Error("session " + session_id + " is already " + std::string(session_state_name(state)));
  if (!attempts_left()) throw Error("session " + session_id + " has used all of its attempts");
  if (attempt.index != attempts.size() + 1) throw Error("attempt indices must be contiguous from 1");
  attempts.push_back(std::move(attempt));
}

void Session::finish_captioned(std::string text) {
  if (terminal()) throw Error("session " + session_id + " already finished");
  state = SessionState::Captioned;
  caption = std::move(text);
  warning = false;
}

void Session::finish_exhausted(std::string text) {
  if (terminal()) throw Error("session " + session_id + " already finished");
  state = SessionState::Exhausted;
  caption = std::move(text);
  warning = true;
}

std::optional<std::size_t> Session::best_attempt() const {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < attempts.size(); ++i) {
    if (!attempts[i].prediction) continue;
    if (!best || attempts[i].prediction->unrecognizable_hat < attempts[*best].prediction->unrecognizable_hat) {
      best = i;
    }
  }
  return best;
}

std::int64_t system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

RasterImage upscale_to_feature_minimum(const RasterImage& img) {
  constexpr std::size_t kMin = 8;
  if (img.width() >= kMin && img.height() >= kMin) return img;
  const std::size_t w = std::max(img.width(), kMin), h = std::max(img.height(), kMin);
  std::vector<Rgb> px;
  px.reserve(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) px.push_back(img.at(x * img.width() / w, y * img.height() / h));
  }
  return RasterImage(w, h, std::move(px));
}

Attempt evaluate_attempt(const AttemptImage& image, const Model& model, const GateConfig& cfg,
                         std::size_t index, std::int64_t timestamp_ms) {
  Attempt a;
  a.index = index;
  a.timestamp_ms = timestamp_ms;
  try {
    const RasterImage img = decode_image(image.bytes);
    a.prediction = predict(model, upscale_to_feature_minimum(img));
  } catch (const DecodeError& e) {
    a.note = std::string("decode error: ") + e.what();
  } catch (const SizeError& e) {
    a.note = std::string("image too small: ") + e.what();
  }
  if (a.prediction) {
    a.decision = gate(*a.prediction, cfg);
  } else {
    a.decision.verdict = Verdict::Retake;
    a.decision.feedback.push_back(
        {std::nullopt, 0.0, 0.0, "The image could not be read. Please take the picture again."});
  }
  return a;
}

Session run_session(const std::string& session_id, const AttemptSupplier& supplier, const Model& model,
                    Captioner& captioner, const GateConfig& cfg, const Clock& clock) {
  cfg.validate();
  Session session;
  session.session_id = session_id;
  session.max_attempts = cfg.max_attempts;
  std::vector<AttemptImage> images;

  auto caption_of = [&](const AttemptImage& img) {
    return captioner.caption({img.image_id, img.bytes, img.media_type});
  };

  while (session.attempts_left()) {
    std::optional<AttemptImage> next = supplier();
    if (!next) return session;
    Attempt attempt = evaluate_attempt(*next, model, cfg, session.attempts.size() + 1, clock());
    const bool pass = attempt.decision.verdict == Verdict::Pass;
    session.add_attempt(std::move(attempt));
    images.push_back(std::move(*next));
    if (pass) {
      try {
        session.finish_captioned(caption_of(images.back()));
      } catch (const Error& e) {
        session.attempts.back().note = std::string("captioner error: ") + e.what();
      }
      return session;
    }
  }

  const auto best = session.best_attempt();
  if (!best) {
    session.finish_exhausted("");
    return session;
  }
  try {
    session.finish_exhausted(caption_of(images[*best]));
  } catch (const Error& e) {
    session.attempts.back().note = std::string("captioner error: ") + e.what();
  }
  return session;
}

// ---------------------------------------------------------------- JSON

json prediction_json(const QualityPrediction& p) {
  json raw = json::object(), shown = json::object();
  raw["unrecognizable"] = p.unrecognizable_hat;
  shown["unrecognizable"] = display_severity(p.unrecognizable_hat);
  for (FlawKind k : kAllFlaws) {
    raw[std::string(flaw_name(k))] = p.flaws_hat[k];
    shown[std::string(flaw_name(k))] = display_severity(p.flaws_hat[k]);
  }
  return {{"raw", raw}, {"display", shown}};
}

namespace {

QualityPrediction prediction_from(const json& j) {
  const json& raw = j.at("raw");
  QualityPrediction p;
  p.unrecognizable_hat = raw.at("unrecognizable").get<double>();
  for (FlawKind k : kAllFlaws) p.flaws_hat[k] = raw.at(std::string(flaw_name(k))).get<double>();
  return p;
}

}  // namespace

json feedback_json(const FeedbackEntry& f) {
  return {{"flaw", f.flaw ? std::string(flaw_name(*f.flaw)) : std::string("decode")},
          {"severity", f.display_severity},
          {"raw_severity", f.raw_severity},
          {"message", f.message}};
}

namespace {

FeedbackEntry feedback_from(const json& j) {
  FeedbackEntry f;
  const std::string flaw = j.at("flaw").get<std::string>();
  if (flaw != "decode") f.flaw = parse_flaw(flaw);
  f.display_severity = j.at("severity").get<double>();
  f.raw_severity = j.at("raw_severity").get<double>();
  f.message = j.at("message").get<std::string>();
  return f;
}

}  // namespace

json decision_json(const GateDecision& d) {
  json fb = json::array();
  for (const auto& f : d.feedback) fb.push_back(feedback_json(f));
  return {{"verdict", std::string(verdict_name(d.verdict))}, {"feedback", fb}};
}

json attempt_json(const Attempt& a) {
  return {{"index", a.index},
          {"prediction", a.prediction ? prediction_json(*a.prediction) : json(nullptr)},
          {"decision", decision_json(a.decision)},
          {"timestamp", a.timestamp_ms},
          {"note", a.note}};
}

namespace {

Attempt attempt_from(const json& j) {
  Attempt a;
  a.index = j.at("index").get<std::size_t>();
  if (!j.at("prediction").is_null()) a.prediction = prediction_from(j.at("prediction"));
  const json& d = j.at("decision");
  a.decision.verdict = d.at("verdict").get<std::string>() == "pass" ? Verdict::Pass : Verdict::Retake;
  for (const json& f : d.at("feedback")) a.decision.feedback.push_back(feedback_from(f));
  a.timestamp_ms = j.at("timestamp").get<std::int64_t>();
  a.note = j.value("note", std::string{});
  return a;
}

}  // namespace

json session_json(const Session& s) {
  json attempts = json::array();
  for (const auto& a : s.attempts) attempts.push_back(attempt_json(a));
  return {{"session_id", s.session_id},
          {"max_attempts", s.max_attempts},
          {"attempts", attempts},
          {"state", std::string(session_state_name(s.state))},
          {"caption", s.terminal() ? json(s.caption) : json(nullptr)},
          {"warning", s.warning}};
}

Session session_from_json(const json& j) {
  Session s;
  s.session_id = j.at("session_id").get<std::string>();
  s.max_attempts = j.at("max_attempts").get<std::size_t>();
  for (const json& a : j.at("attempts")) s.attempts.push_back(attempt_from(a));
  const std::string state = j.at("state").get<std::string>();
  s.state = state == "captioned" ? SessionState::Captioned
            : state == "exhausted" ? SessionState::Exhausted
                                   : SessionState::Open;
  if (j.contains("caption") && j.at("caption").is_string()) s.caption = j.at("caption").get<std::string>();
  s.warning = j.value("warning", false);
  return s;
}

std::string session_to_json(const Session& s) { return session_json(s).dump(); }

Session session_from_json(const std::string& text) {
  try {
    return session_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed session JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------- filtering

FilterResult filter_dataset(const AnnotatedCorpus& corpus, const Model& model, double tau) {
  FilterResult out;
  out.predictions.reserve(corpus.entries.size());
  for (const CorpusEntry& e : corpus.entries) {
    QualityPrediction p;
    try {
      p = predict(model, decode_image(read_file_bytes(corpus.image_path(e))));
    } catch (const Error& err) {
      throw Error("image " + e.annotation.image_id + ": " + err.what());
    }
    out.predictions.push_back(p);
    if (p.unrecognizable_hat < tau) {
      out.qualified.push_back(e);
    } else {
      ++out.excluded;
    }
  }
  return out;
}

}  // namespace pinf
