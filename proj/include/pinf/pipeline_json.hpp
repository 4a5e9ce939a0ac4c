#pragma once

// JSON views of pipeline values shared by the CLI, the service and the journal.

#include <json.hpp>

#include "pinf/pipeline.hpp"

namespace pinf {

/// {"raw": {...}, "display": {...}}; display values are clamped and rounded.
nlohmann::json prediction_json(const QualityPrediction& p);
nlohmann::json feedback_json(const FeedbackEntry& f);
nlohmann::json decision_json(const GateDecision& d);
nlohmann::json attempt_json(const Attempt& a);
nlohmann::json session_json(const Session& s);
Session session_from_json(const nlohmann::json& j);

}  // namespace pinf
