#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <httplib.h>

#include "pinf/app.hpp"
#include "pinf/corpus.hpp"
#include "pinf/image.hpp"
#include "pinf/pipeline_json.hpp"

namespace pinf {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

void ServiceConfig::validate() const {
  if (port < 0 || port > 65535) throw Error("port must be in 0..65535, got " + std::to_string(port));
  if (deadline_ms <= 0) throw Error("captioner deadline must be positive");
  if (max_upload_bytes == 0) throw Error("max_upload_bytes must be positive");
  if (max_attempts == 0) throw Error("max_attempts must be at least 1");
  if (captioner != "stub" && captioner != "remote") {
    throw Error("captioner must be \"stub\" or \"remote\", got \"" + captioner + "\"");
  }
  if (captioner == "remote" && captioner_url.empty()) throw Error("remote captioner needs captioner_url");
}

std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (!v) return std::nullopt;
  return std::string(v);
}

ServiceConfig service_config_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("service config must be a JSON object");
  ServiceConfig c;
  try {
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.model_path = j.value("model", c.model_path);
    c.calibration_path = j.value("calibration", c.calibration_path);
    c.captioner = j.value("captioner", c.captioner);
    c.captioner_url = j.value("captioner_url", c.captioner_url);
    c.corpus_dir = j.value("corpus", c.corpus_dir);
    c.deadline_ms = j.value("deadline_ms", c.deadline_ms);
    c.max_upload_bytes = j.value("max_upload_bytes", c.max_upload_bytes);
    c.max_attempts = j.value("max_attempts", c.max_attempts);
    c.journal_path = j.value("journal", c.journal_path);
    c.cors_origins = j.value("cors_origins", c.cors_origins);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("service config: ") + e.what());
  }
  return c;
}

ServiceConfig load_service_config(const std::string& path, const EnvLookup& env) {
  ServiceConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read service config " + path);
    try {
      c = service_config_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
      throw SchemaError("service config " + path + ": " + e.what());
    }
  }
  if (auto v = env("PINF_PORT")) {
    try {
      std::size_t used = 0;
      c.port = std::stoi(*v, &used);
      if (used != v->size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw Error("PINF_PORT is not an integer: " + *v);
    }
  }
  if (auto v = env("PINF_MODEL")) c.model_path = *v;
  if (auto v = env("PINF_CALIB")) c.calibration_path = *v;
  if (auto v = env("PINF_CAPTIONER_URL")) {
    c.captioner_url = *v;
    if (!v->empty()) c.captioner = "remote";
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- journal

Journal::Journal(std::string path) : path_(std::move(path)) {}

void Journal::append(std::string_view event, const Session& session) {
  if (!enabled()) return;
  const std::string line = json{{"event", event}, {"session", session_json(session)}}.dump() + "\n";
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out << line;
  out.flush();
  if (!out) {
    last_error_ = "write to " + path_ + " failed";
    std::cerr << "journal: " << last_error_ << "\n";
  }
}

std::string Journal::status() const {
  if (!enabled()) return "disabled";
  std::lock_guard lock(mu_);
  return last_error_.empty() ? "ok" : "error: " + last_error_;
}

std::map<std::string, Session> Journal::replay(const std::string& path) {
  std::map<std::string, Session> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      Session s = session_from_json(json::parse(line).at("session"));
      out[s.session_id] = std::move(s);
    } catch (const json::exception& e) {
      throw SchemaError(path + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------- service

namespace {

Reply error_reply(int status, const std::string& message) { return {status, {{"error", message}}}; }

std::string random_session_id() {
  static std::mutex mu;
  static std::mt19937_64 gen{std::random_device{}()};
  std::lock_guard lock(mu);
  char buf[24];
  std::snprintf(buf, sizeof buf, "s-%016llx", static_cast<unsigned long long>(gen()));
  return buf;
}

}  // namespace

Service::Service(ServiceConfig cfg, std::shared_ptr<const Model> model, Calibration calibration,
                 std::unique_ptr<Captioner> captioner, Clock clock)
    : cfg_(std::move(cfg)),
      model_(std::move(model)),
      calibration_(calibration),
      captioner_(std::move(captioner)),
      clock_(std::move(clock)),
      journal_(cfg_.journal_path) {
  cfg_.validate();
  if (!captioner_) throw Error("service needs a captioner");
  if (journal_.enabled()) {
    for (auto& [id, s] : Journal::replay(journal_.path())) {
      auto e = std::make_shared<Entry>();
      e->session = std::move(s);
      sessions_[id] = std::move(e);
    }
  }
}

std::unique_ptr<Service> Service::from_config(const ServiceConfig& cfg) {
  cfg.validate();
  std::shared_ptr<const Model> model;
  if (!cfg.model_path.empty()) model = std::make_shared<const Model>(load_model(cfg.model_path));
  Calibration calib;
  if (!cfg.calibration_path.empty()) calib = load_calibration(cfg.calibration_path);

  std::unique_ptr<Captioner> captioner;
  if (cfg.captioner == "remote") {
    captioner = std::make_unique<RemoteCaptioner>(cfg.captioner_url, std::chrono::milliseconds(cfg.deadline_ms));
  } else if (!cfg.corpus_dir.empty()) {
    const fs::path dir(cfg.corpus_dir);
    const AnnotatedCorpus train = load_annotations((dir / "train.json").string());
    const AnnotatedCorpus val = load_annotations((dir / "val.json").string());
    captioner = std::make_unique<StubCaptioner>(
        StubCaptioner::from_corpus(load_catalog((dir / "catalog.json").string()), {&train, &val}));
  } else {
    captioner = std::make_unique<FixedCaptioner>("a photo");
  }
  return std::make_unique<Service>(cfg, std::move(model), calib, std::move(captioner));
}

GateConfig Service::gate_config() const {
  GateConfig g;
  g.tau_unrecognizable = calibration_.tau_unrecognizable;
  g.flaw_feedback_threshold = calibration_.flaw_feedback_threshold;
  g.max_attempts = cfg_.max_attempts;
  return g;
}

std::string Service::next_image_id() { return "upload-" + std::to_string(++uploads_); }

std::shared_ptr<Service::Entry> Service::find(const std::string& id) const {
  std::lock_guard lock(sessions_mu_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

Reply Service::healthz() const {
  return {200,
          {{"status", "ok"},
           {"model", model_ ? "loaded" : "missing"},
           {"journal", journal_.status()},
           {"captioner", captioner_->identity()}}};
}

Reply Service::model_info() const {
  json body{{"loaded", model_ != nullptr}, {"inference_count", inference_count()}};
  if (model_) {
    body["feature_layout"] = std::string(kFeatureLayout);
    body["hidden"] = model_->params.hidden;
    body["outputs"] = output_names();
    body["train_meta"] = {{"seed", model_->meta.seed},
                          {"learning_rate", model_->meta.learning_rate},
                          {"epochs_run", model_->meta.epochs_run},
                          {"best_epoch", model_->meta.best_epoch},
                          {"single_task", model_->meta.single_task}};
  }
  body["calibration"] = json::parse(calibration_to_json(calibration_));
  return {200, body};
}

json Service::decision_body(const Attempt& a) const {
  json body = decision_json(a.decision);
  body["prediction"] = a.prediction ? prediction_json(*a.prediction) : json(nullptr);
  body["model"] = {{"feature_layout", std::string(kFeatureLayout)},
                   {"tau", calibration_.tau_unrecognizable},
                   {"seed", model_ ? model_->meta.seed : 0}};
  return body;
}

Reply Service::predict(const Upload& upload) {
  if (!model_) return error_reply(503, "model not loaded");
  if (upload.bytes.size() > cfg_.max_upload_bytes) return error_reply(413, "upload exceeds the size limit");
  const std::string id = upload.image_id.empty() ? next_image_id() : upload.image_id;
  const Attempt a = evaluate_attempt({id, upload.bytes, upload.media_type}, *model_, gate_config(), 1, clock_());
  if (!a.prediction) return error_reply(400, a.note);
  ++inferences_;
  return {200, decision_body(a)};
}

Reply Service::create_session() {
  auto e = std::make_shared<Entry>();
  e->session.max_attempts = cfg_.max_attempts;
  {
    std::lock_guard lock(sessions_mu_);
    do {
      e->session.session_id = random_session_id();
    } while (sessions_.count(e->session.session_id));
    sessions_[e->session.session_id] = e;
  }
  std::lock_guard lock(e->mu);
  journal_.append("create", e->session);
  return {201, {{"session_id", e->session.session_id}, {"max_attempts", e->session.max_attempts}}};
}

Reply Service::get_session(const std::string& session_id) const {
  auto e = find(session_id);
  if (!e) return error_reply(404, "unknown session " + session_id);
  std::lock_guard lock(e->mu);
  return {200, session_json(e->session)};
}

Reply Service::attempt(const std::string& session_id, const Upload& upload) {
  if (!model_) return error_reply(503, "model not loaded");
  if (upload.bytes.size() > cfg_.max_upload_bytes) return error_reply(413, "upload exceeds the size limit");
  auto e = find(session_id);
  if (!e) return error_reply(404, "unknown session " + session_id);

  std::unique_lock lock(e->mu);
  Session& s = e->session;
  if (e->busy) return error_reply(409, "another attempt on this session is being captioned");
  if (s.terminal()) return error_reply(409, "session is " + std::string(session_state_name(s.state)));
  if (!s.attempts_left()) return error_reply(409, "session has used all of its attempts");

  AttemptImage image{upload.image_id.empty() ? next_image_id() : upload.image_id, upload.bytes,
                     upload.media_type};
  Attempt a = evaluate_attempt(image, *model_, gate_config(), s.attempts.size() + 1, clock_());
  if (a.prediction) ++inferences_;
  const bool pass = a.decision.verdict == Verdict::Pass;
  s.add_attempt(std::move(a));
  e->images.resize(s.attempts.size() - 1);
  e->images.push_back(std::move(image));

  const bool exhausting = !pass && !s.attempts_left();
  std::optional<std::size_t> target;
  if (pass) {
    target = s.attempts.size() - 1;
  } else if (exhausting) {
    target = s.best_attempt();
    if (target && e->images[*target].bytes.empty() && e->images[*target].image_id.empty()) target.reset();
  }

  std::string caption, captioner_error;
  if (target) {
    const AttemptImage chosen = e->images[*target];
    e->busy = true;
    lock.unlock();
    try {
      caption = captioner_->caption({chosen.image_id, chosen.bytes, chosen.media_type});
    } catch (const std::exception& ex) {
      captioner_error = ex.what();
    }
    lock.lock();
    e->busy = false;
  }

  if (!captioner_error.empty()) {
    s.attempts.back().note = "captioner error: " + captioner_error;
  } else if (pass) {
    s.finish_captioned(caption);
  } else if (exhausting) {
    s.finish_exhausted(caption);
  }
  journal_.append("attempt", s);

  const Attempt& last = s.attempts.back();
  json body = decision_body(last);
  body["session_id"] = s.session_id;
  body["attempt"] = last.index;
  body["attempts_left"] = s.max_attempts - s.attempts.size();
  body["state"] = std::string(session_state_name(s.state));
  body["exhausted"] = s.state == SessionState::Exhausted;
  body["warning"] = s.warning;
  if (s.terminal()) body["caption"] = s.caption;
  if (!last.note.empty()) body["note"] = last.note;

  if (!captioner_error.empty()) {
    body["error"] = "captioner unavailable: " + captioner_error;
    return {502, body};
  }
  if (!last.prediction) {
    body["error"] = last.note;
    return {400, body};
  }
  return {200, body};
}

// ---------------------------------------------------------------- HTTP binding

namespace {

void send(httplib::Response& res, const Reply& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

// Raw body with its Content-Type, or the multipart part named "image".
std::optional<Upload> read_upload(const httplib::Request& req, std::string& error) {
  Upload u;
  if (req.is_multipart_form_data()) {
    if (!req.has_file("image")) {
      error = "multipart body needs a part named \"image\"";
      return std::nullopt;
    }
    const auto part = req.get_file_value("image");
    u.bytes.assign(part.content.begin(), part.content.end());
    u.media_type = part.content_type;
  } else {
    u.bytes.assign(req.body.begin(), req.body.end());
    u.media_type = req.get_header_value("Content-Type");
  }
  u.image_id = req.get_header_value("X-Image-Id");
  return u;
}

}  // namespace

void Service::bind(httplib::Server& server) {
  server.set_payload_max_length(cfg_.max_upload_bytes);

  const auto origins = cfg_.cors_origins;
  server.set_pre_routing_handler([origins](const httplib::Request& req, httplib::Response& res) {
    const std::string origin = req.get_header_value("Origin");
    const bool allowed =
        !origin.empty() && std::find(origins.begin(), origins.end(), origin) != origins.end();
    if (allowed) {
      res.set_header("Access-Control-Allow-Origin", origin);
      res.set_header("Vary", "Origin");
    }
    if (req.method == "OPTIONS") {
      if (allowed) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type, X-Image-Id");
      }
      res.status = allowed ? 204 : 403;
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });

  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const std::string msg = res.status == 413 ? "upload exceeds the size limit" : httplib::status_message(res.status);
    res.set_content(json{{"error", msg}}.dump(), "application/json");
  });

  server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) { send(res, healthz()); });
  server.Get("/v1/model", [this](const httplib::Request&, httplib::Response& res) { send(res, model_info()); });
  server.Post("/v1/predict", [this](const httplib::Request& req, httplib::Response& res) {
    std::string error;
    auto upload = read_upload(req, error);
    send(res, upload ? predict(*upload) : error_reply(400, error));
  });
  server.Post("/v1/sessions", [this](const httplib::Request&, httplib::Response& res) { send(res, create_session()); });
  server.Post(R"(/v1/sessions/([A-Za-z0-9_-]+)/attempts)", [this](const httplib::Request& req, httplib::Response& res) {
    std::string error;
    auto upload = read_upload(req, error);
    send(res, upload ? attempt(req.matches[1], *upload) : error_reply(400, error));
  });
  server.Get(R"(/v1/sessions/([A-Za-z0-9_-]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, get_session(req.matches[1]));
  });
}

int serve(const ServiceConfig& cfg, std::ostream& log) {
  auto service = Service::from_config(cfg);
  httplib::Server server;
  service->bind(server);
  log << "pinf: listening on " << cfg.host << ":" << cfg.port << " (model "
      << (cfg.model_path.empty() ? "missing" : cfg.model_path) << ", journal " << service->healthz().body["journal"].get<std::string>()
      << ")" << std::endl;
  if (!server.listen(cfg.host, cfg.port)) {
    log << "pinf: cannot listen on " << cfg.host << ":" << cfg.port << std::endl;
    return 1;
  }
  return 0;
}

}  // namespace pinf
