#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pinf/calibration.hpp"
#include "pinf/model.hpp"
#include "pinf/pipeline.hpp"

namespace httplib {
class Server;
}

namespace pinf {

inline constexpr std::size_t kDefaultMaxUpload = 16u << 20;

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string model_path;
  std::string calibration_path;
  std::string captioner = "stub";  // "stub" or "remote"
  std::string captioner_url;
  std::string corpus_dir;  // stub captions come from <corpus_dir>/catalog.json
  std::int64_t deadline_ms = 10000;
  std::size_t max_upload_bytes = kDefaultMaxUpload;
  std::size_t max_attempts = 5;
  std::string journal_path;  // empty: sessions live in memory only
  std::vector<std::string> cors_origins;

  /// Throws pinf::Error on a bad port, deadline, captioner mode or limit.
  void validate() const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
std::optional<std::string> process_env(const std::string& name);

/// JSON file (may be empty path for defaults) then PINF_PORT, PINF_MODEL,
/// PINF_CALIB and PINF_CAPTIONER_URL; the environment wins.
ServiceConfig load_service_config(const std::string& path, const EnvLookup& env = process_env);
ServiceConfig service_config_from_json(const nlohmann::json& j);

/// Append-only JSON-lines session log. Each line holds the full session
/// after one mutation, so replay keeps the last line per session id and is
/// idempotent.
class Journal {
 public:
  explicit Journal(std::string path);

  bool enabled() const { return !path_.empty(); }
  const std::string& path() const { return path_; }

  /// Never throws; a failed write is remembered and reported by status().
  void append(std::string_view event, const Session& session);
  std::string status() const;

  /// Throws pinf::Error when the file exists but a line is malformed.
  /// A missing file yields no sessions.
  static std::map<std::string, Session> replay(const std::string& path);

 private:
  std::string path_;
  mutable std::mutex mu_;
  std::string last_error_;
};

struct Upload {
  std::vector<std::uint8_t> bytes;
  std::string media_type;
  std::string image_id;  // from X-Image-Id; generated when absent
};

struct Reply {
  int status = 200;
  nlohmann::json body;
};

/// Transport-independent request handlers plus their HTTP binding. The model
/// and calibration are immutable after construction.
class Service {
 public:
  Service(ServiceConfig cfg, std::shared_ptr<const Model> model, Calibration calibration,
          std::unique_ptr<Captioner> captioner, Clock clock = system_clock_ms);

  /// Loads model, calibration, captioner and journal named by the config.
  /// An empty model path leaves the service up with predictions answering
  /// 503; a configured path that cannot be loaded is a startup error.
  static std::unique_ptr<Service> from_config(const ServiceConfig& cfg);

  Reply healthz() const;
  Reply model_info() const;
  Reply predict(const Upload& upload);
  Reply create_session();
  Reply attempt(const std::string& session_id, const Upload& upload);
  Reply get_session(const std::string& session_id) const;

  std::uint64_t inference_count() const { return inferences_.load(); }
  GateConfig gate_config() const;

  /// Registers all routes, CORS handling and the upload limit on `server`.
  void bind(httplib::Server& server);

 private:
  struct Entry {
    std::mutex mu;
    Session session;
    std::vector<AttemptImage> images;  // parallel to session.attempts
    bool busy = false;                 // a captioner call is in flight
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  nlohmann::json decision_body(const Attempt& a) const;
  std::string next_image_id();

  ServiceConfig cfg_;
  std::shared_ptr<const Model> model_;
  Calibration calibration_;
  std::unique_ptr<Captioner> captioner_;
  Clock clock_;
  Journal journal_;
  std::atomic<std::uint64_t> inferences_{0};
  std::atomic<std::uint64_t> uploads_{0};
  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

/// Blocks serving HTTP until the process is stopped.
int serve(const ServiceConfig& cfg, std::ostream& log);

/// Entry point for the `pinf` tool. Exit status 0 success, 1 runtime error,
/// 2 usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pinf
