#include <algorithm>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "pinf/pipeline.hpp"

namespace pinf {

StubCaptioner::StubCaptioner(CaptionCatalog catalog, std::map<std::string, int> unrecognizable)
    : catalog_(std::move(catalog)), unrecognizable_(std::move(unrecognizable)) {}

StubCaptioner StubCaptioner::from_corpus(const CaptionCatalog& catalog,
                                         const std::vector<const AnnotatedCorpus*>& corpora) {
  std::map<std::string, int> grades;
  for (const AnnotatedCorpus* c : corpora) {
    for (const CorpusEntry& e : c->entries) grades[e.annotation.image_id] = e.annotation.unrecognizable.value();
  }
  return StubCaptioner(catalog, std::move(grades));
}

std::string StubCaptioner::caption(const CaptionRequest& request) {
  const auto entry = catalog_.find(request.image_id);
  if (entry == catalog_.end()) throw CaptionerUnavailable("stub captioner has no entry for image " + request.image_id);
  const auto grade = unrecognizable_.find(request.image_id);
  const bool clean = grade == unrecognizable_.end() || grade->second <= 1;
  return clean ? entry->second.clean : entry->second.degraded;
}

namespace {

// Splits "http://host:port/path" into "http://host:port" and "/path".
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  if (scheme == std::string::npos || endpoint.compare(0, scheme, "http") != 0) {
    throw Error("captioner endpoint must be an http:// URL: " + endpoint);
  }
  const auto slash = endpoint.find('/', scheme + 3);
  if (slash == scheme + 3) throw Error("captioner endpoint has no host: " + endpoint);
  if (slash == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, slash), endpoint.substr(slash)};
}

}  // namespace

RemoteCaptioner::RemoteCaptioner(std::string endpoint, std::chrono::milliseconds deadline, int retries)
    : endpoint_(std::move(endpoint)), deadline_(deadline), retries_(retries) {
  if (retries_ < 0) throw Error("retries must be non-negative");
  if (deadline_.count() <= 0) throw Error("captioner deadline must be positive");
  std::tie(host_, path_) = split_endpoint(endpoint_);
}

std::string RemoteCaptioner::caption(const CaptionRequest& request) {
  using Clock = std::chrono::steady_clock;
  const auto end = Clock::now() + deadline_;
  std::string last_error = "no attempt made";

  for (int attempt = 0; attempt <= retries_; ++attempt) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(end - Clock::now());
    if (left.count() <= 0) {
      last_error = "deadline exceeded";
      break;
    }
    httplib::Client client(host_);
    const auto secs = static_cast<time_t>(left.count() / 1000);
    const auto usecs = static_cast<time_t>((left.count() % 1000) * 1000);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers{{"X-Image-Id", request.image_id}};
    const std::string body(request.bytes.begin(), request.bytes.end());
    const std::string type = request.media_type.empty() ? "application/octet-stream" : request.media_type;
    auto res = client.Post(path_, headers, body, type);
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "captioner returned HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw CaptionerUnavailable("captioner returned HTTP " + std::to_string(res->status));
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      return j.at("caption").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw CaptionerUnavailable(std::string("malformed captioner response: ") + e.what());
    }
  }
  throw CaptionerUnavailable("captioner at " + endpoint_ + " unavailable: " + last_error);
}

}  // namespace pinf
