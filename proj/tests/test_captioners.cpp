#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <thread>

#include "pinf/pipeline.hpp"
#include "support.hpp"

using namespace pinf;
using namespace std::chrono_literals;

namespace {

// Local caption backend with one route per behaviour.
class Backend {
 public:
  Backend() {
    server_.Post("/echo", [](const httplib::Request& req, httplib::Response& res) {
      const std::string text = req.get_header_value("X-Image-Id") + " " + std::to_string(req.body.size()) + " " +
                               req.get_header_value("Content-Type");
      res.set_content(nlohmann::json{{"caption", text}}.dump(), "application/json");
    });
    server_.Post("/fail", [this](const httplib::Request&, httplib::Response& res) {
      ++failures;
      res.status = 500;
    });
    server_.Post("/flaky", [this](const httplib::Request&, httplib::Response& res) {
      if (flaky_calls++ == 0) {
        res.status = 503;
        return;
      }
      res.set_content("{\"caption\":\"second time lucky\"}", "application/json");
    });
    server_.Post("/missing", [this](const httplib::Request&, httplib::Response& res) {
      ++not_found;
      res.status = 404;
    });
    server_.Post("/stall", [](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(700ms);
      res.set_content("{\"caption\":\"late\"}", "application/json");
    });
    server_.Post("/garbled", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("<html>oops</html>", "text/html");
    });
    server_.Post("/wrong-shape", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("{\"text\":\"a cup\"}", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Backend() {
    server_.stop();
    thread_.join();
  }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

  std::atomic<int> failures{0};
  std::atomic<int> flaky_calls{0};
  std::atomic<int> not_found{0};

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

const std::vector<std::uint8_t> kBytes{1, 2, 3, 4, 5};

CaptionRequest request() { return {"img_00042", kBytes, "image/png"}; }

}  // namespace

TEST_SUITE("captioners") {
  TEST_CASE("stub captioner picks clean or degraded text by grade") {
    CaptionCatalog catalog{{"clean", {"a red ball on the floor", "a blurry image"}},
                           {"edge", {"a blue cube", "a dark image"}},
                           {"bad", {"a green cone", "a dark image"}}};
    StubCaptioner stub(catalog, {{"clean", 0}, {"edge", 1}, {"bad", 5}});
    const auto ask = [&](const std::string& id) { return stub.caption({id, {}, ""}); };
    CHECK(ask("clean") == "a red ball on the floor");
    CHECK(ask("edge") == "a blue cube");
    CHECK(ask("bad") == "a dark image");
    CHECK(ask("bad") == ask("bad"));
    CHECK_THROWS_AS(ask("nobody"), CaptionerUnavailable);
    CHECK(stub.identity() == "stub");
  }

  TEST_CASE("stub captioner built from a corpus") {
    AnnotatedCorpus c;
    CorpusEntry e;
    e.annotation.image_id = "x";
    e.annotation.unrecognizable = SeverityLabel(3);
    c.entries.push_back(e);
    StubCaptioner stub = StubCaptioner::from_corpus({{"x", {"clean", "degraded"}}}, {&c});
    CHECK(stub.caption({"x", {}, ""}) == "degraded");
  }

  TEST_CASE("remote captioner passes the caption through") {
    Backend b;
    RemoteCaptioner r(b.url("/echo"), 2s);
    CHECK(r.caption(request()) == "img_00042 5 image/png");
    CHECK(r.identity() == "remote:" + b.url("/echo"));
  }

  TEST_CASE("remote captioner retries a 5xx once") {
    Backend b;
    RemoteCaptioner r(b.url("/fail"), 2s, 1);
    try {
      r.caption(request());
      FAIL("expected an error");
    } catch (const CaptionerUnavailable& e) {
      CHECK(std::string(e.what()).find("500") != std::string::npos);
    }
    CHECK(b.failures == 2);
    RemoteCaptioner flaky(b.url("/flaky"), 2s, 1);
    CHECK(flaky.caption(request()) == "second time lucky");
  }

  TEST_CASE("remote captioner does not retry a 4xx") {
    Backend b;
    RemoteCaptioner r(b.url("/missing"), 2s, 1);
    CHECK_THROWS_AS(r.caption(request()), CaptionerUnavailable);
    CHECK(b.not_found == 1);
  }

  TEST_CASE("remote captioner gives up at the deadline") {
    Backend b;
    RemoteCaptioner r(b.url("/stall"), 200ms, 1);
    const auto start = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(r.caption(request()), CaptionerUnavailable);
    CHECK(std::chrono::steady_clock::now() - start < 600ms);
  }

  TEST_CASE("remote captioner rejects malformed bodies") {
    Backend b;
    CHECK_THROWS_AS(RemoteCaptioner(b.url("/garbled"), 2s).caption(request()), CaptionerUnavailable);
    CHECK_THROWS_AS(RemoteCaptioner(b.url("/wrong-shape"), 2s).caption(request()), CaptionerUnavailable);
  }

  TEST_CASE("remote captioner reports an unreachable backend") {
    int port = 0;
    {
      httplib::Server probe;
      port = probe.bind_to_any_port("127.0.0.1");
    }
    RemoteCaptioner r("http://127.0.0.1:" + std::to_string(port) + "/caption", 1s, 1);
    try {
      r.caption(request());
      FAIL("expected an error");
    } catch (const CaptionerUnavailable& e) {
      CHECK(std::string(e.what()).find("unavailable") != std::string::npos);
    }
  }

  TEST_CASE("remote captioner endpoint validation") {
    CHECK_THROWS_AS(RemoteCaptioner("ftp://host/x"), Error);
    CHECK_THROWS_AS(RemoteCaptioner("localhost:8080"), Error);
    CHECK_THROWS_AS(RemoteCaptioner("http://host/x", 0ms), Error);
    CHECK_THROWS_AS(RemoteCaptioner("http://host/x", 1s, -1), Error);
    CHECK_NOTHROW(RemoteCaptioner("http://host:9000"));
  }
}
