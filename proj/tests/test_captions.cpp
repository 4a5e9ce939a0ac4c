#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <span>

#include "pinf/captions.hpp"
#include "pinf/quality.hpp"
#include "pinf/rng.hpp"
#include "support.hpp"

using namespace pinf;
using namespace pinf::captions;
using nlohmann::json;

namespace {

const json& fixture() {
  static const json j = [] {
    std::ifstream in(test::data_path("caption_fixture.json"));
    REQUIRE(in.good());
    return json::parse(in);
  }();
  return j;
}

std::vector<EvalPair> fixture_pairs() {
  std::vector<EvalPair> out;
  for (const auto& p : fixture()["pairs"]) {
    out.push_back(make_pair(p["image_id"], p["candidate"].get<std::string>(), p["references"].get<std::vector<std::string>>()));
  }
  return out;
}

EvalPair single(const std::string& cand, const std::string& ref) { return make_pair("x", cand, {ref}); }

std::size_t lcs_brute(const TokenSequence& a, std::size_t i, const TokenSequence& b, std::size_t j) {
  if (i == a.size() || j == b.size()) return 0;
  if (a[i] == b[j]) return 1 + lcs_brute(a, i + 1, b, j + 1);
  return std::max(lcs_brute(a, i + 1, b, j), lcs_brute(a, i, b, j + 1));
}

TokenSequence random_tokens(Rng& rng, std::size_t max_len) {
  static const char* vocab[] = {"a", "red", "ball", "balls", "on", "the", "floor", "running", "runs", "cat"};
  TokenSequence t(static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(max_len))));
  for (auto& w : t) w = vocab[rng.uniform_int(0, 9)];
  return t;
}

}  // namespace

TEST_SUITE("captions") {
  TEST_CASE("tokenizer") {
    CHECK(tokenize("A Red-Ball, isn't it?") == TokenSequence{"a", "red", "ball", "isn't", "it"});
    CHECK(tokenize("  \t\n").empty());
    CHECK(tokenize("R2D2 at 10:30") == TokenSequence{"r2d2", "at", "10", "30"});
    CHECK(tokenize("caf\xc3\xa9 noir") == TokenSequence{"caf\xc3\xa9", "noir"});
  }

  TEST_CASE("porter stemmer examples") {
    const std::pair<const char*, const char*> cases[] = {
        {"caresses", "caress"}, {"ponies", "poni"},   {"cats", "cat"},         {"running", "run"},
        {"hopping", "hop"},     {"relational", "relat"}, {"generalization", "gener"}, {"sitting", "sit"},
        {"a", "a"},             {"is", "i"}};
    for (const auto& [word, stem] : cases) {
      CAPTURE(word);
      CHECK(porter_stem(word) == stem);
    }
  }

  TEST_CASE("porter stemmer matches the reference vocabulary") {
    for (const auto& [word, stem] : fixture()["porter"].items()) {
      CAPTURE(word);
      CHECK(porter_stem(word) == stem.get<std::string>());
    }
  }

  TEST_CASE("bleu examples") {
    CHECK(bleu4({single("a red ball on the floor", "a red ball on the floor")}) == doctest::Approx(100.0).epsilon(1e-12));
    // Clipped precisions 4/5, 3/4, 2/3, 1/2 and no brevity penalty.
    CHECK(bleu4({single("w x y z z", "w x y z")}) == doctest::Approx(100.0 * std::pow(0.2, 0.25)).epsilon(1e-12));
    // Perfect precisions, candidate half the reference length.
    CHECK(bleu4({single("a b c d", "a b c d e f g h")}) == doctest::Approx(100.0 * std::exp(-1.0)).epsilon(1e-12));
    CHECK(bleu4({single("the the the the the the the", "the cat is on the mat")}) == 0.0);
    CHECK(bleu4({single("a b c", "a b c")}) == 0.0);
  }

  TEST_CASE("clipped n-gram counts") {
    const auto c = modified_precision(tokenize("the the the the the the the"), {tokenize("the cat is on the mat")}, 1);
    CHECK(c.matched == 2);
    CHECK(c.total == 7);
    const auto two = modified_precision(tokenize("the the the the the the the"),
                                        {tokenize("the cat is on the mat"), tokenize("there is a cat on the the mat")}, 2);
    CHECK(two.matched == 1);
    CHECK(two.total == 6);
    CHECK(modified_precision(tokenize("a b"), {tokenize("a b")}, 3).total == 0);
  }

  TEST_CASE("meteor and rouge worked examples") {
    for (const auto& [name, w] : fixture()["worked"].items()) {
      CAPTURE(name);
      const EvalPair p = make_pair(name, w["candidate"].get<std::string>(), w["references"].get<std::vector<std::string>>());
      CHECK(std::abs(meteor_lite({p}) - w["meteor_lite"].get<double>()) <= 1e-9);
      CHECK(std::abs(rouge_l({p}) - w["rouge_l"].get<double>()) <= 1e-9);
    }
    CHECK(meteor_lite({single("one two three four", "one two three four")}) == doctest::Approx(99.21875).epsilon(1e-14));
    CHECK(meteor_lite({single("cats running", "cat runs")}) == doctest::Approx(93.75).epsilon(1e-14));
    CHECK(meteor_lite({single("alpha beta", "gamma delta")}) == 0.0);
  }

  TEST_CASE("rouge examples") {
    CHECK(rouge_l({single("the cat sat", "the cat is on the mat")}) == doctest::Approx(41.92439862542955).epsilon(1e-12));
    CHECK(rouge_l({single("x y z", "x y z")}) == 100.0);
    CHECK(rouge_l({single("x y z", "p q")}) == 0.0);
    CHECK(lcs_length({"a", "b", "c", "d"}, {"b", "d"}) == 2);
  }

  TEST_CASE("cider examples") {
    const std::vector<EvalPair> identical{make_pair("1", "red ball on floor", {"red ball on floor"}),
                                          make_pair("2", "blue cube under table", {"blue cube under table"})};
    CHECK(cider(identical) == doctest::Approx(10.0).epsilon(1e-12));
    const std::vector<EvalPair> disjoint{make_pair("1", "green hat", {"red ball on floor"}),
                                         make_pair("2", "small dog", {"blue cube under table"})};
    CHECK(cider(disjoint) == 0.0);
    // With one image every n-gram occurs in every reference set, so idf is zero.
    CHECK(cider({make_pair("1", "red ball", {"red ball"})}) == 0.0);
    const auto per = cider_per_pair(identical);
    REQUIRE(per.size() == 2);
    CHECK(per[0] == doctest::Approx(10.0).epsilon(1e-12));
  }

  TEST_CASE("corpus metrics match the independent fixture") {
    const auto pairs = fixture_pairs();
    const json& e = fixture()["expected"];
    CHECK(std::abs(bleu4(pairs) - e["bleu4"].get<double>()) <= 1e-6);
    CHECK(std::abs(meteor_lite(pairs) - e["meteor_lite"].get<double>()) <= 1e-6);
    CHECK(std::abs(rouge_l(pairs) - e["rouge_l"].get<double>()) <= 1e-6);
    CHECK(std::abs(cider(pairs) - e["cider"].get<double>()) <= 1e-6);
    const auto per_cider = cider_per_pair(pairs);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      CAPTURE(pairs[i].image_id);
      CHECK(std::abs(meteor_lite_pair(pairs[i].candidate, pairs[i].references) - e["meteor_per_pair"][i].get<double>()) <= 1e-8);
      CHECK(std::abs(rouge_l_pair(pairs[i].candidate, pairs[i].references) - e["rouge_per_pair"][i].get<double>()) <= 1e-8);
      CHECK(std::abs(per_cider[i] - e["cider_per_pair"][i].get<double>()) <= 1e-6);
    }
    const CaptionEvalReport r = evaluate_corpus(pairs, 3);
    CHECK(r.corpus_size == pairs.size());
    CHECK(r.excluded == 3);
    CHECK(json::parse(report_to_json(r))["bleu4"].get<double>() == r.bleu4);
  }

  TEST_CASE("corpus metrics ignore pair order") {
    auto pairs = fixture_pairs();
    const CaptionEvalReport base = evaluate_corpus(pairs);
    Rng rng(17);
    for (int t = 0; t < 5; ++t) {
      rng.shuffle(std::span<EvalPair>(pairs));
      const CaptionEvalReport r = evaluate_corpus(pairs);
      CHECK(r.bleu4 == doctest::Approx(base.bleu4).epsilon(1e-12));
      CHECK(r.meteor_lite == doctest::Approx(base.meteor_lite).epsilon(1e-12));
      CHECK(r.rouge_l == doctest::Approx(base.rouge_l).epsilon(1e-12));
      CHECK(r.cider == doctest::Approx(base.cider).epsilon(1e-12));
    }
  }

  TEST_CASE("lcs matches exhaustive recursion") {
    Rng rng(23);
    for (int t = 0; t < 300; ++t) {
      const TokenSequence a = random_tokens(rng, 8), b = random_tokens(rng, 8);
      CHECK(lcs_length(a, b) == lcs_brute(a, 0, b, 0));
    }
  }

  TEST_CASE("per-pair scores are bounded and never fall when a reference is added") {
    Rng rng(29);
    for (int t = 0; t < 300; ++t) {
      const TokenSequence c = random_tokens(rng, 7);
      std::vector<TokenSequence> refs{random_tokens(rng, 7)};
      const double m1 = meteor_lite_pair(c, refs), r1 = rouge_l_pair(c, refs);
      CHECK(m1 >= 0.0);
      CHECK(m1 <= 1.0);
      CHECK(r1 >= 0.0);
      CHECK(r1 <= 1.0);
      refs.push_back(random_tokens(rng, 7));
      CHECK(meteor_lite_pair(c, refs) >= m1);
      CHECK(rouge_l_pair(c, refs) >= r1);
    }
  }

  TEST_CASE("empty inputs are errors") {
    CHECK_THROWS_AS(bleu4({}), Error);
    CHECK_THROWS_AS(make_pair("x", "a", {}), Error);
  }

  TEST_CASE("loading evaluation pairs") {
    const auto dir = test::scratch_dir("captions_load");
    const auto write = [&](const std::string& name, const std::string& text) {
      std::ofstream((dir / name).string()) << text;
      return (dir / name).string();
    };
    const auto cands = write("c.jsonl", "{\"image_id\":\"b\",\"caption\":\"a red ball\"}\n{\"image_id\":\"a\",\"caption\":\"a cube\"}\n");
    const auto refs = write("r.jsonl", "{\"image_id\":\"a\",\"captions\":[\"a blue cube\"]}\n\n{\"image_id\":\"b\",\"captions\":[\"red ball\",\"a ball\"]}\n");
    const auto pairs = load_eval_pairs(cands, refs);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].image_id == "b");
    CHECK(pairs[0].references.size() == 2);
    CHECK(pairs[1].candidate == TokenSequence{"a", "cube"});

    const auto orphan = write("orphan.jsonl", "{\"image_id\":\"zzz\",\"caption\":\"x\"}\n");
    CHECK_THROWS_AS(load_eval_pairs(orphan, refs), Error);
    const auto broken = write("broken.jsonl", "{\"image_id\":\n");
    CHECK_THROWS_AS(load_eval_pairs(broken, refs), Error);
    CHECK_THROWS_AS(load_eval_pairs((dir / "missing.jsonl").string(), refs), Error);
  }
}
