#include "pinf/captions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "pinf/quality.hpp"

namespace pinf::captions {

using nlohmann::json;

TokenSequence tokenize(std::string_view text) {
  TokenSequence tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                      c == '\'' || c >= 0x80;
    if (keep) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

EvalPair make_pair(std::string image_id, std::string_view candidate,
                   const std::vector<std::string>& references) {
  if (references.empty()) throw Error("image " + image_id + " has no reference captions");
  EvalPair pair{std::move(image_id), tokenize(candidate), {}};
  for (const auto& r : references) pair.references.push_back(tokenize(r));
  return pair;
}

namespace {

using NgramCounts = std::map<std::string, std::size_t>;

NgramCounts ngram_counts(const TokenSequence& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t j = 1; j < n; ++j) {
      key.push_back(' ');
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

void require_pairs(const std::vector<EvalPair>& pairs, const char* metric) {
  if (pairs.empty()) throw Error(std::string(metric) + ": empty evaluation corpus");
  for (const auto& p : pairs) {
    if (p.references.empty()) throw Error(std::string(metric) + ": image " + p.image_id + " has no references");
  }
}

}  // namespace

// ---------------------------------------------------------------- BLEU

ClippedCounts modified_precision(const TokenSequence& candidate, const std::vector<TokenSequence>& references,
                                 std::size_t n) {
  NgramCounts max_ref;
  for (const auto& r : references) {
    for (const auto& [gram, count] : ngram_counts(r, n)) max_ref[gram] = std::max(max_ref[gram], count);
  }
  ClippedCounts out;
  for (const auto& [gram, count] : ngram_counts(candidate, n)) {
    const auto it = max_ref.find(gram);
    out.matched += std::min(count, it == max_ref.end() ? std::size_t{0} : it->second);
    out.total += count;
  }
  return out;
}

double bleu4(const std::vector<EvalPair>& pairs) {
  require_pairs(pairs, "BLEU");
  std::array<double, 4> matched{}, total{};
  double cand_len = 0.0, ref_len = 0.0;
  for (const auto& p : pairs) {
    const auto c = static_cast<double>(p.candidate.size());
    cand_len += c;
    // Closest reference length; the shorter one wins a tie.
    double best = -1.0;
    for (const auto& r : p.references) {
      const auto len = static_cast<double>(r.size());
      if (best < 0 || std::abs(len - c) < std::abs(best - c) ||
          (std::abs(len - c) == std::abs(best - c) && len < best)) {
        best = len;
      }
    }
    ref_len += best;
    for (std::size_t n = 1; n <= 4; ++n) {
      const ClippedCounts counts = modified_precision(p.candidate, p.references, n);
      matched[n - 1] += static_cast<double>(counts.matched);
      total[n - 1] += static_cast<double>(counts.total);
    }
  }
  if (cand_len == 0.0) throw Error("BLEU: candidate corpus is empty");
  double log_precision = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (matched[n] == 0.0 || total[n] == 0.0) return 0.0;
    log_precision += 0.25 * std::log(matched[n] / total[n]);
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return 100.0 * bp * std::exp(log_precision);
}

// ---------------------------------------------------------------- METEOR

namespace {

constexpr std::size_t kAlignmentSearchBudget = 200000;

struct Alignment {
  std::vector<int> cand_to_ref;  // -1 = unmatched

  std::size_t matches() const {
    return static_cast<std::size_t>(std::count_if(cand_to_ref.begin(), cand_to_ref.end(),
                                                  [](int r) { return r >= 0; }));
  }

  std::size_t chunks() const {
    std::size_t count = 0;
    int prev_c = -2, prev_r = -2;
    for (std::size_t c = 0; c < cand_to_ref.size(); ++c) {
      const int r = cand_to_ref[c];
      if (r < 0) continue;
      if (!(static_cast<int>(c) == prev_c + 1 && r == prev_r + 1)) ++count;
      prev_c = static_cast<int>(c);
      prev_r = r;
    }
    return count;
  }
};

// One matching stage. Among all maximum-cardinality matchings between the
// still-unmatched tokens (equal keys may match), picks the one with the fewest
// chunks in the combined alignment; ties go to the lexicographically
// smallest reference positions in candidate order.
class StageMatcher {
 public:
  StageMatcher(const std::vector<std::string>& cand_keys, const std::vector<std::string>& ref_keys,
               Alignment base, std::vector<bool> ref_used)
      : cand_keys_(cand_keys), ref_keys_(ref_keys), current_(std::move(base)),
        ref_used_(std::move(ref_used)) {
    std::map<std::string, int> cand_free, ref_free;
    for (std::size_t c = 0; c < cand_keys_.size(); ++c)
      if (current_.cand_to_ref[c] < 0) ++cand_free[cand_keys_[c]];
    for (std::size_t r = 0; r < ref_keys_.size(); ++r)
      if (!ref_used_[r]) ++ref_free[ref_keys_[r]];
    for (const auto& [key, count] : cand_free) {
      const auto it = ref_free.find(key);
      const int need = it == ref_free.end() ? 0 : std::min(count, it->second);
      needed_[key] = need;
      cand_left_[key] = count;
    }
    free_cands_.reserve(cand_keys_.size());
    for (std::size_t c = 0; c < cand_keys_.size(); ++c)
      if (current_.cand_to_ref[c] < 0) free_cands_.push_back(c);
  }

  Alignment solve() {
    best_ = current_;
    best_chunks_ = SIZE_MAX;
    search(0);
    return best_;
  }

 private:
  void search(std::size_t k) {
    if (nodes_++ > kAlignmentSearchBudget && best_chunks_ != SIZE_MAX) return;
    if (k == free_cands_.size()) {
      const std::size_t ch = current_.chunks();
      if (ch < best_chunks_) {
        best_chunks_ = ch;
        best_ = current_;
      }
      return;
    }
    const std::size_t c = free_cands_[k];
    const std::string& key = cand_keys_[c];
    int& need = needed_[key];
    int& left = cand_left_[key];
    --left;
    if (need > 0) {
      for (std::size_t r = 0; r < ref_keys_.size(); ++r) {
        if (ref_used_[r] || ref_keys_[r] != key) continue;
        ref_used_[r] = true;
        current_.cand_to_ref[c] = static_cast<int>(r);
        --need;
        search(k + 1);
        ++need;
        current_.cand_to_ref[c] = -1;
        ref_used_[r] = false;
      }
    }
    // Skipping is allowed only while the remaining candidates of this key can
    // still reach the maximum matching.
    if (left >= need) search(k + 1);
    ++left;
  }

  const std::vector<std::string>& cand_keys_;
  const std::vector<std::string>& ref_keys_;
  Alignment current_;
  std::vector<bool> ref_used_;
  std::map<std::string, int> needed_;
  std::map<std::string, int> cand_left_;
  std::vector<std::size_t> free_cands_;
  Alignment best_;
  std::size_t best_chunks_ = SIZE_MAX;
  std::size_t nodes_ = 0;
};

double meteor_single(const TokenSequence& cand, const TokenSequence& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  Alignment align{std::vector<int>(cand.size(), -1)};
  std::vector<bool> used(ref.size(), false);

  // Stage 1: exact tokens.
  align = StageMatcher(cand, ref, align, used).solve();
  for (int r : align.cand_to_ref)
    if (r >= 0) used[static_cast<std::size_t>(r)] = true;

  // Stage 2: Porter stems among the leftovers.
  std::vector<std::string> cand_stems, ref_stems;
  for (const auto& t : cand) cand_stems.push_back(porter_stem(t));
  for (const auto& t : ref) ref_stems.push_back(porter_stem(t));
  align = StageMatcher(cand_stems, ref_stems, align, used).solve();

  const auto m = static_cast<double>(align.matches());
  if (m == 0.0) return 0.0;
  const double precision = m / static_cast<double>(cand.size());
  const double recall = m / static_cast<double>(ref.size());
  const double f_mean = 10.0 * precision * recall / (recall + 9.0 * precision);
  const double frag = static_cast<double>(align.chunks()) / m;
  const double penalty = 0.5 * frag * frag * frag;
  return f_mean * (1.0 - penalty);
}

}  // namespace

double meteor_lite_pair(const TokenSequence& candidate, const std::vector<TokenSequence>& references) {
  double best = 0.0;
  for (const auto& r : references) best = std::max(best, meteor_single(candidate, r));
  return best;
}

double meteor_lite(const std::vector<EvalPair>& pairs) {
  require_pairs(pairs, "METEOR");
  double sum = 0.0;
  for (const auto& p : pairs) sum += meteor_lite_pair(p.candidate, p.references);
  return 100.0 * sum / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------- ROUGE-L

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_pair(const TokenSequence& candidate, const std::vector<TokenSequence>& references) {
  constexpr double kBeta2 = 1.2 * 1.2;
  double best = 0.0;
  for (const auto& ref : references) {
    const auto lcs = static_cast<double>(lcs_length(candidate, ref));
    if (lcs == 0.0) continue;
    const double recall = lcs / static_cast<double>(ref.size());
    const double precision = lcs / static_cast<double>(candidate.size());
    const double f = (1.0 + kBeta2) * recall * precision / (recall + kBeta2 * precision);
    best = std::max(best, f);
  }
  return best;
}

double rouge_l(const std::vector<EvalPair>& pairs) {
  require_pairs(pairs, "ROUGE-L");
  double sum = 0.0;
  for (const auto& p : pairs) sum += rouge_l_pair(p.candidate, p.references);
  return 100.0 * sum / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------- CIDEr

namespace {

using TfIdf = std::unordered_map<std::string, double>;

struct WeightedVector {
  TfIdf weights;
  double norm = 0.0;
};

WeightedVector tfidf(const TokenSequence& tokens, std::size_t n,
                     const std::unordered_map<std::string, std::size_t>& df, double log_n) {
  WeightedVector v;
  for (const auto& [gram, count] : ngram_counts(tokens, n)) {
    const auto it = df.find(gram);
    const double doc_freq = it == df.end() ? 1.0 : static_cast<double>(std::max<std::size_t>(1, it->second));
    const double w = static_cast<double>(count) * (log_n - std::log(doc_freq));
    v.weights[gram] = w;
    v.norm += w * w;
  }
  v.norm = std::sqrt(v.norm);
  return v;
}

double cosine(const WeightedVector& a, const WeightedVector& b) {
  if (a.norm == 0.0 || b.norm == 0.0) return 0.0;
  // Iterate in sorted key order so the sum is independent of hash layout.
  std::vector<const std::string*> keys;
  for (const auto& [gram, _] : a.weights) keys.push_back(&gram);
  std::sort(keys.begin(), keys.end(), [](const std::string* x, const std::string* y) { return *x < *y; });
  double dot = 0.0;
  for (const std::string* k : keys) {
    const auto it = b.weights.find(*k);
    if (it != b.weights.end()) dot += a.weights.at(*k) * it->second;
  }
  return dot / (a.norm * b.norm);
}

}  // namespace

std::vector<double> cider_per_pair(const std::vector<EvalPair>& pairs) {
  require_pairs(pairs, "CIDEr");
  const double log_n = std::log(static_cast<double>(pairs.size()));
  std::array<std::unordered_map<std::string, std::size_t>, 4> df;
  for (const auto& p : pairs) {
    for (std::size_t n = 1; n <= 4; ++n) {
      std::set<std::string> seen;
      for (const auto& r : p.references)
        for (const auto& [gram, _] : ngram_counts(r, n)) seen.insert(gram);
      for (const auto& gram : seen) ++df[n - 1][gram];
    }
  }
  std::vector<double> scores;
  scores.reserve(pairs.size());
  for (const auto& p : pairs) {
    double mean_over_n = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
      const WeightedVector cand = tfidf(p.candidate, n, df[n - 1], log_n);
      double sim = 0.0;
      for (const auto& r : p.references) sim += cosine(cand, tfidf(r, n, df[n - 1], log_n));
      mean_over_n += sim / static_cast<double>(p.references.size()) / 4.0;
    }
    scores.push_back(10.0 * mean_over_n);
  }
  return scores;
}

double cider(const std::vector<EvalPair>& pairs) {
  const auto scores = cider_per_pair(pairs);
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

// ---------------------------------------------------------------- report

CaptionEvalReport evaluate_corpus(const std::vector<EvalPair>& pairs, std::size_t excluded) {
  CaptionEvalReport report;
  report.bleu4 = bleu4(pairs);
  report.meteor_lite = meteor_lite(pairs);
  report.rouge_l = rouge_l(pairs);
  report.cider = cider(pairs);
  report.corpus_size = pairs.size();
  report.excluded = excluded;
  return report;
}

std::string report_to_json(const CaptionEvalReport& report) {
  json doc;
  doc["bleu4"] = report.bleu4;
  doc["meteor_lite"] = report.meteor_lite;
  doc["rouge_l"] = report.rouge_l;
  doc["cider"] = report.cider;
  doc["corpus_size"] = report.corpus_size;
  doc["excluded"] = report.excluded;
  doc["meta"] = {
      {"tokenizer", "lowercase; non [a-z0-9'] -> space; whitespace split"},
      {"bleu", "corpus BLEU-4, closest reference length, no smoothing"},
      {"meteor", "meteor_lite: exact + Porter stem stages, no paraphrase"},
      {"rouge", "ROUGE-L F, beta 1.2, per-pair max over references, corpus mean"},
      {"cider", "plain CIDEr (not CIDEr-D), document frequency over the evaluated corpus"},
      {"scale", "x100 for bleu4/meteor_lite/rouge_l; cider = mean of 10 x mean-over-n"}};
  return doc.dump(1);
}

std::vector<EvalPair> load_eval_pairs(const std::string& candidates_path,
                                      const std::string& references_path) {
  auto read_lines = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path);
    std::vector<json> rows;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        rows.push_back(json::parse(line));
      } catch (const json::parse_error& e) {
        throw SchemaError(path + ":" + std::to_string(number) + ": " + e.what());
      }
    }
    return rows;
  };
  std::map<std::string, std::vector<std::string>> refs;
  for (const json& row : read_lines(references_path)) {
    if (!row.contains("image_id") || !row.contains("captions") || !row.at("captions").is_array()) {
      throw SchemaError("reference rows need 'image_id' and a 'captions' array");
    }
    const std::string id = row.at("image_id").is_string() ? row.at("image_id").get<std::string>()
                                                          : row.at("image_id").dump();
    if (!refs.emplace(id, row.at("captions").get<std::vector<std::string>>()).second) {
      throw SchemaError("duplicate reference image_id " + id);
    }
  }
  std::vector<EvalPair> pairs;
  std::set<std::string> seen;
  for (const json& row : read_lines(candidates_path)) {
    if (!row.contains("image_id") || !row.contains("caption") || !row.at("caption").is_string()) {
      throw SchemaError("candidate rows need 'image_id' and a string 'caption'");
    }
    const std::string id = row.at("image_id").is_string() ? row.at("image_id").get<std::string>()
                                                          : row.at("image_id").dump();
    if (!seen.insert(id).second) throw SchemaError("duplicate candidate image_id " + id);
    const auto it = refs.find(id);
    if (it == refs.end()) throw SchemaError("no references for candidate image_id " + id);
    pairs.push_back(make_pair(id, row.at("caption").get<std::string>(), it->second));
  }
  return pairs;
}

}  // namespace pinf::captions
