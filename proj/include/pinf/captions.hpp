#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace pinf::captions {

using TokenSequence = std::vector<std::string>;

/// Lowercases ASCII, turns everything except letters, digits and the
/// apostrophe into spaces, then splits on whitespace. Bytes >= 0x80 are kept
/// as letters so UTF-8 words survive intact.
TokenSequence tokenize(std::string_view text);

/// Porter (1980) suffix-stripping stemmer, steps 1a through 5b.
std::string porter_stem(std::string_view word);

struct EvalPair {
  std::string image_id;
  TokenSequence candidate;
  std::vector<TokenSequence> references;  // at least one
};

EvalPair make_pair(std::string image_id, std::string_view candidate,
                   const std::vector<std::string>& references);

/// Clipped n-gram counts of one candidate: each n-gram counts at most as
/// often as in the reference that holds it most.
struct ClippedCounts {
  std::size_t matched = 0;
  std::size_t total = 0;
};
ClippedCounts modified_precision(const TokenSequence& candidate, const std::vector<TokenSequence>& references,
                                 std::size_t n);

/// Corpus BLEU-4 without smoothing, x100.
double bleu4(const std::vector<EvalPair>& pairs);

/// Exact + stem unigram alignment METEOR (no paraphrase stage); mean over
/// pairs, x100.
double meteor_lite(const std::vector<EvalPair>& pairs);
/// Per-pair score in [0, 1] (max over references).
double meteor_lite_pair(const TokenSequence& candidate, const std::vector<TokenSequence>& references);

/// LCS-based F-measure with beta = 1.2; mean over pairs, x100.
double rouge_l(const std::vector<EvalPair>& pairs);
double rouge_l_pair(const TokenSequence& candidate, const std::vector<TokenSequence>& references);
std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b);

/// Plain CIDEr (no Gaussian length penalty, no clipping). Document
/// frequencies come from this corpus's reference sets. Returns the mean over
/// pairs of 10 * mean over n = 1..4 of the reference-averaged tf-idf cosine.
double cider(const std::vector<EvalPair>& pairs);
/// Per-pair values in the same scale, in pair order.
std::vector<double> cider_per_pair(const std::vector<EvalPair>& pairs);

struct CaptionEvalReport {
  double bleu4 = 0.0;
  double meteor_lite = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
  std::size_t corpus_size = 0;
  std::size_t excluded = 0;
};

CaptionEvalReport evaluate_corpus(const std::vector<EvalPair>& pairs, std::size_t excluded = 0);

/// Report as a JSON object, including the metric-definition metadata.
std::string report_to_json(const CaptionEvalReport& report);

/// Joins a candidate JSON-lines file ({"image_id", "caption"}) with a
/// reference JSON-lines file ({"image_id", "captions": [...]}). Pairs come
/// out in candidate-file order; a candidate without references is an error.
std::vector<EvalPair> load_eval_pairs(const std::string& candidates_path,
                                      const std::string& references_path);

}  // namespace pinf::captions
