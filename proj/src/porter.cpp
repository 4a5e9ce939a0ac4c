// Porter suffix-stripping stemmer, following the rule tables of the 1980
// definition (ABLI -> ABLE in step 2, no LOGI rule, no short-word shortcut).

#include <array>
#include <string>
#include <string_view>

#include "pinf/captions.hpp"

namespace pinf::captions {

namespace {

class Stemmer {
 public:
  explicit Stemmer(std::string_view word) : w_(word) {}

  std::string run() {
    step1a();
    step1b();
    step1c();
    step2();
    step3();
    step4();
    step5a();
    step5b();
    return w_;
  }

 private:
  struct Rule {
    std::string_view suffix;
    std::string_view replacement;
  };

  bool consonant(std::size_t i) const {
    switch (w_[i]) {
      case 'a': case 'e': case 'i': case 'o': case 'u': return false;
      case 'y': return i == 0 ? true : !consonant(i - 1);
      default: return true;
    }
  }

  // Measure m of w_[0, len): number of VC sequences in [C](VC)^m[V].
  int measure(std::size_t len) const {
    int m = 0;
    std::size_t i = 0;
    while (i < len && consonant(i)) ++i;
    while (i < len) {
      while (i < len && !consonant(i)) ++i;
      if (i >= len) break;
      while (i < len && consonant(i)) ++i;
      ++m;
    }
    return m;
  }

  bool has_vowel(std::size_t len) const {
    for (std::size_t i = 0; i < len; ++i)
      if (!consonant(i)) return true;
    return false;
  }

  bool double_consonant(std::size_t len) const {
    return len >= 2 && w_[len - 1] == w_[len - 2] && consonant(len - 1);
  }

  // *o: stem ends cvc, where the second c is not w, x or y.
  bool cvc(std::size_t len) const {
    if (len < 3) return false;
    if (!consonant(len - 1) || consonant(len - 2) || !consonant(len - 3)) return false;
    const char c = w_[len - 1];
    return c != 'w' && c != 'x' && c != 'y';
  }

  bool ends_with(std::string_view s) const {
    return w_.size() >= s.size() && std::string_view(w_).substr(w_.size() - s.size()) == s;
  }

  void replace_suffix(std::size_t suffix_len, std::string_view replacement) {
    w_.resize(w_.size() - suffix_len);
    w_.append(replacement);
  }

  // Applies the rule with the longest matching suffix if the stem measure
  // exceeds `min_measure`; shorter suffixes are not tried when it fails.
  template <std::size_t N>
  void apply_longest(const std::array<Rule, N>& rules, int min_measure) {
    const Rule* best = nullptr;
    for (const Rule& r : rules) {
      if (ends_with(r.suffix) && (!best || r.suffix.size() > best->suffix.size())) best = &r;
    }
    if (best && measure(w_.size() - best->suffix.size()) > min_measure) {
      replace_suffix(best->suffix.size(), best->replacement);
    }
  }

  void step1a() {
    if (ends_with("sses")) replace_suffix(4, "ss");
    else if (ends_with("ies")) replace_suffix(3, "i");
    else if (ends_with("ss")) return;
    else if (ends_with("s")) replace_suffix(1, "");
  }

  void step1b() {
    bool removed = false;
    if (ends_with("eed")) {
      if (measure(w_.size() - 3) > 0) replace_suffix(3, "ee");
    } else if (ends_with("ed")) {
      if (has_vowel(w_.size() - 2)) {
        replace_suffix(2, "");
        removed = true;
      }
    } else if (ends_with("ing")) {
      if (has_vowel(w_.size() - 3)) {
        replace_suffix(3, "");
        removed = true;
      }
    }
    if (!removed) return;
    if (ends_with("at") || ends_with("bl") || ends_with("iz")) {
      w_.push_back('e');
    } else if (double_consonant(w_.size())) {
      const char last = w_.back();
      if (last != 'l' && last != 's' && last != 'z') w_.pop_back();
    } else if (measure(w_.size()) == 1 && cvc(w_.size())) {
      w_.push_back('e');
    }
  }

  void step1c() {
    if (ends_with("y") && has_vowel(w_.size() - 1)) w_.back() = 'i';
  }

  void step2() {
    static constexpr std::array<Rule, 20> rules = {{
        {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},   {"anci", "ance"},
        {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},     {"entli", "ent"},
        {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
        {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
        {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"},
    }};
    apply_longest(rules, 0);
  }

  void step3() {
    static constexpr std::array<Rule, 7> rules = {{
        {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
        {"ical", "ic"},  {"ful", ""},   {"ness", ""},
    }};
    apply_longest(rules, 0);
  }

  void step4() {
    static constexpr std::array<std::string_view, 19> suffixes = {
        "al",  "ance", "ence", "er",  "ic",  "able", "ible", "ant", "ement", "ment",
        "ent", "ion",  "ou",   "ism", "ate", "iti",  "ous",  "ive", "ize"};
    std::string_view best;
    for (std::string_view s : suffixes) {
      if (ends_with(s) && s.size() > best.size()) best = s;
    }
    if (best.empty()) return;
    const std::size_t stem = w_.size() - best.size();
    if (measure(stem) <= 1) return;
    if (best == "ion" && !(stem > 0 && (w_[stem - 1] == 's' || w_[stem - 1] == 't'))) return;
    w_.resize(stem);
  }

  void step5a() {
    if (!ends_with("e")) return;
    const std::size_t stem = w_.size() - 1;
    const int m = measure(stem);
    if (m > 1 || (m == 1 && !cvc(stem))) w_.pop_back();
  }

  void step5b() {
    if (measure(w_.size()) > 1 && double_consonant(w_.size()) && w_.back() == 'l') w_.pop_back();
  }

  std::string w_;
};

}  // namespace

std::string porter_stem(std::string_view word) {
  if (word.empty()) return {};
  return Stemmer(word).run();
}

}  // namespace pinf::captions
