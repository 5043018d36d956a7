#pragma once

#include <string>
#include <string_view>

namespace capkit {

// Porter stemmer, original 1980 rule set. Words shorter than three letters
// and tokens containing anything outside a-z are returned unchanged.
namespace porter {
namespace detail {

inline bool is_vowel_at(const std::string& w, size_t i) {
  switch (w[i]) {
    case 'a': case 'e': case 'i': case 'o': case 'u':
      return true;
    case 'y':
      // y after a consonant acts as a vowel ("syzygy"); leading y does not.
      return i > 0 && !is_vowel_at(w, i - 1);
    default:
      return false;
  }
}

// Number of VC sequences in w[0..len): the m of [C](VC)^m[V].
inline int measure(const std::string& w, size_t len) {
  int m = 0;
  bool prev_vowel = false;
  for (size_t i = 0; i < len; ++i) {
    bool v = is_vowel_at(w, i);
    if (prev_vowel && !v) ++m;
    prev_vowel = v;
  }
  return m;
}

inline bool has_vowel(const std::string& w, size_t len) {
  for (size_t i = 0; i < len; ++i)
    if (is_vowel_at(w, i)) return true;
  return false;
}

inline bool double_consonant(const std::string& w, size_t len) {
  if (len < 2) return false;
  if (w[len - 1] != w[len - 2]) return false;
  return !is_vowel_at(w, len - 1);
}

// *o: stem ends consonant-vowel-consonant and the final consonant is
// not w, x or y.
inline bool ends_cvc(const std::string& w, size_t len) {
  if (len < 3) return false;
  if (is_vowel_at(w, len - 3) || !is_vowel_at(w, len - 2) || is_vowel_at(w, len - 1))
    return false;
  char c = w[len - 1];
  return c != 'w' && c != 'x' && c != 'y';
}

inline bool ends_with(const std::string& w, std::string_view suffix) {
  return w.size() >= suffix.size() &&
         w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Replaces `suffix` by `repl` when the remaining stem has measure > bound.
inline bool replace_m(std::string& w, std::string_view suffix, std::string_view repl,
                      int bound) {
  if (!ends_with(w, suffix)) return false;
  size_t stem_len = w.size() - suffix.size();
  if (measure(w, stem_len) > bound) {
    w.resize(stem_len);
    w.append(repl);
  }
  return true;  // suffix matched; no other rule in the step applies
}

inline void step1a(std::string& w) {
  if (ends_with(w, "sses")) {
    w.resize(w.size() - 2);
  } else if (ends_with(w, "ies")) {
    w.resize(w.size() - 2);
  } else if (!ends_with(w, "ss") && ends_with(w, "s")) {
    w.resize(w.size() - 1);
  }
}

inline void step1b(std::string& w) {
  if (ends_with(w, "eed")) {
    if (measure(w, w.size() - 3) > 0) w.resize(w.size() - 1);
    return;
  }
  size_t stem_len;
  if (ends_with(w, "ed") && has_vowel(w, w.size() - 2)) {
    stem_len = w.size() - 2;
  } else if (ends_with(w, "ing") && has_vowel(w, w.size() - 3)) {
    stem_len = w.size() - 3;
  } else {
    return;
  }
  w.resize(stem_len);
  if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
    w.push_back('e');
  } else if (double_consonant(w, w.size())) {
    char c = w.back();
    if (c != 'l' && c != 's' && c != 'z') w.resize(w.size() - 1);
  } else if (measure(w, w.size()) == 1 && ends_cvc(w, w.size())) {
    w.push_back('e');
  }
}

inline void step1c(std::string& w) {
  if (ends_with(w, "y") && has_vowel(w, w.size() - 1)) w.back() = 'i';
}

inline void step2(std::string& w) {
  // Longest suffix first within overlapping pairs (ational before tional,
  // ization before ation before ator).
  static constexpr std::pair<std::string_view, std::string_view> rules[] = {
      {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"},  {"anci", "ance"},
      {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},    {"entli", "ent"},
      {"ousli", "ous"},   {"eli", "e"},       {"ization", "ize"}, {"ation", "ate"},
      {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
      {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},  {"biliti", "ble"},
  };
  std::string_view best_suffix, best_repl;
  for (const auto& [suffix, repl] : rules)
    if (suffix.size() > best_suffix.size() && ends_with(w, suffix)) {
      best_suffix = suffix;
      best_repl = repl;
    }
  if (!best_suffix.empty()) replace_m(w, best_suffix, best_repl, 0);
}

inline void step3(std::string& w) {
  static constexpr std::pair<std::string_view, std::string_view> rules[] = {
      {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
      {"ical", "ic"},  {"ful", ""},   {"ness", ""},
  };
  for (const auto& [suffix, repl] : rules)
    if (ends_with(w, suffix)) {
      replace_m(w, suffix, repl, 0);
      return;
    }
}

inline void step4(std::string& w) {
  static constexpr std::string_view suffixes[] = {
      "ement", "ance", "ence", "able", "ible", "ment", "ant", "ent", "ion",
      "ism",  "ate",  "iti",  "ous",  "ive",  "ize",  "al",  "er",  "ic",  "ou",
  };
  std::string_view best;
  for (std::string_view s : suffixes)
    if (s.size() > best.size() && ends_with(w, s)) best = s;
  if (best.empty()) return;
  size_t stem_len = w.size() - best.size();
  if (best == "ion" && (stem_len == 0 || (w[stem_len - 1] != 's' && w[stem_len - 1] != 't')))
    return;
  if (measure(w, stem_len) > 1) w.resize(stem_len);
}

inline void step5a(std::string& w) {
  if (!ends_with(w, "e")) return;
  size_t stem_len = w.size() - 1;
  int m = measure(w, stem_len);
  if (m > 1 || (m == 1 && !ends_cvc(w, stem_len))) w.resize(stem_len);
}

inline void step5b(std::string& w) {
  if (w.size() >= 2 && w.back() == 'l' && double_consonant(w, w.size()) &&
      measure(w, w.size() - 1) > 1)
    w.resize(w.size() - 1);
}

}  // namespace detail

inline std::string stem(std::string_view token) {
  std::string w(token);
  if (w.size() <= 2) return w;
  for (char c : w)
    if (c < 'a' || c > 'z') return w;
  detail::step1a(w);
  detail::step1b(w);
  detail::step1c(w);
  detail::step2(w);
  detail::step3(w);
  detail::step4(w);
  detail::step5a(w);
  detail::step5b(w);
  return w;
}

}  // namespace porter
}  // namespace capkit
