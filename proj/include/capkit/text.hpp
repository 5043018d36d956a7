#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "capkit/detail/punct_ranges.hpp"
#include "capkit/errors.hpp"
#include "capkit/rng.hpp"

namespace capkit {

inline constexpr const char* kBosTag = "<bos>";
inline constexpr const char* kEosTag = "<eos>";

// A preprocessed caption: lowercase tokens, punctuation stripped. When
// tagged, tokens are wrapped as <bos> ... <eos>.
struct TokenizedSentence {
  std::vector<std::string> tokens;
  bool tagged = false;

  bool operator==(const TokenizedSentence&) const = default;
};

namespace detail {

inline bool is_punct_or_symbol(uint32_t cp) {
  size_t lo = 0, hi = kPunctSymbolRangeCount;
  while (lo < hi) {
    size_t mid = (lo + hi) / 2;
    if (cp < kPunctSymbolRanges[mid].lo) {
      hi = mid;
    } else if (cp > kPunctSymbolRanges[mid].hi) {
      lo = mid + 1;
    } else {
      return true;
    }
  }
  return false;
}

inline bool is_space_cp(uint32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

// Decodes one UTF-8 codepoint starting at s[i]; advances i past it.
// Rejects overlong forms, surrogates, and values beyond U+10FFFF.
inline uint32_t decode_utf8(std::string_view s, size_t& i) {
  auto fail = [&] { throw Error("tokenize: invalid UTF-8 at byte " + std::to_string(i)); };
  uint8_t b0 = static_cast<uint8_t>(s[i]);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len;
  uint32_t cp;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    fail();
    return 0;
  }
  if (i + len > s.size()) fail();
  for (int k = 1; k < len; ++k) {
    uint8_t b = static_cast<uint8_t>(s[i + k]);
    if ((b & 0xC0) != 0x80) fail();
    cp = (cp << 6) | (b & 0x3F);
  }
  static constexpr uint32_t kMin[5] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) fail();
  i += len;
  return cp;
}

inline void append_utf8(std::string& out, uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace detail

// Lowercases (ASCII), deletes every Unicode P*/S* codepoint (apostrophes
// included, so "man's" becomes "mans"), splits on whitespace runs. Digits
// and hyphen-free words pass through untouched; hyphens are P* and vanish,
// joining the halves. Throws EmptySentence when nothing survives.
inline TokenizedSentence tokenize(std::string_view raw, bool attach_tags = false) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  size_t i = 0;
  while (i < raw.size()) {
    uint32_t cp = detail::decode_utf8(raw, i);
    if (detail::is_space_cp(cp)) {
      flush();
    } else if (detail::is_punct_or_symbol(cp)) {
      // deleted, not replaced by space
    } else {
      if (cp >= 'A' && cp <= 'Z') cp += 'a' - 'A';
      detail::append_utf8(cur, cp);
    }
  }
  flush();
  if (tokens.empty()) throw EmptySentence("tokenize: nothing left after preprocessing");
  if (attach_tags) {
    tokens.insert(tokens.begin(), kBosTag);
    tokens.push_back(kEosTag);
  }
  return TokenizedSentence{std::move(tokens), attach_tags};
}

inline TokenizedSentence strip_tags(const TokenizedSentence& s) {
  if (!s.tagged) return s;
  TokenizedSentence out;
  out.tokens.assign(s.tokens.begin() + 1, s.tokens.end() - 1);
  out.tagged = false;
  return out;
}

// Word <-> dense id map. BOS is id 0, EOS id 1, then first-occurrence order.
// Built over the full corpus: no frequency cutoff.
class Vocabulary {
 public:
  Vocabulary() {
    add(kBosTag);
    add(kEosTag);
  }

  int add(const std::string& word) {
    auto [it, inserted] = index_.try_emplace(word, static_cast<int>(words_.size()));
    if (inserted) words_.push_back(word);
    return it->second;
  }

  std::optional<int> id_of(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& word_of(int id) const { return words_.at(static_cast<size_t>(id)); }
  const std::vector<std::string>& words() const { return words_; }
  size_t size() const { return words_.size(); }
  int bos_id() const { return 0; }
  int eos_id() const { return 1; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

inline Vocabulary build_vocab(const std::vector<TokenizedSentence>& corpus) {
  if (corpus.empty()) throw Error("build_vocab: empty corpus");
  Vocabulary vocab;
  for (const auto& sent : corpus)
    for (const auto& tok : sent.tokens) vocab.add(tok);
  return vocab;
}

// One vector per vocabulary id. Tokens found in the embedding file carry the
// file's values; the rest get seeded uniform [-0.5, 0.5] draws keyed by
// (oov_seed, token), so rebuilding with the same seed is bit-identical.
class EmbeddingTable {
 public:
  EmbeddingTable(int dim, std::vector<std::vector<double>> vectors, uint64_t oov_seed,
                 size_t oov_count)
      : dim_(dim), vectors_(std::move(vectors)), oov_seed_(oov_seed), oov_count_(oov_count) {}

  int dim() const { return dim_; }
  size_t size() const { return vectors_.size(); }
  uint64_t oov_seed() const { return oov_seed_; }
  size_t oov_count() const { return oov_count_; }
  const std::vector<double>& vector_of(int id) const {
    return vectors_.at(static_cast<size_t>(id));
  }

  bool operator==(const EmbeddingTable& other) const {
    return dim_ == other.dim_ && vectors_ == other.vectors_;
  }

 private:
  int dim_;
  std::vector<std::vector<double>> vectors_;
  uint64_t oov_seed_;
  size_t oov_count_;
};

inline std::vector<double> oov_vector(std::string_view token, uint64_t oov_seed, int dim) {
  uint64_t key = rng::hash_string(token);
  std::vector<double> v(static_cast<size_t>(dim));
  for (int k = 0; k < dim; ++k)
    v[static_cast<size_t>(k)] =
        rng::to_unit(rng::mix(oov_seed, key, static_cast<uint64_t>(k))) - 0.5;
  return v;
}

// Table with every vocabulary token drawn from the OOV stream; stands in
// when no pretrained embedding file is given.
inline EmbeddingTable random_embeddings(const Vocabulary& vocab, uint64_t seed, int dim) {
  std::vector<std::vector<double>> vectors;
  vectors.reserve(vocab.size());
  for (const auto& word : vocab.words()) vectors.push_back(oov_vector(word, seed, dim));
  return EmbeddingTable(dim, std::move(vectors), seed, vocab.size());
}

// GloVe text layout: one "token v_1 ... v_dim" line per embedding; the first
// line fixes dim. default_dim applies when the file holds no vectors at all.
inline EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab,
                                      uint64_t oov_seed, int default_dim = 300) {
  std::ifstream file(path);
  if (!file) throw IoError("load_embeddings: cannot open " + path);

  std::unordered_map<std::string, std::vector<double>> file_vecs;
  int dim = 0;
  std::string line;
  size_t lineno = 0;
  while (std::getline(file, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string token;
    ss >> token;
    std::vector<double> vec;
    double x;
    while (ss >> x) vec.push_back(x);
    if (!ss.eof())
      throw MalformedEmbeddingFile(path + ":" + std::to_string(lineno) + ": bad float");
    if (vec.empty())
      throw MalformedEmbeddingFile(path + ":" + std::to_string(lineno) + ": no values");
    if (dim == 0) {
      dim = static_cast<int>(vec.size());
    } else if (static_cast<int>(vec.size()) != dim) {
      throw MalformedEmbeddingFile(path + ":" + std::to_string(lineno) + ": expected " +
                                   std::to_string(dim) + " values, got " +
                                   std::to_string(vec.size()));
    }
    file_vecs[token] = std::move(vec);
  }
  if (file.bad()) throw IoError("load_embeddings: read error on " + path);
  if (dim == 0) dim = default_dim;

  std::vector<std::vector<double>> vectors;
  vectors.reserve(vocab.size());
  size_t oov = 0;
  for (const auto& word : vocab.words()) {
    auto it = file_vecs.find(word);
    if (it != file_vecs.end()) {
      vectors.push_back(it->second);
    } else {
      vectors.push_back(oov_vector(word, oov_seed, dim));
      ++oov;
    }
  }
  return EmbeddingTable(dim, std::move(vectors), oov_seed, oov);
}

}  // namespace capkit
