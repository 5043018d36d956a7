#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "capkit/errors.hpp"
#include "capkit/parallel.hpp"
#include "capkit/stemmer.hpp"
#include "capkit/text.hpp"

namespace capkit {

// One candidate caption scored against the reference set of its video.
struct ScoredPair {
  TokenizedSentence candidate;
  std::vector<TokenizedSentence> references;
  std::string video_id;
};

// Scores in the reporting scale used throughout: 0-100, CIDEr 0-1000.
struct MetricReport {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double meteor = 0.0;
  double cider = 0.0;
};

// Synonym sets loaded from a text file, one whitespace-separated token group
// per line. Two tokens are related when they share at least one group.
class SynonymTable {
 public:
  SynonymTable() = default;

  static SynonymTable from_file(const std::string& path) {
    std::ifstream file(path);
    if (!file) throw IoError("synonyms: cannot open " + path);
    SynonymTable table;
    std::string line;
    int group = 0;
    while (std::getline(file, line)) {
      std::istringstream ss(line);
      std::string tok;
      bool any = false;
      while (ss >> tok) {
        table.groups_[tok].push_back(group);
        any = true;
      }
      if (any) ++group;
    }
    return table;
  }

  void add_group(const std::vector<std::string>& tokens) {
    int group = next_group_++;
    for (const auto& t : tokens) groups_[t].push_back(group);
  }

  bool empty() const { return groups_.empty(); }

  bool related(const std::string& a, const std::string& b) const {
    auto ia = groups_.find(a);
    auto ib = groups_.find(b);
    if (ia == groups_.end() || ib == groups_.end()) return false;
    for (int ga : ia->second)
      for (int gb : ib->second)
        if (ga == gb) return true;
    return false;
  }

 private:
  std::unordered_map<std::string, std::vector<int>> groups_;
  int next_group_ = 1 << 20;  // file groups count from 0; add_group from here
};

struct MetricConfig {
  bool smooth_bleu = false;
  double rouge_beta = 1.2;
  bool meteor_stem = true;
  SynonymTable synonyms;
};

namespace ngram {

// N-grams are token spans joined with a 0x1f separator; the separator cannot
// occur inside tokens produced by tokenize (it is a control character).
inline std::string key(const std::vector<std::string>& tokens, size_t start, size_t n) {
  std::string k = tokens[start];
  for (size_t i = 1; i < n; ++i) {
    k.push_back('\x1f');
    k.append(tokens[start + i]);
  }
  return k;
}

inline size_t count_of_order(size_t n_tokens, size_t n) {
  return n_tokens + 1 >= n + 1 ? n_tokens - n + 1 : 0;
}

}  // namespace ngram

// Counts of n-grams of orders 1..4 for one sentence.
struct NgramProfile {
  std::unordered_map<std::string, int> counts[4];

  static NgramProfile of(const std::vector<std::string>& tokens) {
    NgramProfile p;
    for (size_t n = 1; n <= 4; ++n)
      for (size_t s = 0; s + n <= tokens.size(); ++s) ++p.counts[n - 1][ngram::key(tokens, s, n)];
    return p;
  }

  size_t total(size_t n) const {
    size_t t = 0;
    for (const auto& [k, c] : counts[n - 1]) t += static_cast<size_t>(c);
    return t;
  }
};

namespace detail {

inline void check_pair(const ScoredPair& pair, const char* where) {
  if (pair.references.empty()) throw Error(std::string(where) + ": references empty");
  if (pair.candidate.tagged) throw Error(std::string(where) + ": tagged candidate");
  for (const auto& r : pair.references)
    if (r.tagged) throw Error(std::string(where) + ": tagged reference");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// BLEU-4, corpus level. Modified n-gram precision with per-reference count
// clipping, summed over the corpus; brevity penalty from the closest
// reference length (ties resolved toward the shorter reference). Optional
// add-half smoothing replaces a zero p_n by 1/(2 * candidate n-gram total).
// ---------------------------------------------------------------------------
inline double bleu4_corpus(const std::vector<ScoredPair>& pairs, bool smoothing = false) {
  if (pairs.empty()) throw Error("bleu4_corpus: no pairs");
  double num[4] = {0, 0, 0, 0};
  double den[4] = {0, 0, 0, 0};
  size_t cand_len_sum = 0;
  size_t ref_len_sum = 0;
  for (const auto& pair : pairs) {
    detail::check_pair(pair, "bleu4_corpus");
    const auto& cand = pair.candidate.tokens;
    NgramProfile cand_prof = NgramProfile::of(cand);
    // clip counts by the per-n-gram max over references
    std::unordered_map<std::string, int> ref_max[4];
    for (const auto& ref : pair.references) {
      NgramProfile rp = NgramProfile::of(ref.tokens);
      for (int n = 0; n < 4; ++n)
        for (const auto& [k, c] : rp.counts[n]) {
          int& m = ref_max[n][k];
          m = std::max(m, c);
        }
    }
    for (int n = 0; n < 4; ++n) {
      for (const auto& [k, c] : cand_prof.counts[n]) {
        auto it = ref_max[n].find(k);
        num[n] += std::min(c, it == ref_max[n].end() ? 0 : it->second);
        den[n] += c;
      }
    }
    cand_len_sum += cand.size();
    size_t best_len = pair.references.front().tokens.size();
    for (const auto& ref : pair.references) {
      size_t len = ref.tokens.size();
      auto dist = [&](size_t l) {
        return l > cand.size() ? l - cand.size() : cand.size() - l;
      };
      if (dist(len) < dist(best_len) || (dist(len) == dist(best_len) && len < best_len))
        best_len = len;
    }
    ref_len_sum += best_len;
  }

  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    double p;
    if (den[n] == 0) return 0.0;
    if (num[n] == 0) {
      if (!smoothing) return 0.0;
      p = 1.0 / (2.0 * den[n]);
    } else {
      p = num[n] / den[n];
    }
    log_sum += std::log(p);
  }
  double bp = cand_len_sum > ref_len_sum
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(ref_len_sum) /
                                       static_cast<double>(cand_len_sum));
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

// ---------------------------------------------------------------------------
// ROUGE-L: LCS-based F-measure, max over references.
// ---------------------------------------------------------------------------
inline size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline double rouge_l(const ScoredPair& pair, double beta = 1.2) {
  detail::check_pair(pair, "rouge_l");
  const auto& cand = pair.candidate.tokens;
  if (cand.empty()) throw Error("rouge_l: empty candidate");
  double best = 0.0;
  double b2 = beta * beta;
  for (const auto& ref : pair.references) {
    if (ref.tokens.empty()) throw Error("rouge_l: empty reference");
    double lcs = static_cast<double>(lcs_length(cand, ref.tokens));
    double recall = lcs / static_cast<double>(ref.tokens.size());
    double precision = lcs / static_cast<double>(cand.size());
    double denom = recall + b2 * precision;
    double f = denom == 0.0 ? 0.0 : (1.0 + b2) * precision * recall / denom;
    best = std::max(best, f);
  }
  return 100.0 * best;
}

// ---------------------------------------------------------------------------
// METEOR. Unigram alignment in three stages (exact form, stemmed form,
// synonym table), each token matched at most once. Among alignments that
// maximize the per-stage match counts in stage order, one minimizing the
// number of chunks is selected; chunks are maximal runs of matches that are
// contiguous and identically ordered in both sentences.
// ---------------------------------------------------------------------------
namespace meteor_detail {

struct AlignValue {
  int q[3] = {0, 0, 0};  // matches per stage
  int chunks = 0;

  int matches() const { return q[0] + q[1] + q[2]; }

  // lexicographic: more stage-1, then stage-2, then stage-3, then fewer chunks
  bool better_than(const AlignValue& o) const {
    for (int s = 0; s < 3; ++s)
      if (q[s] != o.q[s]) return q[s] > o.q[s];
    return chunks < o.chunks;
  }
};

// Earliest applicable stage per (candidate, reference) position, or -1.
struct StageGraph {
  int nc = 0, nr = 0;
  std::vector<int> stage;  // nc * nr, row-major

  int at(int i, int j) const { return stage[static_cast<size_t>(i * nr + j)]; }
};

inline StageGraph build_graph(const std::vector<std::string>& cand,
                              const std::vector<std::string>& ref, bool use_stem,
                              const SynonymTable* synonyms) {
  StageGraph g;
  g.nc = static_cast<int>(cand.size());
  g.nr = static_cast<int>(ref.size());
  g.stage.assign(static_cast<size_t>(g.nc * g.nr), -1);
  std::vector<std::string> cand_stem(cand.size()), ref_stem(ref.size());
  if (use_stem) {
    for (size_t i = 0; i < cand.size(); ++i) cand_stem[i] = porter::stem(cand[i]);
    for (size_t j = 0; j < ref.size(); ++j) ref_stem[j] = porter::stem(ref[j]);
  }
  for (int i = 0; i < g.nc; ++i) {
    for (int j = 0; j < g.nr; ++j) {
      int s = -1;
      if (cand[static_cast<size_t>(i)] == ref[static_cast<size_t>(j)]) {
        s = 0;
      } else if (use_stem && cand_stem[static_cast<size_t>(i)] == ref_stem[static_cast<size_t>(j)]) {
        s = 1;
      } else if (synonyms != nullptr &&
                 synonyms->related(cand[static_cast<size_t>(i)], ref[static_cast<size_t>(j)])) {
        s = 2;
      }
      g.stage[static_cast<size_t>(i * g.nr + j)] = s;
    }
  }
  return g;
}

struct MemoKey {
  uint64_t mask;
  int pos;
  int prev_j;  // ref index matched by pos-1, or -1

  bool operator==(const MemoKey&) const = default;
};

struct MemoKeyHash {
  size_t operator()(const MemoKey& k) const {
    uint64_t h = k.mask * 0x9e3779b97f4a7c15ULL;
    h ^= (static_cast<uint64_t>(static_cast<uint32_t>(k.pos)) << 32) ^
         static_cast<uint32_t>(k.prev_j + 1);
    h *= 0xbf58476d1ce4e5b9ULL;
    return static_cast<size_t>(h ^ (h >> 29));
  }
};

class Aligner {
 public:
  explicit Aligner(const StageGraph& g) : g_(g) {}

  AlignValue solve() {
    if (g_.nr > 63 || g_.nc > 4096) return greedy();
    nodes_ = 0;
    exhausted_ = false;
    memo_.clear();
    AlignValue v = search(0, 0, -1);
    if (exhausted_) return greedy();
    return v;
  }

 private:
  static constexpr size_t kNodeBudget = 4'000'000;

  // Exact DFS with memoization on (position, used-reference set, previous
  // match). Values compose because chunk increments only look one pair back.
  AlignValue search(int pos, uint64_t mask, int prev_j) {
    if (pos == g_.nc) return AlignValue{};
    if (++nodes_ > kNodeBudget) {
      exhausted_ = true;
      return AlignValue{};
    }
    MemoKey key{mask, pos, prev_j};
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;

    AlignValue best = search(pos + 1, mask, -1);  // leave pos unmatched
    for (int j = 0; j < g_.nr && !exhausted_; ++j) {
      if (mask & (1ULL << j)) continue;
      int s = g_.at(pos, j);
      if (s < 0) continue;
      AlignValue sub = search(pos + 1, mask | (1ULL << j), j);
      sub.q[s] += 1;
      sub.chunks += (prev_j >= 0 && j == prev_j + 1) ? 0 : 1;
      if (sub.better_than(best)) best = sub;
    }
    if (!exhausted_) memo_.emplace(key, best);
    return best;
  }

  // Fallback for out-of-budget inputs: stage-sequential first-free matching,
  // preferring the ref position that extends the current diagonal run.
  AlignValue greedy() {
    std::vector<int> match(static_cast<size_t>(g_.nc), -1);
    std::vector<bool> used(static_cast<size_t>(g_.nr), false);
    AlignValue v;
    for (int s = 0; s < 3; ++s) {
      for (int i = 0; i < g_.nc; ++i) {
        if (match[static_cast<size_t>(i)] >= 0) continue;
        int pick = -1;
        int diagonal = i > 0 ? match[static_cast<size_t>(i - 1)] + 1 : -1;
        if (diagonal >= 0 && diagonal < g_.nr && !used[static_cast<size_t>(diagonal)] &&
            g_.at(i, diagonal) == s) {
          pick = diagonal;
        } else {
          for (int j = 0; j < g_.nr; ++j)
            if (!used[static_cast<size_t>(j)] && g_.at(i, j) == s) {
              pick = j;
              break;
            }
        }
        if (pick >= 0) {
          match[static_cast<size_t>(i)] = pick;
          used[static_cast<size_t>(pick)] = true;
          v.q[s] += 1;
        }
      }
    }
    for (int i = 0; i < g_.nc; ++i) {
      int j = match[static_cast<size_t>(i)];
      if (j < 0) continue;
      if (!(i > 0 && match[static_cast<size_t>(i - 1)] == j - 1)) ++v.chunks;
    }
    return v;
  }

  const StageGraph& g_;
  size_t nodes_ = 0;
  bool exhausted_ = false;
  std::unordered_map<MemoKey, AlignValue, MemoKeyHash> memo_;
};

inline AlignValue align(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                        bool use_stem, const SynonymTable* synonyms) {
  StageGraph g = build_graph(cand, ref, use_stem, synonyms);
  Aligner aligner(g);
  return aligner.solve();
}

inline double score_from_alignment(const AlignValue& v, size_t cand_len, size_t ref_len) {
  int m = v.matches();
  if (m == 0) return 0.0;
  double precision = static_cast<double>(m) / static_cast<double>(cand_len);
  double recall = static_cast<double>(m) / static_cast<double>(ref_len);
  double fmean = 10.0 * precision * recall / (recall + 9.0 * precision);
  double frag = static_cast<double>(v.chunks) / static_cast<double>(m);
  double penalty = 0.5 * frag * frag * frag;
  return fmean * (1.0 - penalty);
}

}  // namespace meteor_detail

inline double meteor(const ScoredPair& pair, const SynonymTable* synonyms = nullptr,
                     bool use_stem = true) {
  detail::check_pair(pair, "meteor");
  if (pair.candidate.tokens.empty()) throw Error("meteor: empty candidate");
  double best = 0.0;
  for (const auto& ref : pair.references) {
    if (ref.tokens.empty()) throw Error("meteor: empty reference");
    auto v = meteor_detail::align(pair.candidate.tokens, ref.tokens, use_stem, synonyms);
    best = std::max(best,
                    meteor_detail::score_from_alignment(v, pair.candidate.tokens.size(),
                                                        ref.tokens.size()));
  }
  return 100.0 * best;
}

// ---------------------------------------------------------------------------
// CIDEr. TF-IDF n-gram vectors for n = 1..4; document frequency over the
// reference sets, one document per pair (pairs are per video). A candidate
// n-gram absent from every reference set keeps df = 1. Scores are scaled to
// 0-1000.
// ---------------------------------------------------------------------------
struct CiderResult {
  std::map<std::string, double> per_video;
  double mean = 0.0;
};

inline CiderResult cider_corpus(const std::vector<ScoredPair>& pairs) {
  if (pairs.empty()) throw Error("cider_corpus: no pairs");
  std::unordered_map<std::string, int> df[4];
  for (const auto& pair : pairs) {
    detail::check_pair(pair, "cider_corpus");
    std::unordered_map<std::string, bool> seen[4];
    for (const auto& ref : pair.references) {
      NgramProfile p = NgramProfile::of(ref.tokens);
      for (int n = 0; n < 4; ++n)
        for (const auto& [k, c] : p.counts[n]) seen[n][k] = true;
    }
    for (int n = 0; n < 4; ++n)
      for (const auto& [k, unused] : seen[n]) ++df[n][k];
  }
  double corpus_size = static_cast<double>(pairs.size());

  auto idf = [&](int n, const std::string& k) {
    auto it = df[n].find(k);
    double d = it == df[n].end() ? 1.0 : static_cast<double>(it->second);
    return std::log(corpus_size / d);
  };
  // sparse tf-idf vector for one sentence, one order
  auto weigh = [&](const NgramProfile& p, int n) {
    std::unordered_map<std::string, double> w;
    double total = static_cast<double>(p.total(static_cast<size_t>(n + 1)));
    if (total == 0) return w;
    for (const auto& [k, c] : p.counts[n]) w[k] = (c / total) * idf(n, k);
    return w;
  };
  auto cosine = [](const std::unordered_map<std::string, double>& a,
                   const std::unordered_map<std::string, double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (const auto& [k, v] : a) {
      na += v * v;
      auto it = b.find(k);
      if (it != b.end()) dot += v * it->second;
    }
    for (const auto& [k, v] : b) nb += v * v;
    if (na == 0 || nb == 0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
  };

  CiderResult result;
  double sum = 0.0;
  for (const auto& pair : pairs) {
    NgramProfile cand = NgramProfile::of(pair.candidate.tokens);
    double score_sum = 0.0;
    for (int n = 0; n < 4; ++n) {
      auto cand_vec = weigh(cand, n);
      double ref_mean = 0.0;
      for (const auto& ref : pair.references) {
        NgramProfile rp = NgramProfile::of(ref.tokens);
        ref_mean += cosine(cand_vec, weigh(rp, n));
      }
      score_sum += ref_mean / static_cast<double>(pair.references.size());
    }
    double score = 1000.0 * score_sum / 4.0;
    result.per_video[pair.video_id] = score;
    sum += score;
  }
  result.mean = sum / corpus_size;
  return result;
}

// ---------------------------------------------------------------------------
// Full report: corpus-level BLEU, corpus means of per-pair ROUGE-L and
// METEOR, CIDEr corpus mean.
// ---------------------------------------------------------------------------
inline MetricReport evaluate(const std::vector<ScoredPair>& pairs, const MetricConfig& config = {}) {
  if (pairs.empty()) throw Error("evaluate: no pairs");
  MetricReport report;
  report.bleu4 = bleu4_corpus(pairs, config.smooth_bleu);

  std::vector<double> rouge_scores(pairs.size()), meteor_scores(pairs.size());
  const SynonymTable* syn = config.synonyms.empty() ? nullptr : &config.synonyms;
  parallel_for(pairs.size(), [&](size_t i) {
    rouge_scores[i] = rouge_l(pairs[i], config.rouge_beta);
    meteor_scores[i] = meteor(pairs[i], syn, config.meteor_stem);
  });
  double rouge_sum = 0, meteor_sum = 0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    rouge_sum += rouge_scores[i];
    meteor_sum += meteor_scores[i];
  }
  report.rouge_l = rouge_sum / static_cast<double>(pairs.size());
  report.meteor = meteor_sum / static_cast<double>(pairs.size());
  report.cider = cider_corpus(pairs).mean;
  return report;
}

}  // namespace capkit
