#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "capkit/corpus.hpp"
#include "capkit/errors.hpp"
#include "capkit/metrics.hpp"
#include "capkit/parallel.hpp"

namespace capkit {

// The four caption error classes, in decreasing severity. Annotators apply
// the severity priority upstream, so a record carries exactly one label.
enum class CaptionError { none, unsuitable, hallucination, syntactic, proper_noun };

inline const char* to_string(CaptionError e) {
  switch (e) {
    case CaptionError::none: return "none";
    case CaptionError::unsuitable: return "unsuitable";
    case CaptionError::hallucination: return "hallucination";
    case CaptionError::syntactic: return "syntactic";
    case CaptionError::proper_noun: return "proper_noun";
  }
  return "none";
}

inline CaptionError caption_error_from(const std::string& s) {
  if (s == "none") return CaptionError::none;
  if (s == "unsuitable") return CaptionError::unsuitable;
  if (s == "hallucination") return CaptionError::hallucination;
  if (s == "syntactic") return CaptionError::syntactic;
  if (s == "proper_noun") return CaptionError::proper_noun;
  throw Error("unknown caption error class: " + s);
}

struct AnnotationRecord {
  std::string video_id;
  size_t caption_index = 0;
  CaptionError error = CaptionError::none;
  std::optional<std::string> correction;
  std::string reviewer;
  std::optional<std::string> verified_by;
};

struct Violation {
  size_t record_pos = 0;
  std::string message;
};

// Every double-check and consistency rule, reported as data: a record needs
// a nonempty correction when it flags an error, must be verified by someone
// other than its reviewer, must point inside the corpus, and an unsuitable
// caption must be replaced by a different description.
inline std::vector<Violation> validate_records(const std::vector<AnnotationRecord>& records,
                                               const CaptionCorpus& corpus) {
  std::unordered_map<std::string, const CaptionSet*> by_id;
  for (const auto& set : corpus) by_id[set.video_id] = &set;

  std::vector<Violation> violations;
  for (size_t pos = 0; pos < records.size(); ++pos) {
    const AnnotationRecord& rec = records[pos];
    if (rec.error != CaptionError::none && (!rec.correction || rec.correction->empty()))
      violations.push_back({pos, "missing correction"});
    if (!rec.verified_by || rec.verified_by->empty())
      violations.push_back({pos, "unverified record"});
    else if (*rec.verified_by == rec.reviewer)
      violations.push_back({pos, "self-verification"});
    auto it = by_id.find(rec.video_id);
    if (it == by_id.end()) {
      violations.push_back({pos, "unknown video " + rec.video_id});
    } else if (rec.caption_index >= it->second->captions.size()) {
      violations.push_back({pos, "caption index out of range"});
    } else if (rec.error == CaptionError::unsuitable && rec.correction &&
               *rec.correction == it->second->captions[rec.caption_index]) {
      violations.push_back({pos, "unsuitable caption not replaced"});
    }
  }
  return violations;
}

// Applies accepted corrections in place of the annotated captions. A record
// whose correction already equals the stored caption is a no-op, which makes
// reapplying a record set idempotent; any other violation aborts.
inline CaptionCorpus apply_corrections(const CaptionCorpus& corpus,
                                       const std::vector<AnnotationRecord>& records) {
  CaptionCorpus out = corpus;
  std::unordered_map<std::string, CaptionSet*> by_id;
  for (auto& set : out) by_id[set.video_id] = &set;

  std::vector<std::string> fatal;
  for (const Violation& v : validate_records(records, corpus)) {
    const AnnotationRecord& rec = records[v.record_pos];
    bool already_applied = false;
    if (v.message == "unsuitable caption not replaced" && rec.correction) {
      auto it = by_id.find(rec.video_id);
      already_applied = it != by_id.end() && rec.caption_index < it->second->captions.size() &&
                        it->second->captions[rec.caption_index] == *rec.correction;
    }
    if (!already_applied)
      fatal.push_back("record " + std::to_string(v.record_pos) + ": " + v.message);
  }
  if (!fatal.empty())
    throw ValidationError("apply_corrections: " + std::to_string(fatal.size()) + " violation(s)",
                          fatal);

  for (const auto& rec : records) {
    if (rec.error == CaptionError::none) continue;
    by_id.at(rec.video_id)->captions[rec.caption_index] = *rec.correction;
  }
  return out;
}

struct CleanseStats {
  size_t total_captions = 0;
  size_t error_captions = 0;
  double error_rate = 0.0;
  std::map<CaptionError, double> breakdown;  // shares of error_captions
};

inline CleanseStats error_stats(const std::vector<AnnotationRecord>& records,
                                size_t total_captions) {
  CleanseStats stats;
  stats.total_captions = total_captions;
  std::map<CaptionError, size_t> counts;
  for (const auto& rec : records)
    if (rec.error != CaptionError::none) {
      ++stats.error_captions;
      ++counts[rec.error];
    }
  if (total_captions < stats.error_captions)
    throw Error("error_stats: more error records than captions");
  if (total_captions > 0)
    stats.error_rate =
        static_cast<double>(stats.error_captions) / static_cast<double>(total_captions);
  for (const auto& [cls, count] : counts)
    stats.breakdown[cls] =
        static_cast<double>(count) / static_cast<double>(stats.error_captions);
  return stats;
}

// ---------------------------------------------------------------------------
// Human performance: round r uses caption r of every video as the candidate
// and the remaining captions as references, scored corpus-level; mean and
// population standard deviation are taken over rounds.
// ---------------------------------------------------------------------------
struct HumanPerformance {
  MetricReport mean;
  MetricReport stddev;
  std::vector<MetricReport> rounds;
};

inline HumanPerformance human_performance(const CaptionCorpus& corpus, size_t rounds,
                                          const MetricConfig& config = {}) {
  if (rounds == 0) throw Error("human_performance: rounds must be positive");
  if (corpus.empty()) throw Error("human_performance: empty corpus");
  for (const auto& set : corpus)
    if (set.captions.size() < rounds)
      throw InsufficientReferences("human_performance: video " + set.video_id + " has " +
                                       std::to_string(set.captions.size()) + " captions, need " +
                                       std::to_string(rounds),
                                   set.video_id);

  std::vector<MetricReport> reports(rounds);
  parallel_for(rounds, [&](size_t r) {
    std::vector<ScoredPair> pairs;
    for (const auto& set : corpus) {
      ScoredPair pair;
      pair.video_id = set.video_id;
      pair.candidate = tokenize(set.captions[r]);
      for (size_t c = 0; c < set.captions.size(); ++c)
        if (c != r) pair.references.push_back(tokenize(set.captions[c]));
      pairs.push_back(std::move(pair));
    }
    reports[r] = evaluate(pairs, config);
  });

  HumanPerformance result;
  result.rounds = reports;
  auto stats = [&](auto field) {
    double mean = 0.0;
    for (const auto& rep : reports) mean += rep.*field;
    mean /= static_cast<double>(rounds);
    double var = 0.0;
    for (const auto& rep : reports) var += (rep.*field - mean) * (rep.*field - mean);
    var /= static_cast<double>(rounds);  // population variance
    return std::pair<double, double>{mean, std::sqrt(var)};
  };
  std::tie(result.mean.bleu4, result.stddev.bleu4) = stats(&MetricReport::bleu4);
  std::tie(result.mean.rouge_l, result.stddev.rouge_l) = stats(&MetricReport::rouge_l);
  std::tie(result.mean.meteor, result.stddev.meteor) = stats(&MetricReport::meteor);
  std::tie(result.mean.cider, result.stddev.cider) = stats(&MetricReport::cider);
  return result;
}

// --- annotation JSONL --------------------------------------------------------

inline std::vector<AnnotationRecord> read_annotations(const std::string& path) {
  std::vector<AnnotationRecord> records;
  jsonl::for_each_line(path, [&](const nlohmann::json& j, size_t lineno) {
    try {
      AnnotationRecord rec;
      rec.video_id = j.at("video_id").get<std::string>();
      rec.caption_index = j.at("caption_index").get<size_t>();
      rec.error = caption_error_from(j.at("error").get<std::string>());
      if (j.contains("correction") && !j.at("correction").is_null())
        rec.correction = j.at("correction").get<std::string>();
      rec.reviewer = j.at("reviewer").get<std::string>();
      if (j.contains("verified_by") && !j.at("verified_by").is_null())
        rec.verified_by = j.at("verified_by").get<std::string>();
      records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  });
  return records;
}

inline void write_annotations(const std::string& path,
                              const std::vector<AnnotationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& rec : records) {
    nlohmann::json j{{"video_id", rec.video_id},
                     {"caption_index", rec.caption_index},
                     {"error", to_string(rec.error)},
                     {"reviewer", rec.reviewer}};
    if (rec.correction) j["correction"] = *rec.correction;
    if (rec.verified_by) j["verified_by"] = *rec.verified_by;
    out << j.dump() << "\n";
  }
}

}  // namespace capkit
