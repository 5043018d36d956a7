#pragma once

#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "capkit/errors.hpp"
#include "capkit/metrics.hpp"
#include "capkit/text.hpp"

namespace capkit {

// One corpus row: {"video_id": ..., "split": ..., "captions": [...]}.
struct CaptionSet {
  std::string video_id;
  std::string split;
  std::vector<std::string> captions;

  bool operator==(const CaptionSet&) const = default;
};

using CaptionCorpus = std::vector<CaptionSet>;

namespace jsonl {

template <typename PerLine>
void for_each_line(const std::string& path, PerLine&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("jsonl: cannot open " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    fn(j, lineno);
  }
}

}  // namespace jsonl

inline CaptionCorpus read_caption_corpus(const std::string& path) {
  CaptionCorpus corpus;
  jsonl::for_each_line(path, [&](const nlohmann::json& j, size_t lineno) {
    try {
      CaptionSet set;
      set.video_id = j.at("video_id").get<std::string>();
      set.split = j.value("split", std::string());
      for (const auto& c : j.at("captions")) set.captions.push_back(c.get<std::string>());
      corpus.push_back(std::move(set));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  });
  return corpus;
}

inline void write_caption_corpus(const std::string& path, const CaptionCorpus& corpus) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& set : corpus) {
    nlohmann::json j{{"video_id", set.video_id}, {"captions", set.captions}};
    if (!set.split.empty()) j["split"] = set.split;
    out << j.dump() << "\n";
  }
}

// Candidates: one {"video_id": ..., "caption": ...} line per video.
struct Candidate {
  std::string video_id;
  std::string caption;
};

inline std::vector<Candidate> read_candidates(const std::string& path) {
  std::vector<Candidate> candidates;
  jsonl::for_each_line(path, [&](const nlohmann::json& j, size_t lineno) {
    try {
      candidates.push_back(
          {j.at("video_id").get<std::string>(), j.at("caption").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  });
  return candidates;
}

// Joins candidates with their videos' reference captions, tokenizing both.
inline std::vector<ScoredPair> make_scored_pairs(const std::vector<Candidate>& candidates,
                                                 const CaptionCorpus& references) {
  std::unordered_map<std::string, const CaptionSet*> by_id;
  for (const auto& set : references) by_id[set.video_id] = &set;
  std::vector<ScoredPair> pairs;
  for (const auto& cand : candidates) {
    auto it = by_id.find(cand.video_id);
    if (it == by_id.end()) throw Error("no references for video " + cand.video_id);
    ScoredPair pair;
    pair.video_id = cand.video_id;
    pair.candidate = tokenize(cand.caption);
    for (const auto& ref : it->second->captions) pair.references.push_back(tokenize(ref));
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

inline nlohmann::json report_to_json(const MetricReport& report) {
  return {{"bleu4", report.bleu4},
          {"rouge_l", report.rouge_l},
          {"meteor", report.meteor},
          {"cider", report.cider}};
}

}  // namespace capkit
