#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace capkit {

// Base class for every error raised by the toolkit. CLI maps these to exit 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// tokenize: nothing survives preprocessing.
class EmptySentence : public Error {
 public:
  explicit EmptySentence(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Embedding file lines disagree on dimensionality or cannot be parsed.
class MalformedEmbeddingFile : public Error {
 public:
  explicit MalformedEmbeddingFile(const std::string& msg) : Error(msg) {}
};

// Feature tensor file with bad magic, bad dims, or truncated payload.
class MalformedTensorFile : public Error {
 public:
  explicit MalformedTensorFile(const std::string& msg) : Error(msg) {}
};

// Augmentation plan JSON that does not describe a valid transform list.
class MalformedPlan : public Error {
 public:
  explicit MalformedPlan(const std::string& msg) : Error(msg) {}
};

// Tensor dimensions inconsistent with the declared parameter shapes.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// A target token is missing from the vocabulary.
class VocabError : public Error {
 public:
  explicit VocabError(const std::string& msg) : Error(msg) {}
};

// Training produced a non-finite loss; carries the offending epoch (0-based).
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& msg, int epoch) : Error(msg), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// apply_corrections refused to run because validate_records found problems.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& msg, std::vector<std::string> violations)
      : Error(msg), violations_(std::move(violations)) {}
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

// A video has fewer captions than the requested number of rounds.
class InsufficientReferences : public Error {
 public:
  InsufficientReferences(const std::string& msg, std::string video_id)
      : Error(msg), video_id_(std::move(video_id)) {}
  const std::string& video_id() const { return video_id_; }

 private:
  std::string video_id_;
};

}  // namespace capkit
