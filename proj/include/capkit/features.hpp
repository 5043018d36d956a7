#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "capkit/errors.hpp"
#include "capkit/image.hpp"

namespace capkit {

// Per-sampled-frame feature vectors, the encoder input sequence.
struct FeatureSequence {
  std::string video_id;
  int dim = 0;
  std::vector<std::vector<float>> vectors;

  bool operator==(const FeatureSequence&) const = default;
};

// Frame subsampling: indices 0, stride, 2*stride, ... below n_frames.
inline std::vector<size_t> sample_frame_indices(size_t n_frames, size_t stride = 5) {
  if (n_frames == 0) throw Error("sample_frame_indices: no frames");
  if (stride == 0) throw Error("sample_frame_indices: stride must be positive");
  std::vector<size_t> indices;
  for (size_t i = 0; i < n_frames; i += stride) indices.push_back(i);
  return indices;
}

// Deterministic stand-in for ConvNet descriptors: a 2x2 spatial grid of
// L2-normalized color histograms with dim/4 bins per cell. Bins partition
// the RGB cube by the 24-bit value r<<16 | g<<8 | b, so black lands in bin 0
// and global brightness shifts move mass across bins.
inline FeatureSequence stub_extract(const VideoFrames& video, size_t stride, int dim) {
  if (dim < 8 || dim % 4 != 0) throw Error("stub_extract: dim must be >= 8 and divisible by 4");
  if (video.frames.empty()) throw Error("stub_extract: no frames");
  int bins = dim / 4;
  FeatureSequence seq;
  seq.video_id = video.video_id;
  seq.dim = dim;
  for (size_t idx : sample_frame_indices(video.frames.size(), stride)) {
    const FrameImage& img = video.frames[idx];
    std::vector<double> feat(static_cast<size_t>(dim), 0.0);
    int row_split = (img.height + 1) / 2;
    int col_split = (img.width + 1) / 2;
    for (int r = 0; r < img.height; ++r) {
      for (int c = 0; c < img.width; ++c) {
        uint32_t v = (static_cast<uint32_t>(img.at(r, c, 0)) << 16) |
                     (static_cast<uint32_t>(img.at(r, c, 1)) << 8) |
                     static_cast<uint32_t>(img.at(r, c, 2));
        int bin = static_cast<int>((static_cast<uint64_t>(v) * static_cast<uint64_t>(bins)) >> 24);
        int cell = (r < row_split ? 0 : 2) + (c < col_split ? 0 : 1);
        feat[static_cast<size_t>(cell * bins + bin)] += 1.0;
      }
    }
    for (int cell = 0; cell < 4; ++cell) {
      double norm = 0.0;
      for (int b = 0; b < bins; ++b) {
        double x = feat[static_cast<size_t>(cell * bins + b)];
        norm += x * x;
      }
      if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (int b = 0; b < bins; ++b) feat[static_cast<size_t>(cell * bins + b)] /= norm;
      }
    }
    std::vector<float> fv(static_cast<size_t>(dim));
    for (int k = 0; k < dim; ++k) fv[static_cast<size_t>(k)] = static_cast<float>(feat[static_cast<size_t>(k)]);
    seq.vectors.push_back(std::move(fv));
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Feature tensor file: "FTEN", u32le n_vectors, u32le dim, then
// n_vectors*dim float32le values, row-major.
// ---------------------------------------------------------------------------
namespace ften {

inline void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw MalformedTensorFile(path + ": truncated header");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace ften

inline void write_features(const std::string& path, const FeatureSequence& seq) {
  if (seq.vectors.empty()) throw Error("write_features: empty sequence");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_features: cannot open " + path);
  out.write("FTEN", 4);
  ften::write_u32(out, static_cast<uint32_t>(seq.vectors.size()));
  ften::write_u32(out, static_cast<uint32_t>(seq.dim));
  static_assert(sizeof(float) == 4);
  for (const auto& v : seq.vectors) {
    if (static_cast<int>(v.size()) != seq.dim) throw Error("write_features: ragged vectors");
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  if (!out) throw IoError("write_features: write failed for " + path);
}

inline FeatureSequence read_features(const std::string& path, const std::string& video_id = "") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_features: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "FTEN", 4) != 0)
    throw MalformedTensorFile(path + ": bad magic");
  uint32_t n = ften::read_u32(in, path);
  uint32_t dim = ften::read_u32(in, path);
  if (n == 0 || dim == 0) throw MalformedTensorFile(path + ": zero dimension in header");
  FeatureSequence seq;
  seq.video_id = video_id;
  seq.dim = static_cast<int>(dim);
  seq.vectors.resize(n, std::vector<float>(dim));
  for (auto& v : seq.vectors) {
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(dim * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(dim * sizeof(float)))
      throw MalformedTensorFile(path + ": truncated payload");
    for (float x : v)
      if (!std::isfinite(x)) throw MalformedTensorFile(path + ": non-finite value");
  }
  return seq;
}

}  // namespace capkit
