#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "capkit/errors.hpp"

namespace capkit {

// 8-bit RGB raster, row-major, 3 channels interleaved.
struct FrameImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // 3 * width * height

  static FrameImage filled(int w, int h, uint8_t r, uint8_t g, uint8_t b) {
    FrameImage img;
    img.width = w;
    img.height = h;
    img.pixels.resize(static_cast<size_t>(3) * w * h);
    for (size_t i = 0; i < img.pixels.size(); i += 3) {
      img.pixels[i] = r;
      img.pixels[i + 1] = g;
      img.pixels[i + 2] = b;
    }
    return img;
  }

  uint8_t& at(int row, int col, int ch) {
    return pixels[static_cast<size_t>(3) * (static_cast<size_t>(row) * width + col) + ch];
  }
  uint8_t at(int row, int col, int ch) const {
    return pixels[static_cast<size_t>(3) * (static_cast<size_t>(row) * width + col) + ch];
  }

  bool operator==(const FrameImage&) const = default;
};

// Ordered frames of one video; all frames share dimensions.
struct VideoFrames {
  std::string video_id;
  std::vector<FrameImage> frames;
};

namespace ppm {

namespace detail {

inline int next_int(std::istream& in, const std::string& path) {
  // PPM headers allow '#' comments anywhere between tokens.
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
    } else if (!std::isspace(c)) {
      break;
    }
  }
  if (c == EOF) throw IoError("ppm: truncated header in " + path);
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw IoError("ppm: malformed header in " + path);
  return value;
}

}  // namespace detail

inline FrameImage read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("ppm: cannot open " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '6') throw IoError("ppm: not a P6 file: " + path);
  int w = detail::next_int(in, path);
  int h = detail::next_int(in, path);
  int maxval = detail::next_int(in, path);
  if (maxval != 255) throw IoError("ppm: unsupported maxval in " + path);
  if (w <= 0 || h <= 0) throw IoError("ppm: bad dimensions in " + path);
  FrameImage img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<size_t>(3) * w * h);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw IoError("ppm: truncated pixel data in " + path);
  return img;
}

inline void write(const std::string& path, const FrameImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("ppm: cannot write " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("ppm: write failed for " + path);
}

// Frames of a video live as zero-padded NNNNNN.ppm files in one directory.
inline VideoFrames read_video(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("ppm: not a directory: " + dir);
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm")
      names.push_back(entry.path().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) throw IoError("ppm: no .ppm frames in " + dir);
  VideoFrames video;
  video.video_id = fs::path(dir).filename().string();
  for (const auto& name : names) video.frames.push_back(read(name));
  return video;
}

inline void write_video(const std::string& dir, const VideoFrames& video) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (size_t i = 0; i < video.frames.size(); ++i) {
    char name[16];
    std::snprintf(name, sizeof(name), "%06zu.ppm", i);
    write((fs::path(dir) / name).string(), video.frames[i]);
  }
}

}  // namespace ppm
}  // namespace capkit
