#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "capkit/errors.hpp"
#include "capkit/image.hpp"
#include "capkit/parallel.hpp"
#include "capkit/rng.hpp"

namespace capkit {

namespace augment_detail {

inline uint8_t clamp_round(double v) {
  double r = std::round(v);  // half away from zero; inputs are nonnegative
  if (r <= 0.0) return 0;
  if (r >= 255.0) return 255;
  return static_cast<uint8_t>(r);
}

inline double luma(uint8_t r, uint8_t g, uint8_t b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

}  // namespace augment_detail

// ---------------------------------------------------------------------------
// Transforms. All preserve width, height and channel count.
// ---------------------------------------------------------------------------

inline FrameImage grayscale(const FrameImage& img) {
  FrameImage out = img;
  for (size_t i = 0; i < img.pixels.size(); i += 3) {
    uint8_t y = augment_detail::clamp_round(
        augment_detail::luma(img.pixels[i], img.pixels[i + 1], img.pixels[i + 2]));
    out.pixels[i] = out.pixels[i + 1] = out.pixels[i + 2] = y;
  }
  return out;
}

inline FrameImage vertical_flip(const FrameImage& img) {
  FrameImage out = img;
  size_t row_bytes = static_cast<size_t>(3) * img.width;
  for (int r = 0; r < img.height; ++r)
    std::copy_n(img.pixels.begin() + static_cast<size_t>(r) * row_bytes, row_bytes,
                out.pixels.begin() + static_cast<size_t>(img.height - 1 - r) * row_bytes);
  return out;
}

inline FrameImage brightness(const FrameImage& img, double factor) {
  if (factor <= 0) throw Error("brightness: factor must be positive");
  FrameImage out = img;
  for (size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[i] = augment_detail::clamp_round(img.pixels[i] * factor);
  return out;
}

inline FrameImage contrast(const FrameImage& img, double factor) {
  if (factor <= 0) throw Error("contrast: factor must be positive");
  double sum = 0.0;
  for (size_t i = 0; i < img.pixels.size(); i += 3)
    sum += augment_detail::luma(img.pixels[i], img.pixels[i + 1], img.pixels[i + 2]);
  double mean = sum / (static_cast<double>(img.width) * img.height);
  FrameImage out = img;
  for (size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[i] = augment_detail::clamp_round(mean + (img.pixels[i] - mean) * factor);
  return out;
}

// 1-D Gaussian taps of length rho sampled at offsets i - (rho-1)/2 with
// sigma = 0.3*((rho-1)/2 - 1) + 0.8, normalized to sum 1. Applied
// horizontally then vertically with replicate borders; tap i lands at
// integer displacement i - rho/2, which centers odd kernels exactly and
// shifts even ones by half a pixel. Rounding happens once, after both
// passes.
inline std::vector<double> gaussian_kernel(int rho) {
  if (rho < 1) throw Error("gaussian_blur: kernel size must be >= 1");
  double half = (rho - 1) / 2.0;
  double sigma = 0.3 * (half - 1.0) + 0.8;
  std::vector<double> k(static_cast<size_t>(rho));
  double sum = 0.0;
  for (int i = 0; i < rho; ++i) {
    double off = i - half;
    k[static_cast<size_t>(i)] = std::exp(-off * off / (2.0 * sigma * sigma));
    sum += k[static_cast<size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

inline FrameImage gaussian_blur(const FrameImage& img, int rho) {
  std::vector<double> kernel = gaussian_kernel(rho);
  int anchor = rho / 2;
  int w = img.width, h = img.height;
  auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v >= hi ? hi - 1 : v); };

  std::vector<double> tmp(static_cast<size_t>(3) * w * h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int i = 0; i < rho; ++i)
          acc += kernel[static_cast<size_t>(i)] * img.at(r, clampi(c + i - anchor, w), ch);
        tmp[static_cast<size_t>(3) * (static_cast<size_t>(r) * w + c) + ch] = acc;
      }
  FrameImage out = img;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int i = 0; i < rho; ++i) {
          int rr = clampi(r + i - anchor, h);
          acc += kernel[static_cast<size_t>(i)] *
                 tmp[static_cast<size_t>(3) * (static_cast<size_t>(rr) * w + c) + ch];
        }
        out.at(r, c, ch) = augment_detail::clamp_round(acc);
      }
  return out;
}

namespace augment_detail {

// Projective map sending the four source corners to the four destination
// corners; 8-DOF solve with h33 = 1.
inline Eigen::Matrix3d homography(const std::array<std::array<double, 2>, 4>& src,
                                  const std::array<std::array<double, 2>, 4>& dst) {
  Eigen::Matrix<double, 8, 8> a = Eigen::Matrix<double, 8, 8>::Zero();
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    double x = src[static_cast<size_t>(i)][0], y = src[static_cast<size_t>(i)][1];
    double u = dst[static_cast<size_t>(i)][0], v = dst[static_cast<size_t>(i)][1];
    a.row(2 * i) << x, y, 1, 0, 0, 0, -x * u, -y * u;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -x * v, -y * v;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  Eigen::Matrix<double, 8, 1> hv = a.fullPivLu().solve(b);
  Eigen::Matrix3d hm;
  hm << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), 1.0;
  return hm;
}

}  // namespace augment_detail

// Keystone distortion: the frame is warped onto the horizontally centered
// trapezoid of full height with top/bottom widths in the given ratio, the
// wider side spanning the frame. Destination pixels are bilinearly sampled
// through the inverted corner-to-corner projective map; pixels outside the
// trapezoid are black.
inline FrameImage keystone(const FrameImage& img, double ratio) {
  if (ratio <= 0) throw Error("keystone: ratio must be positive");
  int w = img.width, h = img.height;
  double cx = (w - 1) / 2.0;
  double w_top = ratio >= 1.0 ? static_cast<double>(w) : w * ratio;
  double w_bottom = ratio >= 1.0 ? w / ratio : static_cast<double>(w);
  double top_half = (w_top - 1) / 2.0;
  double bottom_half = (w_bottom - 1) / 2.0;

  std::array<std::array<double, 2>, 4> src = {
      {{0.0, 0.0}, {w - 1.0, 0.0}, {w - 1.0, h - 1.0}, {0.0, h - 1.0}}};
  std::array<std::array<double, 2>, 4> dst = {{{cx - top_half, 0.0},
                                               {cx + top_half, 0.0},
                                               {cx + bottom_half, h - 1.0},
                                               {cx - bottom_half, h - 1.0}}};
  Eigen::Matrix3d inv = augment_detail::homography(src, dst).inverse();

  FrameImage out;
  out.width = w;
  out.height = h;
  out.pixels.assign(static_cast<size_t>(3) * w * h, 0);
  const double eps = 1e-9;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      Eigen::Vector3d p = inv * Eigen::Vector3d(c, r, 1.0);
      double sx = p(0) / p(2);
      double sy = p(1) / p(2);
      // snap to the lattice so an identity map reproduces pixels exactly
      if (std::abs(sx - std::round(sx)) < eps) sx = std::round(sx);
      if (std::abs(sy - std::round(sy)) < eps) sy = std::round(sy);
      if (sx < 0.0 || sx > w - 1.0 || sy < 0.0 || sy > h - 1.0) continue;
      int x0 = static_cast<int>(sx);
      int y0 = static_cast<int>(sy);
      int x1 = std::min(x0 + 1, w - 1);
      int y1 = std::min(y0 + 1, h - 1);
      double fx = sx - x0, fy = sy - y0;
      for (int ch = 0; ch < 3; ++ch) {
        double v = (1 - fy) * ((1 - fx) * img.at(y0, x0, ch) + fx * img.at(y0, x1, ch)) +
                   fy * ((1 - fx) * img.at(y1, x0, ch) + fx * img.at(y1, x1, ch));
        out.at(r, c, ch) = augment_detail::clamp_round(v);
      }
    }
  }
  return out;
}

// Per-pixel draws keyed by (seed, row, col): draw one decides alteration,
// draw two picks salt (all channels 255) or pepper (all 0).
inline FrameImage salt_pepper(const FrameImage& img, double p, uint64_t seed) {
  if (p < 0.0 || p > 1.0) throw Error("salt_pepper: p must be in [0,1]");
  FrameImage out = img;
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      double u = rng::to_unit(rng::mix(seed, static_cast<uint64_t>(r), static_cast<uint64_t>(c), 0));
      if (u >= p) continue;
      double v = rng::to_unit(rng::mix(seed, static_cast<uint64_t>(r), static_cast<uint64_t>(c), 1));
      uint8_t value = v < 0.5 ? 255 : 0;
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = value;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plans: ordered transform lists with JSON round-trip and the built-in
// parameter grids.
// ---------------------------------------------------------------------------

// Exact ratio for keystone specs so grids round-trip as written (5/2, 1/3).
struct Rational {
  int64_t num = 1;
  int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }

  std::string str() const {
    if (den == 1) return std::to_string(num);
    return std::to_string(num) + "/" + std::to_string(den);
  }

  static Rational parse(const std::string& s) {
    size_t slash = s.find('/');
    try {
      if (slash == std::string::npos) return {std::stoll(s), 1};
      return {std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1))};
    } catch (const std::exception&) {
      throw MalformedPlan("keystone: bad ratio '" + s + "'");
    }
  }

  static Rational from_double(double x) {
    // continued-fraction approximation, denominators up to 1e6
    int64_t p0 = 0, q0 = 1, p1 = 1, q1 = 0;
    double v = x;
    for (int it = 0; it < 64; ++it) {
      int64_t a = static_cast<int64_t>(std::floor(v));
      int64_t p2 = a * p1 + p0, q2 = a * q1 + q0;
      if (q2 > 1'000'000) break;
      p0 = p1;
      q0 = q1;
      p1 = p2;
      q1 = q2;
      double frac = v - static_cast<double>(a);
      if (frac < 1e-12) break;
      v = 1.0 / frac;
    }
    if (q1 == 0) return {static_cast<int64_t>(std::llround(x)), 1};
    return {p1, q1};
  }

  bool operator==(const Rational&) const = default;
};

struct Grayscale {
  bool operator==(const Grayscale&) const = default;
};
struct VerticalFlip {
  bool operator==(const VerticalFlip&) const = default;
};
struct GaussianBlur {
  int rho = 1;
  bool operator==(const GaussianBlur&) const = default;
};
struct Keystone {
  Rational ratio;
  bool operator==(const Keystone&) const = default;
};
struct Brightness {
  double factor = 1.0;
  bool operator==(const Brightness&) const = default;
};
struct Contrast {
  double factor = 1.0;
  bool operator==(const Contrast&) const = default;
};
struct SaltPepper {
  double p = 0.0;
  uint64_t seed = 0;
  bool operator==(const SaltPepper&) const = default;
};

using TransformSpec =
    std::variant<Grayscale, VerticalFlip, GaussianBlur, Keystone, Brightness, Contrast, SaltPepper>;

struct AugmentationPlan {
  std::vector<TransformSpec> transforms;

  bool operator==(const AugmentationPlan&) const = default;
};

inline FrameImage apply_transform(const FrameImage& img, const TransformSpec& spec) {
  return std::visit(
      [&](const auto& t) -> FrameImage {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, Grayscale>) return grayscale(img);
        else if constexpr (std::is_same_v<T, VerticalFlip>) return vertical_flip(img);
        else if constexpr (std::is_same_v<T, GaussianBlur>) return gaussian_blur(img, t.rho);
        else if constexpr (std::is_same_v<T, Keystone>) return keystone(img, t.ratio.value());
        else if constexpr (std::is_same_v<T, Brightness>) return brightness(img, t.factor);
        else if constexpr (std::is_same_v<T, Contrast>) return contrast(img, t.factor);
        else return salt_pepper(img, t.p, t.seed);
      },
      spec);
}

inline VideoFrames apply_plan(const VideoFrames& video, const AugmentationPlan& plan) {
  VideoFrames out;
  out.video_id = video.video_id;
  out.frames.resize(video.frames.size());
  parallel_for(video.frames.size(), [&](size_t i) {
    FrameImage frame = video.frames[i];
    for (const auto& spec : plan.transforms) frame = apply_transform(frame, spec);
    out.frames[i] = std::move(frame);
  });
  return out;
}

// --- JSON plan format: [{"op":"gaussian_blur","rho":12}, ...] ---------------

inline nlohmann::json plan_to_json(const AugmentationPlan& plan) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& spec : plan.transforms) {
    nlohmann::json j;
    std::visit(
        [&](const auto& t) {
          using T = std::decay_t<decltype(t)>;
          if constexpr (std::is_same_v<T, Grayscale>) {
            j["op"] = "grayscale";
          } else if constexpr (std::is_same_v<T, VerticalFlip>) {
            j["op"] = "vertical_flip";
          } else if constexpr (std::is_same_v<T, GaussianBlur>) {
            j["op"] = "gaussian_blur";
            j["rho"] = t.rho;
          } else if constexpr (std::is_same_v<T, Keystone>) {
            j["op"] = "keystone";
            j["ratio"] = t.ratio.str();
          } else if constexpr (std::is_same_v<T, Brightness>) {
            j["op"] = "brightness";
            j["factor"] = t.factor;
          } else if constexpr (std::is_same_v<T, Contrast>) {
            j["op"] = "contrast";
            j["factor"] = t.factor;
          } else {
            j["op"] = "salt_pepper";
            j["p"] = t.p;
            j["seed"] = t.seed;
          }
        },
        spec);
    arr.push_back(std::move(j));
  }
  return arr;
}

inline AugmentationPlan plan_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) throw MalformedPlan("plan: top-level JSON array expected");
  AugmentationPlan plan;
  for (const auto& j : arr) {
    if (!j.contains("op")) throw MalformedPlan("plan: transform without op");
    std::string op = j.at("op").get<std::string>();
    try {
      if (op == "grayscale") {
        plan.transforms.emplace_back(Grayscale{});
      } else if (op == "vertical_flip") {
        plan.transforms.emplace_back(VerticalFlip{});
      } else if (op == "gaussian_blur") {
        int rho = j.at("rho").get<int>();
        if (rho < 1) throw MalformedPlan("plan: gaussian_blur rho must be >= 1");
        plan.transforms.emplace_back(GaussianBlur{rho});
      } else if (op == "keystone") {
        const auto& r = j.at("ratio");
        Rational ratio = r.is_string() ? Rational::parse(r.get<std::string>())
                         : r.is_number_integer()
                             ? Rational{r.get<int64_t>(), 1}
                             : Rational::from_double(r.get<double>());
        if (ratio.value() <= 0) throw MalformedPlan("plan: keystone ratio must be positive");
        plan.transforms.emplace_back(Keystone{ratio});
      } else if (op == "brightness") {
        double f = j.at("factor").get<double>();
        if (f <= 0) throw MalformedPlan("plan: brightness factor must be positive");
        plan.transforms.emplace_back(Brightness{f});
      } else if (op == "contrast") {
        double f = j.at("factor").get<double>();
        if (f <= 0) throw MalformedPlan("plan: contrast factor must be positive");
        plan.transforms.emplace_back(Contrast{f});
      } else if (op == "salt_pepper") {
        double p = j.at("p").get<double>();
        if (p < 0 || p > 1) throw MalformedPlan("plan: salt_pepper p must be in [0,1]");
        uint64_t seed = j.value("seed", 0ULL);
        plan.transforms.emplace_back(SaltPepper{p, seed});
      } else {
        throw MalformedPlan("plan: unknown op '" + op + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw MalformedPlan("plan: bad parameters for op '" + op + "': " + e.what());
    }
  }
  return plan;
}

// --- Built-in severity grids -------------------------------------------------
// One single-transform plan per alteration; each augmented dataset copy gets
// exactly one alteration, applied to every video.

struct NamedPlan {
  std::string name;
  AugmentationPlan plan;
};

inline std::vector<NamedPlan> grid_train() {
  std::vector<NamedPlan> plans;
  auto add = [&](std::string name, TransformSpec spec) {
    plans.push_back({std::move(name), AugmentationPlan{{std::move(spec)}}});
  };
  add("grayscale", Grayscale{});
  for (int rho : {12, 15, 17}) add("gaussian_blur_" + std::to_string(rho), GaussianBlur{rho});
  for (Rational r : {Rational{5, 2}, Rational{3, 1}, Rational{2, 5}, Rational{1, 3}})
    add("keystone_" + std::to_string(r.num) + "_" + std::to_string(r.den), Keystone{r});
  add("brightness_2", Brightness{2.0});
  add("brightness_0.2", Brightness{0.2});
  int sp_index = 0;
  for (double p : {0.01, 0.05, 0.1}) {
    add("salt_pepper_" + std::to_string(sp_index), SaltPepper{p, 0});
    ++sp_index;
  }
  return plans;
}

inline std::vector<NamedPlan> grid_test_only() {
  std::vector<NamedPlan> plans;
  auto add = [&](std::string name, TransformSpec spec) {
    plans.push_back({std::move(name), AugmentationPlan{{std::move(spec)}}});
  };
  add("vertical_flip", VerticalFlip{});
  for (int rho : {5, 7, 10, 20}) add("gaussian_blur_" + std::to_string(rho), GaussianBlur{rho});
  for (Rational r : {Rational{3, 2}, Rational{2, 1}, Rational{2, 3}, Rational{1, 2}})
    add("keystone_" + std::to_string(r.num) + "_" + std::to_string(r.den), Keystone{r});
  add("brightness_5", Brightness{5.0});
  add("brightness_7", Brightness{7.0});
  add("brightness_0.5", Brightness{0.5});
  add("brightness_0.7", Brightness{0.7});
  int sp_index = 0;
  for (double p : {0.5, 0.7}) {
    add("salt_pepper_" + std::to_string(sp_index), SaltPepper{p, 0});
    ++sp_index;
  }
  add("contrast_2", Contrast{2.0});
  add("contrast_0.5", Contrast{0.5});
  return plans;
}

}  // namespace capkit
