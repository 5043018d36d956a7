#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "capkit/errors.hpp"
#include "capkit/parallel.hpp"
#include "capkit/rng.hpp"

namespace capkit {

// Feature vectors with one label per point; "original" marks unaltered data.
struct LabeledPoints {
  Eigen::MatrixXd points;  // N x dim
  std::vector<std::string> labels;
};

struct Embedding2D {
  Eigen::MatrixXd coords;  // N x 2
  std::vector<double> kl_trace;
};

struct AffinityResult {
  Eigen::MatrixXd p;                  // row-stochastic P(j|i), zero diagonal
  std::vector<double> achieved_perplexity;
  std::vector<int> degenerate_rows;   // duplicate-point rows given uniform mass
};

namespace tsne_detail {

inline Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
  Eigen::VectorXd sq = x.rowwise().squaredNorm();
  Eigen::MatrixXd d = sq.replicate(1, x.rows()) + sq.transpose().replicate(x.rows(), 1) -
                      2.0 * x * x.transpose();
  return d.cwiseMax(0.0);
}

struct RowAffinity {
  Eigen::VectorXd p;
  double perplexity = 0.0;
  bool degenerate = false;
};

// Gaussian row kernel at one precision beta = 1/(2 sigma^2); returns the
// normalized row and its perplexity 2^H.
inline RowAffinity row_at_beta(const Eigen::VectorXd& sq_dist, Eigen::Index self, double beta) {
  RowAffinity out;
  Eigen::VectorXd w = (-beta * sq_dist.array()).exp();
  w(self) = 0.0;
  double sum = w.sum();
  if (sum <= 0.0 || !std::isfinite(sum)) {
    out.degenerate = true;
    return out;
  }
  out.p = w / sum;
  double h = 0.0;  // entropy in bits
  for (Eigen::Index j = 0; j < out.p.size(); ++j)
    if (out.p(j) > 0.0) h -= out.p(j) * std::log2(out.p(j));
  out.perplexity = std::exp2(h);
  return out;
}

}  // namespace tsne_detail

// Per-row Gaussian bandwidths found by binary search on the precision until
// 2^H matches the target perplexity within 1e-3 (at most 100 halvings; the
// closest achieved value wins otherwise). Rows whose every neighbor sits at
// distance zero get uniform off-diagonal mass and are flagged.
inline AffinityResult conditional_affinities(const Eigen::MatrixXd& points, double perplexity) {
  Eigen::Index n = points.rows();
  if (n < 2) throw Error("conditional_affinities: need at least 2 points");
  if (perplexity <= 1.0 || perplexity >= static_cast<double>(n))
    throw Error("conditional_affinities: perplexity must be in (1, N)");

  Eigen::MatrixXd sq = tsne_detail::squared_distances(points);
  AffinityResult result;
  result.p = Eigen::MatrixXd::Zero(n, n);
  result.achieved_perplexity.assign(static_cast<size_t>(n), 0.0);

  std::vector<int> degenerate_flags(static_cast<size_t>(n), 0);
  parallel_for(static_cast<size_t>(n), [&](size_t row) {
    Eigen::Index i = static_cast<Eigen::Index>(row);
    Eigen::VectorXd d = sq.row(i);
    double off_max = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) off_max = std::max(off_max, d(j));
    if (off_max == 0.0) {
      // duplicate points: no bandwidth separates them
      for (Eigen::Index j = 0; j < n; ++j)
        if (j != i) result.p(i, j) = 1.0 / static_cast<double>(n - 1);
      result.achieved_perplexity[row] = static_cast<double>(n - 1);
      degenerate_flags[row] = 1;
      return;
    }

    double beta = 1.0, beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
    tsne_detail::RowAffinity best;
    double best_err = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 100; ++iter) {
      tsne_detail::RowAffinity cur = tsne_detail::row_at_beta(d, i, beta);
      if (cur.degenerate) {  // beta too large: everything underflowed
        beta_hi = beta;
        beta = (beta_lo + beta_hi) / 2.0;
        continue;
      }
      double err = std::abs(cur.perplexity - perplexity);
      if (err < best_err) {
        best_err = err;
        best = cur;
      }
      if (err <= 1e-3) break;
      if (cur.perplexity > perplexity) {
        beta_lo = beta;  // too flat: sharpen
        beta = std::isinf(beta_hi) ? beta * 2.0 : (beta_lo + beta_hi) / 2.0;
      } else {
        beta_hi = beta;
        beta = (beta_lo + beta_hi) / 2.0;
      }
    }
    result.p.row(i) = best.p.transpose();
    result.achieved_perplexity[row] = best.perplexity;
  });
  for (size_t row = 0; row < degenerate_flags.size(); ++row)
    if (degenerate_flags[row]) result.degenerate_rows.push_back(static_cast<int>(row));
  return result;
}

// Exact O(N^2) t-SNE. Symmetrized affinities, Student-t low-dimensional
// kernel, gradient descent with x4 early exaggeration for the first 100
// iterations and momentum 0.5 switching to 0.8 after iteration 250. Instead
// of a fixed learning rate, each step is halved (up to 20 times) until the
// current objective does not increase, so the KL trace cannot rise once
// exaggeration is off. The trace records the true (unexaggerated) KL.
inline Embedding2D tsne(const Eigen::MatrixXd& points, double perplexity = 30.0, int iters = 1000,
                        uint64_t seed = 0) {
  Eigen::Index n = points.rows();
  if (n < 4) throw Error("tsne: need at least 4 points");

  AffinityResult aff = conditional_affinities(points, perplexity);
  Eigen::MatrixXd p_sym = (aff.p + aff.p.transpose()) / (2.0 * static_cast<double>(n));
  const double p_floor = 1e-12;

  // seeded Gaussian init, scaled by 1e-4
  Eigen::MatrixXd y(n, 2);
  rng::Stream stream(seed);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int k = 0; k < 2; ++k) {
      // Box-Muller
      double u1 = std::max(stream.next_unit(), 1e-300);
      double u2 = stream.next_unit();
      y(i, k) = 1e-4 * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

  auto q_matrix = [&](const Eigen::MatrixXd& coords, Eigen::MatrixXd& weights) {
    weights = (1.0 + tsne_detail::squared_distances(coords).array()).inverse().matrix();
    weights.diagonal().setZero();
    return weights.sum();
  };
  auto kl_for = [&](const Eigen::MatrixXd& pm, const Eigen::MatrixXd& coords) {
    Eigen::MatrixXd w;
    double z = q_matrix(coords, w);
    double kl = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        double pij = pm(i, j);
        if (i == j || pij <= 0.0) continue;
        double qij = std::max(w(i, j) / z, p_floor);
        kl += pij * std::log(pij / qij);
      }
    return kl;
  };

  Embedding2D out;
  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2);
  const double base_step = 100.0;

  for (int iter = 0; iter < iters; ++iter) {
    bool exaggerate = iter < 100;
    Eigen::MatrixXd p_obj = exaggerate ? (4.0 * p_sym).eval() : p_sym;
    double momentum = iter < 250 ? 0.5 : 0.8;

    Eigen::MatrixXd w;
    double z = q_matrix(y, w);
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        double qij = std::max(w(i, j) / z, p_floor);
        double coeff = 4.0 * (p_obj(i, j) - qij) * w(i, j);
        grad.row(i) += coeff * (y.row(i) - y.row(j));
      }
    }

    double obj_before = kl_for(p_obj, y);
    Eigen::MatrixXd step = momentum * velocity - base_step * grad;
    Eigen::MatrixXd accepted = Eigen::MatrixXd::Zero(n, 2);
    for (int halving = 0; halving <= 20; ++halving) {
      Eigen::MatrixXd candidate = y + step;
      if (kl_for(p_obj, candidate) <= obj_before) {
        accepted = step;
        break;
      }
      step /= 2.0;
    }
    y += accepted;
    velocity = accepted;
    out.kl_trace.push_back(kl_for(p_sym, y));
  }
  out.coords = y;
  return out;
}

// Per-label neighborhood purity in the original feature space: for each
// non-"original" label, the mean over its points of the fraction of their k
// nearest neighbors (Euclidean; ties broken by index) sharing the label.
// High purity means the alteration moved its frames away from the rest of
// the data, which is when augmenting with it pays off.
struct SeparationEntry {
  std::string label;
  double purity = 0.0;
};

inline std::vector<SeparationEntry> separation_report(const LabeledPoints& data, int k) {
  Eigen::Index n = data.points.rows();
  if (static_cast<size_t>(n) != data.labels.size())
    throw Error("separation_report: points/labels size mismatch");
  if (k < 1 || k >= n) throw Error("separation_report: k must be in [1, N)");

  Eigen::MatrixXd sq = tsne_detail::squared_distances(data.points);
  std::vector<std::vector<Eigen::Index>> neighbors(static_cast<size_t>(n));
  parallel_for(static_cast<size_t>(n), [&](size_t row) {
    Eigen::Index i = static_cast<Eigen::Index>(row);
    std::vector<Eigen::Index> idx;
    idx.reserve(static_cast<size_t>(n) - 1);
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) idx.push_back(j);
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (sq(i, a) != sq(i, b)) return sq(i, a) < sq(i, b);
      return a < b;
    });
    idx.resize(static_cast<size_t>(k));
    neighbors[row] = std::move(idx);
  });

  std::vector<std::string> label_order;
  std::unordered_map<std::string, std::pair<double, int>> acc;  // sum, count
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::string& label = data.labels[static_cast<size_t>(i)];
    if (label == "original") continue;
    int same = 0;
    for (Eigen::Index j : neighbors[static_cast<size_t>(i)])
      if (data.labels[static_cast<size_t>(j)] == label) ++same;
    auto [it, inserted] = acc.try_emplace(label, std::pair<double, int>{0.0, 0});
    if (inserted) label_order.push_back(label);
    it->second.first += static_cast<double>(same) / static_cast<double>(k);
    it->second.second += 1;
  }

  std::vector<SeparationEntry> report;
  for (const auto& label : label_order) {
    const auto& [sum, count] = acc.at(label);
    report.push_back({label, sum / static_cast<double>(count)});
  }
  std::stable_sort(report.begin(), report.end(),
                   [](const SeparationEntry& a, const SeparationEntry& b) {
                     return a.purity > b.purity;
                   });
  return report;
}

inline const char* separation_note() {
  return "high purity = the alteration shifts the feature distribution; "
         "augmenting the training set with it is likely to matter";
}

// Minimal scatter plot, one color per label.
inline void write_scatter_svg(const std::string& path, const Embedding2D& embedding,
                              const std::vector<std::string>& labels) {
  static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  Eigen::Index n = embedding.coords.rows();
  if (static_cast<size_t>(n) != labels.size())
    throw Error("write_scatter_svg: coords/labels size mismatch");

  double min_x = embedding.coords.col(0).minCoeff(), max_x = embedding.coords.col(0).maxCoeff();
  double min_y = embedding.coords.col(1).minCoeff(), max_y = embedding.coords.col(1).maxCoeff();
  double span_x = std::max(max_x - min_x, 1e-12);
  double span_y = std::max(max_y - min_y, 1e-12);
  const double size = 640.0, margin = 40.0;

  std::vector<std::string> label_order;
  std::unordered_map<std::string, size_t> color_of;
  for (const auto& label : labels)
    if (color_of.try_emplace(label, color_of.size()).second) label_order.push_back(label);

  std::ofstream out(path);
  if (!out) throw IoError("write_scatter_svg: cannot open " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    double px = margin + (embedding.coords(i, 0) - min_x) / span_x * (size - 2 * margin);
    double py = margin + (max_y - embedding.coords(i, 1)) / span_y * (size - 2 * margin);
    size_t color = color_of.at(labels[static_cast<size_t>(i)]) % std::size(kPalette);
    out << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"3\" fill=\"" << kPalette[color]
        << "\" fill-opacity=\"0.7\"/>\n";
  }
  double ly = margin;
  for (const auto& label : label_order) {
    size_t color = color_of.at(label) % std::size(kPalette);
    out << "<circle cx=\"" << size - margin - 120 << "\" cy=\"" << ly << "\" r=\"4\" fill=\""
        << kPalette[color] << "\"/>\n<text x=\"" << size - margin - 110 << "\" y=\"" << ly + 4
        << "\" font-size=\"12\">" << label << "</text>\n";
    ly += 18.0;
  }
  out << "</svg>\n";
}

}  // namespace capkit
