#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "capkit/errors.hpp"
#include "capkit/features.hpp"
#include "capkit/metrics.hpp"
#include "capkit/rng.hpp"
#include "capkit/text.hpp"

namespace capkit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// One gated unit: input weights, recurrent weights, bias.
struct Gate {
  MatrixXd w;  // hidden x input
  MatrixXd u;  // hidden x hidden
  VectorXd b;  // hidden

  static Gate zeros(int input_dim, int hidden_dim) {
    return {MatrixXd::Zero(hidden_dim, input_dim), MatrixXd::Zero(hidden_dim, hidden_dim),
            VectorXd::Zero(hidden_dim)};
  }
};

struct LstmParams {
  Gate forget, input, output, cell;
  int input_dim = 0;
  int hidden_dim = 0;

  static LstmParams zeros(int input_dim, int hidden_dim) {
    LstmParams p;
    p.forget = p.input = p.output = p.cell = Gate::zeros(input_dim, hidden_dim);
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    return p;
  }
};

struct GruParams {
  Gate reset, update, cand;
  int input_dim = 0;
  int hidden_dim = 0;

  static GruParams zeros(int input_dim, int hidden_dim) {
    GruParams p;
    p.reset = p.update = p.cand = Gate::zeros(input_dim, hidden_dim);
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    return p;
  }
};

// Everything learnable plus the frozen embedding table and the vocabulary.
// Encoder and decoder share hidden_dim: the final encoder output seeds the
// decoder state.
struct Seq2SeqParams {
  LstmParams encoder;
  GruParams decoder;
  MatrixXd w_out;  // |vocab| x hidden
  EmbeddingTable embeddings{0, {}, 0, 0};
  Vocabulary vocab;
};

struct EncoderState {
  VectorXd cell;
  VectorXd output;

  static EncoderState zeros(int hidden_dim) {
    return {VectorXd::Zero(hidden_dim), VectorXd::Zero(hidden_dim)};
  }
};

namespace nn {

inline VectorXd sigmoid(const VectorXd& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

inline VectorXd softmax(const VectorXd& logits) {
  VectorXd shifted = logits.array() - logits.maxCoeff();
  VectorXd e = shifted.array().exp();
  return e / e.sum();
}

}  // namespace nn

inline EncoderState lstm_step(const LstmParams& p, const VectorXd& x, const EncoderState& prev) {
  if (x.size() != p.input_dim || prev.output.size() != p.hidden_dim ||
      prev.cell.size() != p.hidden_dim)
    throw ShapeError("lstm_step: dimension mismatch");
  VectorXd f = nn::sigmoid(p.forget.w * x + p.forget.u * prev.output + p.forget.b);
  VectorXd i = nn::sigmoid(p.input.w * x + p.input.u * prev.output + p.input.b);
  VectorXd o = nn::sigmoid(p.output.w * x + p.output.u * prev.output + p.output.b);
  VectorXd c_cand = (p.cell.w * x + p.cell.u * prev.output + p.cell.b).array().tanh();
  VectorXd c = f.cwiseProduct(prev.cell) + i.cwiseProduct(c_cand);
  VectorXd h = o.cwiseProduct(c.array().tanh().matrix());
  return {std::move(c), std::move(h)};
}

inline VectorXd gru_step(const GruParams& p, const VectorXd& y, const VectorXd& h_prev) {
  if (y.size() != p.input_dim || h_prev.size() != p.hidden_dim)
    throw ShapeError("gru_step: dimension mismatch");
  VectorXd r = nn::sigmoid(p.reset.w * y + p.reset.u * h_prev + p.reset.b);
  VectorXd z = nn::sigmoid(p.update.w * y + p.update.u * h_prev + p.update.b);
  VectorXd h_cand =
      (p.cand.w * y + p.cand.u * r.cwiseProduct(h_prev) + p.cand.b).array().tanh();
  return (VectorXd::Ones(p.hidden_dim) - z).cwiseProduct(h_prev) + z.cwiseProduct(h_cand);
}

// ---------------------------------------------------------------------------
// Forward pass with cache, analytic backward pass.
// ---------------------------------------------------------------------------

struct ForwardCache {
  struct EncStep {
    VectorXd x, f, i, o, c_cand, c, tanh_c, h;
  };
  struct DecStep {
    VectorXd y, r, z, h_cand, h, probs;
    int target = -1;
  };
  std::vector<EncStep> enc;
  std::vector<DecStep> dec;
  VectorXd summary;  // v: last encoder output = first decoder state
};

struct Gradients {
  LstmParams encoder;
  GruParams decoder;
  MatrixXd w_out;

  static Gradients zeros(const Seq2SeqParams& p) {
    Gradients g;
    g.encoder = LstmParams::zeros(p.encoder.input_dim, p.encoder.hidden_dim);
    g.decoder = GruParams::zeros(p.decoder.input_dim, p.decoder.hidden_dim);
    g.w_out = MatrixXd::Zero(p.w_out.rows(), p.w_out.cols());
    return g;
  }
};

namespace nn {

inline VectorXd embedding_of(const Seq2SeqParams& p, int token_id) {
  const auto& v = p.embeddings.vector_of(token_id);
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace nn

// Teacher-forced loss: the encoder consumes the feature sequence from a zero
// state, its last output seeds the decoder, and each decoder step predicts
// the next target token through the output projection and softmax. Returns
// the negative log-likelihood averaged over predicted positions (every
// position after BOS, EOS included).
inline std::pair<double, ForwardCache> forward_loss(const Seq2SeqParams& p,
                                                    const FeatureSequence& features,
                                                    const TokenizedSentence& target) {
  if (!target.tagged || target.tokens.size() < 2)
    throw Error("forward_loss: target must carry BOS/EOS tags");
  if (features.dim != p.encoder.input_dim)
    throw ShapeError("forward_loss: feature dim != encoder input dim");
  if (p.encoder.hidden_dim != p.decoder.hidden_dim)
    throw ShapeError("forward_loss: encoder/decoder hidden dims differ");
  if (features.vectors.empty()) throw Error("forward_loss: empty feature sequence");

  std::vector<int> ids;
  ids.reserve(target.tokens.size());
  for (const auto& tok : target.tokens) {
    auto id = p.vocab.id_of(tok);
    if (!id) throw VocabError("forward_loss: token not in vocabulary: " + tok);
    ids.push_back(*id);
  }

  ForwardCache cache;
  EncoderState state = EncoderState::zeros(p.encoder.hidden_dim);
  for (const auto& fv : features.vectors) {
    ForwardCache::EncStep step;
    step.x = VectorXd(fv.size());
    for (size_t k = 0; k < fv.size(); ++k) step.x(static_cast<Eigen::Index>(k)) = fv[k];
    step.f = nn::sigmoid(p.encoder.forget.w * step.x + p.encoder.forget.u * state.output +
                         p.encoder.forget.b);
    step.i = nn::sigmoid(p.encoder.input.w * step.x + p.encoder.input.u * state.output +
                         p.encoder.input.b);
    step.o = nn::sigmoid(p.encoder.output.w * step.x + p.encoder.output.u * state.output +
                         p.encoder.output.b);
    step.c_cand = (p.encoder.cell.w * step.x + p.encoder.cell.u * state.output +
                   p.encoder.cell.b).array().tanh();
    step.c = step.f.cwiseProduct(state.cell) + step.i.cwiseProduct(step.c_cand);
    step.tanh_c = step.c.array().tanh();
    step.h = step.o.cwiseProduct(step.tanh_c);
    state.cell = step.c;
    state.output = step.h;
    cache.enc.push_back(std::move(step));
  }
  cache.summary = state.output;

  double loss = 0.0;
  size_t n_steps = ids.size() - 1;
  VectorXd h = cache.summary;
  for (size_t l = 1; l < ids.size(); ++l) {
    ForwardCache::DecStep step;
    step.y = nn::embedding_of(p, ids[l - 1]);
    if (step.y.size() != p.decoder.input_dim)
      throw ShapeError("forward_loss: embedding dim != decoder input dim");
    step.r = nn::sigmoid(p.decoder.reset.w * step.y + p.decoder.reset.u * h + p.decoder.reset.b);
    step.z = nn::sigmoid(p.decoder.update.w * step.y + p.decoder.update.u * h + p.decoder.update.b);
    step.h_cand = (p.decoder.cand.w * step.y + p.decoder.cand.u * step.r.cwiseProduct(h) +
                   p.decoder.cand.b).array().tanh();
    step.h = (VectorXd::Ones(p.decoder.hidden_dim) - step.z).cwiseProduct(h) +
             step.z.cwiseProduct(step.h_cand);
    step.probs = nn::softmax(p.w_out * step.h);
    step.target = ids[l];
    loss -= std::log(step.probs(ids[l]));
    h = step.h;
    cache.dec.push_back(std::move(step));
  }
  loss /= static_cast<double>(n_steps);
  return {loss, std::move(cache)};
}

// Exact gradients of the averaged loss for every learnable tensor.
// Embeddings stay frozen, so no gradient flows into the lookup table.
inline Gradients backward(const Seq2SeqParams& p, const ForwardCache& cache) {
  Gradients g = Gradients::zeros(p);
  double inv_steps = 1.0 / static_cast<double>(cache.dec.size());

  VectorXd dh = VectorXd::Zero(p.decoder.hidden_dim);
  for (size_t l = cache.dec.size(); l-- > 0;) {
    const auto& step = cache.dec[l];
    const VectorXd& h_prev = l == 0 ? cache.summary : cache.dec[l - 1].h;

    VectorXd dlogits = step.probs * inv_steps;
    dlogits(step.target) -= inv_steps;
    g.w_out.noalias() += dlogits * step.h.transpose();
    dh.noalias() += p.w_out.transpose() * dlogits;

    VectorXd dz = dh.cwiseProduct(step.h_cand - h_prev);
    VectorXd dh_cand = dh.cwiseProduct(step.z);
    VectorXd dh_prev = dh.cwiseProduct(VectorXd::Ones(p.decoder.hidden_dim) - step.z);

    VectorXd da_cand =
        dh_cand.cwiseProduct((1.0 - step.h_cand.array().square()).matrix());
    VectorXd rh = step.r.cwiseProduct(h_prev);
    g.decoder.cand.w.noalias() += da_cand * step.y.transpose();
    g.decoder.cand.u.noalias() += da_cand * rh.transpose();
    g.decoder.cand.b += da_cand;
    VectorXd drh = p.decoder.cand.u.transpose() * da_cand;
    VectorXd dr = drh.cwiseProduct(h_prev);
    dh_prev += drh.cwiseProduct(step.r);

    VectorXd da_r = dr.cwiseProduct(step.r.cwiseProduct(VectorXd::Ones(p.decoder.hidden_dim) - step.r));
    VectorXd da_z = dz.cwiseProduct(step.z.cwiseProduct(VectorXd::Ones(p.decoder.hidden_dim) - step.z));
    g.decoder.reset.w.noalias() += da_r * step.y.transpose();
    g.decoder.reset.u.noalias() += da_r * h_prev.transpose();
    g.decoder.reset.b += da_r;
    g.decoder.update.w.noalias() += da_z * step.y.transpose();
    g.decoder.update.u.noalias() += da_z * h_prev.transpose();
    g.decoder.update.b += da_z;
    dh_prev.noalias() += p.decoder.reset.u.transpose() * da_r;
    dh_prev.noalias() += p.decoder.update.u.transpose() * da_z;

    dh = std::move(dh_prev);
  }

  // dh now carries d(loss)/d(summary) = d/d(last encoder output)
  VectorXd dc = VectorXd::Zero(p.encoder.hidden_dim);
  for (size_t n = cache.enc.size(); n-- > 0;) {
    const auto& step = cache.enc[n];
    const VectorXd h_prev = n == 0 ? VectorXd::Zero(p.encoder.hidden_dim) : cache.enc[n - 1].h;
    const VectorXd c_prev = n == 0 ? VectorXd::Zero(p.encoder.hidden_dim) : cache.enc[n - 1].c;

    VectorXd do_ = dh.cwiseProduct(step.tanh_c);
    dc += dh.cwiseProduct(step.o).cwiseProduct(
        (1.0 - step.tanh_c.array().square()).matrix());
    VectorXd df = dc.cwiseProduct(c_prev);
    VectorXd di = dc.cwiseProduct(step.c_cand);
    VectorXd dc_cand = dc.cwiseProduct(step.i);
    VectorXd dc_prev = dc.cwiseProduct(step.f);

    VectorXd ones = VectorXd::Ones(p.encoder.hidden_dim);
    VectorXd da_f = df.cwiseProduct(step.f.cwiseProduct(ones - step.f));
    VectorXd da_i = di.cwiseProduct(step.i.cwiseProduct(ones - step.i));
    VectorXd da_o = do_.cwiseProduct(step.o.cwiseProduct(ones - step.o));
    VectorXd da_c = dc_cand.cwiseProduct((1.0 - step.c_cand.array().square()).matrix());

    g.encoder.forget.w.noalias() += da_f * step.x.transpose();
    g.encoder.forget.u.noalias() += da_f * h_prev.transpose();
    g.encoder.forget.b += da_f;
    g.encoder.input.w.noalias() += da_i * step.x.transpose();
    g.encoder.input.u.noalias() += da_i * h_prev.transpose();
    g.encoder.input.b += da_i;
    g.encoder.output.w.noalias() += da_o * step.x.transpose();
    g.encoder.output.u.noalias() += da_o * h_prev.transpose();
    g.encoder.output.b += da_o;
    g.encoder.cell.w.noalias() += da_c * step.x.transpose();
    g.encoder.cell.u.noalias() += da_c * h_prev.transpose();
    g.encoder.cell.b += da_c;

    VectorXd dh_prev = p.encoder.forget.u.transpose() * da_f;
    dh_prev.noalias() += p.encoder.input.u.transpose() * da_i;
    dh_prev.noalias() += p.encoder.output.u.transpose() * da_o;
    dh_prev.noalias() += p.encoder.cell.u.transpose() * da_c;

    dh = std::move(dh_prev);
    dc = std::move(dc_prev);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Initialization, decoding, training.
// ---------------------------------------------------------------------------

inline Seq2SeqParams init_params(const Vocabulary& vocab, const EmbeddingTable& embeddings,
                                 int feature_dim, int hidden_dim, uint64_t seed) {
  Seq2SeqParams p;
  p.vocab = vocab;
  p.embeddings = embeddings;
  p.encoder = LstmParams::zeros(feature_dim, hidden_dim);
  p.decoder = GruParams::zeros(embeddings.dim(), hidden_dim);
  p.w_out = MatrixXd::Zero(static_cast<Eigen::Index>(vocab.size()), hidden_dim);

  double k = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  rng::Stream stream(seed);
  auto fill = [&](MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = stream.next_uniform(-k, k);
  };
  auto fill_v = [&](VectorXd& v) {
    for (Eigen::Index r = 0; r < v.size(); ++r) v(r) = stream.next_uniform(-k, k);
  };
  auto fill_gate = [&](Gate& gate) {
    fill(gate.w);
    fill(gate.u);
    fill_v(gate.b);
  };
  fill_gate(p.encoder.forget);
  fill_gate(p.encoder.input);
  fill_gate(p.encoder.output);
  fill_gate(p.encoder.cell);
  fill_gate(p.decoder.reset);
  fill_gate(p.decoder.update);
  fill_gate(p.decoder.cand);
  fill(p.w_out);
  return p;
}

// Greedy decoding: argmax word per step (ties to the smallest vocabulary
// id), fed back as the next input, until EOS or max_len words.
inline TokenizedSentence greedy_decode(const Seq2SeqParams& p, const FeatureSequence& features,
                                       size_t max_len = 30) {
  if (max_len < 1) throw Error("greedy_decode: max_len must be >= 1");
  if (features.dim != p.encoder.input_dim)
    throw ShapeError("greedy_decode: feature dim != encoder input dim");
  EncoderState state = EncoderState::zeros(p.encoder.hidden_dim);
  for (const auto& fv : features.vectors) {
    VectorXd x(fv.size());
    for (size_t k = 0; k < fv.size(); ++k) x(static_cast<Eigen::Index>(k)) = fv[k];
    state = lstm_step(p.encoder, x, state);
  }
  VectorXd h = state.output;
  VectorXd y = nn::embedding_of(p, p.vocab.bos_id());
  TokenizedSentence out;
  out.tagged = false;
  for (size_t step = 0; step < max_len; ++step) {
    h = gru_step(p.decoder, y, h);
    VectorXd logits = p.w_out * h;
    int best = 0;
    for (Eigen::Index i = 1; i < logits.size(); ++i)
      if (logits(i) > logits(best)) best = static_cast<int>(i);
    if (best == p.vocab.eos_id()) break;
    out.tokens.push_back(p.vocab.word_of(best));
    y = nn::embedding_of(p, best);
  }
  return out;
}

struct TrainSample {
  FeatureSequence features;
  TokenizedSentence caption;  // tagged
};

struct ValSample {
  FeatureSequence features;
  std::vector<TokenizedSentence> references;  // untagged
  std::string video_id;
};

struct TrainConfig {
  double lr = 0.1;
  size_t batch_size = 64;
  int patience = 10;
  uint64_t seed = 0;
  int max_epochs = 500;
  size_t decode_max_len = 30;
};

struct EpochLog {
  double train_loss = 0.0;
  double val_meteor = 0.0;
};

struct TrainResult {
  Seq2SeqParams best;
  std::vector<EpochLog> log;
  int best_epoch = -1;  // 0-based
};

namespace nn {

inline void axpy_gate(Gate& dst, const Gate& src, double a) {
  dst.w += a * src.w;
  dst.u += a * src.u;
  dst.b += a * src.b;
}

inline void apply_update(Seq2SeqParams& p, const Gradients& g, double lr) {
  axpy_gate(p.encoder.forget, g.encoder.forget, -lr);
  axpy_gate(p.encoder.input, g.encoder.input, -lr);
  axpy_gate(p.encoder.output, g.encoder.output, -lr);
  axpy_gate(p.encoder.cell, g.encoder.cell, -lr);
  axpy_gate(p.decoder.reset, g.decoder.reset, -lr);
  axpy_gate(p.decoder.update, g.decoder.update, -lr);
  axpy_gate(p.decoder.cand, g.decoder.cand, -lr);
  p.w_out += -lr * g.w_out;
}

inline void accumulate(Gradients& acc, const Gradients& g) {
  axpy_gate(acc.encoder.forget, g.encoder.forget, 1.0);
  axpy_gate(acc.encoder.input, g.encoder.input, 1.0);
  axpy_gate(acc.encoder.output, g.encoder.output, 1.0);
  axpy_gate(acc.encoder.cell, g.encoder.cell, 1.0);
  axpy_gate(acc.decoder.reset, g.decoder.reset, 1.0);
  axpy_gate(acc.decoder.update, g.decoder.update, 1.0);
  axpy_gate(acc.decoder.cand, g.decoder.cand, 1.0);
  acc.w_out += g.w_out;
}

inline void scale(Gradients& g, double a) {
  auto scale_gate = [a](Gate& gate) {
    gate.w *= a;
    gate.u *= a;
    gate.b *= a;
  };
  scale_gate(g.encoder.forget);
  scale_gate(g.encoder.input);
  scale_gate(g.encoder.output);
  scale_gate(g.encoder.cell);
  scale_gate(g.decoder.reset);
  scale_gate(g.decoder.update);
  scale_gate(g.decoder.cand);
  g.w_out *= a;
}

inline double validation_meteor(const Seq2SeqParams& p, const std::vector<ValSample>& val,
                                size_t max_len) {
  double sum = 0.0;
  for (const auto& sample : val) {
    TokenizedSentence decoded = greedy_decode(p, sample.features, max_len);
    if (decoded.tokens.empty()) continue;  // scores 0
    ScoredPair pair{decoded, sample.references, sample.video_id};
    sum += meteor(pair);
  }
  return val.empty() ? 0.0 : sum / static_cast<double>(val.size());
}

}  // namespace nn

// Constant-rate SGD over seeded epoch shuffles, mean gradient per batch.
// After each epoch the validation set is greedy-decoded and scored with
// corpus-mean METEOR; the best-scoring parameters are kept and training
// stops once the score has not improved for `patience` consecutive epochs.
inline TrainResult sgd_train(const Seq2SeqParams& initial, const std::vector<TrainSample>& train,
                             const std::vector<ValSample>& val, const TrainConfig& config = {}) {
  if (train.empty()) throw Error("sgd_train: empty training set");
  size_t batch_size = std::min(config.batch_size, train.size());
  if (batch_size == 0) throw Error("sgd_train: batch size must be positive");

  Seq2SeqParams params = initial;
  TrainResult result;
  result.best = initial;
  double best_meteor = -std::numeric_limits<double>::infinity();
  int stale_epochs = 0;

  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    rng::Stream shuffle_stream(config.seed, static_cast<uint64_t>(epoch));
    shuffle_stream.shuffle(order);

    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += batch_size) {
      size_t end = std::min(start + batch_size, order.size());
      Gradients acc = Gradients::zeros(params);
      for (size_t k = start; k < end; ++k) {
        const TrainSample& sample = train[order[k]];
        auto [loss, cache] = forward_loss(params, sample.features, sample.caption);
        if (!std::isfinite(loss))
          throw DivergenceError("sgd_train: non-finite loss at epoch " + std::to_string(epoch),
                                epoch);
        loss_sum += loss;
        nn::accumulate(acc, backward(params, cache));
      }
      nn::scale(acc, 1.0 / static_cast<double>(end - start));
      nn::apply_update(params, acc, config.lr);
    }

    EpochLog entry;
    entry.train_loss = loss_sum / static_cast<double>(train.size());
    entry.val_meteor = nn::validation_meteor(params, val, config.decode_max_len);
    result.log.push_back(entry);

    if (entry.val_meteor > best_meteor) {
      best_meteor = entry.val_meteor;
      result.best = params;
      result.best_epoch = epoch;
      stale_epochs = 0;
    } else {
      ++stale_epochs;
      if (stale_epochs >= config.patience) break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint: "S2S1", vocab word list, then named tensors with dims and
// float64 little-endian payload.
// ---------------------------------------------------------------------------
namespace model_io {

inline void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw MalformedTensorFile(path + ": truncated");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void write_tensor(std::ostream& out, const std::string& name,
                         const std::vector<uint32_t>& dims, const double* data, size_t count) {
  write_u32(out, static_cast<uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(out, static_cast<uint32_t>(dims.size()));
  for (uint32_t d : dims) write_u32(out, d);
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

inline void write_matrix(std::ostream& out, const std::string& name, const MatrixXd& m) {
  // row-major on disk
  std::vector<double> buf(static_cast<size_t>(m.rows()) * static_cast<size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      buf[static_cast<size_t>(r) * static_cast<size_t>(m.cols()) + static_cast<size_t>(c)] = m(r, c);
  write_tensor(out, name, {static_cast<uint32_t>(m.rows()), static_cast<uint32_t>(m.cols())},
               buf.data(), buf.size());
}

inline void write_vector(std::ostream& out, const std::string& name, const VectorXd& v) {
  write_tensor(out, name, {static_cast<uint32_t>(v.size())}, v.data(),
               static_cast<size_t>(v.size()));
}

struct TensorMap {
  std::unordered_map<std::string, std::pair<std::vector<uint32_t>, std::vector<double>>> tensors;

  const std::pair<std::vector<uint32_t>, std::vector<double>>& get(const std::string& name,
                                                                   const std::string& path) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw MalformedTensorFile(path + ": missing tensor " + name);
    return it->second;
  }

  MatrixXd matrix(const std::string& name, const std::string& path) const {
    const auto& [dims, data] = get(name, path);
    if (dims.size() != 2) throw MalformedTensorFile(path + ": tensor " + name + " is not 2-d");
    MatrixXd m(dims[0], dims[1]);
    for (uint32_t r = 0; r < dims[0]; ++r)
      for (uint32_t c = 0; c < dims[1]; ++c) m(r, c) = data[static_cast<size_t>(r) * dims[1] + c];
    return m;
  }

  VectorXd vector(const std::string& name, const std::string& path) const {
    const auto& [dims, data] = get(name, path);
    if (dims.size() != 1) throw MalformedTensorFile(path + ": tensor " + name + " is not 1-d");
    return Eigen::Map<const VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
  }
};

}  // namespace model_io

inline void save_model(const std::string& path, const Seq2SeqParams& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_model: cannot open " + path);
  out.write("S2S1", 4);
  model_io::write_u32(out, static_cast<uint32_t>(p.vocab.size()));
  for (const auto& word : p.vocab.words()) {
    model_io::write_u32(out, static_cast<uint32_t>(word.size()));
    out.write(word.data(), static_cast<std::streamsize>(word.size()));
  }

  auto gate_tensors = [&](const std::string& prefix, const Gate& gate) {
    model_io::write_matrix(out, prefix + ".w", gate.w);
    model_io::write_matrix(out, prefix + ".u", gate.u);
    model_io::write_vector(out, prefix + ".b", gate.b);
  };
  // 7 gates * 3 tensors + w_out + embeddings
  model_io::write_u32(out, 7 * 3 + 2);
  gate_tensors("encoder.forget", p.encoder.forget);
  gate_tensors("encoder.input", p.encoder.input);
  gate_tensors("encoder.output", p.encoder.output);
  gate_tensors("encoder.cell", p.encoder.cell);
  gate_tensors("decoder.reset", p.decoder.reset);
  gate_tensors("decoder.update", p.decoder.update);
  gate_tensors("decoder.cand", p.decoder.cand);
  model_io::write_matrix(out, "w_out", p.w_out);

  MatrixXd emb(static_cast<Eigen::Index>(p.embeddings.size()), p.embeddings.dim());
  for (size_t i = 0; i < p.embeddings.size(); ++i) {
    const auto& v = p.embeddings.vector_of(static_cast<int>(i));
    for (int k = 0; k < p.embeddings.dim(); ++k) emb(static_cast<Eigen::Index>(i), k) = v[static_cast<size_t>(k)];
  }
  model_io::write_matrix(out, "embeddings", emb);
  if (!out) throw IoError("save_model: write failed for " + path);
}

inline Seq2SeqParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_model: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "S2S1", 4) != 0)
    throw MalformedTensorFile(path + ": bad magic");

  uint32_t vocab_size = model_io::read_u32(in, path);
  Vocabulary vocab;
  for (uint32_t i = 0; i < vocab_size; ++i) {
    uint32_t len = model_io::read_u32(in, path);
    std::string word(len, '\0');
    in.read(word.data(), len);
    if (in.gcount() != static_cast<std::streamsize>(len))
      throw MalformedTensorFile(path + ": truncated vocab");
    if (i >= 2) vocab.add(word);  // BOS/EOS are implicit ids 0 and 1
  }

  model_io::TensorMap tensors;
  uint32_t n_tensors = model_io::read_u32(in, path);
  for (uint32_t t = 0; t < n_tensors; ++t) {
    uint32_t name_len = model_io::read_u32(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (in.gcount() != static_cast<std::streamsize>(name_len))
      throw MalformedTensorFile(path + ": truncated tensor name");
    uint32_t ndims = model_io::read_u32(in, path);
    std::vector<uint32_t> dims(ndims);
    size_t count = 1;
    for (auto& d : dims) {
      d = model_io::read_u32(in, path);
      count *= d;
    }
    std::vector<double> data(count);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
      throw MalformedTensorFile(path + ": truncated tensor payload");
    tensors.tensors[name] = {std::move(dims), std::move(data)};
  }

  Seq2SeqParams p;
  p.vocab = vocab;
  auto load_gate = [&](const std::string& prefix) {
    Gate g;
    g.w = tensors.matrix(prefix + ".w", path);
    g.u = tensors.matrix(prefix + ".u", path);
    g.b = tensors.vector(prefix + ".b", path);
    return g;
  };
  p.encoder.forget = load_gate("encoder.forget");
  p.encoder.input = load_gate("encoder.input");
  p.encoder.output = load_gate("encoder.output");
  p.encoder.cell = load_gate("encoder.cell");
  p.encoder.input_dim = static_cast<int>(p.encoder.forget.w.cols());
  p.encoder.hidden_dim = static_cast<int>(p.encoder.forget.w.rows());
  p.decoder.reset = load_gate("decoder.reset");
  p.decoder.update = load_gate("decoder.update");
  p.decoder.cand = load_gate("decoder.cand");
  p.decoder.input_dim = static_cast<int>(p.decoder.reset.w.cols());
  p.decoder.hidden_dim = static_cast<int>(p.decoder.reset.w.rows());
  p.w_out = tensors.matrix("w_out", path);

  MatrixXd emb = tensors.matrix("embeddings", path);
  if (static_cast<size_t>(emb.rows()) != vocab.size())
    throw MalformedTensorFile(path + ": embedding rows != vocab size");
  std::vector<std::vector<double>> vectors(static_cast<size_t>(emb.rows()));
  for (Eigen::Index r = 0; r < emb.rows(); ++r) {
    vectors[static_cast<size_t>(r)].resize(static_cast<size_t>(emb.cols()));
    for (Eigen::Index c = 0; c < emb.cols(); ++c) vectors[static_cast<size_t>(r)][static_cast<size_t>(c)] = emb(r, c);
  }
  p.embeddings = EmbeddingTable(static_cast<int>(emb.cols()), std::move(vectors), 0, 0);
  return p;
}

}  // namespace capkit
