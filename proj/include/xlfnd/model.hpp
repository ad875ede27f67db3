#pragma once

// The four networks: article encoder (CNN), source encoder (bi-LSTM or CNN
// with selectable pooling), fake-news detector and language critic.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlfnd/autodiff.hpp"
#include "xlfnd/common.hpp"
#include "xlfnd/json_enum.hpp"

namespace xlfnd::model {

using autodiff::Tape;
using autodiff::Var;

enum class Pooling { mean, last, first, attention };
enum class SourceEncoderKind { bilstm, cnn };

XLFND_JSON_ENUM(Pooling, {{Pooling::mean, "mean"},
                                       {Pooling::last, "last"},
                                       {Pooling::first, "first"},
                                       {Pooling::attention, "attention"}})
XLFND_JSON_ENUM(SourceEncoderKind, {{SourceEncoderKind::bilstm, "bilstm"},
                                                 {SourceEncoderKind::cnn, "cnn"}})

struct HyperConfig {
  int embed_dim = 100;
  std::vector<int> kernel_sizes{3, 4, 5};
  int kernels_per_size = 400;
  int article_dim = 900;
  int source_dim = 900;
  int hidden_units = 1800;
  int hidden_layers = 2;
  int max_len = 200;
  Pooling pooling = Pooling::mean;
  SourceEncoderKind source_encoder_kind = SourceEncoderKind::bilstm;
  // Kernel sizes of the CNN source encoder variant.
  std::vector<int> source_kernel_sizes{1, 2, 3};
  // Without the source channel the news embedding is the article vector only.
  bool use_source = true;
  bool critic_nonlinearity = false;

  int news_dim() const { return article_dim + (use_source ? source_dim : 0); }
  int lstm_units() const { return source_dim / 2; }

  void validate() const {
    auto positive = [](int v, const char* name) {
      if (v <= 0) throw ContractError(std::string("hyper config: ") + name + " must be > 0");
    };
    positive(embed_dim, "embed_dim");
    positive(kernels_per_size, "kernels_per_size");
    positive(article_dim, "article_dim");
    positive(source_dim, "source_dim");
    positive(hidden_units, "hidden_units");
    positive(max_len, "max_len");
    if (hidden_layers < 0) throw ContractError("hyper config: hidden_layers must be >= 0");
    if (kernel_sizes.empty()) throw ContractError("hyper config: kernel_sizes is empty");
    for (int k : kernel_sizes) positive(k, "kernel size");
    for (int k : source_kernel_sizes) positive(k, "source kernel size");
    if (source_encoder_kind == SourceEncoderKind::bilstm && source_dim % 2 != 0) {
      throw ContractError("hyper config: bi-LSTM source_dim must be even");
    }
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(HyperConfig, embed_dim, kernel_sizes, kernels_per_size,
                                                article_dim, source_dim, hidden_units, hidden_layers,
                                                max_len, pooling, source_encoder_kind,
                                                source_kernel_sizes, use_source, critic_nonlinearity)

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
struct ParamSet {
  using Mat = autodiff::Matrix<T>;
  std::vector<std::pair<std::string, Mat>> blocks;

  Mat& operator[](std::string_view name) { return const_cast<Mat&>(std::as_const(*this)[name]); }
  const Mat& operator[](std::string_view name) const {
    for (const auto& [n, m] : blocks) {
      if (n == name) return m;
    }
    throw ContractError("parameter block '" + std::string(name) + "' not found");
  }
  std::size_t size() const { return blocks.size(); }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += static_cast<std::size_t>(b.second.size());
    return n;
  }
  bool all_finite() const {
    for (const auto& b : blocks) {
      if (!b.second.allFinite()) return false;
    }
    return true;
  }
  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& [n, m] : blocks) out.blocks.emplace_back(n, m.template cast<U>());
    return out;
  }
  bool operator==(const ParamSet& o) const {
    if (blocks.size() != o.blocks.size()) return false;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (blocks[i].first != o.blocks[i].first) return false;
      const auto& a = blocks[i].second;
      const auto& b = o.blocks[i].second;
      if (a.rows() != b.rows() || a.cols() != b.cols() || a != b) return false;
    }
    return true;
  }
};

template <typename T>
struct ModelParams {
  ParamSet<T> article;   // theta_a
  ParamSet<T> source;    // theta_s
  ParamSet<T> detector;  // theta_n
  ParamSet<T> critic;    // theta_d

  template <typename U>
  ModelParams<U> cast() const {
    return {article.template cast<U>(), source.template cast<U>(), detector.template cast<U>(),
            critic.template cast<U>()};
  }
  bool all_finite() const {
    return article.all_finite() && source.all_finite() && detector.all_finite() && critic.all_finite();
  }
  bool operator==(const ModelParams&) const = default;
};

namespace detail {

template <typename T>
void add_uniform(ParamSet<T>& set, Rng& rng, const std::string& name, int rows, int cols, int fan_in,
                 int fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  autodiff::Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
  }
  set.blocks.emplace_back(name, std::move(m));
}

template <typename T>
void add_constant(ParamSet<T>& set, const std::string& name, int rows, int cols, T value) {
  set.blocks.emplace_back(name, autodiff::Matrix<T>::Constant(rows, cols, value));
}

template <typename T>
void add_cnn(ParamSet<T>& set, Rng& rng, const std::vector<int>& sizes, int in_dim, int kernels,
             int out_dim) {
  for (int k : sizes) {
    const auto tag = "conv" + std::to_string(k);
    add_uniform(set, rng, tag + ".w", k * in_dim, kernels, k * in_dim, kernels);
    add_constant(set, tag + ".b", 1, kernels, T(0));
  }
  const int pooled = kernels * static_cast<int>(sizes.size());
  add_uniform(set, rng, "proj.w", pooled, out_dim, pooled, out_dim);
  add_constant(set, "proj.b", 1, out_dim, T(0));
}

template <typename T>
void add_lstm(ParamSet<T>& set, Rng& rng, const std::string& dir, int in_dim, int units) {
  add_uniform(set, rng, dir + ".wx", in_dim, 4 * units, in_dim, 4 * units);
  add_uniform(set, rng, dir + ".wh", units, 4 * units, units, 4 * units);
  autodiff::Matrix<T> b = autodiff::Matrix<T>::Zero(1, 4 * units);
  b.middleCols(units, units).setConstant(T(1));  // forget gate
  set.blocks.emplace_back(dir + ".b", std::move(b));
}

template <typename T>
void add_ffn(ParamSet<T>& set, Rng& rng, int in_dim, int hidden, int layers, int out_dim) {
  int width = in_dim;
  for (int l = 1; l <= layers; ++l) {
    const auto tag = "fc" + std::to_string(l);
    add_uniform(set, rng, tag + ".w", width, hidden, width, hidden);
    add_constant(set, tag + ".b", 1, hidden, T(0));
    width = hidden;
  }
  add_uniform(set, rng, "out.w", width, out_dim, width, out_dim);
  add_constant(set, "out.b", 1, out_dim, T(0));
}

}  // namespace detail

// Seeded uniform initialization with bound sqrt(6 / (fan_in + fan_out));
// biases zero except the LSTM forget gates (1).
template <typename T>
ModelParams<T> init_params(const HyperConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams<T> p;
  {
    Rng rng(derive_seed(seed, "init/article"));
    detail::add_cnn(p.article, rng, cfg.kernel_sizes, cfg.embed_dim, cfg.kernels_per_size, cfg.article_dim);
  }
  if (cfg.use_source) {
    Rng rng(derive_seed(seed, "init/source"));
    if (cfg.source_encoder_kind == SourceEncoderKind::bilstm) {
      detail::add_lstm(p.source, rng, "fwd", cfg.embed_dim, cfg.lstm_units());
      detail::add_lstm(p.source, rng, "bwd", cfg.embed_dim, cfg.lstm_units());
      detail::add_uniform(p.source, rng, "attn.q", cfg.source_dim, 1, cfg.source_dim, 1);
    } else {
      detail::add_cnn(p.source, rng, cfg.source_kernel_sizes, cfg.embed_dim, cfg.kernels_per_size,
                      cfg.source_dim);
    }
  }
  {
    Rng rng(derive_seed(seed, "init/detector"));
    detail::add_ffn(p.detector, rng, cfg.news_dim(), cfg.hidden_units, cfg.hidden_layers, 2);
  }
  {
    Rng rng(derive_seed(seed, "init/critic"));
    detail::add_ffn(p.critic, rng, cfg.news_dim(), cfg.hidden_units, cfg.hidden_layers, 1);
  }
  return p;
}

template <typename T>
void clip_params(ParamSet<T>& set, T c) {
  for (auto& [_, m] : set.blocks) m = m.cwiseMax(-c).cwiseMin(c);
}

// ---------------------------------------------------------------------------
// Graph construction

// Tape leaves for every block of a parameter set, in block order.
template <typename T>
std::vector<Var> bind(Tape<T>& tape, const ParamSet<T>& set, bool trainable) {
  std::vector<Var> vars;
  vars.reserve(set.size());
  for (const auto& b : set.blocks) vars.push_back(tape.param(b.second, trainable));
  return vars;
}

template <typename T>
struct Bound {
  const ParamSet<T>* set = nullptr;
  std::vector<Var> vars;

  Var operator[](std::string_view name) const {
    for (std::size_t i = 0; i < set->blocks.size(); ++i) {
      if (set->blocks[i].first == name) return vars[i];
    }
    throw ContractError("parameter block '" + std::string(name) + "' not bound");
  }
};

template <typename T>
Bound<T> bind_set(Tape<T>& tape, const ParamSet<T>& set, bool trainable) {
  return {&set, bind(tape, set, trainable)};
}

template <typename T>
std::vector<autodiff::Matrix<T>> harvest(const Tape<T>& tape, const Bound<T>& b) {
  std::vector<autodiff::Matrix<T>> out;
  out.reserve(b.vars.size());
  for (auto v : b.vars) out.push_back(tape.grad(v));
  return out;
}

template <typename T>
struct BatchInput {
  autodiff::Matrix<T> article_rows;  // stacked token vectors of every article
  std::vector<int> article_lens;
  std::vector<autodiff::Matrix<T>> speakers;  // per example: len x embed_dim

  std::size_t size() const { return article_lens.size(); }
};

namespace detail {

template <typename T>
Var cnn_features(Tape<T>& tape, const Bound<T>& p, const std::vector<int>& sizes, Var rows,
                 const std::vector<int>& lens) {
  std::vector<Var> pooled;
  for (int k : sizes) {
    const auto tag = "conv" + std::to_string(k);
    Var cols = tape.im2col(rows, lens, k);
    Var act = tape.relu(tape.add_bias(tape.matmul(cols, p[tag + ".w"]), p[tag + ".b"]));
    std::vector<int> windows;
    windows.reserve(lens.size());
    for (int len : lens) windows.push_back(std::max(len, k) - k + 1);
    pooled.push_back(tape.segment_max(act, windows));
  }
  return pooled.size() == 1 ? pooled[0] : tape.concat_cols(pooled);
}

template <typename T>
Var sum_all(Tape<T>& tape, const std::vector<Var>& terms) {
  Var acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = tape.add(acc, terms[i]);
  return acc;
}

}  // namespace detail

// Convolutions of each kernel size with ReLU, max-pooled over time, then an
// affine projection to article_dim. Returns B x article_dim.
template <typename T>
Var article_forward(Tape<T>& tape, const HyperConfig& cfg, const Bound<T>& p, const BatchInput<T>& in,
                    Var* pooled_out = nullptr) {
  if (in.article_rows.cols() != cfg.embed_dim) {
    throw ContractError("encode_article: expected " + std::to_string(cfg.embed_dim) +
                        "-dimensional rows, got " + std::to_string(in.article_rows.cols()));
  }
  for (int len : in.article_lens) {
    if (len < 1) throw ContractError("encode_article: empty article");
  }
  Var rows = tape.constant(in.article_rows);
  Var pooled = detail::cnn_features(tape, p, cfg.kernel_sizes, rows, in.article_lens);
  if (pooled_out) *pooled_out = pooled;
  return tape.add_bias(tape.matmul(pooled, p["proj.w"]), p["proj.b"]);
}

namespace detail {

template <typename T>
std::vector<Var> lstm_direction(Tape<T>& tape, const Bound<T>& p, const std::string& dir, int units,
                                const std::vector<Var>& steps, const std::vector<Var>& masks,
                                const std::vector<Var>& inv_masks, bool reverse) {
  using Mat = autodiff::Matrix<T>;
  const auto batch = tape.value(steps.front()).rows();
  Var h = tape.constant(Mat::Zero(batch, units));
  Var c = tape.constant(Mat::Zero(batch, units));
  std::vector<Var> out(steps.size());
  const Var wx = p[dir + ".wx"], wh = p[dir + ".wh"], b = p[dir + ".b"];
  for (std::size_t n = 0; n < steps.size(); ++n) {
    const std::size_t t = reverse ? steps.size() - 1 - n : n;
    Var z = tape.add_bias(tape.add(tape.matmul(steps[t], wx), tape.matmul(h, wh)), b);
    Var i = tape.sigmoid(tape.slice_cols(z, 0, units));
    Var f = tape.sigmoid(tape.slice_cols(z, units, units));
    Var g = tape.tanh(tape.slice_cols(z, 2 * units, units));
    Var o = tape.sigmoid(tape.slice_cols(z, 3 * units, units));
    Var c_new = tape.add(tape.cmul(f, c), tape.cmul(i, g));
    Var h_new = tape.cmul(o, tape.tanh(c_new));
    c = tape.add(tape.row_scale(c_new, masks[t]), tape.row_scale(c, inv_masks[t]));
    h = tape.add(tape.row_scale(h_new, masks[t]), tape.row_scale(h, inv_masks[t]));
    out[t] = h;
  }
  return out;
}

}  // namespace detail

// Source encoder over per-example speaker sequences. Empty sequences encode
// to zero. When `attention_out` is given and pooling is attention, it
// receives the B x T attention weights.
template <typename T>
Var source_forward(Tape<T>& tape, const HyperConfig& cfg, const Bound<T>& p, const BatchInput<T>& in,
                   Pooling pooling, autodiff::Matrix<T>* attention_out = nullptr) {
  using Mat = autodiff::Matrix<T>;
  const auto batch = static_cast<Eigen::Index>(in.speakers.size());
  int max_len = 0;
  for (const auto& u : in.speakers) {
    if (u.rows() > 0 && u.cols() != cfg.embed_dim) {
      throw ContractError("encode_source: expected " + std::to_string(cfg.embed_dim) +
                          "-dimensional rows, got " + std::to_string(u.cols()));
    }
    max_len = std::max(max_len, static_cast<int>(u.rows()));
  }
  if (max_len == 0) return tape.constant(Mat::Zero(batch, cfg.source_dim));

  Mat has_any(batch, 1);
  for (Eigen::Index b = 0; b < batch; ++b) has_any(b, 0) = in.speakers[static_cast<std::size_t>(b)].rows() > 0;

  if (cfg.source_encoder_kind == SourceEncoderKind::cnn) {
    std::vector<int> lens;
    Eigen::Index total = 0;
    for (const auto& u : in.speakers) {
      lens.push_back(static_cast<int>(u.rows()));
      total += u.rows();
    }
    Mat stacked(total, cfg.embed_dim);
    Eigen::Index off = 0;
    for (const auto& u : in.speakers) {
      if (u.rows()) stacked.middleRows(off, u.rows()) = u;
      off += u.rows();
    }
    Var pooled = detail::cnn_features(tape, p, cfg.source_kernel_sizes, tape.constant(stacked), lens);
    Var s = tape.add_bias(tape.matmul(pooled, p["proj.w"]), p["proj.b"]);
    return tape.row_scale(s, tape.constant(has_any));
  }

  const int units = cfg.lstm_units();
  std::vector<Var> steps, masks, inv_masks;
  Mat mask_all = Mat::Zero(batch, max_len);
  for (int t = 0; t < max_len; ++t) {
    Mat x = Mat::Zero(batch, cfg.embed_dim);
    Mat m = Mat::Zero(batch, 1);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const auto& u = in.speakers[static_cast<std::size_t>(b)];
      if (t < u.rows()) {
        x.row(b) = u.row(t);
        m(b, 0) = T(1);
        mask_all(b, t) = T(1);
      }
    }
    steps.push_back(tape.constant(std::move(x)));
    inv_masks.push_back(tape.constant(Mat(Mat::Ones(batch, 1) - m)));
    masks.push_back(tape.constant(std::move(m)));
  }
  auto fwd = detail::lstm_direction(tape, p, "fwd", units, steps, masks, inv_masks, false);
  auto bwd = detail::lstm_direction(tape, p, "bwd", units, steps, masks, inv_masks, true);
  std::vector<Var> states(static_cast<std::size_t>(max_len));
  for (int t = 0; t < max_len; ++t) {
    states[static_cast<std::size_t>(t)] = tape.concat_cols({fwd[static_cast<std::size_t>(t)], bwd[static_cast<std::size_t>(t)]});
  }

  std::vector<Var> terms;
  switch (pooling) {
    case Pooling::mean: {
      for (int t = 0; t < max_len; ++t) {
        Mat w(batch, 1);
        for (Eigen::Index b = 0; b < batch; ++b) {
          const auto len = in.speakers[static_cast<std::size_t>(b)].rows();
          w(b, 0) = t < len ? T(1) / static_cast<T>(len) : T(0);
        }
        terms.push_back(tape.row_scale(states[static_cast<std::size_t>(t)], tape.constant(std::move(w))));
      }
      break;
    }
    case Pooling::last: {
      for (int t = 0; t < max_len; ++t) {
        Mat w(batch, 1);
        for (Eigen::Index b = 0; b < batch; ++b) {
          w(b, 0) = in.speakers[static_cast<std::size_t>(b)].rows() == t + 1 ? T(1) : T(0);
        }
        terms.push_back(tape.row_scale(states[static_cast<std::size_t>(t)], tape.constant(std::move(w))));
      }
      break;
    }
    case Pooling::first:
      terms.push_back(tape.row_scale(states[0], tape.constant(has_any)));
      break;
    case Pooling::attention: {
      std::vector<Var> scores;
      for (int t = 0; t < max_len; ++t) {
        scores.push_back(tape.matmul(states[static_cast<std::size_t>(t)], p["attn.q"]));
      }
      Var alpha = tape.masked_softmax_rows(tape.concat_cols(scores), mask_all);
      if (attention_out) *attention_out = tape.value(alpha);
      for (int t = 0; t < max_len; ++t) {
        terms.push_back(tape.row_scale(states[static_cast<std::size_t>(t)], tape.slice_cols(alpha, t, 1)));
      }
      break;
    }
  }
  return detail::sum_all(tape, terms);
}

// e = [a ; s], B x news_dim.
template <typename T>
Var news_forward(Tape<T>& tape, const HyperConfig& cfg, const Bound<T>& article, const Bound<T>& source,
                 const BatchInput<T>& in) {
  Var a = article_forward(tape, cfg, article, in);
  if (!cfg.use_source) return a;
  Var s = source_forward(tape, cfg, source, in, cfg.pooling);
  return tape.concat_cols({a, s});
}

namespace detail {

template <typename T>
Var ffn(Tape<T>& tape, const HyperConfig& cfg, const Bound<T>& p, Var x, bool nonlinear) {
  for (int l = 1; l <= cfg.hidden_layers; ++l) {
    const auto tag = "fc" + std::to_string(l);
    x = tape.add_bias(tape.matmul(x, p[tag + ".w"]), p[tag + ".b"]);
    if (nonlinear) x = tape.relu(x);
  }
  return tape.add_bias(tape.matmul(x, p["out.w"]), p["out.b"]);
}

template <typename T>
void require_news(const Tape<T>& tape, const HyperConfig& cfg, Var e, const char* op) {
  const auto& v = tape.value(e);
  if (v.cols() != cfg.news_dim()) {
    throw ContractError(std::string(op) + ": expected " + std::to_string(cfg.news_dim()) +
                        "-dimensional news embedding, got " + std::to_string(v.cols()));
  }
  if (!v.allFinite()) throw ContractError(std::string(op) + ": non-finite input");
}

}  // namespace detail

// Two ReLU hidden layers and a 2-way output; B x 2 logits (fake, real).
template <typename T>
Var detector_logits(Tape<T>& tape, const HyperConfig& cfg, const Bound<T>& p, Var e) {
  detail::require_news(tape, cfg, e, "detect");
  return detail::ffn(tape, cfg, p, e, true);
}

// Affine hidden layers (ReLU only with critic_nonlinearity) and a scalar
// output; B x 1.
template <typename T>
Var critic_forward(Tape<T>& tape, const HyperConfig& cfg, const Bound<T>& p, Var e) {
  detail::require_news(tape, cfg, e, "criticize");
  return detail::ffn(tape, cfg, p, e, cfg.critic_nonlinearity);
}

// ---------------------------------------------------------------------------
// Single-example evaluation on frozen parameters

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <typename T>
RowVector<T> encode_article(const HyperConfig& cfg, const ParamSet<T>& theta_a,
                            const autodiff::Matrix<T>& v) {
  Tape<T> tape;
  BatchInput<T> in;
  in.article_rows = v;
  in.article_lens = {static_cast<int>(v.rows())};
  return tape.value(article_forward(tape, cfg, bind_set(tape, theta_a, false), in));
}

template <typename T>
RowVector<T> encode_source(const HyperConfig& cfg, const ParamSet<T>& theta_s, const autodiff::Matrix<T>& u,
                           Pooling pooling, autodiff::Matrix<T>* attention = nullptr) {
  Tape<T> tape;
  BatchInput<T> in;
  in.speakers = {u};
  return tape.value(source_forward(tape, cfg, bind_set(tape, theta_s, false), in, pooling, attention));
}

// Probability pair (fake, real).
template <typename T>
std::pair<T, T> detect(const HyperConfig& cfg, const ParamSet<T>& theta_n, const RowVector<T>& e) {
  Tape<T> tape;
  Var logits = detector_logits(tape, cfg, bind_set(tape, theta_n, false), tape.constant(e));
  auto p = Tape<T>::softmax_rows(tape.value(logits));
  return {p(0, 0), p(0, 1)};
}

template <typename T>
T criticize(const HyperConfig& cfg, const ParamSet<T>& theta_d, const RowVector<T>& e) {
  Tape<T> tape;
  return tape.value(critic_forward(tape, cfg, bind_set(tape, theta_d, false), tape.constant(e)))(0, 0);
}

}  // namespace xlfnd::model
