#pragma once

// Adversarial training: k critic ascent steps with weight clipping, then one
// joint detector/encoder descent step; early stopping on target validation
// accuracy.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlfnd/autodiff.hpp"
#include "xlfnd/common.hpp"
#include "xlfnd/embedding.hpp"
#include "xlfnd/model.hpp"
#include "xlfnd/optim.hpp"

namespace xlfnd::training {

// Token and speaker indices point into FeatureSpace rows; -1 is a zero row.
struct Example {
  std::string id;
  std::vector<int> tokens;
  std::vector<int> speakers;
  int label = -1;  // 0 fake, 1 real, -1 unlabeled
};

struct FeatureSpace {
  embedding::Matrix words;
  embedding::Matrix speakers;
};

struct Dataset {
  FeatureSpace space;
  std::vector<Example> source;      // labeled, source language
  std::vector<Example> target;      // unlabeled, target language
  std::vector<Example> validation;  // labeled, target language
  std::vector<Example> test;        // labeled, target language
};

template <typename T>
model::BatchInput<T> make_batch(const FeatureSpace& space, const std::vector<Example>& pool,
                                const std::vector<std::size_t>& idx) {
  model::BatchInput<T> in;
  const auto dim = space.words.cols();
  Eigen::Index total = 0;
  for (auto i : idx) total += static_cast<Eigen::Index>(pool.at(i).tokens.size());
  in.article_rows = autodiff::Matrix<T>::Zero(total, dim);
  Eigen::Index row = 0;
  for (auto i : idx) {
    const auto& ex = pool[i];
    for (int t : ex.tokens) {
      if (t >= 0) in.article_rows.row(row) = space.words.row(t).template cast<T>();
      ++row;
    }
    in.article_lens.push_back(static_cast<int>(ex.tokens.size()));
    autodiff::Matrix<T> u = autodiff::Matrix<T>::Zero(static_cast<Eigen::Index>(ex.speakers.size()),
                                                      space.speakers.cols());
    for (std::size_t k = 0; k < ex.speakers.size(); ++k) {
      if (ex.speakers[k] >= 0) {
        u.row(static_cast<Eigen::Index>(k)) = space.speakers.row(ex.speakers[k]).template cast<T>();
      }
    }
    in.speakers.push_back(std::move(u));
  }
  return in;
}

struct TrainConfig {
  double lambda = 0.01;
  double clip = 0.01;
  int critic_steps = 5;
  double learning_rate = 0.0005;
  int epochs = 30;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Clip the critic into [-clip, clip] before the first critic step.
  bool clip_initial = true;
  // false trains article encoder + detector on cross-entropy alone.
  bool adversarial = true;
  // Stop after this many main iterations in total (0 = no cap).
  long max_iterations = 0;

  void validate() const {
    if (!(lambda >= 0.0)) throw ContractError("train config: lambda must be >= 0");
    if (!(clip > 0.0)) throw ContractError("train config: clip must be > 0");
    if (!(learning_rate > 0.0)) throw ContractError("train config: learning_rate must be > 0");
    if (critic_steps < 1) throw ContractError("train config: critic_steps must be >= 1");
    if (epochs < 1) throw ContractError("train config: epochs must be >= 1");
    if (batch_size < 1) throw ContractError("train config: batch_size must be >= 1");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, lambda, clip, critic_steps, learning_rate,
                                                epochs, batch_size, seed, beta1, beta2, eps,
                                                clip_initial, adversarial, max_iterations)

struct EpochRecord {
  int epoch = 0;
  double jd_estimate = 0.0;  // mean J_d over the epoch's main steps
  double ln = 0.0;           // mean detector cross-entropy
  double val_accuracy = 0.0;
  double wall_time_s = 0.0;
};

inline nlohmann::ordered_json to_log_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"J_d_estimate", r.jd_estimate},
          {"L_n", r.ln},
          {"val_accuracy", r.val_accuracy},
          {"wall_time_s", r.wall_time_s}};
}

// Epoch with the highest validation accuracy; ties go to the earliest.
inline int early_stop_select(const std::vector<std::pair<int, double>>& history) {
  if (history.empty()) throw ContractError("early_stop_select: empty history");
  auto best = history.front();
  for (const auto& h : history) {
    if (h.second > best.second) best = h;
  }
  return best.first;
}

struct StepLoss {
  double jd = 0.0;
  double ln = 0.0;
};

template <typename T>
struct TrainResult {
  model::ModelParams<T> best;
  int best_epoch = 0;
  double best_val_accuracy = -1.0;
  std::vector<EpochRecord> history;
  long critic_updates = 0;
  long main_updates = 0;
};

template <typename T>
class Trainer {
 public:
  using Mat = autodiff::Matrix<T>;
  using Var = autodiff::Var;
  using Hook = std::function<void(const Trainer&)>;

  Trainer(model::HyperConfig hyper, TrainConfig cfg, const Dataset& data, model::ModelParams<T> params)
      : hyper_(std::move(hyper)), cfg_(cfg), data_(data), params_(std::move(params)),
        opt_a_(params_.article, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps),
        opt_s_(params_.source, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps),
        opt_n_(params_.detector, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps),
        opt_d_(params_.critic, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps),
        rng_(derive_seed(cfg.seed, "training/batches")) {
    hyper_.validate();
    cfg_.validate();
    if (data_.source.empty()) throw ContractError("train: empty labeled source corpus");
    if (cfg_.adversarial && data_.target.empty()) throw ContractError("train: empty unlabeled target corpus");
    if (data_.space.words.cols() != hyper_.embed_dim) {
      throw ContractError("train: feature space dimension " + std::to_string(data_.space.words.cols()) +
                          " does not match embed_dim " + std::to_string(hyper_.embed_dim));
    }
  }

  const model::HyperConfig& hyper() const { return hyper_; }
  const TrainConfig& config() const { return cfg_; }
  const model::ModelParams<T>& params() const { return params_; }
  model::ModelParams<T>& mutable_params() { return params_; }
  long critic_updates() const { return critic_updates_; }
  long main_updates() const { return main_updates_; }
  double last_critic_objective() const { return last_critic_objective_; }

  Hook after_critic_step;
  Hook after_main_step;

  std::vector<std::size_t> sample(std::size_t pool_size) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(cfg_.batch_size));
    for (auto& i : idx) i = uniform_index(rng_, pool_size);
    return idx;
  }

  // One ascent step on mean D(e_src) - mean D(e_tgt) over theta_d, then
  // clipping into [-c, c]. Returns the objective before the step.
  double critic_step(const std::vector<std::size_t>& src, const std::vector<std::size_t>& tgt) {
    autodiff::Tape<T> tape;
    auto a = model::bind_set(tape, params_.article, false);
    auto s = model::bind_set(tape, params_.source, false);
    auto d = model::bind_set(tape, params_.critic, true);
    auto src_in = make_batch<T>(data_.space, data_.source, src);
    auto tgt_in = make_batch<T>(data_.space, data_.target, tgt);
    Var e_src = model::news_forward(tape, hyper_, a, s, src_in);
    Var e_tgt = model::news_forward(tape, hyper_, a, s, tgt_in);
    Var j = tape.sub(tape.mean(model::critic_forward(tape, hyper_, d, e_src)),
                     tape.mean(model::critic_forward(tape, hyper_, d, e_tgt)));
    const double objective = static_cast<double>(tape.value(j)(0, 0));
    if (!std::isfinite(objective)) abort_with("critic objective", src, tgt);
    tape.backward(tape.scale(j, T(-1)));
    opt_d_.step(params_.critic, model::harvest(tape, d));
    model::clip_params(params_.critic, static_cast<T>(cfg_.clip));
    ++critic_updates_;
    last_critic_objective_ = objective;
    if (after_critic_step) after_critic_step(*this);
    return objective;
  }

  struct MainGradients {
    StepLoss loss;
    std::vector<Mat> article, source, detector;
  };

  // theta_n descends L_n; theta_a and theta_s descend J_d + lambda * L_n with
  // the critic frozen. The lambda weighting enters through a gradient-scale
  // node between the encoders and the detector, so one backward pass yields
  // both objectives' gradients.
  MainGradients main_gradients(const std::vector<std::size_t>& src, const std::vector<std::size_t>& tgt) const {
    autodiff::Tape<T> tape;
    auto a = model::bind_set(tape, params_.article, true);
    auto s = model::bind_set(tape, params_.source, true);
    auto n = model::bind_set(tape, params_.detector, true);
    auto d = model::bind_set(tape, params_.critic, false);
    auto src_in = make_batch<T>(data_.space, data_.source, src);
    auto tgt_in = make_batch<T>(data_.space, data_.target, tgt);
    Var e_src = model::news_forward(tape, hyper_, a, s, src_in);
    Var e_tgt = model::news_forward(tape, hyper_, a, s, tgt_in);
    Var logits = model::detector_logits(tape, hyper_, n, tape.grad_scale(e_src, static_cast<T>(cfg_.lambda)));
    Var ln = tape.softmax_cross_entropy(logits, labels_of(data_.source, src));
    Var jd = tape.sub(tape.mean(model::critic_forward(tape, hyper_, d, e_src)),
                      tape.mean(model::critic_forward(tape, hyper_, d, e_tgt)));
    MainGradients g;
    g.loss = {static_cast<double>(tape.value(jd)(0, 0)), static_cast<double>(tape.value(ln)(0, 0))};
    if (!std::isfinite(g.loss.jd) || !std::isfinite(g.loss.ln)) abort_with("main loss", src, tgt);
    tape.backward(tape.add(jd, ln));
    g.article = model::harvest(tape, a);
    g.source = model::harvest(tape, s);
    g.detector = model::harvest(tape, n);
    return g;
  }

  StepLoss main_step(const std::vector<std::size_t>& src, const std::vector<std::size_t>& tgt) {
    auto g = main_gradients(src, tgt);
    opt_a_.step(params_.article, g.article);
    opt_s_.step(params_.source, g.source);
    opt_n_.step(params_.detector, g.detector);
    ++main_updates_;
    if (after_main_step) after_main_step(*this);
    return g.loss;
  }

  // Cross-entropy only: article encoder (+ source encoder when enabled) and
  // detector, no critic.
  double supervised_step(const std::vector<std::size_t>& src) {
    autodiff::Tape<T> tape;
    auto a = model::bind_set(tape, params_.article, true);
    auto s = model::bind_set(tape, params_.source, true);
    auto n = model::bind_set(tape, params_.detector, true);
    auto in = make_batch<T>(data_.space, data_.source, src);
    Var e = model::news_forward(tape, hyper_, a, s, in);
    Var ln = tape.softmax_cross_entropy(model::detector_logits(tape, hyper_, n, e), labels_of(data_.source, src));
    const double loss = static_cast<double>(tape.value(ln)(0, 0));
    if (!std::isfinite(loss)) abort_with("supervised loss", src, {});
    tape.backward(ln);
    apply(tape, a, s, n);
    ++main_updates_;
    if (after_main_step) after_main_step(*this);
    return loss;
  }

  TrainResult<T> train() {
    if (data_.validation.empty()) throw ContractError("train: empty target validation set");
    if (cfg_.adversarial && cfg_.clip_initial) model::clip_params(params_.critic, static_cast<T>(cfg_.clip));
    TrainResult<T> result;
    const auto start = std::chrono::steady_clock::now();
    const long per_epoch = static_cast<long>((data_.source.size() + static_cast<std::size_t>(cfg_.batch_size) - 1) /
                                             static_cast<std::size_t>(cfg_.batch_size));
    for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
      EpochRecord rec;
      rec.epoch = epoch;
      long steps = 0;
      for (long it = 0; it < per_epoch; ++it) {
        if (cfg_.max_iterations > 0 && main_updates_ >= cfg_.max_iterations) break;
        if (cfg_.adversarial) {
          for (int k = 0; k < cfg_.critic_steps; ++k) {
            auto src = sample(data_.source.size());
            auto tgt = sample(data_.target.size());
            critic_step(src, tgt);
          }
          auto src = sample(data_.source.size());
          auto tgt = sample(data_.target.size());
          auto loss = main_step(src, tgt);
          rec.jd_estimate += loss.jd;
          rec.ln += loss.ln;
        } else {
          rec.ln += supervised_step(sample(data_.source.size()));
        }
        ++steps;
      }
      if (steps == 0) break;
      rec.jd_estimate /= static_cast<double>(steps);
      rec.ln /= static_cast<double>(steps);
      rec.val_accuracy = accuracy(data_.validation);
      rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.history.push_back(rec);
      if (rec.val_accuracy > result.best_val_accuracy) {
        result.best_val_accuracy = rec.val_accuracy;
        result.best_epoch = epoch;
        result.best = params_;
      }
    }
    result.critic_updates = critic_updates_;
    result.main_updates = main_updates_;
    return result;
  }

  // Probability of "real" per example.
  std::vector<double> predict_real(const std::vector<Example>& pool) const {
    return predict_real(hyper_, params_, data_.space, pool);
  }

  static std::vector<double> predict_real(const model::HyperConfig& hyper, const model::ModelParams<T>& params,
                                          const FeatureSpace& space, const std::vector<Example>& pool) {
    std::vector<double> out;
    out.reserve(pool.size());
    constexpr std::size_t chunk = 256;
    for (std::size_t lo = 0; lo < pool.size(); lo += chunk) {
      std::vector<std::size_t> idx;
      for (std::size_t i = lo; i < std::min(pool.size(), lo + chunk); ++i) idx.push_back(i);
      autodiff::Tape<T> tape;
      auto a = model::bind_set(tape, params.article, false);
      auto s = model::bind_set(tape, params.source, false);
      auto n = model::bind_set(tape, params.detector, false);
      auto in = make_batch<T>(space, pool, idx);
      Var logits = model::detector_logits(tape, hyper, n, model::news_forward(tape, hyper, a, s, in));
      Mat p = autodiff::Tape<T>::softmax_rows(tape.value(logits));
      for (Eigen::Index r = 0; r < p.rows(); ++r) out.push_back(static_cast<double>(p(r, 1)));
    }
    return out;
  }

  double accuracy(const std::vector<Example>& pool) const {
    auto p = predict_real(pool);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) correct += (p[i] >= 0.5 ? 1 : 0) == pool[i].label;
    return pool.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pool.size());
  }

 private:
  static std::vector<int> labels_of(const std::vector<Example>& pool, const std::vector<std::size_t>& idx) {
    std::vector<int> y;
    y.reserve(idx.size());
    for (auto i : idx) {
      if (pool[i].label < 0) throw ContractError("train: unlabeled example '" + pool[i].id + "' in labeled batch");
      y.push_back(pool[i].label);
    }
    return y;
  }

  void apply(const autodiff::Tape<T>& tape, const model::Bound<T>& a, const model::Bound<T>& s,
             const model::Bound<T>& n) {
    opt_a_.step(params_.article, model::harvest(tape, a));
    opt_s_.step(params_.source, model::harvest(tape, s));
    opt_n_.step(params_.detector, model::harvest(tape, n));
  }

  [[noreturn]] void abort_with(const char* what, const std::vector<std::size_t>& src,
                               const std::vector<std::size_t>& tgt) const {
    std::string msg = std::string("non-finite ") + what + " at main iteration " + std::to_string(main_updates_) +
                      ", critic update " + std::to_string(critic_updates_) + "; source batch ids:";
    for (std::size_t i = 0; i < std::min<std::size_t>(src.size(), 8); ++i) msg += " " + data_.source[src[i]].id;
    if (!tgt.empty()) {
      msg += "; target batch ids:";
      for (std::size_t i = 0; i < std::min<std::size_t>(tgt.size(), 8); ++i) msg += " " + data_.target[tgt[i]].id;
    }
    throw AbortError(msg);
  }

  model::HyperConfig hyper_;
  TrainConfig cfg_;
  const Dataset& data_;
  model::ModelParams<T> params_;
  optim::Adam<T> opt_a_, opt_s_, opt_n_, opt_d_;
  Rng rng_;
  long critic_updates_ = 0;
  long main_updates_ = 0;
  double last_critic_objective_ = 0.0;
};

}  // namespace xlfnd::training
