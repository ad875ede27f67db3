#pragma once

// Classification metrics, RANDOM and text-CNN baselines, multi-trial
// reports and the ablation runner.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlfnd/common.hpp"
#include "xlfnd/embedding.hpp"
#include "xlfnd/json_enum.hpp"
#include "xlfnd/model.hpp"
#include "xlfnd/pipeline.hpp"
#include "xlfnd/source_extract.hpp"
#include "xlfnd/training.hpp"

namespace xlfnd::eval {

// Class indices follow training::Example: 0 fake, 1 real. Fake is positive.
struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
};

inline Confusion confusion(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw ContractError("confusion: prediction/label count mismatch");
  Confusion c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool pred_fake = predicted[i] == 0, fake = truth[i] == 0;
    if (pred_fake && fake) ++c.tp;
    if (pred_fake && !fake) ++c.fp;
    if (!pred_fake && !fake) ++c.tn;
    if (!pred_fake && fake) ++c.fn;
  }
  return c;
}

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_degenerate = false;
  bool recall_degenerate = false;
  bool f1_degenerate = false;
};

// Zero denominators give 0 and set the matching flag.
inline Metrics metrics(const Confusion& c) {
  if (c.total() == 0) throw ContractError("metrics: empty confusion matrix");
  Metrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.tp + c.fp == 0) {
    m.precision_degenerate = true;
  } else {
    m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  }
  if (c.tp + c.fn == 0) {
    m.recall_degenerate = true;
  } else {
    m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  }
  if (m.precision + m.recall == 0.0) {
    m.f1_degenerate = true;
  } else {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

inline nlohmann::ordered_json to_json(const Metrics& m) {
  nlohmann::ordered_json j{{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
  nlohmann::ordered_json degenerate = nlohmann::ordered_json::array();
  if (m.precision_degenerate) degenerate.push_back("precision");
  if (m.recall_degenerate) degenerate.push_back("recall");
  if (m.f1_degenerate) degenerate.push_back("f1");
  if (!degenerate.empty()) j["degenerate"] = degenerate;
  return j;
}

// ---------------------------------------------------------------------------
// Reports

struct TrialResult {
  std::uint64_t seed = 0;
  Confusion confusion;
  Metrics metrics;
  int best_epoch = 0;  // 0 when no training happened
};

struct TrialReport {
  std::string config_fingerprint;
  std::vector<TrialResult> trials;
  Metrics mean;
};

inline std::string fingerprint(const nlohmann::ordered_json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config.dump())));
  return buf;
}

// Arithmetic mean of the per-trial values; degeneracy flags are OR-ed.
inline Metrics mean_metrics(const std::vector<TrialResult>& trials) {
  if (trials.empty()) throw ContractError("mean_metrics: no trials");
  Metrics m;
  for (const auto& t : trials) {
    m.accuracy += t.metrics.accuracy;
    m.precision += t.metrics.precision;
    m.recall += t.metrics.recall;
    m.f1 += t.metrics.f1;
    m.precision_degenerate |= t.metrics.precision_degenerate;
    m.recall_degenerate |= t.metrics.recall_degenerate;
    m.f1_degenerate |= t.metrics.f1_degenerate;
  }
  const auto n = static_cast<double>(trials.size());
  m.accuracy /= n;
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  return m;
}

inline TrialReport make_report(std::string config_fingerprint, std::vector<TrialResult> trials) {
  TrialReport r;
  r.config_fingerprint = std::move(config_fingerprint);
  r.mean = mean_metrics(trials);
  r.trials = std::move(trials);
  return r;
}

inline nlohmann::ordered_json to_json(const TrialReport& r) {
  nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
  nlohmann::ordered_json per_trial = nlohmann::ordered_json::array();
  for (const auto& t : r.trials) {
    seeds.push_back(t.seed);
    auto j = to_json(t.metrics);
    j["seed"] = t.seed;
    j["confusion"] = {{"tp", t.confusion.tp}, {"fp", t.confusion.fp}, {"tn", t.confusion.tn}, {"fn", t.confusion.fn}};
    if (t.best_epoch) j["best_epoch"] = t.best_epoch;
    per_trial.push_back(std::move(j));
  }
  return {{"config_fingerprint", r.config_fingerprint},
          {"seeds", seeds},
          {"per_trial", per_trial},
          {"mean", to_json(r.mean)}};
}

inline std::vector<std::uint64_t> trial_seeds(std::uint64_t seed, int trials) {
  if (trials < 1) throw ContractError("trials must be >= 1");
  std::vector<std::uint64_t> out;
  for (int t = 0; t < trials; ++t) out.push_back(derive_seed(seed, "trial/" + std::to_string(t)));
  return out;
}

// ---------------------------------------------------------------------------
// RANDOM baseline

inline TrialReport random_baseline(const std::vector<int>& labels, std::uint64_t seed, int trials = 5) {
  if (labels.empty()) throw ContractError("random_baseline: empty test set");
  std::vector<TrialResult> out;
  for (auto s : trial_seeds(derive_seed(seed, "random"), trials)) {
    Rng rng(s);
    std::vector<int> pred(labels.size());
    for (auto& p : pred) p = uniform01(rng) < 0.5 ? 0 : 1;
    TrialResult t;
    t.seed = s;
    t.confusion = confusion(pred, labels);
    t.metrics = metrics(t.confusion);
    out.push_back(t);
  }
  return make_report(fingerprint({{"baseline", "random"}, {"seed", seed}, {"trials", trials}}), std::move(out));
}

// ---------------------------------------------------------------------------
// Supervised training/evaluation helpers

inline std::vector<int> labels_of(const std::vector<training::Example>& pool) {
  std::vector<int> y;
  y.reserve(pool.size());
  for (const auto& ex : pool) {
    if (ex.label < 0) throw ContractError("evaluation: unlabeled example '" + ex.id + "'");
    y.push_back(ex.label);
  }
  return y;
}

template <typename T>
std::vector<int> predict(const model::HyperConfig& hyper, const model::ModelParams<T>& params,
                         const training::FeatureSpace& space, const std::vector<training::Example>& pool) {
  std::vector<int> out;
  for (double p : training::Trainer<T>::predict_real(hyper, params, space, pool)) out.push_back(p >= 0.5 ? 1 : 0);
  return out;
}

// Fold id per item; each class is shuffled and dealt round-robin, so every
// fold's class counts differ by at most one.
inline std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed) {
  if (folds < 2) throw ContractError("stratified_folds: need at least 2 folds");
  std::vector<int> fold(labels.size(), -1);
  Rng rng(derive_seed(seed, "folds"));
  for (int cls : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) members.push_back(i);
    }
    if (members.size() < static_cast<std::size_t>(folds)) {
      throw ContractError("stratified_folds: class " + std::to_string(cls) + " has " +
                          std::to_string(members.size()) + " items, fewer than " + std::to_string(folds) +
                          " folds");
    }
    seeded_shuffle(members, rng);
    for (std::size_t k = 0; k < members.size(); ++k) fold[members[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (fold[i] < 0) throw ContractError("stratified_folds: label outside {0, 1}");
  }
  return fold;
}

struct ExperimentConfig {
  model::HyperConfig hyper;
  training::TrainConfig train;
  embedding::TrainConfig embedding;
  std::uint64_t seed = 0;
  int trials = 5;
};

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::json hyper = c.hyper, train = c.train;
  nlohmann::ordered_json emb{{"dim", c.embedding.dim},
                             {"window", c.embedding.window},
                             {"min_count", c.embedding.min_count},
                             {"label_tokens", c.embedding.label_tokens},
                             {"label_weight", c.embedding.label_weight},
                             {"context_smoothing", c.embedding.context_smoothing},
                             {"exact_svd_limit", c.embedding.exact_svd_limit}};
  return {{"hyper", hyper}, {"train", train}, {"embedding", emb}, {"seed", c.seed}, {"trials", c.trials}};
}

// Article encoder + detector on cross-entropy alone, k-fold over a labeled
// target set; one report entry per fold. Early stopping selects on the
// training folds.
template <typename T = float>
TrialReport textcnn_crossval(const std::vector<training::Example>& labeled, const training::FeatureSpace& space,
                             ExperimentConfig cfg, int folds = 5) {
  cfg.hyper.use_source = false;
  cfg.train.adversarial = false;
  const auto y = labels_of(labeled);
  const auto fold = stratified_folds(y, folds, derive_seed(cfg.seed, "textcnn"));
  std::vector<TrialResult> out;
  for (int f = 0; f < folds; ++f) {
    training::Dataset d;
    d.space = space;
    for (std::size_t i = 0; i < labeled.size(); ++i) (fold[i] == f ? d.test : d.source).push_back(labeled[i]);
    d.validation = d.source;
    TrialResult t;
    t.seed = derive_seed(cfg.seed, "textcnn/fold/" + std::to_string(f));
    auto tc = cfg.train;
    tc.seed = t.seed;
    training::Trainer<T> trainer(cfg.hyper, tc, d, model::init_params<T>(cfg.hyper, derive_seed(t.seed, "init")));
    auto res = trainer.train();
    t.best_epoch = res.best_epoch;
    t.confusion = confusion(predict(cfg.hyper, res.best, d.space, d.test), labels_of(d.test));
    t.metrics = metrics(t.confusion);
    out.push_back(t);
  }
  auto config = to_json(cfg);
  config["baseline"] = "textcnn";
  config["folds"] = folds;
  return make_report(fingerprint(config), std::move(out));
}

// ---------------------------------------------------------------------------
// Ablations

enum class Encoder { cnn, lstm_last, lstm_first, lstm_attention, lstm_mean };

XLFND_JSON_ENUM(Encoder, {{Encoder::cnn, "cnn"},
                                       {Encoder::lstm_last, "lstm_last"},
                                       {Encoder::lstm_first, "lstm_first"},
                                       {Encoder::lstm_attention, "lstm_attention"},
                                       {Encoder::lstm_mean, "lstm_mean"}})

struct AblationSpec {
  source::TypeSet source_data_types{source::EntityType::person};
  bool shuffle = false;
  pipeline::SpeakerEmbedding embedding = pipeline::SpeakerEmbedding::bse;
  Encoder encoder = Encoder::lstm_mean;
  // false drops the source channel entirely (article vector only).
  bool use_source = true;

  bool operator==(const AblationSpec&) const = default;
};

inline void to_json(nlohmann::json& j, const AblationSpec& s) {
  std::vector<std::string> types;
  for (auto t : s.source_data_types) types.emplace_back(source::to_string(t));
  j = {{"source_data_types", types},
       {"shuffle", s.shuffle},
       {"embedding", s.embedding},
       {"encoder", s.encoder},
       {"use_source", s.use_source}};
}

inline void from_json(const nlohmann::json& j, AblationSpec& s) {
  if (!j.is_object()) throw ContractError("ablation spec must be an object");
  AblationSpec out;
  for (const auto& [key, value] : j.items()) {
    if (key == "source_data_types") {
      out.source_data_types.clear();
      for (const auto& t : value) out.source_data_types.insert(source::entity_type_from_string(t.get<std::string>()));
      if (out.source_data_types.empty()) throw ContractError("ablation spec: empty source_data_types");
    } else if (key == "shuffle") {
      out.shuffle = value.get<bool>();
    } else if (key == "embedding") {
      auto e = value.get<std::string>();
      if (e != "BWE" && e != "BSE") throw ContractError("ablation spec: embedding must be BWE or BSE");
      out.embedding = value.get<pipeline::SpeakerEmbedding>();
    } else if (key == "encoder") {
      auto e = value.get<std::string>();
      if (e != "cnn" && e != "lstm_last" && e != "lstm_first" && e != "lstm_attention" && e != "lstm_mean") {
        throw ContractError("ablation spec: unknown encoder '" + e + "'");
      }
      out.encoder = value.get<Encoder>();
    } else if (key == "use_source") {
      out.use_source = value.get<bool>();
    } else {
      throw ContractError("ablation spec: unknown key '" + key + "'");
    }
  }
  s = out;
}

inline void apply(const AblationSpec& spec, model::HyperConfig& hyper) {
  hyper.use_source = spec.use_source;
  hyper.source_encoder_kind = spec.encoder == Encoder::cnn ? model::SourceEncoderKind::cnn
                                                           : model::SourceEncoderKind::bilstm;
  switch (spec.encoder) {
    case Encoder::lstm_last: hyper.pooling = model::Pooling::last; break;
    case Encoder::lstm_first: hyper.pooling = model::Pooling::first; break;
    case Encoder::lstm_attention: hyper.pooling = model::Pooling::attention; break;
    case Encoder::cnn:
    case Encoder::lstm_mean: hyper.pooling = model::Pooling::mean; break;
  }
}

inline std::pair<std::string, std::string> describe(const AblationSpec& s) {
  const AblationSpec base;
  if (!s.use_source) return {"Source Data", "none"};
  std::vector<std::pair<std::string, std::string>> parts;
  if (s.source_data_types != base.source_data_types || s.shuffle) {
    std::string f;
    if (s.source_data_types.count(source::EntityType::person)) f = "PER";
    if (s.source_data_types.count(source::EntityType::org)) f += f.empty() ? "ORG" : " & ORG";
    if (s.source_data_types.count(source::EntityType::other)) f += f.empty() ? "OTHER" : " & OTHER";
    if (s.shuffle) f += " (shuffled)";
    parts.emplace_back("Source Data", f);
  }
  if (s.embedding != base.embedding) parts.emplace_back("Source Embedding", "BWE");
  if (s.encoder != base.encoder) {
    static const char* names[] = {"CNN", "LSTM (last)", "LSTM (first)", "LSTM (attention)", "LSTM (mean)"};
    parts.emplace_back("Source Encoder", names[static_cast<int>(s.encoder)]);
  }
  if (parts.empty()) return {"Proposed", "PER, BSE, LSTM (mean)"};
  std::pair<std::string, std::string> out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    out.first += "; " + parts[i].first;
    out.second += "; " + parts[i].second;
  }
  return out;
}

inline pipeline::FeatureConfig feature_config(const AblationSpec& spec, const ExperimentConfig& cfg) {
  pipeline::FeatureConfig fc;
  fc.types = spec.source_data_types;
  fc.max_len = static_cast<std::size_t>(cfg.hyper.max_len);
  if (spec.shuffle) fc.shuffle_seed = derive_seed(cfg.seed, "shuffle");
  return fc;
}

inline embedding::TrainConfig embedding_config(const ExperimentConfig& cfg) {
  auto e = cfg.embedding;
  e.seed = derive_seed(cfg.seed, "embedding");
  return e;
}

// Trains and evaluates one configuration per trial seed on an already
// featurized dataset.
template <typename T = float>
std::vector<TrialResult> run_trials(const training::Dataset& data, const model::HyperConfig& hyper,
                                    const ExperimentConfig& cfg) {
  std::vector<TrialResult> out;
  const auto truth = labels_of(data.test);
  for (auto s : trial_seeds(cfg.seed, cfg.trials)) {
    auto tc = cfg.train;
    tc.seed = s;
    training::Trainer<T> trainer(hyper, tc, data, model::init_params<T>(hyper, derive_seed(s, "init")));
    auto res = trainer.train();
    TrialResult t;
    t.seed = s;
    t.best_epoch = res.best_epoch;
    t.confusion = confusion(predict(hyper, res.best, data.space, data.test), truth);
    t.metrics = metrics(t.confusion);
    out.push_back(t);
  }
  return out;
}

// End-to-end train + evaluate of one ablation row over cfg.trials seeds.
// Trials vary the training seed only; embeddings and features are shared.
template <typename T = float>
TrialReport run_ablation(const AblationSpec& spec, const pipeline::Corpora& corpora, const ExperimentConfig& cfg) {
  auto hyper = cfg.hyper;
  apply(spec, hyper);
  auto spaces = pipeline::build_spaces(corpora, embedding_config(cfg), spec.embedding);
  auto data = pipeline::featurize(corpora, spaces, feature_config(spec, cfg));
  auto config = to_json(cfg);
  config["ablation"] = nlohmann::json(spec);
  return make_report(fingerprint(config), run_trials<T>(data, hyper, cfg));
}

inline void write_ablation_csv(std::ostream& out, const std::vector<std::pair<AblationSpec, TrialReport>>& rows) {
  out << "component,features,accuracy,precision,recall,f1\n";
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  for (const auto& [spec, report] : rows) {
    auto [component, features] = describe(spec);
    char buf[128];
    std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.4f,%.4f", report.mean.accuracy, report.mean.precision,
                  report.mean.recall, report.mean.f1);
    out << quote(component) << ',' << quote(features) << ',' << buf << '\n';
  }
}

}  // namespace xlfnd::eval
