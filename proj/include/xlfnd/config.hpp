#pragma once

// Run configuration: one JSON document binding every module's settings.
// Unknown keys are rejected at every level; absent keys keep defaults.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlfnd/common.hpp"
#include "xlfnd/credibility.hpp"
#include "xlfnd/embedding.hpp"
#include "xlfnd/eval.hpp"
#include "xlfnd/model.hpp"
#include "xlfnd/pipeline.hpp"
#include "xlfnd/synthetic.hpp"
#include "xlfnd/training.hpp"

namespace xlfnd::config {

struct Paths {
  std::string source_labeled;
  std::string target_unlabeled;
  std::string target_val;
  std::string target_eval;
  std::string dictionary;
  std::string gazetteer;
  // Directory holding aligned words.tsv / speakers.tsv; empty rebuilds them.
  std::string spaces;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Paths, source_labeled, target_unlabeled, target_val, target_eval,
                                                dictionary, gazetteer, spaces)

struct EmbeddingSettings {
  std::size_t dim = 100;
  std::size_t window = 5;
  std::size_t min_count = 1;
  double context_smoothing = 0.75;
  std::size_t exact_svd_limit = 2500;
  bool label_tokens = true;
  double label_weight = 1.0;

  embedding::TrainConfig to_train_config() const {
    embedding::TrainConfig c;
    c.dim = dim;
    c.window = window;
    c.min_count = min_count;
    c.context_smoothing = context_smoothing;
    c.exact_svd_limit = exact_svd_limit;
    c.label_tokens = label_tokens;
    c.label_weight = label_weight;
    return c;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EmbeddingSettings, dim, window, min_count, context_smoothing,
                                                exact_svd_limit, label_tokens, label_weight)

struct DiffCredSettings {
  std::size_t m = 40;
  std::size_t n = 5;
  std::string metric = "cosine";
  // Speakers ranked per language; m / 2 from each of two languages.
  bool per_language = true;

  credibility::DiffCredConfig to_config() const {
    credibility::DiffCredConfig c;
    c.m = m;
    c.n = n;
    if (metric == "cosine") {
      c.metric = credibility::Metric::cosine;
    } else if (metric == "euclidean") {
      c.metric = credibility::Metric::euclidean;
    } else {
      throw ContractError("diffcred: unknown metric '" + metric + "'");
    }
    return c;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DiffCredSettings, m, n, metric, per_language)

struct RunConfig {
  std::uint64_t seed = 1;
  int trials = 5;
  bool strict_serial = false;
  std::string label_scheme = "six-class";
  Paths paths;
  synthetic::SyntheticSpec synthetic;
  EmbeddingSettings embedding;
  model::HyperConfig hyper;
  training::TrainConfig train;
  DiffCredSettings diffcred;
  // The configuration trained by `train`.
  eval::AblationSpec system;
  std::vector<eval::AblationSpec> ablation_grid;

  eval::ExperimentConfig experiment() const {
    eval::ExperimentConfig e;
    e.hyper = hyper;
    e.train = train;
    e.embedding = embedding.to_train_config();
    e.seed = seed;
    e.trials = trials;
    return e;
  }
};

// Proposed system first, then one row per single-factor change.
inline std::vector<eval::AblationSpec> default_grid() {
  using source::EntityType;
  std::vector<eval::AblationSpec> g;
  eval::AblationSpec base;
  g.push_back(base);
  auto s = base;
  s.source_data_types = {EntityType::person, EntityType::org};
  g.push_back(s);
  s = base;
  s.source_data_types = {EntityType::org};
  g.push_back(s);
  s = base;
  s.shuffle = true;
  g.push_back(s);
  s = base;
  s.embedding = pipeline::SpeakerEmbedding::bwe;
  g.push_back(s);
  for (auto e : {eval::Encoder::cnn, eval::Encoder::lstm_last, eval::Encoder::lstm_first,
                 eval::Encoder::lstm_attention}) {
    s = base;
    s.encoder = e;
    g.push_back(s);
  }
  return g;
}

namespace detail {

// Keys of `j` must appear in the serialized defaults.
inline void check_keys(const nlohmann::json& j, const nlohmann::json& defaults, const std::string& where) {
  if (!j.is_object()) throw ContractError("config: '" + where + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!defaults.contains(key)) throw ContractError("config: unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
T strict_get(const nlohmann::json& j, const std::string& where) {
  nlohmann::json defaults = T{};
  check_keys(j, defaults, where);
  defaults.update(j);
  try {
    return defaults.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("config: invalid '" + where + "': " + e.what());
  }
}

}  // namespace detail

inline RunConfig from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys{"seed",  "trials",   "strict_serial", "label_scheme", "paths",
                                          "synthetic", "embedding", "hyper", "train", "diffcred",
                                          "system", "ablation_grid"};
  if (!j.is_object()) throw ContractError("config: top level must be an object");
  RunConfig c;
  c.ablation_grid = default_grid();
  try {
    for (const auto& [key, value] : j.items()) {
      if (!keys.count(key)) throw ContractError("config: unknown key '" + key + "'");
      if (key == "seed") c.seed = value.get<std::uint64_t>();
      if (key == "trials") c.trials = value.get<int>();
      if (key == "strict_serial") c.strict_serial = value.get<bool>();
      if (key == "label_scheme") c.label_scheme = value.get<std::string>();
      if (key == "paths") c.paths = detail::strict_get<Paths>(value, key);
      if (key == "synthetic") value.get_to(c.synthetic);
      if (key == "embedding") c.embedding = detail::strict_get<EmbeddingSettings>(value, key);
      if (key == "hyper") c.hyper = detail::strict_get<model::HyperConfig>(value, key);
      if (key == "train") c.train = detail::strict_get<training::TrainConfig>(value, key);
      if (key == "diffcred") c.diffcred = detail::strict_get<DiffCredSettings>(value, key);
      if (key == "system") value.get_to(c.system);
      if (key == "ablation_grid") {
        c.ablation_grid.clear();
        for (const auto& row : value) c.ablation_grid.push_back(row.get<eval::AblationSpec>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("config: ") + e.what());
  }
  if (c.trials < 1) throw ContractError("config: trials must be >= 1");
  c.hyper.validate();
  c.train.validate();
  corpus::scheme_by_name(c.label_scheme);
  c.diffcred.to_config();
  return c;
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["trials"] = c.trials;
  j["strict_serial"] = c.strict_serial;
  j["label_scheme"] = c.label_scheme;
  j["paths"] = nlohmann::json(c.paths);
  j["synthetic"] = nlohmann::json(c.synthetic);
  j["embedding"] = nlohmann::json(c.embedding);
  j["hyper"] = nlohmann::json(c.hyper);
  j["train"] = nlohmann::json(c.train);
  j["diffcred"] = nlohmann::json(c.diffcred);
  j["system"] = nlohmann::json(c.system);
  j["ablation_grid"] = nlohmann::json(c.ablation_grid);
  return j;
}

// Corpora named by paths; with no source_labeled path the synthetic fixture
// described by c.synthetic is generated instead.
inline pipeline::Corpora corpora(const RunConfig& c) {
  if (c.paths.source_labeled.empty()) return pipeline::from_synthetic(synthetic::generate_synthetic(c.synthetic));
  const auto scheme = corpus::scheme_by_name(c.label_scheme);
  auto require = [](const std::string& p, const char* key) {
    if (p.empty()) throw ContractError(std::string("config: paths.") + key + " is required with paths.source_labeled");
    return p;
  };
  pipeline::Corpora out;
  out.source_labeled = corpus::read_articles(c.paths.source_labeled, corpus::default_tokenizer(), &scheme);
  out.target_unlabeled = corpus::read_articles(require(c.paths.target_unlabeled, "target_unlabeled"));
  out.target_val = corpus::read_articles(require(c.paths.target_val, "target_val"), corpus::default_tokenizer(),
                                         &scheme);
  out.target_eval = corpus::read_articles(require(c.paths.target_eval, "target_eval"), corpus::default_tokenizer(),
                                          &scheme);
  out.dictionary = corpus::read_dictionary(require(c.paths.dictionary, "dictionary"));
  out.gazetteer = source::read_gazetteer(require(c.paths.gazetteer, "gazetteer"));
  for (const auto& a : out.source_labeled) {
    if (a.label == corpus::Label::unlabeled) throw ContractError("config: source article '" + a.id + "' is unlabeled");
  }
  for (const auto& a : out.target_unlabeled) {
    if (a.label != corpus::Label::unlabeled) {
      throw ContractError("config: unlabeled target article '" + a.id + "' carries a label");
    }
  }
  return out;
}

inline RunConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace xlfnd::config
