#pragma once

// Corpora -> bilingual embedding spaces -> index features for training.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xlfnd/common.hpp"
#include "xlfnd/corpus.hpp"
#include "xlfnd/corpus_io.hpp"
#include "xlfnd/credibility.hpp"
#include "xlfnd/embedding.hpp"
#include "xlfnd/json_enum.hpp"
#include "xlfnd/source_extract.hpp"
#include "xlfnd/synthetic.hpp"
#include "xlfnd/training.hpp"

namespace xlfnd::pipeline {

enum class SpeakerEmbedding { bwe, bse };

XLFND_JSON_ENUM(SpeakerEmbedding, {{SpeakerEmbedding::bwe, "BWE"}, {SpeakerEmbedding::bse, "BSE"}})

struct Corpora {
  corpus::Corpus source_labeled;
  corpus::Corpus target_unlabeled;
  corpus::Corpus target_val;
  corpus::Corpus target_eval;
  corpus::DictionaryPairs dictionary;
  source::Gazetteer gazetteer;
};

inline Corpora from_synthetic(const synthetic::SyntheticCorpora& s) {
  return {s.source_labeled, s.target_unlabeled, s.target_val, s.target_eval, s.dictionary, s.gazetteer};
}

struct EmbeddingSpaces {
  embedding::EmbeddingTable words;     // both languages, target coordinates
  embedding::EmbeddingTable speakers;  // both languages, target coordinates
  embedding::AlignmentResult word_alignment;
  embedding::AlignmentResult speaker_alignment;
};

// Union of two tables with disjoint vocabularies.
inline embedding::EmbeddingTable merge(const embedding::EmbeddingTable& a, const embedding::EmbeddingTable& b) {
  if (a.dim() != b.dim()) throw ContractError("merge: dimension mismatch");
  std::vector<std::string> tokens = a.tokens();
  tokens.insert(tokens.end(), b.tokens().begin(), b.tokens().end());
  embedding::Matrix v(a.vectors().rows() + b.vectors().rows(), a.vectors().cols());
  v << a.vectors(), b.vectors();
  return embedding::EmbeddingTable(std::move(tokens), std::move(v), a.language() + "+" + b.language());
}

// A target entity listed in the gazetteer whose dictionary translation has a
// source vector takes that vector: one entity, one point in the shared space.
inline embedding::EmbeddingTable share_entity_vectors(const embedding::EmbeddingTable& target,
                                                      const embedding::EmbeddingTable& aligned_source,
                                                      const corpus::DictionaryPairs& dict,
                                                      const source::Gazetteer& gazetteer) {
  embedding::Matrix v = target.vectors();
  for (const auto& [s, t] : dict) {
    const auto row = target.find(t);
    if (row < 0 || !gazetteer.count(t) || !aligned_source.contains(s)) continue;
    v.row(row) = aligned_source.lookup(s).transpose();
  }
  return embedding::EmbeddingTable(target.tokens(), std::move(v), target.language());
}

// Monolingual tables: label-free word embeddings of each language and, for
// BSE, a source embedding trained with label contexts.
struct MonolingualTables {
  embedding::EmbeddingTable source_words;
  embedding::EmbeddingTable target_words;
  std::optional<embedding::EmbeddingTable> source_bse;
};

inline MonolingualTables train_tables(const Corpora& c, embedding::TrainConfig cfg, SpeakerEmbedding kind) {
  if (c.source_labeled.empty()) throw ContractError("build_spaces: empty labeled source corpus");
  if (c.target_unlabeled.empty()) throw ContractError("build_spaces: empty unlabeled target corpus");
  const std::string src_lang = c.source_labeled.front().lang;
  const std::string tgt_lang = c.target_unlabeled.front().lang;
  MonolingualTables out;
  auto plain = cfg;
  plain.label_tokens = false;
  plain.seed = derive_seed(cfg.seed, "embedding/source");
  out.source_words = embedding::train_source_embedding(c.source_labeled, plain, src_lang);
  plain.seed = derive_seed(cfg.seed, "embedding/target");
  out.target_words = embedding::train_source_embedding(c.target_unlabeled, plain, tgt_lang);
  if (kind == SpeakerEmbedding::bse) {
    auto labeled = cfg;
    labeled.label_tokens = true;
    labeled.seed = derive_seed(cfg.seed, "embedding/source-bse");
    out.source_bse = embedding::train_source_embedding(c.source_labeled, labeled, src_lang);
  }
  return out;
}

// Word space: source words mapped onto target words. Speaker space: BWE reuses
// the word space; BSE maps the label-context source table and shares
// dictionary-paired entity vectors across languages.
inline EmbeddingSpaces align_tables(const MonolingualTables& t, const corpus::DictionaryPairs& dict,
                                    const source::Gazetteer& gazetteer, SpeakerEmbedding kind) {
  EmbeddingSpaces out;
  out.word_alignment = embedding::procrustes_align(t.source_words, t.target_words, dict);
  out.words = merge(embedding::apply_alignment(t.source_words, out.word_alignment.W), t.target_words);
  if (kind == SpeakerEmbedding::bwe) {
    out.speakers = out.words;
    out.speaker_alignment = out.word_alignment;
    return out;
  }
  if (!t.source_bse) throw ContractError("align: BSE requested but no label-context source table");
  out.speaker_alignment = embedding::procrustes_align(*t.source_bse, t.target_words, dict);
  auto aligned = embedding::apply_alignment(*t.source_bse, out.speaker_alignment.W);
  out.speakers = merge(aligned, share_entity_vectors(t.target_words, aligned, dict, gazetteer));
  return out;
}

inline EmbeddingSpaces build_spaces(const Corpora& c, const embedding::TrainConfig& cfg, SpeakerEmbedding kind) {
  return align_tables(train_tables(c, cfg, kind), c.dictionary, c.gazetteer, kind);
}

struct FeatureConfig {
  source::TypeSet types{source::EntityType::person};
  // Seed for per-article speaker shuffling; empty keeps appearance order.
  std::optional<std::uint64_t> shuffle_seed;
  std::size_t max_len = 200;
};

// Speaker sequences of a corpus under a feature configuration.
inline std::vector<std::vector<std::string>> speaker_sequences(const corpus::Corpus& c, const source::NerProvider& ner,
                                                               const FeatureConfig& cfg) {
  std::vector<std::vector<std::string>> out;
  out.reserve(c.size());
  for (const auto& a : c) out.push_back(source::extract_sources(a, ner, cfg.types, cfg.shuffle_seed).speakers);
  return out;
}

// Maps tokens and speaker surfaces to feature rows. A multi-token speaker
// without its own vector gets the mean of its tokens' vectors.
class Featurizer {
 public:
  Featurizer(const EmbeddingSpaces& spaces, const source::Gazetteer& gazetteer, FeatureConfig cfg)
      : spaces_(spaces), ner_(gazetteer), cfg_(std::move(cfg)) {}

  training::Example example(const corpus::Article& a) {
    training::Example ex;
    ex.id = a.id;
    ex.label = a.label == corpus::Label::unlabeled ? -1 : (a.label == corpus::Label::real ? 1 : 0);
    for (const auto& t : corpus::truncate(a.tokens, cfg_.max_len)) {
      ex.tokens.push_back(static_cast<int>(spaces_.words.find(t)));
    }
    if (ex.tokens.empty()) throw ContractError("featurize: article '" + a.id + "' has no tokens");
    for (const auto& s : source::extract_sources(a, ner_, cfg_.types, cfg_.shuffle_seed).speakers) {
      ex.speakers.push_back(speaker_row(s));
    }
    return ex;
  }

  std::vector<training::Example> examples(const corpus::Corpus& c) {
    std::vector<training::Example> out;
    out.reserve(c.size());
    for (const auto& a : c) out.push_back(example(a));
    return out;
  }

  training::FeatureSpace space() const {
    training::FeatureSpace fs;
    fs.words = spaces_.words.vectors();
    fs.speakers = embedding::Matrix::Zero(static_cast<Eigen::Index>(speaker_vectors_.size()),
                                          static_cast<Eigen::Index>(spaces_.speakers.dim()));
    for (std::size_t i = 0; i < speaker_vectors_.size(); ++i) {
      fs.speakers.row(static_cast<Eigen::Index>(i)) = speaker_vectors_[i].transpose();
    }
    return fs;
  }

 private:
  int speaker_row(const std::string& surface) {
    auto it = speaker_index_.find(surface);
    if (it != speaker_index_.end()) return it->second;
    embedding::Vector v;
    if (spaces_.speakers.contains(surface)) {
      v = spaces_.speakers.lookup(surface);
    } else {
      v = embedding::Vector::Zero(static_cast<Eigen::Index>(spaces_.speakers.dim()));
      std::size_t found = 0;
      for (const auto& t : corpus::default_tokenizer().tokenize(surface)) {
        if (spaces_.speakers.contains(t)) {
          v += spaces_.speakers.lookup(t);
          ++found;
        }
      }
      if (found) v /= static_cast<double>(found);
    }
    const int row = static_cast<int>(speaker_vectors_.size());
    speaker_vectors_.push_back(std::move(v));
    speaker_index_.emplace(surface, row);
    return row;
  }

  const EmbeddingSpaces& spaces_;
  source::GazetteerNer ner_;
  FeatureConfig cfg_;
  std::map<std::string, int> speaker_index_;
  std::vector<embedding::Vector> speaker_vectors_;
};

inline training::Dataset featurize(const Corpora& c, const EmbeddingSpaces& spaces, const FeatureConfig& cfg) {
  Featurizer f(spaces, c.gazetteer, cfg);
  training::Dataset d;
  d.source = f.examples(c.source_labeled);
  d.target = f.examples(c.target_unlabeled);
  d.validation = f.examples(c.target_val);
  d.test = f.examples(c.target_eval);
  d.space = f.space();
  return d;
}

// All labeled articles of both languages, source first.
inline corpus::Corpus labeled_articles(const Corpora& c) {
  corpus::Corpus out = c.source_labeled;
  out.insert(out.end(), c.target_val.begin(), c.target_val.end());
  out.insert(out.end(), c.target_eval.begin(), c.target_eval.end());
  return out;
}

struct DiffCredReport {
  credibility::ScoreMap scores;
  std::vector<std::string> speakers;
  bool shortfall = false;
  credibility::DiffCredResult result;
};

// diff_cred of a speaker table over the most frequent PERSON speakers of the
// labeled articles; with per_language, m / 2 are ranked in each language.
// speakers is sorted, matching the indices of result.neighbors. A population
// with one raw score falls back to 0.5 for everyone.
inline DiffCredReport speaker_diff_cred(const Corpora& c, const embedding::EmbeddingTable& table,
                                        const credibility::DiffCredConfig& cfg, bool per_language) {
  const auto labeled = labeled_articles(c);
  const auto seqs = speaker_sequences(labeled, source::GazetteerNer(c.gazetteer), FeatureConfig{});
  DiffCredReport out;
  out.scores = credibility::credibility_scores(credibility::collect_stats(labeled, seqs), true);
  auto top = credibility::top_frequent_speakers(labeled, seqs, per_language ? cfg.m / 2 : cfg.m, per_language);
  out.speakers = std::move(top.ids);
  std::sort(out.speakers.begin(), out.speakers.end());
  out.shortfall = top.shortfall;
  out.result = credibility::diff_cred(table, out.scores, out.speakers, cfg);
  return out;
}

}  // namespace xlfnd::pipeline
