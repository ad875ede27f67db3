#pragma once

// Deterministic bilingual corpus generator with planted speaker credibility.
//
// Each speaker entity exists in both languages under a language-specific
// surface form and has one credibility probability p. Labels are balanced;
// given the label, the claimant is drawn with P(s | real) ∝ w_s p_s and
// P(s | fake) ∝ w_s (1 - p_s), where the weights w_s make the population
// credibility-neutral so that P(real | s) = p_s. Content tokens mix label
// topic words, the claimant's affiliation words and neutral words.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlfnd/common.hpp"
#include "xlfnd/corpus.hpp"
#include "xlfnd/corpus_io.hpp"
#include "xlfnd/source_extract.hpp"

namespace xlfnd::synthetic {

struct SyntheticSpec {
  std::size_t vocab_size_per_language = 400;
  std::size_t n_speakers_per_language = 20;
  // Indexed by speaker entity; empty selects the default symmetric schedule.
  std::vector<double> speaker_credibility;
  std::size_t n_labeled_src = 4000;
  std::size_t n_unlabeled_tgt = 500;
  std::size_t n_labeled_tgt_eval = 200;
  std::size_t n_labeled_tgt_val = 200;
  std::size_t tokens_per_article = 30;
  double dictionary_overlap = 0.5;
  std::uint64_t seed = 1;

  std::size_t n_orgs_per_language = 10;
  std::size_t n_affiliations = 4;
  std::size_t max_speakers_per_article = 3;
  std::size_t max_orgs_per_article = 2;
  double topic_vocab_fraction = 0.2;
  double affiliation_vocab_fraction = 0.2;
  double topic_strength = 0.1;
  double affiliation_strength = 0.2;
  // Speakers are placed within this leading fraction of each article.
  double speaker_window = 0.2;
  // Each speaker owns this many signature words (title, constituency); a
  // mention is followed by one of them with probability signature_strength.
  std::size_t signature_words_per_speaker = 2;
  double signature_strength = 0.8;
  // When set, only the first-named speaker (the claimant) carries
  // credibility signal; the others are drawn without regard to the label.
  bool claimant_first = false;
  std::string source_lang = "en";
  std::string target_lang = "ko";
};

struct SyntheticCorpora {
  corpus::Corpus source_labeled;
  corpus::Corpus target_unlabeled;
  corpus::Corpus target_val;
  corpus::Corpus target_eval;
  corpus::DictionaryPairs dictionary;
  source::Gazetteer gazetteer;
  std::vector<double> credibility;  // per speaker entity
};

inline std::vector<double> default_credibility(std::size_t n_speakers) {
  // Pairs (p, 1 - p) with p spread over [0.95, 0.65].
  std::vector<double> p(n_speakers, 0.5);
  std::size_t pairs = n_speakers / 2;
  for (std::size_t k = 0; k < pairs; ++k) {
    double high = pairs > 1 ? 0.95 - 0.30 * static_cast<double>(k) / static_cast<double>(pairs - 1)
                            : 0.95;
    p[2 * k] = high;
    p[2 * k + 1] = 1.0 - p[2 * k];
  }
  return p;
}

inline std::string word_surface(const std::string& lang, std::size_t i) {
  return lang + "w" + std::to_string(i);
}
inline std::string speaker_surface(const std::string& lang, std::size_t i) {
  return lang + "spk" + std::to_string(i);
}
inline std::string org_surface(const std::string& lang, std::size_t i) {
  return lang + "org" + std::to_string(i);
}

inline void validate(const SyntheticSpec& s) {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ContractError(std::string("synthetic spec: ") + name + " must be > 0");
  };
  positive(s.vocab_size_per_language, "vocab_size_per_language");
  positive(s.n_speakers_per_language, "n_speakers_per_language");
  positive(s.n_labeled_src, "n_labeled_src");
  positive(s.n_unlabeled_tgt, "n_unlabeled_tgt");
  positive(s.n_labeled_tgt_eval, "n_labeled_tgt_eval");
  positive(s.tokens_per_article, "tokens_per_article");
  positive(s.max_speakers_per_article, "max_speakers_per_article");
  positive(s.n_affiliations, "n_affiliations");
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ContractError(std::string("synthetic spec: ") + name + " must lie in [0, 1]");
    }
  };
  unit(s.dictionary_overlap, "dictionary_overlap");
  unit(s.topic_strength, "topic_strength");
  unit(s.affiliation_strength, "affiliation_strength");
  unit(s.speaker_window, "speaker_window");
  unit(s.signature_strength, "signature_strength");
  unit(s.topic_vocab_fraction, "topic_vocab_fraction");
  unit(s.affiliation_vocab_fraction, "affiliation_vocab_fraction");
  if (s.topic_strength + s.affiliation_strength > 1.0) {
    throw ContractError("synthetic spec: topic_strength + affiliation_strength exceeds 1");
  }
  if (s.topic_vocab_fraction + s.affiliation_vocab_fraction >= 1.0) {
    throw ContractError("synthetic spec: topic and affiliation vocabularies leave no neutral words");
  }
  if (!s.speaker_credibility.empty()) {
    if (s.speaker_credibility.size() != s.n_speakers_per_language) {
      throw ContractError("synthetic spec: speaker_credibility has " +
                          std::to_string(s.speaker_credibility.size()) + " entries, expected " +
                          std::to_string(s.n_speakers_per_language));
    }
    for (double p : s.speaker_credibility) unit(p, "speaker_credibility");
  }
  std::size_t slots = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(s.speaker_window * static_cast<double>(s.tokens_per_article))));
  if (slots < s.max_speakers_per_article ||
      s.tokens_per_article < s.max_speakers_per_article + s.max_orgs_per_article + 1) {
    throw ContractError("synthetic spec: articles too short for the requested speaker mentions");
  }
}

// Speaker pairs (2k, 2k+1) share an affiliation, so affiliation groups mix
// credible and non-credible speakers under the default schedule.
inline std::size_t affiliation_of(std::size_t speaker, std::size_t n_affiliations) {
  return (speaker / 2) % n_affiliations;
}

namespace detail {

class Sampler {
 public:
  explicit Sampler(std::vector<double> weights) : cdf_(std::move(weights)) {
    double acc = 0.0;
    for (auto& w : cdf_) {
      acc += w;
      w = acc;
    }
    if (!(acc > 0.0)) throw ContractError("synthetic spec: degenerate sampling weights");
  }
  std::size_t operator()(Rng& rng) const {
    double u = uniform01(rng) * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

struct Layout {
  std::vector<std::size_t> fake_topic, real_topic, neutral;
  std::vector<std::vector<std::size_t>> affiliation;
  std::vector<std::vector<std::size_t>> signature;
};

class ArticleFactory {
 public:
  ArticleFactory(const SyntheticSpec& spec, std::vector<double> credibility)
      : spec_(spec), credibility_(std::move(credibility)) {
    const std::size_t v = spec.vocab_size_per_language;
    const auto n_topic = std::max<std::size_t>(
        1, static_cast<std::size_t>(spec.topic_vocab_fraction * static_cast<double>(v) / 2.0));
    const auto n_aff = std::max<std::size_t>(
        1, static_cast<std::size_t>(spec.affiliation_vocab_fraction * static_cast<double>(v) /
                                    static_cast<double>(spec.n_affiliations)));
    std::size_t next = 0;
    for (std::size_t i = 0; i < n_topic && next < v; ++i) layout_.fake_topic.push_back(next++);
    for (std::size_t i = 0; i < n_topic && next < v; ++i) layout_.real_topic.push_back(next++);
    layout_.affiliation.resize(spec.n_affiliations);
    for (auto& group : layout_.affiliation) {
      for (std::size_t i = 0; i < n_aff && next < v; ++i) group.push_back(next++);
    }
    layout_.signature.resize(credibility_.size());
    for (auto& own : layout_.signature) {
      for (std::size_t i = 0; i < spec.signature_words_per_speaker && next < v; ++i) own.push_back(next++);
    }
    while (next < v) layout_.neutral.push_back(next++);
    if (layout_.neutral.empty() || layout_.real_topic.empty()) {
      throw ContractError("synthetic spec: vocabulary too small for the requested layout");
    }

    // Population weights w_s with sum_s w_s (2 p_s - 1) = 0.
    double above = 0.0, below = 0.0;
    for (double p : credibility_) {
      if (p > 0.5) above += 2.0 * p - 1.0;
      if (p < 0.5) below += 1.0 - 2.0 * p;
    }
    if ((above > 0.0) != (below > 0.0)) {
      throw ContractError("synthetic spec: credibilities cannot be balanced (all on one side of 0.5)");
    }
    std::vector<double> w(credibility_.size(), 1.0);
    if (above > 0.0) {
      for (std::size_t s = 0; s < w.size(); ++s) {
        if (credibility_[s] > 0.5 && above > below) w[s] = below / above;
        if (credibility_[s] < 0.5 && below > above) w[s] = above / below;
      }
    }
    std::vector<double> real_w(w.size()), fake_w(w.size());
    for (std::size_t s = 0; s < w.size(); ++s) {
      real_w[s] = w[s] * credibility_[s];
      fake_w[s] = w[s] * (1.0 - credibility_[s]);
    }
    real_speaker_ = std::make_unique<Sampler>(real_w);
    fake_speaker_ = std::make_unique<Sampler>(fake_w);
    any_speaker_ = std::make_unique<Sampler>(std::vector<double>(w.size(), 1.0));
  }

  corpus::Article make(Rng& rng, const std::string& lang, const std::string& id,
                       corpus::Label truth) const {
    const std::size_t len = spec_.tokens_per_article;
    const bool real = truth == corpus::Label::real;
    const auto n_spk = 1 + uniform_index(rng, spec_.max_speakers_per_article);
    std::vector<std::size_t> speakers;
    speakers.push_back(real ? (*real_speaker_)(rng) : (*fake_speaker_)(rng));
    for (std::size_t k = 1; k < n_spk; ++k) {
      if (spec_.claimant_first) {
        speakers.push_back((*any_speaker_)(rng));
      } else {
        speakers.push_back(real ? (*real_speaker_)(rng) : (*fake_speaker_)(rng));
      }
    }

    // Speaker positions: distinct slots inside the leading window, ascending.
    const auto slots = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(spec_.speaker_window * static_cast<double>(len))));
    std::vector<std::size_t> slot_ids(slots);
    for (std::size_t i = 0; i < slots; ++i) slot_ids[i] = i;
    seeded_shuffle(slot_ids, rng);
    slot_ids.resize(n_spk);
    std::sort(slot_ids.begin(), slot_ids.end());

    std::vector<std::string> tokens(len);
    std::vector<bool> taken(len, false);
    std::vector<std::string> gold;
    for (std::size_t k = 0; k < n_spk; ++k) {
      tokens[slot_ids[k]] = speaker_surface(lang, speakers[k]);
      taken[slot_ids[k]] = true;
      gold.push_back(tokens[slot_ids[k]]);
    }
    for (std::size_t k = 0; k < n_spk; ++k) {
      const auto& own = layout_.signature[speakers[k]];
      const std::size_t pos = slot_ids[k] + 1;
      if (own.empty() || pos >= len || taken[pos] || uniform01(rng) >= spec_.signature_strength) continue;
      tokens[pos] = word_surface(lang, own[uniform_index(rng, own.size())]);
      taken[pos] = true;
    }

    const auto n_org = spec_.n_orgs_per_language ? uniform_index(rng, spec_.max_orgs_per_article + 1) : 0;
    for (std::size_t k = 0; k < n_org; ++k) {
      std::size_t pos;
      do {
        pos = uniform_index(rng, len);
      } while (taken[pos]);
      taken[pos] = true;
      tokens[pos] = org_surface(lang, uniform_index(rng, spec_.n_orgs_per_language));
    }

    const auto& topic = real ? layout_.real_topic : layout_.fake_topic;
    const auto& aff = layout_.affiliation[affiliation_of(speakers.front(), spec_.n_affiliations)];
    for (std::size_t pos = 0; pos < len; ++pos) {
      if (taken[pos]) continue;
      double u = uniform01(rng);
      std::size_t word;
      if (u < spec_.topic_strength) {
        word = topic[uniform_index(rng, topic.size())];
      } else if (u < spec_.topic_strength + spec_.affiliation_strength && !aff.empty()) {
        word = aff[uniform_index(rng, aff.size())];
      } else {
        word = layout_.neutral[uniform_index(rng, layout_.neutral.size())];
      }
      tokens[pos] = word_surface(lang, word);
    }

    corpus::Article a;
    a.id = id;
    a.lang = lang;
    a.tokens = std::move(tokens);
    a.label = truth;
    a.gold_speakers = std::move(gold);
    return a;
  }

 private:
  const SyntheticSpec& spec_;
  std::vector<double> credibility_;
  Layout layout_;
  std::unique_ptr<Sampler> real_speaker_, fake_speaker_, any_speaker_;
};

inline std::vector<corpus::Label> balanced_labels(std::size_t n, Rng& rng) {
  std::vector<corpus::Label> labels(n, corpus::Label::fake);
  for (std::size_t i = 0; i < n / 2; ++i) labels[i] = corpus::Label::real;
  seeded_shuffle(labels, rng);
  return labels;
}

inline std::string padded_id(const std::string& prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  return prefix + std::string(digits.size() < 6 ? 6 - digits.size() : 0, '0') + digits;
}

}  // namespace detail

inline SyntheticCorpora generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  SyntheticCorpora out;
  out.credibility = spec.speaker_credibility.empty() ? default_credibility(spec.n_speakers_per_language)
                                                     : spec.speaker_credibility;
  detail::ArticleFactory factory(spec, out.credibility);
  Rng rng(derive_seed(spec.seed, "synthetic"));

  auto generate = [&](std::size_t n, const std::string& lang, const std::string& prefix, bool hide) {
    corpus::Corpus c;
    c.reserve(n);
    auto labels = detail::balanced_labels(n, rng);
    for (std::size_t i = 0; i < n; ++i) {
      c.push_back(factory.make(rng, lang, detail::padded_id(prefix, i), labels[i]));
      if (hide) c.back().label = corpus::Label::unlabeled;
    }
    return c;
  };
  out.source_labeled = generate(spec.n_labeled_src, spec.source_lang, spec.source_lang + "-src-", false);
  out.target_unlabeled = generate(spec.n_unlabeled_tgt, spec.target_lang, spec.target_lang + "-unl-", true);
  if (spec.n_labeled_tgt_val) {
    out.target_val = generate(spec.n_labeled_tgt_val, spec.target_lang, spec.target_lang + "-val-", false);
  }
  out.target_eval = generate(spec.n_labeled_tgt_eval, spec.target_lang, spec.target_lang + "-eval-", false);

  auto maybe_pair = [&](const std::string& s, const std::string& t) {
    if (uniform01(rng) < spec.dictionary_overlap) out.dictionary.emplace_back(s, t);
  };
  for (std::size_t i = 0; i < spec.vocab_size_per_language; ++i) {
    maybe_pair(word_surface(spec.source_lang, i), word_surface(spec.target_lang, i));
  }
  for (std::size_t i = 0; i < spec.n_speakers_per_language; ++i) {
    maybe_pair(speaker_surface(spec.source_lang, i), speaker_surface(spec.target_lang, i));
  }
  for (std::size_t i = 0; i < spec.n_orgs_per_language; ++i) {
    maybe_pair(org_surface(spec.source_lang, i), org_surface(spec.target_lang, i));
  }

  for (const auto& lang : {spec.source_lang, spec.target_lang}) {
    for (std::size_t i = 0; i < spec.n_speakers_per_language; ++i) {
      out.gazetteer[speaker_surface(lang, i)] = source::EntityType::person;
    }
    for (std::size_t i = 0; i < spec.n_orgs_per_language; ++i) {
      out.gazetteer[org_surface(lang, i)] = source::EntityType::org;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON binding (strict: unknown keys are rejected)

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  static const std::set<std::string> known = {
      "vocab_size_per_language", "n_speakers_per_language", "speaker_credibility",
      "n_labeled_src", "n_unlabeled_tgt", "n_labeled_tgt_eval", "n_labeled_tgt_val",
      "tokens_per_article", "dictionary_overlap", "seed", "n_orgs_per_language",
      "n_affiliations", "max_speakers_per_article", "max_orgs_per_article",
      "topic_vocab_fraction", "affiliation_vocab_fraction", "topic_strength",
      "affiliation_strength", "speaker_window", "signature_words_per_speaker", "signature_strength",
      "claimant_first", "source_lang", "target_lang"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ContractError("synthetic spec: unknown key '" + key + "'");
  }
#define XLFND_READ(field) \
  if (j.contains(#field)) j.at(#field).get_to(s.field)
  XLFND_READ(vocab_size_per_language);
  XLFND_READ(n_speakers_per_language);
  XLFND_READ(speaker_credibility);
  XLFND_READ(n_labeled_src);
  XLFND_READ(n_unlabeled_tgt);
  XLFND_READ(n_labeled_tgt_eval);
  XLFND_READ(n_labeled_tgt_val);
  XLFND_READ(tokens_per_article);
  XLFND_READ(dictionary_overlap);
  XLFND_READ(seed);
  XLFND_READ(n_orgs_per_language);
  XLFND_READ(n_affiliations);
  XLFND_READ(max_speakers_per_article);
  XLFND_READ(max_orgs_per_article);
  XLFND_READ(topic_vocab_fraction);
  XLFND_READ(affiliation_vocab_fraction);
  XLFND_READ(topic_strength);
  XLFND_READ(affiliation_strength);
  XLFND_READ(speaker_window);
  XLFND_READ(signature_words_per_speaker);
  XLFND_READ(signature_strength);
  XLFND_READ(claimant_first);
  XLFND_READ(source_lang);
  XLFND_READ(target_lang);
#undef XLFND_READ
}

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = nlohmann::json{{"vocab_size_per_language", s.vocab_size_per_language},
                     {"n_speakers_per_language", s.n_speakers_per_language},
                     {"speaker_credibility", s.speaker_credibility},
                     {"n_labeled_src", s.n_labeled_src},
                     {"n_unlabeled_tgt", s.n_unlabeled_tgt},
                     {"n_labeled_tgt_eval", s.n_labeled_tgt_eval},
                     {"n_labeled_tgt_val", s.n_labeled_tgt_val},
                     {"tokens_per_article", s.tokens_per_article},
                     {"dictionary_overlap", s.dictionary_overlap},
                     {"seed", s.seed},
                     {"n_orgs_per_language", s.n_orgs_per_language},
                     {"n_affiliations", s.n_affiliations},
                     {"max_speakers_per_article", s.max_speakers_per_article},
                     {"max_orgs_per_article", s.max_orgs_per_article},
                     {"topic_vocab_fraction", s.topic_vocab_fraction},
                     {"affiliation_vocab_fraction", s.affiliation_vocab_fraction},
                     {"topic_strength", s.topic_strength},
                     {"affiliation_strength", s.affiliation_strength},
                     {"speaker_window", s.speaker_window},
                     {"signature_words_per_speaker", s.signature_words_per_speaker},
                     {"signature_strength", s.signature_strength},
                     {"claimant_first", s.claimant_first},
                     {"source_lang", s.source_lang},
                     {"target_lang", s.target_lang}};
}

}  // namespace xlfnd::synthetic
