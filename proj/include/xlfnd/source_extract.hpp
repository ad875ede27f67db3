#pragma once

// Speaker-candidate extraction: pluggable NER, appearance-order source
// sequences and speaker location statistics.

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "xlfnd/common.hpp"
#include "xlfnd/corpus.hpp"

namespace xlfnd::source {

enum class EntityType { person, org, other };

inline std::string_view to_string(EntityType t) {
  switch (t) {
    case EntityType::person: return "PERSON";
    case EntityType::org: return "ORG";
    case EntityType::other: break;
  }
  return "OTHER";
}

inline EntityType entity_type_from_string(std::string_view s) {
  if (s == "PERSON" || s == "PER") return EntityType::person;
  if (s == "ORG" || s == "ORGANIZATION") return EntityType::org;
  if (s == "OTHER" || s == "MISC") return EntityType::other;
  throw ContractError("unknown entity type '" + std::string(s) + "'");
}

using TypeSet = std::set<EntityType>;

struct EntityMention {
  std::string surface;
  EntityType type = EntityType::other;
  std::size_t token_index = 0;
};

// Sequence of speaker ids in appearance order; duplicates retained.
struct SourceData {
  std::vector<std::string> speakers;
};

class NerProvider {
 public:
  virtual ~NerProvider() = default;
  // Mentions sorted by token_index; deterministic for a fixed input.
  virtual std::vector<EntityMention> recognize(const std::vector<std::string>& tokens) const = 0;
};

using Gazetteer = std::map<std::string, EntityType>;

// Longest-match-first scan over the lowercased token stream.
class GazetteerNer : public NerProvider {
 public:
  explicit GazetteerNer(const Gazetteer& gazetteer) {
    if (gazetteer.empty()) throw ContractError("gazetteer_ner: empty gazetteer");
    for (const auto& [surface, type] : gazetteer) {
      auto key = corpus::default_tokenizer().tokenize(surface);
      if (key.empty()) continue;
      max_len_ = std::max(max_len_, key.size());
      std::string joined;
      for (const auto& t : key) joined += (joined.empty() ? "" : " ") + t;
      entries_[key] = Entry{joined, type};
    }
  }

  std::vector<EntityMention> recognize(const std::vector<std::string>& tokens) const override {
    std::vector<EntityMention> out;
    std::vector<std::string> lowered(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) lowered[i] = lower(tokens[i]);
    std::size_t i = 0;
    while (i < lowered.size()) {
      std::size_t matched = 0;
      for (std::size_t len = std::min(max_len_, lowered.size() - i); len >= 1; --len) {
        std::vector<std::string> key(lowered.begin() + static_cast<std::ptrdiff_t>(i),
                                     lowered.begin() + static_cast<std::ptrdiff_t>(i + len));
        auto it = entries_.find(key);
        if (it != entries_.end()) {
          out.push_back({it->second.surface, it->second.type, i});
          matched = len;
          break;
        }
      }
      i += matched ? matched : 1;
    }
    return out;
  }

 private:
  struct Entry {
    std::string surface;
    EntityType type;
  };

  static std::string lower(const std::string& s) {
    std::string out = s;
    for (auto& c : out) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
  }

  std::map<std::vector<std::string>, Entry> entries_;
  std::size_t max_len_ = 1;
};

inline Gazetteer read_gazetteer(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  Gazetteer g;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw IoError(path + ":" + std::to_string(line_no) + ": expected surface<TAB>type");
    }
    try {
      g[line.substr(0, tab)] = entity_type_from_string(line.substr(tab + 1));
    } catch (const ContractError& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return g;
}

inline void write_gazetteer(const std::string& path, const Gazetteer& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& [surface, type] : g) out << surface << '\t' << to_string(type) << '\n';
}

// Mentions of the requested types in ascending token order. With a shuffle
// seed the sequence is permuted by a generator keyed on (seed, article id).
inline SourceData extract_sources(const corpus::Article& article, const NerProvider& ner,
                                  const TypeSet& types = {EntityType::person},
                                  std::optional<std::uint64_t> shuffle_seed = std::nullopt) {
  SourceData out;
  for (auto& m : ner.recognize(article.tokens)) {
    if (types.count(m.type)) out.speakers.push_back(std::move(m.surface));
  }
  if (shuffle_seed) {
    Rng rng(splitmix64(fnv1a64(article.id, derive_seed(*shuffle_seed, "shuffle-sources"))));
    seeded_shuffle(out.speakers, rng);
  }
  return out;
}

struct LocationStats {
  std::array<std::size_t, 10> bins{};
  std::size_t excluded_single_token = 0;
  std::size_t mentions = 0;
};

// Relative position index / (len - 1) of every PERSON mention, in 10 bins.
inline LocationStats speaker_location_stats(const corpus::Corpus& articles, const NerProvider& ner) {
  if (articles.empty()) throw ContractError("speaker_location_stats: no articles");
  LocationStats stats;
  for (const auto& a : articles) {
    if (a.tokens.size() < 2) {
      ++stats.excluded_single_token;
      continue;
    }
    for (const auto& m : ner.recognize(a.tokens)) {
      if (m.type != EntityType::person) continue;
      double pos = static_cast<double>(m.token_index) / static_cast<double>(a.tokens.size() - 1);
      auto bin = std::min<std::size_t>(9, static_cast<std::size_t>(pos * 10.0));
      ++stats.bins[bin];
      ++stats.mentions;
    }
  }
  return stats;
}

}  // namespace xlfnd::source
