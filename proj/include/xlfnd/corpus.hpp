#pragma once

// News articles, label binarization, claim-to-article matching and class
// balancing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "xlfnd/common.hpp"

namespace xlfnd::corpus {

enum class Label { fake, real, unlabeled };

inline std::string_view to_string(Label l) {
  switch (l) {
    case Label::fake: return "fake";
    case Label::real: return "real";
    case Label::unlabeled: break;
  }
  return "unlabeled";
}

struct Article {
  std::string id;
  std::string lang;
  std::vector<std::string> tokens;
  Label label = Label::unlabeled;
  std::optional<std::string> raw_label;
  std::optional<std::string> date;
  std::optional<std::vector<std::string>> gold_speakers;
};

using Corpus = std::vector<Article>;

// ---------------------------------------------------------------------------
// Tokenization

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
};

namespace detail {

// Decodes one UTF-8 code point starting at text[i]; advances i. Invalid bytes
// decode as themselves so that tokenization never throws.
inline char32_t next_code_point(std::string_view text, std::size_t& i) {
  auto b0 = static_cast<unsigned char>(text[i]);
  int extra = b0 < 0x80 ? 0 : (b0 >> 5) == 0x6 ? 1 : (b0 >> 4) == 0xe ? 2 : (b0 >> 3) == 0x1e ? 3 : -1;
  if (extra <= 0 || i + extra >= text.size()) {
    ++i;
    return b0;
  }
  char32_t cp = b0 & (0x3f >> extra);
  for (int k = 1; k <= extra; ++k) {
    auto b = static_cast<unsigned char>(text[i + k]);
    if ((b >> 6) != 0x2) {
      ++i;
      return b0;
    }
    cp = (cp << 6) | (b & 0x3f);
  }
  i += extra + 1;
  return cp;
}

inline bool is_unicode_space(char32_t cp) {
  return cp == ' ' || (cp >= 0x09 && cp <= 0x0d) || cp == 0x85 || cp == 0xa0 ||
         cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200a) || cp == 0x2028 ||
         cp == 0x2029 || cp == 0x202f || cp == 0x205f || cp == 0x3000;
}

inline bool is_punctuation(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 0x21 && cp <= 0x2f) || (cp >= 0x3a && cp <= 0x40) ||
           (cp >= 0x5b && cp <= 0x60) || (cp >= 0x7b && cp <= 0x7e);
  }
  // Latin-1 punctuation, General Punctuation, CJK symbols and punctuation.
  return (cp >= 0xa1 && cp <= 0xbf && cp != 0xaa && cp != 0xb5 && cp != 0xba) ||
         (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205e) ||
         (cp >= 0x3001 && cp <= 0x3003) || (cp >= 0x3008 && cp <= 0x3011);
}

}  // namespace detail

// Lowercases ASCII, splits on Unicode whitespace and strips punctuation.
class DefaultTokenizer : public Tokenizer {
 public:
  std::vector<std::string> tokenize(std::string_view text) const override {
    std::vector<std::string> out;
    std::string current;
    std::size_t i = 0;
    while (i < text.size()) {
      std::size_t start = i;
      char32_t cp = detail::next_code_point(text, i);
      if (detail::is_unicode_space(cp)) {
        if (!current.empty()) out.push_back(std::move(current));
        current.clear();
        continue;
      }
      if (detail::is_punctuation(cp)) continue;
      if (cp < 0x80) {
        char c = static_cast<char>(cp);
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        current.push_back(c);
      } else {
        current.append(text.substr(start, i - start));
      }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
  }
};

inline const Tokenizer& default_tokenizer() {
  static const DefaultTokenizer tokenizer;
  return tokenizer;
}

inline std::vector<std::string> truncate(const std::vector<std::string>& tokens,
                                         std::size_t max_len = 200) {
  auto n = std::min(tokens.size(), max_len);
  return {tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(n)};
}

// ---------------------------------------------------------------------------
// Label schemes

struct LabelScheme {
  std::string name;
  std::set<std::string> real_classes;
  std::set<std::string> fake_classes;
};

// Lowercase, spaces and underscores folded to '-': "Mostly True" == "mostly-true".
inline std::string normalize_raw_label(std::string_view raw) {
  std::string out;
  bool pending_dash = false;
  for (char c : raw) {
    if (c == ' ' || c == '_' || c == '-') {
      pending_dash = !out.empty();
      continue;
    }
    if (pending_dash) out.push_back('-');
    pending_dash = false;
    out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
  }
  return out;
}

inline LabelScheme five_class_scheme() {
  return {"five-class", {"true", "mostly-true", "half-true"}, {"mostly-false", "false"}};
}

inline LabelScheme six_class_scheme() {
  return {"six-class",
          {"true", "mostly-true", "half-true"},
          {"mostly-false", "false", "pants-on-fire"}};
}

inline LabelScheme scheme_by_name(std::string_view name) {
  if (name == "five-class") return five_class_scheme();
  if (name == "six-class") return six_class_scheme();
  throw ContractError("unknown label scheme '" + std::string(name) + "'");
}

inline Label binarize_label(std::string_view raw_label, const LabelScheme& scheme) {
  auto key = normalize_raw_label(raw_label);
  if (scheme.real_classes.count(key)) return Label::real;
  if (scheme.fake_classes.count(key)) return Label::fake;
  throw ContractError("raw label '" + std::string(raw_label) + "' is not part of the " +
                      scheme.name + " scheme");
}

// ---------------------------------------------------------------------------
// TF-IDF claim matching

struct ClaimRecord {
  std::vector<std::string> claim;
  std::string raw_label;
  std::vector<Article> candidate_sources;
};

struct MatchResult {
  std::size_t index = 0;
  double similarity = 0.0;
  std::vector<double> similarities;
};

class UnmatchableClaim : public ContractError {
 public:
  using ContractError::ContractError;
};

// Raw-count TF, smoothed IDF ln((1+N)/(1+df)) + 1 over the claim+candidates
// mini-corpus, cosine similarity. Ties go to the lowest index.
inline MatchResult tfidf_match(const std::vector<std::string>& claim,
                               const std::vector<std::vector<std::string>>& candidates) {
  if (candidates.empty()) throw ContractError("tfidf_match: no candidate sources");
  std::vector<std::map<std::string, double>> tf(candidates.size() + 1);
  for (const auto& t : claim) tf[0][t] += 1.0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    for (const auto& t : candidates[c]) tf[c + 1][t] += 1.0;
  }
  std::map<std::string, double> df;
  for (const auto& doc : tf) {
    for (const auto& [term, count] : doc) df[term] += 1.0;
  }
  const double n_docs = static_cast<double>(tf.size());
  auto weight = [&](const std::string& term, double count) {
    return count * (std::log((1.0 + n_docs) / (1.0 + df[term])) + 1.0);
  };
  auto norm = [&](const std::map<std::string, double>& doc) {
    double s = 0.0;
    for (const auto& [term, count] : doc) s += std::pow(weight(term, count), 2);
    return std::sqrt(s);
  };

  MatchResult result;
  result.similarities.assign(candidates.size(), 0.0);
  const double claim_norm = norm(tf[0]);
  bool any_shared = false;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto& doc = tf[c + 1];
    double dot = 0.0;
    for (const auto& [term, count] : tf[0]) {
      auto it = doc.find(term);
      if (it == doc.end()) continue;
      any_shared = true;
      dot += weight(term, count) * weight(term, it->second);
    }
    double denom = claim_norm * norm(doc);
    result.similarities[c] = denom > 0.0 ? dot / denom : 0.0;
  }
  if (!any_shared) {
    throw UnmatchableClaim("unmatchable claim: no claim token occurs in any candidate");
  }
  for (std::size_t c = 1; c < candidates.size(); ++c) {
    if (result.similarities[c] > result.similarities[result.index]) result.index = c;
  }
  result.similarity = result.similarities[result.index];
  return result;
}

inline MatchResult tfidf_match(const ClaimRecord& record) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(record.candidate_sources.size());
  for (const auto& a : record.candidate_sources) docs.push_back(a.tokens);
  return tfidf_match(record.claim, docs);
}

// ---------------------------------------------------------------------------
// Balancing

// Seeded uniform removal from the majority class; survivors keep input order.
inline Corpus undersample(const Corpus& articles, std::uint64_t seed) {
  std::vector<std::size_t> fake, real;
  for (std::size_t i = 0; i < articles.size(); ++i) {
    switch (articles[i].label) {
      case Label::fake: fake.push_back(i); break;
      case Label::real: real.push_back(i); break;
      case Label::unlabeled:
        throw ContractError("undersample: article '" + articles[i].id + "' is unlabeled");
    }
  }
  if (fake.empty() || real.empty()) {
    throw ContractError("undersample: both classes must be present (fake=" +
                        std::to_string(fake.size()) + ", real=" + std::to_string(real.size()) +
                        ")");
  }
  auto& majority = fake.size() > real.size() ? fake : real;
  const auto keep = std::min(fake.size(), real.size());
  Rng rng(derive_seed(seed, "undersample"));
  seeded_shuffle(majority, rng);
  majority.resize(keep);

  std::vector<bool> survives(articles.size(), false);
  for (auto i : fake) survives[i] = true;
  for (auto i : real) survives[i] = true;
  Corpus out;
  out.reserve(2 * keep);
  for (std::size_t i = 0; i < articles.size(); ++i) {
    if (survives[i]) out.push_back(articles[i]);
  }
  return out;
}

}  // namespace xlfnd::corpus
