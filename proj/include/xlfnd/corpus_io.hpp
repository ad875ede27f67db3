#pragma once

// Article JSONL and bilingual dictionary TSV readers/writers.

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlfnd/corpus.hpp"

namespace xlfnd::corpus {

using DictionaryPairs = std::vector<std::pair<std::string, std::string>>;

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

inline nlohmann::ordered_json article_to_json(const Article& a) {
  nlohmann::ordered_json j;
  j["id"] = a.id;
  j["lang"] = a.lang;
  j["text"] = join_tokens(a.tokens);
  j["label"] = a.label == Label::unlabeled ? nlohmann::ordered_json(nullptr)
                                           : nlohmann::ordered_json(std::string(to_string(a.label)));
  j["raw_label"] = a.raw_label ? nlohmann::ordered_json(*a.raw_label) : nlohmann::ordered_json(nullptr);
  j["date"] = a.date ? nlohmann::ordered_json(*a.date) : nlohmann::ordered_json(nullptr);
  j["speakers"] = a.gold_speakers ? nlohmann::ordered_json(*a.gold_speakers)
                                  : nlohmann::ordered_json(nullptr);
  return j;
}

namespace detail {

inline std::optional<std::string> optional_string(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw IoError(std::string("field '") + key + "' must be a string or null");
  return it->get<std::string>();
}

}  // namespace detail

// Parses one JSONL record. When `label` is null but `raw_label` is present and
// a scheme is supplied, the label is binarized from `raw_label`.
inline Article article_from_json(const nlohmann::json& j, const Tokenizer& tokenizer,
                                 const LabelScheme* scheme = nullptr) {
  if (!j.is_object()) throw IoError("article record is not a JSON object");
  Article a;
  try {
    a.id = j.at("id").get<std::string>();
    a.lang = j.at("lang").get<std::string>();
    a.tokens = tokenizer.tokenize(j.at("text").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("article record: ") + e.what());
  }
  a.raw_label = detail::optional_string(j, "raw_label");
  a.date = detail::optional_string(j, "date");
  if (auto label = detail::optional_string(j, "label")) {
    if (*label == "fake") {
      a.label = Label::fake;
    } else if (*label == "real") {
      a.label = Label::real;
    } else {
      throw IoError("article '" + a.id + "': label must be \"fake\", \"real\" or null, got '" +
                    *label + "'");
    }
    if (scheme && a.raw_label && binarize_label(*a.raw_label, *scheme) != a.label) {
      throw ContractError("article '" + a.id + "': raw_label '" + *a.raw_label +
                          "' disagrees with label '" + *label + "'");
    }
  } else if (scheme && a.raw_label) {
    a.label = binarize_label(*a.raw_label, *scheme);
  }
  if (auto it = j.find("speakers"); it != j.end() && !it->is_null()) {
    a.gold_speakers = it->get<std::vector<std::string>>();
  }
  if (a.tokens.empty()) throw IoError("article '" + a.id + "' has no tokens");
  return a;
}

inline Corpus read_articles(const std::string& path, const Tokenizer& tokenizer = default_tokenizer(),
                            const LabelScheme* scheme = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  Corpus out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      out.push_back(article_from_json(j, tokenizer, scheme));
    } catch (const IoError& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void write_articles(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& a : corpus) out << article_to_json(a).dump() << '\n';
}

inline DictionaryPairs read_dictionary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  DictionaryPairs pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw IoError(path + ":" + std::to_string(line_no) + ": expected source<TAB>target");
    }
    pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return pairs;
}

inline void write_dictionary(const std::string& path, const DictionaryPairs& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& [s, t] : pairs) out << s << '\t' << t << '\n';
}

}  // namespace xlfnd::corpus
