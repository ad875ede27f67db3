#pragma once

// Speaker credibility scores, the diff_cred neighbourhood-coherence metric,
// frequency ranking and 2-D projection of speaker vectors.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "xlfnd/common.hpp"
#include "xlfnd/corpus.hpp"
#include "xlfnd/embedding.hpp"

namespace xlfnd::credibility {

struct SpeakerStats {
  std::string speaker;
  std::vector<int> outcomes;  // -1 fake, +1 real, one per article
};

struct CredibilityScore {
  double raw = 0.0;         // s_i in [-1, 1]
  double normalized = 0.0;  // s_hat_i in [0, 1]
  std::size_t count = 0;    // c_i
};

using ScoreMap = std::map<std::string, CredibilityScore>;

// s_i = mean outcome; s_hat_i = (s_i - min s) / (max s - min s).
// A population with a single raw value is rejected unless the caller asks for
// the constant 0.5 fallback.
inline ScoreMap credibility_scores(const std::vector<SpeakerStats>& stats,
                                   bool degenerate_fallback = false) {
  if (stats.size() < 2) throw ContractError("credibility_scores: need at least 2 speakers");
  ScoreMap out;
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& st : stats) {
    if (st.outcomes.empty()) {
      throw ContractError("credibility_scores: speaker '" + st.speaker + "' has no outcomes");
    }
    long sum = 0;
    for (int b : st.outcomes) {
      if (b != 1 && b != -1) {
        throw ContractError("credibility_scores: outcome for '" + st.speaker + "' is not +-1");
      }
      sum += b;
    }
    CredibilityScore sc;
    sc.count = st.outcomes.size();
    sc.raw = static_cast<double>(sum) / static_cast<double>(sc.count);
    if (!out.emplace(st.speaker, sc).second) {
      throw ContractError("credibility_scores: duplicate speaker '" + st.speaker + "'");
    }
    lo = first ? sc.raw : std::min(lo, sc.raw);
    hi = first ? sc.raw : std::max(hi, sc.raw);
    first = false;
  }
  if (hi == lo) {
    if (!degenerate_fallback) {
      throw ContractError("credibility_scores: degenerate normalization (all raw scores equal)");
    }
    for (auto& [_, sc] : out) sc.normalized = 0.5;
    return out;
  }
  for (auto& [_, sc] : out) sc.normalized = (sc.raw - lo) / (hi - lo);
  return out;
}

// One outcome per (article, distinct speaker) over labeled articles.
inline std::vector<SpeakerStats> collect_stats(
    const corpus::Corpus& articles, const std::vector<std::vector<std::string>>& speakers) {
  if (articles.size() != speakers.size()) {
    throw ContractError("collect_stats: speaker sequences do not match articles");
  }
  std::map<std::string, std::vector<int>> by_speaker;
  for (std::size_t i = 0; i < articles.size(); ++i) {
    if (articles[i].label == corpus::Label::unlabeled) continue;
    const int b = articles[i].label == corpus::Label::real ? 1 : -1;
    std::vector<std::string> distinct = speakers[i];
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (const auto& s : distinct) by_speaker[s].push_back(b);
  }
  std::vector<SpeakerStats> out;
  for (auto& [s, outcomes] : by_speaker) out.push_back({s, std::move(outcomes)});
  return out;
}

// ---------------------------------------------------------------------------
// diff_cred

enum class Metric { cosine, euclidean };

struct DiffCredConfig {
  std::size_t m = 40;
  std::size_t n = 5;
  Metric metric = Metric::cosine;
};

struct DiffCredResult {
  double value = 0.0;
  // neighbors[i] lists the n nearest speakers of speakers[i].
  std::vector<std::vector<std::size_t>> neighbors;
};

// Mean |s_hat_i - s_hat_{N_ij}| over each speaker's n nearest neighbours among
// the given speakers (self excluded). Neighbour ties go to the smaller
// speaker id.
inline DiffCredResult diff_cred(const embedding::EmbeddingTable& table, const ScoreMap& scores,
                                std::vector<std::string> speakers, const DiffCredConfig& cfg) {
  std::sort(speakers.begin(), speakers.end());
  speakers.erase(std::unique(speakers.begin(), speakers.end()), speakers.end());
  const std::size_t m = speakers.size();
  if (cfg.n == 0 || cfg.n >= m) {
    throw ContractError("diff_cred: need 0 < n < m (n=" + std::to_string(cfg.n) +
                        ", m=" + std::to_string(m) + ")");
  }
  std::vector<embedding::Vector> vecs;
  std::vector<double> s_hat;
  for (const auto& s : speakers) {
    if (!table.contains(s)) throw ContractError("diff_cred: no vector for speaker '" + s + "'");
    auto it = scores.find(s);
    if (it == scores.end()) throw ContractError("diff_cred: no score for speaker '" + s + "'");
    vecs.push_back(table.lookup(s));
    s_hat.push_back(it->second.normalized);
  }

  // Distance where smaller means nearer.
  auto distance = [&](std::size_t i, std::size_t j) {
    if (cfg.metric == Metric::euclidean) return (vecs[i] - vecs[j]).norm();
    double denom = vecs[i].norm() * vecs[j].norm();
    double cos = denom > 0.0 ? vecs[i].dot(vecs[j]) / denom : 0.0;
    return -cos;
  };

  DiffCredResult r;
  r.neighbors.resize(m);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i) cand.emplace_back(distance(i, j), j);
    }
    std::stable_sort(cand.begin(), cand.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t k = 0; k < cfg.n; ++k) {
      r.neighbors[i].push_back(cand[k].second);
      total += std::abs(s_hat[i] - s_hat[cand[k].second]);
    }
  }
  r.value = total / static_cast<double>(m * cfg.n);
  return r;
}

// ---------------------------------------------------------------------------
// Frequency ranking

struct TopSpeakers {
  std::vector<std::string> ids;
  bool shortfall = false;
};

// The k most frequent speakers (ties by id). With per_language the ranking
// runs separately for each language in order of first appearance and the
// results are concatenated.
inline TopSpeakers top_frequent_speakers(const corpus::Corpus& articles,
                                         const std::vector<std::vector<std::string>>& speakers,
                                         std::size_t k, bool per_language) {
  if (articles.size() != speakers.size()) {
    throw ContractError("top_frequent_speakers: speaker sequences do not match articles");
  }
  std::vector<std::string> langs;
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (std::size_t i = 0; i < articles.size(); ++i) {
    const std::string lang = per_language ? articles[i].lang : std::string();
    if (std::find(langs.begin(), langs.end(), lang) == langs.end()) langs.push_back(lang);
    for (const auto& s : speakers[i]) ++counts[lang][s];
  }
  TopSpeakers out;
  for (const auto& lang : langs) {
    std::vector<std::pair<std::string, std::size_t>> ranked(counts[lang].begin(), counts[lang].end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() < k) out.shortfall = true;
    for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) out.ids.push_back(ranked[i].first);
  }
  return out;
}

// ---------------------------------------------------------------------------
// 2-D projection

// Centered principal-component coordinates (U S restricted to two
// components) with the embedding module's sign convention.
inline std::map<std::string, std::pair<double, double>> project_2d(
    const embedding::EmbeddingTable& table, const std::vector<std::string>& speakers) {
  if (speakers.size() < 3) throw ContractError("project_2d: need at least 3 speakers");
  embedding::Matrix x(static_cast<Eigen::Index>(speakers.size()), static_cast<Eigen::Index>(table.dim()));
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    if (!table.contains(speakers[i])) {
      throw ContractError("project_2d: no vector for speaker '" + speakers[i] + "'");
    }
    x.row(static_cast<Eigen::Index>(i)) = table.lookup(speakers[i]).transpose();
  }
  x.rowwise() -= x.colwise().mean();
  Eigen::JacobiSVD<embedding::Matrix> svd(x, Eigen::ComputeThinV);
  const auto k = std::min<Eigen::Index>(2, svd.matrixV().cols());
  // X V equals U S and maps identical rows to identical coordinates.
  embedding::Matrix proj = embedding::Matrix::Zero(x.rows(), 2);
  proj.leftCols(k) = x * svd.matrixV().leftCols(k);
  embedding::fix_signs(proj);
  std::map<std::string, std::pair<double, double>> out;
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    auto r = static_cast<Eigen::Index>(i);
    out[speakers[i]] = {proj(r, 0), proj(r, 1)};
  }
  return out;
}

}  // namespace xlfnd::credibility
