#pragma once

// Embedding tables, orthogonal Procrustes alignment and PPMI-SVD training of
// source embeddings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "xlfnd/common.hpp"
#include "xlfnd/corpus.hpp"
#include "xlfnd/corpus_io.hpp"

namespace xlfnd::embedding {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// token -> vector; unknown tokens resolve to the zero vector.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::vector<std::string> tokens, Matrix vectors, std::string language = {})
      : tokens_(std::move(tokens)), vectors_(std::move(vectors)), language_(std::move(language)) {
    if (tokens_.empty()) throw ContractError("embedding table: empty vocabulary");
    if (static_cast<Eigen::Index>(tokens_.size()) != vectors_.rows()) {
      throw ContractError("embedding table: " + std::to_string(tokens_.size()) + " tokens but " +
                          std::to_string(vectors_.rows()) + " vectors");
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!index_.emplace(tokens_[i], static_cast<Eigen::Index>(i)).second) {
        throw ContractError("embedding table: duplicate token '" + tokens_[i] + "'");
      }
    }
  }

  std::size_t dim() const { return static_cast<std::size_t>(vectors_.cols()); }
  std::size_t size() const { return tokens_.size(); }
  const std::string& language() const { return language_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const Matrix& vectors() const { return vectors_; }

  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  // Row index, or -1 when absent.
  Eigen::Index find(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? -1 : it->second;
  }

  Vector lookup(const std::string& token) const {
    auto row = find(token);
    if (row < 0) return Vector::Zero(vectors_.cols());
    return vectors_.row(row).transpose();
  }

 private:
  std::vector<std::string> tokens_;
  Matrix vectors_;
  std::string language_;
  std::unordered_map<std::string, Eigen::Index> index_;
};

// len x dim; OOV rows are zero.
inline Matrix embed_tokens(const EmbeddingTable& table, const std::vector<std::string>& tokens) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(tokens.size()), static_cast<Eigen::Index>(table.dim()));
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    auto row = table.find(tokens[t]);
    if (row >= 0) out.row(static_cast<Eigen::Index>(t)) = table.vectors().row(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sign convention shared by every SVD-derived output: the largest-magnitude
// entry of each left singular vector is made nonnegative (first such entry
// on exact ties). The matching right singular vector flips with it.

inline void fix_signs(Matrix& u, Matrix* v = nullptr) {
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < u.rows(); ++r) {
      if (std::abs(u(r, c)) > std::abs(u(best, c))) best = r;
    }
    if (u(best, c) < 0.0) {
      u.col(c) *= -1.0;
      if (v) v->col(c) *= -1.0;
    }
  }
}

// ---------------------------------------------------------------------------
// Procrustes

struct AlignmentResult {
  Matrix W;
  double dictionary_loss = 0.0;   // mean squared residual ||W x - y||^2 over pairs
  double identity_loss = 0.0;     // same with W = I
  std::size_t usable_pairs = 0;
  bool rank_deficient = false;
};

// W = U V^T from Y X^T = U S V^T, minimizing ||W X - Y||_F over orthogonal W.
// Columns of X / Y are source / target vectors of usable dictionary pairs.
inline AlignmentResult procrustes_align(const EmbeddingTable& src, const EmbeddingTable& tgt,
                                        const corpus::DictionaryPairs& dict) {
  if (src.dim() != tgt.dim()) {
    throw ContractError("procrustes_align: dimension mismatch " + std::to_string(src.dim()) + " vs " +
                        std::to_string(tgt.dim()));
  }
  const auto dim = static_cast<Eigen::Index>(src.dim());
  std::vector<std::pair<Eigen::Index, Eigen::Index>> rows;
  for (const auto& [s, t] : dict) {
    auto rs = src.find(s);
    auto rt = tgt.find(t);
    if (rs >= 0 && rt >= 0) rows.emplace_back(rs, rt);
  }
  if (static_cast<Eigen::Index>(rows.size()) < dim) {
    throw ContractError("procrustes_align: only " + std::to_string(rows.size()) +
                        " usable dictionary pairs, need at least " + std::to_string(dim));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix x(dim, n), y(dim, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    x.col(k) = src.vectors().row(rows[static_cast<std::size_t>(k)].first).transpose();
    y.col(k) = tgt.vectors().row(rows[static_cast<std::size_t>(k)].second).transpose();
  }
  Matrix m = y * x.transpose();
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  AlignmentResult r;
  r.W = svd.matrixU() * svd.matrixV().transpose();
  const auto& sv = svd.singularValues();
  r.rank_deficient = sv.size() == 0 || sv(sv.size() - 1) <= 1e-12 * std::max(1.0, sv(0));
  r.usable_pairs = rows.size();
  r.dictionary_loss = (r.W * x - y).squaredNorm() / static_cast<double>(n);
  r.identity_loss = (x - y).squaredNorm() / static_cast<double>(n);
  return r;
}

inline EmbeddingTable apply_alignment(const EmbeddingTable& table, const Matrix& w) {
  if (w.rows() != static_cast<Eigen::Index>(table.dim()) || w.cols() != w.rows()) {
    throw ContractError("apply_alignment: expected a " + std::to_string(table.dim()) + "x" +
                        std::to_string(table.dim()) + " matrix, got " + std::to_string(w.rows()) +
                        "x" + std::to_string(w.cols()));
  }
  return EmbeddingTable(table.tokens(), table.vectors() * w.transpose(), table.language());
}

// ---------------------------------------------------------------------------
// PPMI + truncated SVD

struct TrainConfig {
  std::size_t dim = 100;
  std::size_t window = 5;
  std::size_t min_count = 1;
  std::uint64_t seed = 0;
  // Append a label pseudo-token to every window of labeled articles.
  bool label_tokens = true;
  // Scales the PPMI entries of the label pseudo-token columns.
  double label_weight = 1.0;
  // Context distribution smoothing exponent.
  double context_smoothing = 0.75;
  // Vocabularies above this size use a seeded randomized range finder.
  std::size_t exact_svd_limit = 2500;
};

inline constexpr const char* kFakeToken = "⟨FAKE⟩";
inline constexpr const char* kRealToken = "⟨REAL⟩";

namespace detail {

// Top-k left singular vectors and values of m (rows x cols), exact or via a
// randomized range finder with power iterations.
inline std::pair<Matrix, Vector> truncated_svd(const Matrix& m, Eigen::Index k, bool exact,
                                               std::uint64_t seed) {
  if (exact) {
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU);
    Eigen::Index keep = std::min<Eigen::Index>(k, svd.singularValues().size());
    return {svd.matrixU().leftCols(keep), svd.singularValues().head(keep)};
  }
  const Eigen::Index sketch = std::min<Eigen::Index>(k + 10, std::min(m.rows(), m.cols()));
  Rng rng(derive_seed(seed, "randomized-svd"));
  std::normal_distribution<double> normal;
  Matrix omega(m.cols(), sketch);
  for (Eigen::Index j = 0; j < sketch; ++j) {
    for (Eigen::Index i = 0; i < m.cols(); ++i) omega(i, j) = normal(rng);
  }
  Matrix q = Eigen::HouseholderQR<Matrix>(m * omega).householderQ() * Matrix::Identity(m.rows(), sketch);
  for (int it = 0; it < 4; ++it) {
    Matrix z = Eigen::HouseholderQR<Matrix>(m.transpose() * q).householderQ() *
               Matrix::Identity(m.cols(), sketch);
    q = Eigen::HouseholderQR<Matrix>(m * z).householderQ() * Matrix::Identity(m.rows(), sketch);
  }
  Matrix b = q.transpose() * m;
  Eigen::BDCSVD<Matrix> svd(b, Eigen::ComputeThinU);
  Eigen::Index keep = std::min<Eigen::Index>(k, svd.singularValues().size());
  return {q * svd.matrixU().leftCols(keep), svd.singularValues().head(keep)};
}

}  // namespace detail

// Embedding over tokens with count >= min_count: PPMI of symmetric-window
// co-occurrence (plus label pseudo-token contexts for labeled articles),
// factored as U_d * sqrt(S_d). Vocabulary is sorted; dimensions beyond the
// matrix rank are zero.
inline EmbeddingTable train_source_embedding(const corpus::Corpus& corpus, const TrainConfig& cfg,
                                             std::string language = {}) {
  if (corpus.empty()) throw ContractError("train_source_embedding: empty corpus");
  if (cfg.dim == 0) throw ContractError("train_source_embedding: dim must be > 0");
  std::map<std::string, std::size_t> counts;
  for (const auto& a : corpus) {
    for (const auto& t : a.tokens) ++counts[t];
  }
  std::vector<std::string> vocab;
  for (const auto& [t, c] : counts) {
    if (c >= cfg.min_count) vocab.push_back(t);
  }
  if (vocab.empty()) {
    throw ContractError("train_source_embedding: empty vocabulary after min_count=" +
                        std::to_string(cfg.min_count) + " filter");
  }
  std::unordered_map<std::string, Eigen::Index> index;
  for (std::size_t i = 0; i < vocab.size(); ++i) index[vocab[i]] = static_cast<Eigen::Index>(i);

  const auto v = static_cast<Eigen::Index>(vocab.size());
  const Eigen::Index fake_col = v, real_col = v + 1;
  Matrix cooc = Matrix::Zero(v, v + 2);
  std::vector<Eigen::Index> ids;
  for (const auto& a : corpus) {
    ids.clear();
    for (const auto& t : a.tokens) {
      auto it = index.find(t);
      ids.push_back(it == index.end() ? -1 : it->second);
    }
    const bool labeled = cfg.label_tokens && a.label != corpus::Label::unlabeled;
    const Eigen::Index label_col = a.label == corpus::Label::fake ? fake_col : real_col;
    const auto n = ids.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (ids[i] < 0) continue;
      const std::size_t lo = i >= cfg.window ? i - cfg.window : 0;
      const std::size_t hi = std::min(n - 1, i + cfg.window);
      for (std::size_t j = lo; j <= hi; ++j) {
        if (j != i && ids[j] >= 0) cooc(ids[i], ids[j]) += 1.0;
      }
      if (labeled) cooc(ids[i], label_col) += 1.0;
    }
  }

  const double total = cooc.sum();
  Matrix ppmi = Matrix::Zero(v, v + 2);
  if (total > 0.0) {
    Vector row_sum = cooc.rowwise().sum();
    Eigen::RowVectorXd col_weight = cooc.colwise().sum();
    for (Eigen::Index c = 0; c < col_weight.size(); ++c) {
      col_weight(c) = std::pow(col_weight(c), cfg.context_smoothing);
    }
    const double col_total = col_weight.sum();
    for (Eigen::Index r = 0; r < v; ++r) {
      for (Eigen::Index c = 0; c < v + 2; ++c) {
        if (cooc(r, c) <= 0.0) continue;
        double pmi = std::log((cooc(r, c) / total) / ((row_sum(r) / total) * (col_weight(c) / col_total)));
        if (pmi > 0.0) ppmi(r, c) = c >= v ? cfg.label_weight * pmi : pmi;
      }
    }
  }

  const auto dim = static_cast<Eigen::Index>(cfg.dim);
  auto [u, s] = detail::truncated_svd(ppmi, dim, vocab.size() <= cfg.exact_svd_limit, cfg.seed);
  fix_signs(u);
  Matrix vectors = Matrix::Zero(v, dim);
  for (Eigen::Index c = 0; c < s.size(); ++c) {
    if (s(c) <= 1e-12) continue;
    vectors.col(c) = u.col(c) * std::sqrt(s(c));
  }
  return EmbeddingTable(std::move(vocab), std::move(vectors), std::move(language));
}

// ---------------------------------------------------------------------------
// Text format: header "<vocab> <dim>", then "token v1 ... vd" with 6
// significant digits.

inline void write_table(std::ostream& out, const EmbeddingTable& table) {
  out << table.size() << ' ' << table.dim() << '\n';
  char buf[32];
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.tokens()[i];
    for (std::size_t d = 0; d < table.dim(); ++d) {
      double x = table.vectors()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d));
      std::snprintf(buf, sizeof buf, "%.6g", x == 0.0 ? 0.0 : x);
      out << ' ' << buf;
    }
    out << '\n';
  }
}

inline void write_table(const std::string& path, const EmbeddingTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_table(out, table);
}

inline EmbeddingTable read_table(std::istream& in, const std::string& name = "<stream>",
                                 std::string language = {}) {
  std::vector<std::string> tokens;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::vector<std::string> parts;
    for (std::string f; fields >> f;) parts.push_back(f);
    if (line_no == 1 && parts.size() == 2 &&
        parts[0].find_first_not_of("0123456789") == std::string::npos &&
        parts[1].find_first_not_of("0123456789") == std::string::npos) {
      dim = std::stoul(parts[1]);
      continue;
    }
    if (parts.size() < 2) throw IoError(name + ":" + std::to_string(line_no) + ": no vector values");
    if (dim == 0) dim = parts.size() - 1;
    if (parts.size() - 1 != dim) {
      throw IoError(name + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                    " values, got " + std::to_string(parts.size() - 1));
    }
    std::vector<double> row(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      try {
        row[d] = std::stod(parts[d + 1]);
      } catch (const std::exception&) {
        throw IoError(name + ":" + std::to_string(line_no) + ": bad number '" + parts[d + 1] + "'");
      }
    }
    tokens.push_back(parts[0]);
    rows.push_back(std::move(row));
  }
  if (tokens.empty()) throw IoError(name + ": no embedding rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t d = 0; d < dim; ++d) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d)) = rows[r][d];
    }
  }
  try {
    return EmbeddingTable(std::move(tokens), std::move(m), std::move(language));
  } catch (const ContractError& e) {
    throw IoError(name + ": " + e.what());
  }
}

inline EmbeddingTable read_table(const std::string& path, std::string language = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_table(in, path, std::move(language));
}

}  // namespace xlfnd::embedding
