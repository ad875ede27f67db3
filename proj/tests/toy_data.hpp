#pragma once

// Small linearly separable datasets for training and evaluation tests.

#include <vector>

#include "gradcheck.hpp"
#include "xlfnd/training.hpp"

namespace xlfnd::testing {

// Word rows 0 and 1 mark fake and real articles; rows 2.. are filler.
// Speaker rows are drawn independently of the label.
struct ToySpec {
  int n_source = 160;
  int n_target = 80;
  int n_validation = 40;
  int n_test = 40;
  int vocab = 24;
  int n_speakers = 6;
  int length = 8;
  std::uint64_t seed = 1;
};

inline training::Example toy_example(const ToySpec& spec, Rng& rng, const std::string& id, int label) {
  training::Example ex;
  ex.id = id;
  ex.label = label;
  for (int t = 0; t < spec.length; ++t) {
    ex.tokens.push_back(2 + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(spec.vocab - 2))));
  }
  const int true_label = label < 0 ? static_cast<int>(uniform_index(rng, 2)) : label;
  ex.tokens[uniform_index(rng, ex.tokens.size())] = true_label;
  const auto n_spk = uniform_index(rng, 3);
  for (std::size_t k = 0; k < n_spk; ++k) {
    ex.speakers.push_back(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(spec.n_speakers))));
  }
  return ex;
}

inline training::Dataset toy_dataset(const ToySpec& spec, int embed_dim) {
  training::Dataset d;
  d.space.words = gaussian(spec.vocab, embed_dim, derive_seed(spec.seed, "words"));
  d.space.speakers = gaussian(spec.n_speakers, embed_dim, derive_seed(spec.seed, "speakers"));
  Rng rng(derive_seed(spec.seed, "examples"));
  auto fill = [&](std::vector<training::Example>& pool, int n, const std::string& prefix, bool labeled) {
    for (int i = 0; i < n; ++i) {
      pool.push_back(toy_example(spec, rng, prefix + std::to_string(i), labeled ? i % 2 : -1));
    }
  };
  fill(d.source, spec.n_source, "src-", true);
  fill(d.target, spec.n_target, "tgt-", false);
  fill(d.validation, spec.n_validation, "val-", true);
  fill(d.test, spec.n_test, "test-", true);
  return d;
}

inline model::HyperConfig toy_hyper(int embed_dim = 6) {
  auto c = tiny_config();
  c.embed_dim = embed_dim;
  c.kernel_sizes = {1, 2};
  c.kernels_per_size = 8;
  c.article_dim = 8;
  c.source_dim = 4;
  c.hidden_units = 12;
  return c;
}

}  // namespace xlfnd::testing
