#include <gtest/gtest.h>

#include <sstream>

#include "toy_data.hpp"
#include "xlfnd/eval.hpp"

namespace {

using namespace xlfnd;
using namespace xlfnd::testing;

TEST(Metrics, AllCorrect) {
  auto m = eval::metrics(eval::confusion({0, 1, 0, 1}, {0, 1, 0, 1}));
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.f1, 1.0);
}

TEST(Metrics, WorkedExample) {
  // tp=3, fp=1, tn=4, fn=2 over ten items; 0 (fake) is the positive class.
  std::vector<int> pred{0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
  std::vector<int> truth{0, 0, 0, 1, 1, 1, 1, 1, 0, 0};
  auto c = eval::confusion(pred, truth);
  EXPECT_EQ(c.tp, 3u);
  EXPECT_EQ(c.fp, 1u);
  EXPECT_EQ(c.tn, 4u);
  EXPECT_EQ(c.fn, 2u);
  auto m = eval::metrics(c);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.7);
  EXPECT_DOUBLE_EQ(m.precision, 0.75);
  EXPECT_DOUBLE_EQ(m.recall, 0.6);
  EXPECT_NEAR(m.f1, 2.0 / 3.0, 1e-12);
}

TEST(Metrics, NoPositivePredictions) {
  auto m = eval::metrics(eval::confusion({1, 1, 1}, {0, 1, 1}));
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_TRUE(m.precision_degenerate);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_FALSE(m.recall_degenerate);
  EXPECT_TRUE(m.f1_degenerate);
  auto j = eval::to_json(m);
  EXPECT_EQ(j.at("degenerate"), (nlohmann::json{"precision", "f1"}));
  EXPECT_THROW(eval::metrics(eval::Confusion{}), ContractError);
  EXPECT_THROW(eval::confusion({0}, {0, 1}), ContractError);
}

TEST(Metrics, BruteForceRecount) {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 60);
    std::vector<int> pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(uniform_index(rng, 2));
      truth[i] = static_cast<int>(uniform_index(rng, 2));
    }
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += pred[i] == 0 && truth[i] == 0;
      fp += pred[i] == 0 && truth[i] == 1;
      tn += pred[i] == 1 && truth[i] == 1;
      fn += pred[i] == 1 && truth[i] == 0;
    }
    auto m = eval::metrics(eval::confusion(pred, truth));
    const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    EXPECT_EQ(m.accuracy, static_cast<double>(tp + tn) / static_cast<double>(n));
    EXPECT_EQ(m.precision, p);
    EXPECT_EQ(m.recall, r);
    EXPECT_EQ(m.f1, p + r > 0 ? 2 * p * r / (p + r) : 0.0);
    if (p + r > 0) {
      EXPECT_GE(m.f1, std::min(p, r) - 1e-15);
      EXPECT_LE(m.f1, std::max(p, r) + 1e-15);
    }
  }
}

TEST(RandomBaseline, NearHalfAndSeeded) {
  std::vector<int> labels(400);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
  auto r = eval::random_baseline(labels, 3);
  EXPECT_EQ(r.trials.size(), 5u);
  EXPECT_NEAR(r.mean.accuracy, 0.5, 0.05);
  EXPECT_EQ(eval::to_json(r).dump(), eval::to_json(eval::random_baseline(labels, 3)).dump());
  EXPECT_THROW(eval::random_baseline({}, 3), ContractError);
}

TEST(TrialReport, MeanIsRecomputable) {
  std::vector<eval::TrialResult> trials;
  Rng rng(5);
  for (int t = 0; t < 5; ++t) {
    std::vector<int> pred(20), truth(20);
    for (int i = 0; i < 20; ++i) {
      pred[i] = static_cast<int>(uniform_index(rng, 2));
      truth[i] = i % 2;
    }
    eval::TrialResult r;
    r.seed = static_cast<std::uint64_t>(t);
    r.confusion = eval::confusion(pred, truth);
    r.metrics = eval::metrics(r.confusion);
    trials.push_back(r);
  }
  auto report = eval::make_report("abc", trials);
  double acc = 0, f1 = 0;
  for (const auto& t : report.trials) {
    acc += t.metrics.accuracy;
    f1 += t.metrics.f1;
  }
  EXPECT_NEAR(report.mean.accuracy, acc / 5, 1e-15);
  EXPECT_NEAR(report.mean.f1, f1 / 5, 1e-15);
  auto j = eval::to_json(report);
  EXPECT_EQ(j.at("seeds").size(), 5u);
  EXPECT_EQ(j.at("config_fingerprint"), "abc");
}

TEST(Fingerprint, StableHex) {
  auto a = eval::fingerprint({{"x", 1}});
  EXPECT_EQ(a.size(), 16u);
  EXPECT_EQ(a, eval::fingerprint({{"x", 1}}));
  EXPECT_NE(a, eval::fingerprint({{"x", 2}}));
}

TEST(StratifiedFolds, PartitionAndBalance) {
  std::vector<int> labels;
  for (int i = 0; i < 53; ++i) labels.push_back(i < 31 ? 0 : 1);
  auto fold = eval::stratified_folds(labels, 5, 9);
  std::array<int, 5> fake{}, real{};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ASSERT_GE(fold[i], 0);
    ASSERT_LT(fold[i], 5);
    (labels[i] == 0 ? fake : real)[static_cast<std::size_t>(fold[i])]++;
  }
  EXPECT_LE(*std::max_element(fake.begin(), fake.end()) - *std::min_element(fake.begin(), fake.end()), 1);
  EXPECT_LE(*std::max_element(real.begin(), real.end()) - *std::min_element(real.begin(), real.end()), 1);
  EXPECT_EQ(fold, eval::stratified_folds(labels, 5, 9));
  EXPECT_THROW(eval::stratified_folds({0, 0, 0, 0, 0, 1}, 5, 1), ContractError);
  EXPECT_THROW(eval::stratified_folds({0, 1, 2}, 2, 1), ContractError);
}

TEST(TextCnn, SeparableTargetData) {
  auto hyper = toy_hyper();
  ToySpec spec;
  spec.n_validation = 150;
  auto data = toy_dataset(spec, hyper.embed_dim);
  eval::ExperimentConfig cfg;
  cfg.hyper = hyper;
  cfg.train.epochs = 15;
  cfg.train.batch_size = 16;
  cfg.train.learning_rate = 0.005;
  cfg.seed = 4;
  auto r = eval::textcnn_crossval<float>(data.validation, data.space, cfg, 5);
  EXPECT_EQ(r.trials.size(), 5u);
  std::size_t covered = 0;
  for (const auto& t : r.trials) covered += t.confusion.total();
  EXPECT_EQ(covered, data.validation.size());
  EXPECT_GE(r.mean.accuracy, 0.9);
}

TEST(AblationSpec, JsonRoundTripAndStrictness) {
  eval::AblationSpec s;
  s.source_data_types = {source::EntityType::person, source::EntityType::org};
  s.shuffle = true;
  s.embedding = pipeline::SpeakerEmbedding::bwe;
  s.encoder = eval::Encoder::lstm_attention;
  nlohmann::json j = s;
  auto back = j.get<eval::AblationSpec>();
  EXPECT_EQ(nlohmann::json(back), j);
  j["bogus"] = 1;
  EXPECT_ANY_THROW(j.get<eval::AblationSpec>());
  auto [component, features] = eval::describe(s);
  EXPECT_FALSE(component.empty());
  EXPECT_FALSE(features.empty());
}

TEST(AblationSpec, AppliesEncoderChoice) {
  model::HyperConfig h;
  eval::AblationSpec s;
  s.encoder = eval::Encoder::cnn;
  eval::apply(s, h);
  EXPECT_EQ(h.source_encoder_kind, model::SourceEncoderKind::cnn);
  s.encoder = eval::Encoder::lstm_first;
  eval::apply(s, h);
  EXPECT_EQ(h.source_encoder_kind, model::SourceEncoderKind::bilstm);
  EXPECT_EQ(h.pooling, model::Pooling::first);
  s.use_source = false;
  eval::apply(s, h);
  EXPECT_FALSE(h.use_source);
}

TEST(AblationCsv, Header) {
  std::ostringstream out;
  eval::write_ablation_csv(out, {});
  EXPECT_EQ(out.str(), "component,features,accuracy,precision,recall,f1\n");
}

}  // namespace
