#include <gtest/gtest.h>

#include <numeric>

#include "toy_data.hpp"
#include "xlfnd/training.hpp"

namespace {

using namespace xlfnd;
using namespace xlfnd::testing;
using training::Trainer;

training::TrainConfig fast_config(std::uint64_t seed = 1) {
  training::TrainConfig c;
  c.seed = seed;
  c.epochs = 3;
  c.batch_size = 16;
  c.learning_rate = 0.005;
  return c;
}

double max_abs(const model::ParamSet<double>& set) {
  double m = 0.0;
  for (const auto& [_, b] : set.blocks) m = std::max(m, b.cwiseAbs().maxCoeff());
  return m;
}

TEST(EarlyStopSelect, Examples) {
  EXPECT_EQ(training::early_stop_select({{1, .5}, {2, .7}, {3, .6}}), 2);
  EXPECT_EQ(training::early_stop_select({{1, .1}, {2, .2}, {3, .3}, {4, .4}}), 4);
  EXPECT_EQ(training::early_stop_select({{1, .5}, {2, .7}, {3, .6}, {4, .65}, {5, .7}}), 2);
  EXPECT_THROW(training::early_stop_select({}), ContractError);
}

TEST(TrainConfig, Validation) {
  training::TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  for (auto mutate : std::vector<std::function<void(training::TrainConfig&)>>{
           [](auto& x) { x.lambda = -1; }, [](auto& x) { x.clip = 0; }, [](auto& x) { x.learning_rate = 0; },
           [](auto& x) { x.critic_steps = 0; }, [](auto& x) { x.epochs = 0; }, [](auto& x) { x.batch_size = 0; }}) {
    auto bad = c;
    mutate(bad);
    EXPECT_THROW(bad.validate(), ContractError);
  }
  nlohmann::json j = c;
  EXPECT_EQ(j.at("critic_steps"), 5);
  EXPECT_EQ(j.at("learning_rate"), 0.0005);
}

TEST(CriticStep, ClipsAndFreezesEncoders) {
  auto hyper = toy_hyper();
  auto data = toy_dataset({}, hyper.embed_dim);
  Trainer<double> t(hyper, fast_config(), data, model::init_params<double>(hyper, 1));
  const auto before = t.params();
  auto src = t.sample(data.source.size());
  auto tgt = t.sample(data.target.size());
  t.critic_step(src, tgt);
  EXPECT_LE(max_abs(t.params().critic), 0.01);
  EXPECT_EQ(t.params().article, before.article);
  EXPECT_EQ(t.params().source, before.source);
  EXPECT_EQ(t.params().detector, before.detector);
  EXPECT_EQ(t.critic_updates(), 1);
}

TEST(CriticStep, SymmetricBatchesGiveZeroObjective) {
  auto hyper = toy_hyper();
  auto data = toy_dataset({}, hyper.embed_dim);
  data.target = data.source;
  auto params = model::init_params<double>(hyper, 2);
  model::clip_params(params.critic, 0.01);
  Trainer<double> t(hyper, fast_config(), data, params);
  std::vector<std::size_t> idx{0, 3, 5, 7};
  EXPECT_EQ(t.critic_step(idx, idx), 0.0);
  for (std::size_t b = 0; b < params.critic.blocks.size(); ++b) {
    const auto delta = (t.params().critic.blocks[b].second - params.critic.blocks[b].second).cwiseAbs().maxCoeff();
    EXPECT_LE(delta, fast_config().learning_rate);
  }
}

TEST(MainStep, NeverTouchesCritic) {
  auto hyper = toy_hyper();
  auto data = toy_dataset({}, hyper.embed_dim);
  Trainer<double> t(hyper, fast_config(), data, model::init_params<double>(hyper, 3));
  const auto critic = t.params().critic;
  const auto article = t.params().article;
  t.main_step(t.sample(data.source.size()), t.sample(data.target.size()));
  EXPECT_EQ(t.params().critic, critic);
  EXPECT_FALSE(t.params().article == article);
  EXPECT_EQ(t.main_updates(), 1);
}

// Encoder gradients split into the critic term plus lambda times the
// detector term; lambda = 0 leaves the critic term alone.
TEST(MainStep, GradientDecomposition) {
  auto hyper = toy_hyper();
  auto data = toy_dataset({}, hyper.embed_dim);
  auto params = model::init_params<double>(hyper, 4);
  std::vector<std::size_t> src{1, 2, 3, 4, 9}, tgt{0, 5, 6};

  auto jd_only = [&] {
    autodiff::Tape<double> tape;
    auto a = model::bind_set(tape, params.article, true);
    auto s = model::bind_set(tape, params.source, true);
    auto d = model::bind_set(tape, params.critic, false);
    auto es = model::news_forward(tape, hyper, a, s, training::make_batch<double>(data.space, data.source, src));
    auto et = model::news_forward(tape, hyper, a, s, training::make_batch<double>(data.space, data.target, tgt));
    tape.backward(tape.sub(tape.mean(model::critic_forward(tape, hyper, d, es)),
                           tape.mean(model::critic_forward(tape, hyper, d, et))));
    return std::pair{model::harvest(tape, a), model::harvest(tape, s)};
  };
  auto ce_only = [&] {
    autodiff::Tape<double> tape;
    auto a = model::bind_set(tape, params.article, true);
    auto s = model::bind_set(tape, params.source, true);
    auto n = model::bind_set(tape, params.detector, false);
    auto es = model::news_forward(tape, hyper, a, s, training::make_batch<double>(data.space, data.source, src));
    std::vector<int> y;
    for (auto i : src) y.push_back(data.source[i].label);
    tape.backward(tape.softmax_cross_entropy(model::detector_logits(tape, hyper, n, es), y));
    return std::pair{model::harvest(tape, a), model::harvest(tape, s)};
  };
  const auto [jd_a, jd_s] = jd_only();
  const auto [ce_a, ce_s] = ce_only();

  for (double lambda : {0.0, 0.01, 0.5}) {
    auto cfg = fast_config();
    cfg.lambda = lambda;
    Trainer<double> t(hyper, cfg, data, params);
    auto g = t.main_gradients(src, tgt);
    for (std::size_t b = 0; b < g.article.size(); ++b) {
      EXPECT_LE((g.article[b] - (jd_a[b] + lambda * ce_a[b])).cwiseAbs().maxCoeff(), 1e-12) << lambda;
    }
    for (std::size_t b = 0; b < g.source.size(); ++b) {
      EXPECT_LE((g.source[b] - (jd_s[b] + lambda * ce_s[b])).cwiseAbs().maxCoeff(), 1e-12) << lambda;
    }
  }
}

TEST(MainStep, ConfidentBatchCrossEntropy) {
  autodiff::Matrix<double> z(3, 2);
  const double margin = std::log(99.0);
  z << margin, 0, 0, margin, 0, margin;
  autodiff::Tape<double> tape;
  const double ce = tape.value(tape.softmax_cross_entropy(tape.constant(z), {0, 1, 1}))(0, 0);
  EXPECT_LE(ce, 0.0101);
  EXPECT_NEAR(ce, -std::log(0.99), 1e-12);
}

TEST(Train, InstrumentedInvariants) {
  auto hyper = toy_hyper();
  auto data = toy_dataset({}, hyper.embed_dim);
  auto cfg = fast_config();
  Trainer<double> t(hyper, cfg, data, model::init_params<double>(hyper, 5));
  long critic_checks = 0, main_checks = 0;
  model::ModelParams<double> snapshot = t.params();
  t.after_critic_step = [&](const Trainer<double>& tr) {
    EXPECT_LE(max_abs(tr.params().critic), cfg.clip);
    EXPECT_EQ(tr.params().article, snapshot.article);
    EXPECT_EQ(tr.params().source, snapshot.source);
    EXPECT_TRUE(std::isfinite(tr.last_critic_objective()));
    ++critic_checks;
  };
  t.after_main_step = [&](const Trainer<double>& tr) {
    EXPECT_EQ(tr.critic_updates(), cfg.critic_steps * tr.main_updates());
    EXPECT_TRUE(tr.params().all_finite());
    snapshot = tr.params();
    ++main_checks;
  };
  auto r = t.train();
  const long per_epoch = (static_cast<long>(data.source.size()) + cfg.batch_size - 1) / cfg.batch_size;
  EXPECT_EQ(main_checks, per_epoch * cfg.epochs);
  EXPECT_EQ(critic_checks, cfg.critic_steps * main_checks);
  EXPECT_EQ(r.critic_updates, cfg.critic_steps * r.main_updates);
  ASSERT_EQ(r.history.size(), static_cast<std::size_t>(cfg.epochs));
  std::vector<std::pair<int, double>> hist;
  for (const auto& h : r.history) {
    hist.emplace_back(h.epoch, h.val_accuracy);
    EXPECT_TRUE(std::isfinite(h.jd_estimate));
    EXPECT_TRUE(std::isfinite(h.ln));
  }
  EXPECT_EQ(r.best_epoch, training::early_stop_select(hist));
}

TEST(Train, MaxIterationsCapsMainSteps) {
  auto hyper = toy_hyper();
  auto data = toy_dataset({}, hyper.embed_dim);
  auto cfg = fast_config();
  cfg.max_iterations = 7;
  cfg.epochs = 5;
  Trainer<double> t(hyper, cfg, data, model::init_params<double>(hyper, 5));
  auto r = t.train();
  EXPECT_EQ(r.main_updates, 7);
  EXPECT_EQ(r.critic_updates, 35);
}

TEST(Train, Deterministic) {
  auto hyper = toy_hyper();
  auto data = toy_dataset({}, hyper.embed_dim);
  auto run = [&] {
    Trainer<float> t(hyper, fast_config(7), data, model::init_params<float>(hyper, 7));
    return t.train();
  };
  auto a = run(), b = run();
  EXPECT_EQ(a.best, b.best);
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].ln, b.history[i].ln);
    EXPECT_EQ(a.history[i].jd_estimate, b.history[i].jd_estimate);
    EXPECT_EQ(a.history[i].val_accuracy, b.history[i].val_accuracy);
  }
}

TEST(Train, Errors) {
  auto hyper = toy_hyper();
  auto data = toy_dataset({}, hyper.embed_dim);
  auto params = model::init_params<double>(hyper, 1);
  auto empty_src = data;
  empty_src.source.clear();
  EXPECT_THROW(Trainer<double>(hyper, fast_config(), empty_src, params), ContractError);
  auto empty_tgt = data;
  empty_tgt.target.clear();
  EXPECT_THROW(Trainer<double>(hyper, fast_config(), empty_tgt, params), ContractError);
  auto no_val = data;
  no_val.validation.clear();
  Trainer<double> t(hyper, fast_config(), no_val, params);
  EXPECT_THROW(t.train(), ContractError);
  auto wrong_dim = toy_hyper(7);
  EXPECT_THROW(Trainer<double>(wrong_dim, fast_config(), data, model::init_params<double>(wrong_dim, 1)),
               ContractError);
}

TEST(Train, NonFiniteLossAbortsWithDiagnostics) {
  auto hyper = toy_hyper();
  auto data = toy_dataset({}, hyper.embed_dim);
  auto params = model::init_params<double>(hyper, 1);
  params.detector["out.b"](0, 0) = std::numeric_limits<double>::infinity();
  Trainer<double> t(hyper, fast_config(), data, params);
  try {
    t.main_step({0, 1}, {0});
    FAIL() << "expected AbortError";
  } catch (const AbortError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("main iteration 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("src-0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("tgt-0"), std::string::npos) << msg;
  }
}

// Logistic regression on bag-of-words counts confirms the toy source set is
// separable before the adversarial trainer is asked to fit it.
TEST(Train, SeparableSourceDataIsFit) {
  auto hyper = toy_hyper();
  ToySpec spec;
  spec.n_source = 200;
  auto data = toy_dataset(spec, hyper.embed_dim);

  const auto n = static_cast<Eigen::Index>(data.source.size());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, spec.vocab + 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int tok : data.source[static_cast<std::size_t>(i)].tokens) x(i, tok) += 1.0;
    x(i, spec.vocab) = 1.0;
    y(i) = data.source[static_cast<std::size_t>(i)].label;
  }
  Eigen::VectorXd w = Eigen::VectorXd::Zero(spec.vocab + 1);
  for (int it = 0; it < 2000; ++it) {
    Eigen::VectorXd p = ((-(x * w)).array().exp() + 1.0).inverse().matrix();
    w -= 0.1 * x.transpose() * (p - y) / static_cast<double>(n);
  }
  int lr_correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) lr_correct += ((x.row(i).dot(w) > 0) ? 1 : 0) == y(i);
  ASSERT_EQ(lr_correct, n);

  auto cfg = fast_config(11);
  cfg.epochs = 30;
  Trainer<float> t(hyper, cfg, data, model::init_params<float>(hyper, 11));
  auto r = t.train();
  auto acc = training::Trainer<float>::predict_real(hyper, r.best, data.space, data.source);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < acc.size(); ++i) correct += (acc[i] >= 0.5 ? 1 : 0) == data.source[i].label;
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(acc.size()), 0.95);
}

// With frozen encoders and a fixed batch, k critic steps should not lower
// the objective in at least 90% of seeded trials.
TEST(CriticObjective, MonotoneOverKSteps) {
  auto hyper = toy_hyper();
  int non_decreasing = 0;
  const int trials = 20;
  for (int seed = 1; seed <= trials; ++seed) {
    ToySpec spec;
    spec.seed = static_cast<std::uint64_t>(seed);
    auto data = toy_dataset(spec, hyper.embed_dim);
    auto params = model::init_params<double>(hyper, static_cast<std::uint64_t>(seed));
    model::clip_params(params.critic, 0.01);
    Trainer<double> t(hyper, fast_config(static_cast<std::uint64_t>(seed)), data, params);
    auto src = t.sample(data.source.size());
    auto tgt = t.sample(data.target.size());
    const double first = t.critic_step(src, tgt);
    for (int k = 1; k < 5; ++k) t.critic_step(src, tgt);
    const double after = t.critic_step(src, tgt);
    non_decreasing += after >= first;
  }
  EXPECT_GE(non_decreasing, 18);
}

TEST(LogJson, Keys) {
  training::EpochRecord r{3, 0.25, 0.5, 0.75, 1.5};
  auto j = training::to_log_json(r);
  EXPECT_EQ(j.dump(), R"({"epoch":3,"J_d_estimate":0.25,"L_n":0.5,"val_accuracy":0.75,"wall_time_s":1.5})");
}

}  // namespace
