// Acceptance suite: one line per criterion, nonzero exit if any fails.
// Usage: acceptance [criterion numbers...]  (default: all)

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "gradcheck.hpp"
#include "planted.hpp"
#include "toy_data.hpp"
#include "xlfnd/config.hpp"
#include "xlfnd/credibility.hpp"
#include "xlfnd/eval.hpp"
#include "xlfnd/pipeline.hpp"

namespace {

using namespace xlfnd;
using namespace xlfnd::testing;
namespace fs = std::filesystem;

// Pinned tolerances and thresholds.
constexpr double kRotationTolerance = 1e-6;
constexpr double kOrthogonalityTolerance = 1e-8;
constexpr double kProcrustesSeconds = 10.0;
constexpr double kGradSeconds = 120.0;
constexpr long kWganIterations = 200;
constexpr double kTransferMeanAccuracy = 0.70;
constexpr double kTransferGap = 0.03;
constexpr double kTransferSeconds = 1800.0;
constexpr int kPairedSeeds = 5;
constexpr int kPairedWins = 4;
constexpr int kMetricSets = 1000;
constexpr double kCredibilityTolerance = 1e-12;
constexpr int kCredibilityPopulations = 500;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Per-seed accuracies "a/b/c/d/e".
std::string accuracies(const eval::TrialReport& r) {
  std::string s;
  for (const auto& t : r.trials) s += (s.empty() ? "" : "/") + fmt("%.3f", t.metrics.accuracy);
  return s;
}

config::RunConfig desk_config() { return config::load(std::string(XLFND_SOURCE_DIR) + "/configs/desk.json"); }

Outcome procrustes_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_w = 0.0, worst_orth = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto x = random_matrix(500, 100, derive_seed(seed, "acceptance/x"));
    auto r = random_rotation(100, derive_seed(seed, "acceptance/r"));
    auto res = embedding::procrustes_align(numbered_table(x, "s"), numbered_table(x * r.transpose(), "t"),
                                           numbered_pairs(500));
    worst_w = std::max(worst_w, (res.W - r).norm());
    worst_orth = std::max(worst_orth, (res.W.transpose() * res.W - embedding::Matrix::Identity(100, 100)).norm());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst_w <= kRotationTolerance && worst_orth <= kOrthogonalityTolerance && secs < kProcrustesSeconds,
          fmt("max |W-R| %.2e, max |W'W-I| %.2e, %.2fs", worst_w, worst_orth, secs)};
}

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_block;
  std::size_t blocks = 0;
  for (std::uint64_t seed : {1, 2}) {
    for (const auto& b : check_all_blocks(seed)) {
      ++blocks;
      if (b.max_relative_error >= worst) {
        worst = b.max_relative_error;
        worst_block = b.name;
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst <= kFdTolerance && secs < kGradSeconds,
          fmt("%.0f block checks, max rel err %.2e", static_cast<double>(blocks), worst) + " (" + worst_block + ")" +
              fmt(", %.1fs", secs)};
}

Outcome wgan_mechanics() {
  auto hyper = toy_hyper();
  auto data = toy_dataset({}, hyper.embed_dim);
  training::TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.epochs = 1000;
  cfg.max_iterations = kWganIterations;
  cfg.seed = 3;
  training::Trainer<double> t(hyper, cfg, data, model::init_params<double>(hyper, 3));
  long clip_violations = 0, ratio_violations = 0, non_finite = 0, critic_steps = 0;
  t.after_critic_step = [&](const training::Trainer<double>& tr) {
    ++critic_steps;
    for (const auto& [_, m] : tr.params().critic.blocks) clip_violations += (m.array().abs() > cfg.clip).count();
    non_finite += !std::isfinite(tr.last_critic_objective());
  };
  t.after_main_step = [&](const training::Trainer<double>& tr) {
    ratio_violations += tr.critic_updates() != cfg.critic_steps * tr.main_updates();
    non_finite += !tr.params().all_finite();
  };
  auto r = t.train();
  for (const auto& h : r.history) non_finite += !std::isfinite(h.jd_estimate) || !std::isfinite(h.ln);
  const bool pass = r.main_updates == kWganIterations && r.critic_updates == 5 * kWganIterations &&
                    critic_steps == r.critic_updates && clip_violations == 0 && ratio_violations == 0 &&
                    non_finite == 0;
  return {pass, fmt("%.0f main / %.0f critic updates, ", static_cast<double>(r.main_updates),
                    static_cast<double>(r.critic_updates)) +
                    fmt("clip violations %.0f, ratio violations %.0f, non-finite %.0f",
                        static_cast<double>(clip_violations), static_cast<double>(ratio_violations),
                        static_cast<double>(non_finite))};
}

// Criteria 4 and 6 share the full-system runs.
struct DeskRuns {
  eval::TrialReport full, article_only, shuffled;
  double seconds_full_and_article = 0.0;
};

const DeskRuns& desk_runs(bool need_article, bool need_shuffled) {
  static DeskRuns runs;
  static bool have_full = false, have_article = false, have_shuffled = false;
  const auto cfg = desk_config();
  auto timed = [&](const eval::AblationSpec& spec) {
    const auto t0 = std::chrono::steady_clock::now();
    auto r = eval::run_ablation(spec, config::corpora(cfg), cfg.experiment());
    runs.seconds_full_and_article += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
  };
  if (!have_full) {
    runs.full = timed(cfg.system);
    have_full = true;
  }
  if (need_article && !have_article) {
    auto spec = cfg.system;
    spec.use_source = false;
    runs.article_only = timed(spec);
    have_article = true;
  }
  if (need_shuffled && !have_shuffled) {
    auto spec = cfg.system;
    spec.shuffle = true;
    const double before = runs.seconds_full_and_article;
    runs.shuffled = timed(spec);
    runs.seconds_full_and_article = before;
    have_shuffled = true;
  }
  return runs;
}

Outcome transfer_effect() {
  const auto& runs = desk_runs(true, false);
  int wins = 0;
  for (int i = 0; i < kPairedSeeds; ++i) {
    wins += runs.full.trials[i].metrics.accuracy - runs.article_only.trials[i].metrics.accuracy >= kTransferGap - 1e-12;
  }
  const double mean = runs.full.mean.accuracy;
  return {mean >= kTransferMeanAccuracy && wins >= kPairedWins &&
              runs.seconds_full_and_article <= kTransferSeconds,
          fmt("full mean %.3f, article-only mean %.3f, ", mean, runs.article_only.mean.accuracy) +
              fmt("gap >= 0.03 in %.0f/5 seeds [full ", wins) + accuracies(runs.full) + " | article " +
              accuracies(runs.article_only) + fmt("], %.0fs", runs.seconds_full_and_article)};
}

Outcome credibility_embedding_effect() {
  auto cfg = desk_config();
  const auto dc = cfg.diffcred.to_config();
  int wins = 0;
  std::string values;
  for (std::uint64_t seed = 1; seed <= kPairedSeeds; ++seed) {
    auto run = cfg;
    run.synthetic.seed = seed;
    run.seed = seed;
    const auto corpora = config::corpora(run);
    const auto ecfg = eval::embedding_config(run.experiment());
    const auto tables = pipeline::train_tables(corpora, ecfg, pipeline::SpeakerEmbedding::bse);
    const auto bse = pipeline::align_tables(tables, corpora.dictionary, corpora.gazetteer,
                                            pipeline::SpeakerEmbedding::bse);
    const auto bwe = pipeline::align_tables(tables, corpora.dictionary, corpora.gazetteer,
                                            pipeline::SpeakerEmbedding::bwe);
    const double v_bse = pipeline::speaker_diff_cred(corpora, bse.speakers, dc, cfg.diffcred.per_language).result.value;
    const double v_bwe = pipeline::speaker_diff_cred(corpora, bwe.speakers, dc, cfg.diffcred.per_language).result.value;
    wins += v_bse < v_bwe;
    values += (values.empty() ? "" : " ") + fmt("%.3f<%.3f", v_bse, v_bwe);
  }

  // Every speaker appears once in a fake and once in a real article.
  pipeline::Corpora equal;
  std::vector<std::string> names;
  for (int i = 0; i < 8; ++i) {
    const std::string name = "spk" + std::to_string(i);
    names.push_back(name);
    equal.gazetteer[name] = source::EntityType::person;
    for (auto label : {corpus::Label::fake, corpus::Label::real}) {
      corpus::Article a;
      a.id = name + std::string(corpus::to_string(label));
      a.lang = "en";
      a.tokens = {"said", name, "today"};
      a.label = label;
      equal.source_labeled.push_back(a);
    }
  }
  credibility::DiffCredConfig small = dc;
  small.m = names.size();
  small.n = 3;
  const auto table = numbered_table(random_matrix(8, 6, 11), "spk");
  const double zero = pipeline::speaker_diff_cred(equal, table, small, false).result.value;

  return {wins >= kPairedWins && zero == 0.0,
          fmt("BSE < BWE in %.0f/5 seeds [", wins) + values + fmt("], all-equal fixture %.1f", zero)};
}

Outcome sequence_effect() {
  const auto& runs = desk_runs(false, true);
  int wins = 0;
  for (int i = 0; i < kPairedSeeds; ++i) {
    wins += runs.full.trials[i].metrics.accuracy > runs.shuffled.trials[i].metrics.accuracy;
  }
  return {wins >= kPairedWins,
          fmt("unshuffled mean %.3f, shuffled mean %.3f, ", runs.full.mean.accuracy, runs.shuffled.mean.accuracy) +
              fmt("unshuffled ahead in %.0f/5 seeds [unshuffled ", wins) + accuracies(runs.full) + " | shuffled " +
              accuracies(runs.shuffled) + "]"};
}

Outcome metric_oracle() {
  Rng rng(derive_seed(7, "acceptance/metrics"));
  int mismatches = 0;
  for (int trial = 0; trial < kMetricSets; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 100);
    std::vector<int> pred(n), truth(n);
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(uniform_index(rng, 2));
      truth[i] = static_cast<int>(uniform_index(rng, 2));
      if (pred[i] == 0) {
        (truth[i] == 0 ? tp : fp)++;
      } else {
        (truth[i] == 1 ? tn : fn)++;
      }
    }
    const double acc = static_cast<double>(tp + tn) / static_cast<double>(n);
    const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double f1 = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    const auto m = eval::metrics(eval::confusion(pred, truth));
    mismatches += m.accuracy != acc || m.precision != p || m.recall != r || m.f1 != f1;
  }
  return {mismatches == 0, fmt("%.0f randomized sets, %.0f mismatches", kMetricSets, mismatches)};
}

Outcome credibility_oracle() {
  Rng rng(derive_seed(7, "acceptance/credibility"));
  double worst = 0.0;
  int populations = 0, extremes_missed = 0;
  for (int trial = 0; trial < kCredibilityPopulations; ++trial) {
    const std::size_t speakers = 2 + uniform_index(rng, 30);
    std::vector<credibility::SpeakerStats> stats;
    std::vector<double> raw;
    for (std::size_t s = 0; s < speakers; ++s) {
      credibility::SpeakerStats st;
      st.speaker = "s" + std::to_string(s);
      const std::size_t count = 1 + uniform_index(rng, 20);
      int sum = 0;
      for (std::size_t k = 0; k < count; ++k) {
        st.outcomes.push_back(uniform_index(rng, 2) ? 1 : -1);
        sum += st.outcomes.back();
      }
      raw.push_back(static_cast<double>(sum) / static_cast<double>(count));
      stats.push_back(std::move(st));
    }
    const double lo = *std::min_element(raw.begin(), raw.end());
    const double hi = *std::max_element(raw.begin(), raw.end());
    if (hi == lo) continue;
    ++populations;
    const auto scores = credibility::credibility_scores(stats);
    bool hit0 = false, hit1 = false;
    for (std::size_t s = 0; s < speakers; ++s) {
      const auto& got = scores.at(stats[s].speaker);
      worst = std::max({worst, std::abs(got.raw - raw[s]), std::abs(got.normalized - (raw[s] - lo) / (hi - lo))});
      hit0 |= got.normalized == 0.0;
      hit1 |= got.normalized == 1.0;
    }
    extremes_missed += !(hit0 && hit1);
  }
  return {worst <= kCredibilityTolerance && extremes_missed == 0 && populations > 0,
          fmt("%.0f populations, max abs err %.2e, extremes missed %.0f", populations, worst, extremes_missed)};
}

// Determinism: two CLI runs with identical config and seed. Training logs
// carry wall-clock times, which are dropped before comparison.
std::string normalized_contents(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  if (p.filename() != "train_log.jsonl") return ss.str();
  std::string out, line;
  while (std::getline(ss, line)) {
    auto j = nlohmann::ordered_json::parse(line);
    j.erase("wall_time_s");
    out += j.dump() + "\n";
  }
  return out;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = normalized_contents(e.path());
  }
  return out;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("xlfnd-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cfg_path = (root / "tiny.json").string();
  {
    std::ofstream out(cfg_path);
    out << R"({"seed": 3, "trials": 2,
      "synthetic": {"vocab_size_per_language": 120, "n_speakers_per_language": 10, "n_labeled_src": 200,
                    "n_unlabeled_tgt": 60, "n_labeled_tgt_val": 40, "n_labeled_tgt_eval": 40, "n_orgs_per_language": 4},
      "embedding": {"dim": 12},
      "hyper": {"embed_dim": 12, "kernels_per_size": 4, "article_dim": 6, "source_dim": 6, "hidden_units": 8},
      "train": {"epochs": 2, "batch_size": 16},
      "diffcred": {"m": 10, "n": 3},
      "ablation_grid": [{}, {"shuffle": true}]})";
  }
  const std::string cli = XLFND_CLI;
  const std::vector<std::string> commands = {"synth", "credibility", "diffcred", "locate-speakers", "train",
                                             "ablate"};
  std::string failures;
  auto run = [&](const std::string& args) {
    const std::string line = cli + " " + args + " > /dev/null 2>&1";
    return std::system(line.c_str()) == 0;
  };
  for (const std::string rep : {"a", "b"}) {
    for (const auto& c : commands) {
      const auto dir = root / rep / c;
      if (!run(c + " --config " + cfg_path + " --seed 5 --out-dir " + dir.string())) failures += " " + c + "-failed";
    }
    const auto eval_dir = root / rep / "evaluate";
    if (!run("evaluate --config " + (root / rep / "train" / "config.json").string() + " --run " +
             (root / rep / "train").string() + " --out-dir " + eval_dir.string())) {
      failures += " evaluate-failed";
    }
  }
  std::size_t files = 0;
  for (const auto& c : {"synth", "credibility", "diffcred", "locate-speakers", "train", "ablate", "evaluate"}) {
    auto a = snapshot(root / "a" / c), b = snapshot(root / "b" / c);
    files += a.size();
    if (a.empty() || a != b) failures += std::string(" ") + c + "-differs";
  }
  if (failures.empty()) fs::remove_all(root);
  return {failures.empty(), fmt("%.0f files compared across 7 commands", static_cast<double>(files)) +
                                (failures.empty() ? "" : ";" + failures)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"procrustes exactness", procrustes_exactness},
      {"gradient correctness", gradient_correctness},
      {"wgan mechanics", wgan_mechanics},
      {"transfer effect", transfer_effect},
      {"credibility embedding effect", credibility_embedding_effect},
      {"sequence information effect", sequence_effect},
      {"metric oracle", metric_oracle},
      {"credibility score oracle", credibility_oracle},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %d %-30s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
