// Batch frontend: one subcommand per pipeline stage. Every run writes its
// outputs and the resolved config.json under --out-dir.
//
// Exit codes: 0 success, 2 IO or parse failure, 3 contract violation,
// 4 training abort (non-finite loss).

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xlfnd/checkpoint.hpp"
#include "xlfnd/config.hpp"
#include "xlfnd/corpus_io.hpp"
#include "xlfnd/credibility.hpp"
#include "xlfnd/eval.hpp"
#include "xlfnd/pipeline.hpp"

namespace {

using namespace xlfnd;
namespace fs = std::filesystem;

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string out_dir;
  int epochs = 0;
  double lambda = 0.0;
  double clip = 0.0;
  int critic_steps = 0;
  int max_len = 0;
  bool strict_serial = false;
  int trials = 0;
  std::map<std::string, CLI::Option*> given;

  bool has(const std::string& name) const {
    auto it = given.find(name);
    return it != given.end() && it->second->count() > 0;
  }
};

// Relative paths in a config file are taken relative to that file.
void resolve_paths(config::Paths& p, const fs::path& base) {
  for (std::string* s : {&p.source_labeled, &p.target_unlabeled, &p.target_val, &p.target_eval, &p.dictionary,
                         &p.gazetteer, &p.spaces}) {
    if (!s->empty() && fs::path(*s).is_relative()) *s = (base / *s).lexically_normal().string();
  }
}

// Precedence: flags > file > defaults.
config::RunConfig resolve(const Flags& f) {
  config::RunConfig c = config::from_json(nlohmann::json::object());
  if (!f.config.empty()) {
    c = config::load(f.config);
    resolve_paths(c.paths, fs::absolute(f.config).parent_path());
  }
  if (f.has("seed")) c.seed = f.seed;
  if (f.has("epochs")) c.train.epochs = f.epochs;
  if (f.has("lambda")) c.train.lambda = f.lambda;
  if (f.has("clip")) c.train.clip = f.clip;
  if (f.has("critic-steps")) c.train.critic_steps = f.critic_steps;
  if (f.has("max-len")) c.hyper.max_len = f.max_len;
  if (f.has("strict-serial")) c.strict_serial = f.strict_serial;
  if (f.has("trials")) c.trials = f.trials;
  return config::from_json(config::to_json(c));
}

class Run {
 public:
  Run(const Flags& f, const std::string& command)
      : cfg(resolve(f)), dir(f.out_dir.empty() ? fs::path("runs") / command : fs::path(f.out_dir)) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  std::ofstream open(const std::string& name) const {
    std::ofstream out(path(name), std::ios::binary);
    if (!out) throw IoError("cannot write " + path(name));
    return out;
  }

  template <typename J>
  void write_json(const std::string& name, const J& j) const {
    open(name) << j.dump(2) << '\n';
  }

  void echo_config() const { write_json("config.json", config::to_json(cfg)); }

  eval::ExperimentConfig experiment() const { return cfg.experiment(); }

  pipeline::Corpora corpora() const { return config::corpora(cfg); }

  // Aligned spaces from paths.spaces, or rebuilt from the corpora.
  pipeline::EmbeddingSpaces spaces(const pipeline::Corpora& c) const {
    if (cfg.paths.spaces.empty()) {
      return pipeline::build_spaces(c, eval::embedding_config(experiment()), cfg.system.embedding);
    }
    pipeline::EmbeddingSpaces s;
    s.words = embedding::read_table((fs::path(cfg.paths.spaces) / "words.tsv").string());
    s.speakers = embedding::read_table((fs::path(cfg.paths.spaces) / "speakers.tsv").string());
    return s;
  }

  config::RunConfig cfg;
  fs::path dir;
};

std::string csv_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x == 0.0 ? 0.0 : x);
  return buf;
}

nlohmann::ordered_json alignment_json(const embedding::AlignmentResult& a) {
  return {{"dictionary_loss", a.dictionary_loss},
          {"identity_loss", a.identity_loss},
          {"usable_pairs", a.usable_pairs},
          {"rank_deficient", a.rank_deficient}};
}

// ---------------------------------------------------------------------------
// Commands

void cmd_synth(const Flags& f) {
  Run run(f, "synth");
  const auto s = synthetic::generate_synthetic(run.cfg.synthetic);
  corpus::write_articles(run.path("source_labeled.jsonl"), s.source_labeled);
  corpus::write_articles(run.path("target_unlabeled.jsonl"), s.target_unlabeled);
  corpus::write_articles(run.path("target_val.jsonl"), s.target_val);
  corpus::write_articles(run.path("target_eval.jsonl"), s.target_eval);
  corpus::write_dictionary(run.path("dictionary.tsv"), s.dictionary);
  source::write_gazetteer(run.path("gazetteer.tsv"), s.gazetteer);
  auto cred = run.open("speaker_credibility.csv");
  cred << "speaker_index,credibility\n";
  for (std::size_t i = 0; i < s.credibility.size(); ++i) cred << i << ',' << csv_number(s.credibility[i]) << '\n';
  // The echoed config reads the files written beside it.
  run.cfg.paths = {"source_labeled.jsonl", "target_unlabeled.jsonl", "target_val.jsonl",
                   "target_eval.jsonl",    "dictionary.tsv",         "gazetteer.tsv", ""};
  run.echo_config();
}

void cmd_ingest(const Flags& f, const std::string& input, bool balance) {
  Run run(f, "ingest");
  const auto scheme = corpus::scheme_by_name(run.cfg.label_scheme);
  auto articles = corpus::read_articles(input, corpus::default_tokenizer(), &scheme);
  const auto read = articles.size();
  if (balance) articles = corpus::undersample(articles, derive_seed(run.cfg.seed, "ingest"));
  corpus::write_articles(run.path("articles.jsonl"), articles);
  std::size_t fake = 0, real = 0, unlabeled = 0;
  for (const auto& a : articles) {
    (a.label == corpus::Label::fake ? fake : a.label == corpus::Label::real ? real : unlabeled)++;
  }
  run.write_json("summary.json", nlohmann::ordered_json{{"input", input},
                                                        {"read", read},
                                                        {"written", articles.size()},
                                                        {"fake", fake},
                                                        {"real", real},
                                                        {"unlabeled", unlabeled},
                                                        {"undersampled", balance}});
  run.echo_config();
}

// Input records: {"id", "lang", "claim", "raw_label", "candidates": [text, ...]}.
void cmd_match_claims(const Flags& f, const std::string& input) {
  Run run(f, "match-claims");
  const auto scheme = corpus::scheme_by_name(run.cfg.label_scheme);
  std::ifstream in(input);
  if (!in) throw IoError("cannot open " + input);
  corpus::Corpus matched;
  auto csv = run.open("matches.csv");
  csv << "claim_id,candidate,similarity\n";
  std::vector<std::string> unmatchable;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    corpus::ClaimRecord rec;
    std::string id, lang;
    std::vector<std::string> texts;
    try {
      auto j = nlohmann::json::parse(line);
      id = j.at("id").get<std::string>();
      lang = j.at("lang").get<std::string>();
      rec.claim = corpus::default_tokenizer().tokenize(j.at("claim").get<std::string>());
      rec.raw_label = j.at("raw_label").get<std::string>();
      texts = j.at("candidates").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError(input + ":" + std::to_string(line_no) + ": " + e.what());
    }
    for (std::size_t k = 0; k < texts.size(); ++k) {
      corpus::Article a;
      a.id = id + "/" + std::to_string(k);
      a.lang = lang;
      a.tokens = corpus::default_tokenizer().tokenize(texts[k]);
      rec.candidate_sources.push_back(std::move(a));
    }
    corpus::MatchResult m;
    try {
      m = corpus::tfidf_match(rec);
    } catch (const corpus::UnmatchableClaim&) {
      unmatchable.push_back(id);
      continue;
    }
    auto a = rec.candidate_sources[m.index];
    a.id = id;
    a.raw_label = rec.raw_label;
    a.label = corpus::binarize_label(rec.raw_label, scheme);
    matched.push_back(std::move(a));
    csv << id << ',' << m.index << ',' << csv_number(m.similarity) << '\n';
  }
  corpus::write_articles(run.path("matched.jsonl"), matched);
  run.write_json("summary.json", nlohmann::ordered_json{{"input", input},
                                                        {"matched", matched.size()},
                                                        {"unmatchable", unmatchable}});
  run.echo_config();
}

void cmd_train_embedding(const Flags& f) {
  Run run(f, "train-embedding");
  const auto c = run.corpora();
  const auto t = pipeline::train_tables(c, eval::embedding_config(run.experiment()), run.cfg.system.embedding);
  embedding::write_table(run.path("source_words.tsv"), t.source_words);
  embedding::write_table(run.path("target_words.tsv"), t.target_words);
  nlohmann::ordered_json summary{{"source_vocab", t.source_words.size()},
                                 {"target_vocab", t.target_words.size()},
                                 {"dim", t.source_words.dim()}};
  if (t.source_bse) {
    embedding::write_table(run.path("source_bse.tsv"), *t.source_bse);
    summary["source_bse_vocab"] = t.source_bse->size();
  }
  run.write_json("summary.json", summary);
  run.echo_config();
}

void cmd_align(const Flags& f, const std::string& tables_dir) {
  Run run(f, "align");
  const auto c = run.corpora();
  pipeline::MonolingualTables t;
  const fs::path d(tables_dir);
  t.source_words = embedding::read_table((d / "source_words.tsv").string(), c.source_labeled.front().lang);
  t.target_words = embedding::read_table((d / "target_words.tsv").string(), c.target_unlabeled.front().lang);
  if (run.cfg.system.embedding == pipeline::SpeakerEmbedding::bse) {
    t.source_bse = embedding::read_table((d / "source_bse.tsv").string(), c.source_labeled.front().lang);
  }
  const auto s = pipeline::align_tables(t, c.dictionary, c.gazetteer, run.cfg.system.embedding);
  embedding::write_table(run.path("words.tsv"), s.words);
  embedding::write_table(run.path("speakers.tsv"), s.speakers);
  run.write_json("alignment.json", nlohmann::ordered_json{{"embedding", nlohmann::json(run.cfg.system.embedding)},
                                                          {"words", alignment_json(s.word_alignment)},
                                                          {"speakers", alignment_json(s.speaker_alignment)}});
  run.echo_config();
}

void cmd_extract_sources(const Flags& f) {
  Run run(f, "extract-sources");
  const auto c = run.corpora();
  const auto fc = eval::feature_config(run.cfg.system, run.experiment());
  const source::GazetteerNer ner(c.gazetteer);
  auto out = run.open("sources.jsonl");
  auto emit = [&](const corpus::Corpus& corpus, const char* split) {
    const auto seqs = pipeline::speaker_sequences(corpus, ner, fc);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      out << nlohmann::ordered_json{{"id", corpus[i].id}, {"split", split}, {"speakers", seqs[i]}}.dump() << '\n';
    }
  };
  emit(c.source_labeled, "source_labeled");
  emit(c.target_unlabeled, "target_unlabeled");
  emit(c.target_val, "target_val");
  emit(c.target_eval, "target_eval");
  run.echo_config();
}

void cmd_credibility(const Flags& f) {
  Run run(f, "credibility");
  const auto c = run.corpora();
  const auto labeled = pipeline::labeled_articles(c);
  const auto seqs = pipeline::speaker_sequences(labeled, source::GazetteerNer(c.gazetteer), {});
  const auto scores = credibility::credibility_scores(credibility::collect_stats(labeled, seqs), true);
  auto csv = run.open("credibility.csv");
  csv << "speaker,count,raw,normalized\n";
  for (const auto& [s, sc] : scores) {
    csv << s << ',' << sc.count << ',' << csv_number(sc.raw) << ',' << csv_number(sc.normalized) << '\n';
  }
  run.echo_config();
}

void cmd_diffcred(const Flags& f) {
  Run run(f, "diffcred");
  const auto c = run.corpora();
  const auto spaces = run.spaces(c);
  const auto dc = run.cfg.diffcred.to_config();
  const auto r = pipeline::speaker_diff_cred(c, spaces.speakers, dc, run.cfg.diffcred.per_language);
  nlohmann::ordered_json per = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < r.speakers.size(); ++i) {
    std::vector<std::string> nn;
    for (auto k : r.result.neighbors[i]) nn.push_back(r.speakers[k]);
    per.push_back({{"speaker", r.speakers[i]}, {"credibility", r.scores.at(r.speakers[i]).normalized},
                   {"neighbors", nn}});
  }
  run.write_json("diffcred.json", nlohmann::ordered_json{{"embedding", nlohmann::json(run.cfg.system.embedding)},
                                                         {"metric", run.cfg.diffcred.metric},
                                                         {"m", r.speakers.size()},
                                                         {"n", dc.n},
                                                         {"value", r.result.value},
                                                         {"shortfall", r.shortfall},
                                                         {"speakers", per}});
  const auto xy = credibility::project_2d(spaces.speakers, r.speakers);
  auto csv = run.open("projection.csv");
  csv << "speaker,x,y,credibility\n";
  for (const auto& s : r.speakers) {
    const auto& [x, y] = xy.at(s);
    csv << s << ',' << csv_number(x) << ',' << csv_number(y) << ',' << csv_number(r.scores.at(s).normalized)
        << '\n';
  }
  run.echo_config();
}

void cmd_locate_speakers(const Flags& f) {
  Run run(f, "locate-speakers");
  const auto c = run.corpora();
  corpus::Corpus all = pipeline::labeled_articles(c);
  all.insert(all.end(), c.target_unlabeled.begin(), c.target_unlabeled.end());
  const auto stats = source::speaker_location_stats(all, source::GazetteerNer(c.gazetteer));
  auto csv = run.open("locations.csv");
  csv << "bin,lower,upper,count,fraction\n";
  for (std::size_t b = 0; b < stats.bins.size(); ++b) {
    const double frac = stats.mentions ? static_cast<double>(stats.bins[b]) / static_cast<double>(stats.mentions) : 0.0;
    csv << b << ',' << csv_number(0.1 * static_cast<double>(b)) << ',' << csv_number(0.1 * static_cast<double>(b + 1))
        << ',' << stats.bins[b] << ',' << csv_number(frac) << '\n';
  }
  run.write_json("summary.json", nlohmann::ordered_json{{"articles", all.size()},
                                                        {"mentions", stats.mentions},
                                                        {"excluded_single_token", stats.excluded_single_token}});
  run.echo_config();
}

// Dataset and hyperparameters of the configured system.
struct SystemData {
  training::Dataset data;
  model::HyperConfig hyper;
};

SystemData system_data(const Run& run) {
  const auto c = run.corpora();
  const auto spaces = run.spaces(c);
  SystemData s;
  s.data = pipeline::featurize(c, spaces, eval::feature_config(run.cfg.system, run.experiment()));
  s.hyper = run.cfg.hyper;
  eval::apply(run.cfg.system, s.hyper);
  return s;
}

nlohmann::ordered_json system_fingerprint_config(const Run& run) {
  auto j = eval::to_json(run.experiment());
  j["ablation"] = nlohmann::json(run.cfg.system);
  return j;
}

void cmd_train(const Flags& f) {
  Run run(f, "train");
  run.echo_config();
  const auto sys = system_data(run);
  auto log = run.open("train_log.jsonl");
  nlohmann::ordered_json trials = nlohmann::ordered_json::array();
  const auto seeds = eval::trial_seeds(run.cfg.seed, run.cfg.trials);
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    auto tc = run.cfg.train;
    tc.seed = seeds[k];
    training::Trainer<float> trainer(sys.hyper, tc, sys.data,
                                     model::init_params<float>(sys.hyper, derive_seed(seeds[k], "init")));
    const auto res = trainer.train();
    for (const auto& rec : res.history) {
      nlohmann::ordered_json j{{"trial", k}, {"seed", seeds[k]}};
      const auto fields = training::to_log_json(rec);
      for (const auto& [key, value] : fields.items()) j[key] = value;
      log << j.dump() << '\n';
    }
    checkpoint::Checkpoint<float> ck{res.best, sys.hyper, seeds[k], res.best_epoch, config::to_json(run.cfg)};
    const std::string name = "trial-" + std::to_string(k) + ".ckpt";
    checkpoint::save(run.path(name), ck);
    trials.push_back({{"trial", k},
                      {"seed", seeds[k]},
                      {"checkpoint", name},
                      {"best_epoch", res.best_epoch},
                      {"best_val_accuracy", res.best_val_accuracy}});
  }
  run.write_json("summary.json", nlohmann::ordered_json{{"trials", trials}});
}

void cmd_evaluate(const Flags& f, const std::string& train_dir, bool textcnn) {
  Flags g = f;
  if (g.config.empty()) g.config = (fs::path(train_dir) / "config.json").string();
  Run run(g, "evaluate");
  run.echo_config();
  const auto sys = system_data(run);
  std::ifstream in(fs::path(train_dir) / "summary.json");
  if (!in) throw IoError("cannot open " + (fs::path(train_dir) / "summary.json").string());
  nlohmann::json summary;
  try {
    summary = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(train_dir + "/summary.json: " + e.what());
  }
  const auto truth = eval::labels_of(sys.data.test);
  std::vector<eval::TrialResult> trials;
  for (const auto& t : summary.at("trials")) {
    const auto ck = checkpoint::load<float>((fs::path(train_dir) / t.at("checkpoint").get<std::string>()).string());
    eval::TrialResult r;
    r.seed = ck.seed;
    r.best_epoch = ck.epoch;
    r.confusion = eval::confusion(eval::predict(ck.hyper, ck.params, sys.data.space, sys.data.test), truth);
    r.metrics = eval::metrics(r.confusion);
    trials.push_back(r);
  }
  const auto fp = eval::fingerprint(system_fingerprint_config(run));
  run.write_json("report.json", eval::to_json(eval::make_report(fp, trials)));
  run.write_json("random_baseline.json", eval::to_json(eval::random_baseline(truth, run.cfg.seed, run.cfg.trials)));
  if (textcnn) {
    auto labeled = sys.data.validation;
    labeled.insert(labeled.end(), sys.data.test.begin(), sys.data.test.end());
    run.write_json("textcnn.json", eval::to_json(eval::textcnn_crossval<float>(labeled, sys.data.space,
                                                                                run.experiment())));
  }
}

void cmd_ablate(const Flags& f) {
  Run run(f, "ablate");
  run.echo_config();
  const auto c = run.corpora();
  std::vector<std::pair<eval::AblationSpec, eval::TrialReport>> rows;
  nlohmann::ordered_json all = nlohmann::ordered_json::array();
  for (const auto& spec : run.cfg.ablation_grid) {
    auto report = eval::run_ablation(spec, c, run.experiment());
    const auto [component, features] = eval::describe(spec);
    all.push_back({{"spec", nlohmann::json(spec)},
                   {"component", component},
                   {"features", features},
                   {"report", eval::to_json(report)}});
    rows.emplace_back(spec, std::move(report));
  }
  auto csv = run.open("ablation.csv");
  eval::write_ablation_csv(csv, rows);
  run.write_json("ablation.json", all);
}

// ---------------------------------------------------------------------------

void report_error(const char* kind, const std::string& what) {
  const bool color = std::getenv("NO_COLOR") == nullptr && ::isatty(STDERR_FILENO);
  std::cerr << "xlfnd: " << (color ? "\033[31m" : "") << kind << " error" << (color ? "\033[0m" : "") << ": "
            << what << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-lingual fake news detection with source credibility"};
  app.require_subcommand(1);
  Flags f;
  auto add = [&](const std::string& name, auto& target, const std::string& help) {
    f.given[name] = app.add_option("--" + name, target, help);
  };
  f.given["config"] = app.add_option("--config", f.config, "run configuration (JSON)")->check(CLI::ExistingFile);
  add("seed", f.seed, "global seed");
  add("out-dir", f.out_dir, "output directory (default runs/<command>)");
  add("epochs", f.epochs, "training epochs");
  add("lambda", f.lambda, "weight of the detector loss in the main objective");
  add("clip", f.clip, "critic weight clipping bound");
  add("critic-steps", f.critic_steps, "critic updates per main update");
  add("max-len", f.max_len, "article truncation length");
  f.given["strict-serial"] = app.add_flag("--strict-serial", f.strict_serial, "kept for compatibility; execution is always serial");
  add("trials", f.trials, "training trials (seeds)");
  app.fallthrough();

  std::string input, tables, train_dir;
  bool balance = false, textcnn = false;
  auto* synth = app.add_subcommand("synth", "generate the synthetic bilingual fixture");
  auto* ingest = app.add_subcommand("ingest", "binarize labels of an article JSONL file");
  ingest->add_option("--input", input, "article JSONL")->required()->check(CLI::ExistingFile);
  ingest->add_flag("--undersample", balance, "balance classes by seeded undersampling");
  auto* match = app.add_subcommand("match-claims", "attach each claim to its most similar candidate article");
  match->add_option("--input", input, "claim JSONL")->required()->check(CLI::ExistingFile);
  auto* train_emb = app.add_subcommand("train-embedding", "train monolingual PPMI-SVD embeddings");
  auto* align = app.add_subcommand("align", "map source embeddings onto the target space");
  align->add_option("--tables", tables, "train-embedding output directory")->required()->check(CLI::ExistingDirectory);
  auto* extract = app.add_subcommand("extract-sources", "per-article speaker sequences");
  auto* cred = app.add_subcommand("credibility", "speaker credibility scores");
  auto* diff = app.add_subcommand("diffcred", "credibility difference between embedding neighbours");
  auto* train = app.add_subcommand("train", "adversarial training of the configured system");
  auto* evaluate = app.add_subcommand("evaluate", "test metrics of trained checkpoints");
  evaluate->add_option("--run", train_dir, "train output directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_flag("--textcnn", textcnn, "add the target-only text CNN cross-validation baseline");
  auto* ablate = app.add_subcommand("ablate", "train and evaluate every row of the ablation grid");
  auto* locate = app.add_subcommand("locate-speakers", "relative position histogram of speaker mentions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) cmd_synth(f);
    if (*ingest) cmd_ingest(f, input, balance);
    if (*match) cmd_match_claims(f, input);
    if (*train_emb) cmd_train_embedding(f);
    if (*align) cmd_align(f, tables);
    if (*extract) cmd_extract_sources(f);
    if (*cred) cmd_credibility(f);
    if (*diff) cmd_diffcred(f);
    if (*train) cmd_train(f);
    if (*evaluate) cmd_evaluate(f, train_dir, textcnn);
    if (*ablate) cmd_ablate(f);
    if (*locate) cmd_locate_speakers(f);
  } catch (const IoError& e) {
    report_error("io", e.what());
    return 2;
  } catch (const AbortError& e) {
    report_error("abort", e.what());
    return 4;
  } catch (const ContractError& e) {
    report_error("contract", e.what());
    return 3;
  } catch (const nlohmann::json::exception& e) {
    report_error("io", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    report_error("io", e.what());
    return 2;
  }
  return 0;
}
