#include "calav/cli.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "calav/checkpoint.hpp"
#include "calav/config.hpp"
#include "calav/error.hpp"
#include "calav/metrics.hpp"
#include "calav/synthetic.hpp"
#include "calav/trainer.hpp"

namespace calav {

namespace fs = std::filesystem;

namespace {

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParseError("cannot open " + p.string());
  return in;
}

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::trunc) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | mode);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

nlohmann::json read_json(const fs::path& p) {
  auto in = open_in(p);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  auto out = open_out(p);
  out << j.dump(2) << '\n';
}

std::vector<EncodedEntry> read_encoded(const fs::path& p) {
  auto in = open_in(p);
  return read_encoded_jsonl(in);
}

Vocabulary read_vocab(const fs::path& data) { return Vocabulary::from_json(read_json(data / "vocab.json")); }

nlohmann::json stats_json(std::span<const Document> docs) {
  const auto s = split_stats(docs);
  return {{"docs", s.docs}, {"authors", s.authors}, {"fandoms", s.fandoms}};
}

template <class T>
void override_if(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

// Loads the config file (or defaults) once per invocation.
RunConfig base_config(const std::string& path) { return path.empty() ? RunConfig{} : RunConfig::load(path); }

std::uint64_t resolve_seed(std::uint64_t current, const std::optional<std::uint64_t>& flag) {
  if (auto env = env_seed()) return *env;
  return flag ? *flag : current;
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%6.2f", 100.0 * v);
  return buf;
}

// ------------------------------------------------------------------ prep

struct PrepArgs {
  std::string corpus, truth, out, config;
  std::optional<std::string> format, split;
  std::optional<double> test_fraction;
  std::optional<std::size_t> vocab_tokens, vocab_chars, width, hop, max_units, chars_per_token;
  std::optional<std::uint64_t> seed;
};

int cmd_prep(const PrepArgs& a, std::ostream& out) {
  PrepConfig cfg = base_config(a.config).prep;
  override_if(a.format, cfg.format);
  override_if(a.split, cfg.split);
  override_if(a.test_fraction, cfg.test_fraction);
  override_if(a.vocab_tokens, cfg.vocab_tokens);
  override_if(a.vocab_chars, cfg.vocab_chars);
  override_if(a.width, cfg.window.width);
  override_if(a.hop, cfg.window.hop);
  override_if(a.max_units, cfg.window.max_units);
  override_if(a.chars_per_token, cfg.window.chars_per_token);
  cfg.seed = resolve_seed(cfg.seed, a.seed);
  cfg = PrepConfig::from_json(cfg.to_json());

  if (!fs::exists(a.corpus)) throw ParseError("corpus path does not exist: " + a.corpus);
  const auto docs = ingest_corpus(a.corpus, parse_corpus_format(cfg.format), a.truth);
  const CorpusSplit split = cfg.split == "disjoint" ? split_disjoint(docs, cfg.test_fraction, cfg.seed)
                                                    : split_by_author(docs, cfg.test_fraction, cfg.seed);
  const PreparedCorpus prepared = prepare_split(split, cfg.vocab_tokens, cfg.vocab_chars, cfg.window);

  const fs::path dir = a.out;
  write_json(dir / "vocab.json", prepared.vocab.to_json());
  auto train_out = open_out(dir / "train.jsonl");
  write_encoded_jsonl(train_out, prepared.train);
  auto test_out = open_out(dir / "test.jsonl");
  write_encoded_jsonl(test_out, prepared.test);

  std::set<std::string> train_authors, test_authors, train_fandoms, test_fandoms;
  for (const auto& d : split.train) train_authors.insert(d.author_id), train_fandoms.insert(d.fandom_id);
  for (const auto& d : split.test) test_authors.insert(d.author_id), test_fandoms.insert(d.fandom_id);
  const auto overlap = [](const std::set<std::string>& x, const std::set<std::string>& y) {
    std::size_t n = 0;
    for (const auto& v : x) n += y.count(v);
    return n;
  };
  const nlohmann::json manifest = {
      {"vocab_hash", prepared.vocab.hash()},
      {"vocab_tokens", prepared.vocab.token_count()},
      {"vocab_chars", prepared.vocab.char_count()},
      {"prep", cfg.to_json()},
      {"train", stats_json(split.train)},
      {"test", stats_json(split.test)},
      {"shared_authors", overlap(train_authors, test_authors)},
      {"shared_fandoms", overlap(train_fandoms, test_fandoms)},
      {"train_authors", train_authors},
      {"test_authors", test_authors},
      {"train_fandoms", train_fandoms},
      {"test_fandoms", test_fandoms}};
  write_json(dir / "manifest.json", manifest);

  out << "side   docs  authors  fandoms\n";
  for (const char* side : {"train", "test"}) {
    const auto& s = manifest.at(side);
    char line[96];
    std::snprintf(line, sizeof line, "%-5s %5zu %8zu %8zu\n", side, s.at("docs").get<std::size_t>(),
                  s.at("authors").get<std::size_t>(), s.at("fandoms").get<std::size_t>());
    out << line;
  }
  out << "shared authors: " << manifest.at("shared_authors") << ", shared fandoms: " << manifest.at("shared_fandoms")
      << "\nvocabulary: " << prepared.vocab.token_count() << " tokens, " << prepared.vocab.char_count()
      << " characters\n";
  return kExitOk;
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
  std::string data, out, config;
  std::optional<std::string> side, subsets;
  std::optional<std::size_t> rounds;
  std::optional<std::uint64_t> seed;
};

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  SampleConfig cfg = base_config(a.config).sample;
  override_if(a.side, cfg.side);
  override_if(a.subsets, cfg.subsets);
  override_if(a.rounds, cfg.rounds);
  cfg.seed = resolve_seed(cfg.seed, a.seed);
  cfg = SampleConfig::from_json(cfg.to_json());

  const auto entries = read_encoded(fs::path(a.data) / (cfg.side + ".jsonl"));
  std::vector<DocumentMeta> metas;
  for (const auto& e : entries) metas.push_back(e.meta);
  const auto pairs = sample_fixed_test_pairs(metas, cfg.seed, SubsetFilter::parse(cfg.subsets), cfg.rounds);
  auto pair_out = open_out(a.out);
  write_pairs_jsonl(pair_out, pairs);
  std::map<std::string_view, std::size_t> counts;
  for (const auto& p : pairs) ++counts[subset_name(p.subset())];
  out << pairs.size() << " pairs";
  for (const auto& [name, n] : counts) out << ", " << name << " " << n;
  out << '\n';
  return kExitOk;
}

// ----------------------------------------------------------------- train

struct TrainArgs {
  std::string data, out, config;
  std::optional<std::size_t> epochs, batch_size, lev_dim, bfs_dim, ual_dim;
  std::optional<double> lr, lr_encoder_dml, lr_bfs, lr_ual, beta, prior_log_odds;
  std::optional<std::string> activation, dml_loss;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  bool save_every_epoch = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  TrainConfig cfg = base_config(a.config).train;
  override_if(a.epochs, cfg.epochs);
  override_if(a.batch_size, cfg.batch_size);
  override_if(a.lev_dim, cfg.model.lev_dim);
  override_if(a.bfs_dim, cfg.model.bfs_dim);
  override_if(a.ual_dim, cfg.model.ual_dim);
  if (a.lr) cfg.encoder_dml.lr = cfg.bfs.lr = cfg.ual.lr = *a.lr;
  override_if(a.lr_encoder_dml, cfg.encoder_dml.lr);
  override_if(a.lr_bfs, cfg.bfs.lr);
  override_if(a.lr_ual, cfg.ual.lr);
  override_if(a.beta, cfg.model.beta);
  override_if(a.prior_log_odds, cfg.model.prior_log_odds);
  if (a.activation) cfg.model.activation = parse_activation(*a.activation);
  nlohmann::json j = cfg.to_json();
  if (a.dml_loss) j["dml_loss"] = *a.dml_loss;
  j["seed"] = resolve_seed(cfg.seed, a.seed);
  cfg = TrainConfig::from_json(j);

  const fs::path data = a.data, run = a.out;
  const Vocabulary vocab = read_vocab(data);
  const auto docs = read_encoded(data / "train.jsonl");
  const fs::path ckpt_path = run / "checkpoint.bin", telemetry_path = run / "telemetry.csv";

  std::optional<Checkpoint> resume;
  std::vector<TelemetryRow> kept;
  if (a.resume) {
    if (!fs::exists(ckpt_path)) throw ParseError("nothing to resume: " + ckpt_path.string() + " is missing");
    resume = load_checkpoint(ckpt_path);
    if (fs::exists(telemetry_path)) {
      auto in = open_in(telemetry_path);
      for (const auto& r : read_telemetry_csv(in))
        if (r.epoch <= resume->epoch) kept.push_back(r);
    }
    out << "resuming after epoch " << resume->epoch << '\n';
  }
  write_json(run / "config.json", cfg.to_json());
  {
    auto tel = open_out(telemetry_path);
    write_telemetry_header(tel);
    for (const auto& r : kept) write_telemetry_row(tel, r);
  }

  const auto on_epoch = [&](const Checkpoint& ckpt, const TelemetryRow& row) {
    save_checkpoint(ckpt_path, ckpt);
    if (a.save_every_epoch && ckpt.epoch > 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03zu.bin", static_cast<std::size_t>(ckpt.epoch));
      save_checkpoint(run / name, ckpt);
    }
    auto tel = open_out(telemetry_path, std::ios::app);
    write_telemetry_row(tel, row);
    char line[160];
    std::snprintf(line, sizeof line, "epoch %3zu  dml %.5f  bfs %.5f  ual %.5f  h_w %.4f  h_b %.4f\n", row.epoch,
                  row.loss_dml, row.loss_bfs, row.loss_ual, row.h_within, row.h_between);
    out << line << std::flush;
  };
  const auto result = train(docs, vocab, cfg, on_epoch, resume);
  save_checkpoint(ckpt_path, result.checkpoint);
  out << "checkpoint: " << ckpt_path.string() << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
  std::string data, pairs, out, config;
  std::vector<std::string> checkpoints;
  std::optional<std::string> stages, subsets;
  std::optional<std::size_t> bins;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  EvalConfig cfg = base_config(a.config).eval;
  override_if(a.stages, cfg.stages);
  override_if(a.subsets, cfg.subsets);
  override_if(a.bins, cfg.bins);
  cfg = EvalConfig::from_json(cfg.to_json());
  const auto stages = parse_stages(cfg.stages);
  const auto keep = SubsetFilter::parse(cfg.subsets);

  const fs::path data = a.data, dir = a.out;
  if (!fs::exists(a.pairs)) throw ParseError("pair file does not exist: " + a.pairs);
  const Vocabulary vocab = read_vocab(data);
  auto docs = read_encoded(data / "test.jsonl");
  for (auto& e : read_encoded(data / "train.jsonl")) docs.push_back(std::move(e));
  auto pair_in = open_in(a.pairs);
  const auto pairs = read_pairs_jsonl(pair_in);

  std::vector<std::vector<PairPrediction>> runs;
  for (const auto& c : a.checkpoints) {
    const fs::path p = fs::is_directory(c) ? fs::path(c) / "checkpoint.bin" : fs::path(c);
    if (!fs::exists(p)) throw ParseError("checkpoint does not exist: " + p.string());
    runs.push_back(evaluate_checkpoint(load_checkpoint(p), vocab.hash(), docs, pairs));
  }

  nlohmann::json metrics = nlohmann::json::object();
  metrics["subsets"] = keep.to_string();
  metrics["pairs"] = pairs.size();
  for (const Stage stage : stages) {
    const std::string name(stage_name(stage));
    std::vector<MetricsReport> reports;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const auto trials = stage_trials(runs[r], stage, keep);
      reports.push_back(compute_report(trials, cfg.bins));
      const std::string suffix = runs.size() > 1 ? "_run" + std::to_string(r) : "";
      auto reliability = open_out(dir / ("reliability_" + name + suffix + ".csv"));
      export_reliability(reliability, calibration(trials, cfg.bins));
      auto histograms = open_out(dir / ("histograms_" + name + suffix + ".csv"));
      export_histograms(histograms, trials, keep, cfg.bins);
    }
    if (runs.size() == 1) {
      metrics["stages"][name] = reports[0].to_json();
    } else {
      metrics["stages"][name] = average_reports(reports);
      for (const auto& r : reports) metrics["runs"][name].push_back(r.to_json());
    }
  }
  write_json(dir / "metrics.json", metrics);
  if (runs.size() == 1) {
    auto pred_out = open_out(dir / "predictions.jsonl");
    write_predictions_jsonl(pred_out, runs[0]);
  }

  out << "stage    auc    c@1   f05u     f1  brier overall  conf    ece    mce\n";
  for (const Stage stage : stages) {
    const auto& m = metrics["stages"][std::string(stage_name(stage))];
    const auto get = [&](const char* k) {
      const auto& v = runs.size() == 1 ? m.at(k) : m.at(k).at("mean");
      return v.is_null() ? std::nan("") : v.get<double>();
    };
    char line[160];
    std::snprintf(line, sizeof line, "%-5s %s %s %s %s %s  %s %s %s %s\n", std::string(stage_name(stage)).c_str(),
                  fmt(get("auc")).c_str(), fmt(get("c_at_1")).c_str(), fmt(get("f_05_u")).c_str(),
                  fmt(get("f1")).c_str(), fmt(get("brier")).c_str(), fmt(get("overall")).c_str(),
                  fmt(get("conf_mean")).c_str(), fmt(get("ece")).c_str(), fmt(get("mce")).c_str());
    out << line;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- report

int cmd_report(const std::vector<std::string>& files, const std::string& telemetry, std::ostream& out) {
  for (const auto& f : files) {
    const auto j = read_json(f);
    if (!j.contains("stages")) throw ParseError(f + " is not a metrics file");
    out << f << " (" << j.value("pairs", 0) << " pairs, subsets " << j.value("subsets", "all") << ")\n";
    out << "stage    auc    c@1   f05u     f1  brier overall  conf    ece    mce\n";
    for (const auto& [stage, m] : j.at("stages").items()) {
      out << std::left << std::setw(5) << stage;
      for (const char* k : {"auc", "c_at_1", "f_05_u", "f1", "brier", "overall", "conf_mean", "ece", "mce"}) {
        const auto& v = m.at(k);
        if (v.is_object()) {
          const auto mean = v.at("mean"), sd = v.at("std");
          out << ' ' << fmt(mean.is_null() ? std::nan("") : mean.get<double>()) << "±"
              << fmt(sd.is_null() ? std::nan("") : sd.get<double>());
        } else {
          out << ' ' << fmt(v.is_null() ? std::nan("") : v.get<double>());
        }
      }
      out << '\n';
    }
  }
  if (!telemetry.empty()) {
    auto in = open_in(telemetry);
    const auto rows = read_telemetry_csv(in);
    if (rows.empty()) throw ParseError(telemetry + " has no rows");
    const auto& first = rows.front();
    const auto& last = rows.back();
    out << "epochs " << first.epoch << ".." << last.epoch << "\n";
    out << "h_within  " << first.h_within << " -> " << last.h_within << "\n";
    out << "h_between " << first.h_between << " -> " << last.h_between << "\n";
    out << "loss_dml  " << first.loss_dml << " -> " << last.loss_dml << "\n";
  }
  return kExitOk;
}

// ----------------------------------------------------------------- synth

struct SynthArgs {
  std::string kind = "style", out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> authors, docs, doc_tokens;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(0, a.seed);
  std::vector<Document> docs;
  if (a.kind == "style") {
    StyleCorpusConfig cfg;
    cfg.seed = seed;
    override_if(a.authors, cfg.authors);
    override_if(a.doc_tokens, cfg.doc_tokens);
    docs = synthetic_style_corpus(cfg);
  } else if (a.kind == "pairing") {
    PairingCorpusConfig cfg;
    cfg.seed = seed;
    override_if(a.docs, cfg.docs);
    for (const auto& m : synthetic_pairing_corpus(cfg)) docs.push_back({m.doc_id, m.author_id, m.fandom_id, m.doc_id});
  } else {
    throw ValidationError("synth --kind must be style or pairing");
  }
  auto doc_out = open_out(a.out);
  write_docs_jsonl(doc_out, docs);
  out << docs.size() << " documents written to " << a.out << '\n';
  return kExitOk;
}

template <class T>
CLI::Option* opt(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help) {
  return app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"calav: calibrated authorship verification"};
  app.require_subcommand(1);

  PrepArgs prep;
  auto* p = app.add_subcommand("prep", "split, build the vocabulary and encode a corpus");
  p->add_option("--corpus", prep.corpus, "corpus file (docs-jsonl) or pairs file (pan-jsonl)")->required();
  p->add_option("--truth", prep.truth, "truth file for pan-jsonl");
  p->add_option("--out", prep.out, "output directory")->required();
  p->add_option("--config", prep.config, "JSON run config");
  opt(p, "--format", prep.format, "docs-jsonl or pan-jsonl");
  opt(p, "--split", prep.split, "disjoint or author");
  opt(p, "--test-fraction", prep.test_fraction, "share of fandoms (or authors) held out");
  opt(p, "--vocab-tokens", prep.vocab_tokens, "token vocabulary size");
  opt(p, "--vocab-chars", prep.vocab_chars, "character vocabulary size");
  opt(p, "--width", prep.width, "tokens per sentence unit");
  opt(p, "--hop", prep.hop, "tokens between unit starts");
  opt(p, "--max-units", prep.max_units, "unit cap per document");
  opt(p, "--chars-per-token", prep.chars_per_token, "characters kept per token");
  opt(p, "--seed", prep.seed, "split seed");

  SampleArgs sample;
  auto* s = app.add_subcommand("sample", "draw a fixed evaluation pair set");
  s->add_option("--data", sample.data, "prep output directory")->required();
  s->add_option("--out", sample.out, "pair file to write")->required();
  s->add_option("--config", sample.config, "JSON run config");
  opt(s, "--side", sample.side, "train or test");
  opt(s, "--subset", sample.subsets, "comma-separated subsets to keep");
  opt(s, "--rounds", sample.rounds, "sampling rounds merged into the pair set");
  opt(s, "--seed", sample.seed, "sampling seed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model");
  t->add_option("--data", tr.data, "prep output directory")->required();
  t->add_option("--out", tr.out, "run directory")->required();
  t->add_option("--config", tr.config, "JSON run config");
  opt(t, "--epochs", tr.epochs, "training epochs");
  opt(t, "--batch-size", tr.batch_size, "pairs per batch");
  opt(t, "--lr", tr.lr, "learning rate for every group");
  opt(t, "--lr-encoder-dml", tr.lr_encoder_dml, "learning rate of the encoder and metric head");
  opt(t, "--lr-bfs", tr.lr_bfs, "learning rate of the scoring layer");
  opt(t, "--lr-ual", tr.lr_ual, "learning rate of the adaptation layer");
  opt(t, "--beta", tr.beta, "confusion entropy weight");
  opt(t, "--prior-log-odds", tr.prior_log_odds, "prior log odds of a same-author pair");
  opt(t, "--activation", tr.activation, "swish or tanh");
  opt(t, "--dml-loss", tr.dml_loss, "probabilistic or legacy");
  opt(t, "--lev-dim", tr.lev_dim, "embedding size");
  opt(t, "--bfs-dim", tr.bfs_dim, "scoring projection size");
  opt(t, "--ual-dim", tr.ual_dim, "adaptation representation size");
  opt(t, "--seed", tr.seed, "training seed");
  t->add_flag("--resume", tr.resume, "continue from the run directory's checkpoint");
  t->add_flag("--save-every-epoch", tr.save_every_epoch, "keep a checkpoint per epoch");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score fixed pairs and compute metrics per stage");
  e->add_option("--data", ev.data, "prep output directory")->required();
  e->add_option("--pairs", ev.pairs, "pair file")->required();
  e->add_option("--checkpoint,--average", ev.checkpoints, "checkpoint files or run directories; several are averaged")
      ->required();
  e->add_option("--out", ev.out, "output directory")->required();
  e->add_option("--config", ev.config, "JSON run config");
  opt(e, "--stages", ev.stages, "comma-separated: dml,bfs,ual");
  opt(e, "--subset", ev.subsets, "comma-separated subsets to score");
  opt(e, "--bins", ev.bins, "calibration bins");

  std::vector<std::string> report_files;
  std::string report_telemetry;
  auto* r = app.add_subcommand("report", "summarise metrics files and telemetry");
  r->add_option("metrics", report_files, "metrics.json files");
  r->add_option("--telemetry", report_telemetry, "telemetry CSV");

  SynthArgs sy;
  auto* y = app.add_subcommand("synth", "write a synthetic corpus");
  y->add_option("--kind", sy.kind, "style or pairing");
  y->add_option("--out", sy.out, "docs-jsonl file")->required();
  opt(y, "--seed", sy.seed, "generator seed");
  opt(y, "--authors", sy.authors, "authors (style)");
  opt(y, "--docs", sy.docs, "documents (pairing)");
  opt(y, "--doc-tokens", sy.doc_tokens, "tokens per document (style)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitInput;
  }

  try {
    if (*p) return cmd_prep(prep, out);
    if (*s) return cmd_sample(sample, out);
    if (*t) return cmd_train(tr, out);
    if (*e) return cmd_eval(ev, out);
    if (*r) return cmd_report(report_files, report_telemetry, out);
    if (*y) return cmd_synth(sy, out);
  } catch (const ConsistencyError& ex) {
    err << "consistency error: " << ex.what() << '\n';
    return kExitConsistency;
  } catch (const NumericError& ex) {
    err << "numerical failure: " << ex.what() << '\n';
    return kExitNumeric;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitInput;
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitInput;
  } catch (const nlohmann::json::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace calav
