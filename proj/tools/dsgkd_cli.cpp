#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dsgkd/corpus.hpp"
#include "dsgkd/errors.hpp"
#include "dsgkd/io.hpp"
#include "dsgkd/kernels.hpp"
#include "dsgkd/manifest.hpp"
#include "dsgkd/metrics.hpp"
#include "dsgkd/trainer.hpp"

namespace fs = std::filesystem;
using namespace dsgkd;

namespace {

// Refusals (overwrite without --force, resume mismatch) exit with 3.
class Refusal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool g_quiet = false;

void log(const std::string& s) {
  if (!g_quiet) std::cerr << s << "\n";
}

struct Common {
  bool force = false;
  bool resume = false;
  std::optional<std::uint64_t> seed;
  std::string config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c, bool resumable) {
  app->add_flag("--force", c.force, "Overwrite existing outputs");
  if (resumable)
    app->add_flag("--resume", c.resume, "Reuse finished work when the manifest matches");
  app->add_option("--seed", c.seed, "Overrides the configured seed");
  app->add_option("--config", c.config, "Flat key = value configuration file")
      ->check(CLI::ExistingFile);
  app->add_option("--set", c.sets, "key=value override (repeatable)");
}

// defaults < file < --set < dedicated flags
KeyValues layered(const Common& c) {
  KeyValues kv;
  if (!c.config.empty()) kv = load_key_values(c.config);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ValidationError("--set expects key=value, got '" + s + "'");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (c.seed) kv["seed"] = std::to_string(*c.seed);
  return kv;
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw ValidationError("missing input: " + p.string());
}

// Returns false when a matching, complete run is already present.
bool begin_run(RunManifest& m, const fs::path& manifest_path, const std::vector<fs::path>& outputs,
               const Common& c, const std::vector<fs::path>& inputs) {
  for (const auto& p : inputs) {
    require_file(p);
    m.inputs[p.string()] = file_sha256(p);
  }
  if (c.resume && fs::exists(manifest_path)) {
    const RunManifest old = RunManifest::load(manifest_path);
    const auto diff = old.mismatches(m);
    if (!diff.empty()) {
      std::string msg = "manifest " + manifest_path.string() + " does not match this run:";
      for (const auto& k : diff) msg += " " + k;
      throw Refusal(msg);
    }
    if (old.status == "complete") {
      bool intact = true;
      for (const auto& [path, digest] : old.outputs)
        intact = intact && fs::exists(path) && file_sha256(path) == digest;
      if (intact) {
        log("already complete: " + manifest_path.string());
        return false;
      }
    }
  } else if (!c.force) {
    std::vector<fs::path> all = outputs;
    all.push_back(manifest_path);
    for (const auto& p : all)
      if (fs::exists(p)) throw Refusal("refusing to overwrite " + p.string() + " (pass --force)");
  }
  if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());
  m.timestamp = utc_timestamp();
  m.status = "running";
  m.save(manifest_path);
  return true;
}

void finish_run(RunManifest& m, const fs::path& manifest_path,
                const std::vector<fs::path>& outputs) {
  for (const auto& p : outputs) m.outputs[p.string()] = file_sha256(p);
  m.status = "complete";
  m.save(manifest_path);
}

struct DataDir {
  std::vector<Document> train, dev, test;
  Lexicon lexicon;
  std::vector<fs::path> files;

  const std::vector<Document>& split(Split s) const {
    return s == Split::kTrain ? train : s == Split::kDev ? dev : test;
  }
};

DataDir load_data(const fs::path& dir) {
  DataDir d;
  d.files = {dir / "train.tsv", dir / "dev.tsv", dir / "test.tsv", dir / "lexicon.txt"};
  for (const auto& f : d.files) require_file(f);
  d.train = load_corpus(d.files[0]);
  d.dev = load_corpus(d.files[1]);
  d.test = load_corpus(d.files[2]);
  d.lexicon = Lexicon::load(d.files[3]);
  return d;
}

// ---- gen-data ----------------------------------------------------------------------

struct GenArgs {
  Common c;
  std::string out;
  std::string profile;
};

int run_gen_data(const GenArgs& a) {
  KeyValues kv = layered(a.c);
  if (!a.profile.empty()) kv["profile"] = a.profile;
  const GeneratorConfig cfg = GeneratorConfig::from_key_values(kv);
  const fs::path dir = a.out;
  const std::vector<fs::path> outs = {dir / "train.tsv", dir / "dev.tsv", dir / "test.tsv",
                                      dir / "lexicon.txt", dir / "stats.txt"};
  RunManifest m;
  m.command = "gen-data";
  m.config = cfg.to_key_values();
  std::vector<fs::path> inputs;
  if (!a.c.config.empty()) inputs.push_back(a.c.config);
  if (!begin_run(m, dir / "manifest.txt", outs, a.c, inputs)) return 0;

  const GeneratedCorpus gc = generate(cfg);
  save_corpus(select_split(gc.documents, Split::kTrain), outs[0]);
  save_corpus(select_split(gc.documents, Split::kDev), outs[1]);
  save_corpus(select_split(gc.documents, Split::kTest), outs[2]);
  gc.lexicon.save(outs[3]);
  const CorpusStats stats = corpus_stats(gc.documents, gc.lexicon, ScriptRanges::parse(cfg.local_ranges));
  write_file_atomic(outs[4], stats.to_key_values());
  log(stats.to_table());
  finish_run(m, dir / "manifest.txt", outs);
  return 0;
}

// ---- train-tokenizer ---------------------------------------------------------------

struct TokArgs {
  Common c;
  std::vector<std::string> data;
  std::size_t vocab_size = kDefaultVocabSize;
  std::string out;
};

int run_train_tokenizer(const TokArgs& a) {
  const fs::path dir = a.out;
  const std::vector<fs::path> outs = {dir / "vocab.txt"};
  RunManifest m;
  m.command = "train-tokenizer";
  m.config["vocab_size"] = std::to_string(a.vocab_size);
  std::vector<fs::path> inputs;
  std::vector<Document> docs;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const fs::path f = fs::path(a.data[i]) / "train.tsv";
    inputs.push_back(f);
    m.config["data." + std::to_string(i)] = a.data[i];
  }
  if (!begin_run(m, dir / "manifest.txt", outs, a.c, inputs)) return 0;
  for (const auto& f : inputs) {
    auto part = load_corpus(f);
    docs.insert(docs.end(), part.begin(), part.end());
  }
  const BpeVocab vocab = train_tokenizer(docs, a.vocab_size);
  vocab.save(outs[0]);
  log("vocabulary size " + std::to_string(vocab.size()));
  finish_run(m, dir / "manifest.txt", outs);
  return 0;
}

// ---- pretrain-teacher / train --------------------------------------------------------

struct TrainArgs {
  Common c;
  std::string data, tokenizer, teacher, out, mask_policy;
  bool no_hidn = false, no_attn = false;
};

void write_metrics(const fs::path& path, const MetricReport& r) {
  write_file_atomic(path, r.to_key_values());
}

int run_training(const TrainArgs& a, bool teacher_mode) {
  KeyValues kv = layered(a.c);
  if (a.no_hidn) kv["enable_hidn"] = "false";
  if (a.no_attn) kv["enable_attn"] = "false";
  if (!a.mask_policy.empty()) kv["mask_policy"] = a.mask_policy;
  const TrainConfig cfg = TrainConfig::from_key_values(
      kv, teacher_mode ? TrainConfig::teacher_defaults() : TrainConfig{});

  const fs::path dir = a.out;
  const fs::path ckpt = dir / (teacher_mode ? "teacher.ckpt" : "model.ckpt");
  const std::vector<fs::path> outs = {ckpt, dir / "run.txt", dir / "metrics.txt"};
  RunManifest m;
  m.command = teacher_mode ? "pretrain-teacher" : "train";
  m.config = cfg.to_key_values();
  m.config["data"] = a.data;
  m.config["tokenizer"] = a.tokenizer;
  if (!a.teacher.empty()) m.config["teacher"] = a.teacher;
  std::vector<fs::path> inputs = {fs::path(a.data) / "train.tsv", fs::path(a.data) / "dev.tsv",
                                  fs::path(a.data) / "test.tsv", fs::path(a.data) / "lexicon.txt",
                                  a.tokenizer};
  if (!a.teacher.empty()) inputs.push_back(a.teacher);
  if (!a.c.config.empty()) inputs.push_back(a.c.config);
  if (!begin_run(m, dir / "manifest.txt", outs, a.c, inputs)) return 0;

  const DataDir data = load_data(a.data);
  const BpeVocab vocab = BpeVocab::load(a.tokenizer);
  const std::string tok_digest = file_sha256(a.tokenizer);
  std::optional<Encoder> teacher;
  if (!a.teacher.empty()) {
    teacher = Encoder::load(a.teacher);
    freeze(*teacher);
    const auto it = teacher->metadata().find("tokenizer_sha256");
    if (it != teacher->metadata().end() && it->second != tok_digest)
      throw ValidationError("teacher " + a.teacher + " was trained with a different tokenizer than " +
                            a.tokenizer);
    EncoderConfig sc = cfg.model;
    sc.vocab_size = vocab.size();
    check_teacher_compatible(teacher->config(), sc);
  }
  const auto prep = [&](Split s) {
    return prepare_dataset(data.split(s), vocab, data.lexicon, cfg.model.max_len, cfg.mask_policy);
  };
  const Dataset train = prep(Split::kTrain), dev = prep(Split::kDev), test = prep(Split::kTest);

  TrainResult r = teacher_mode
                      ? pretrain_teacher(train, dev, vocab.size(), cfg, log)
                      : train_student(train, dev, vocab.size(), cfg,
                                      {.teacher = teacher ? &*teacher : nullptr, .cache = nullptr, .observer = {}, .log = log});
  r.model.metadata()["tokenizer_sha256"] = tok_digest;
  r.model.metadata()["kind"] = r.record.kind;
  r.model.save(ckpt);
  r.record.best_checkpoint = ckpt.filename().string();
  r.record.test = evaluate(r.model, test).metrics;
  r.record.save(dir / "run.txt");
  write_metrics(dir / "metrics.txt", *r.record.test);
  log(format_metric_table({{r.record.kind, *r.record.test}}));
  finish_run(m, dir / "manifest.txt", outs);
  return 0;
}

// ---- eval --------------------------------------------------------------------------

struct EvalArgs {
  Common c;
  std::string ckpt, data, tokenizer, split = "test", out;
};

int run_eval(const EvalArgs& a) {
  parse_split(a.split);
  const fs::path dir = a.out;
  const std::vector<fs::path> outs = {dir / "metrics.txt", dir / "scores.tsv", dir / "mwps.txt"};
  RunManifest m;
  m.command = "eval";
  m.config = {{"ckpt", a.ckpt}, {"data", a.data}, {"tokenizer", a.tokenizer}, {"split", a.split}};
  const std::vector<fs::path> inputs = {a.ckpt, fs::path(a.data) / (a.split + ".tsv"),
                                        fs::path(a.data) / "lexicon.txt", a.tokenizer};
  if (!begin_run(m, dir / "manifest.txt", outs, a.c, inputs)) return 0;

  const Encoder model = Encoder::load(a.ckpt);
  const BpeVocab vocab = BpeVocab::load(a.tokenizer);
  const auto it = model.metadata().find("tokenizer_sha256");
  if (it != model.metadata().end() && it->second != file_sha256(a.tokenizer))
    throw ValidationError("checkpoint " + a.ckpt + " was trained with a different tokenizer than " +
                          a.tokenizer);
  const auto docs = load_corpus(inputs[1]);
  const Lexicon lexicon = Lexicon::load(inputs[2]);
  const Dataset ds = prepare_dataset(docs, vocab, lexicon, model.config().max_len,
                                     MaskPolicy::kAllDomainScript);
  const Evaluation ev = evaluate(model, ds);
  write_metrics(outs[0], ev.metrics);

  std::string scores = "index\tlabel\tscore\tprediction\n";
  std::vector<std::vector<WordAnnotation>> all, correct;
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    scores += std::to_string(i) + "\t" + std::to_string(ds.examples[i].label) + "\t" +
              format_exact(ev.scores[i]) + "\t" + std::to_string(ev.predictions[i]) + "\n";
    all.push_back(ds.examples[i].words);
    if (ev.predictions[i] == ds.examples[i].label) correct.push_back(ds.examples[i].words);
  }
  write_file_atomic(outs[1], scores);
  std::string mw;
  auto emit = [&](const std::string& prefix, const MwpsReport& r) {
    mw += prefix + "documents = " + std::to_string(prefix == "all." ? all.size() : correct.size()) + "\n";
    mw += prefix + "m = " + std::to_string(r.m) + "\n";
    mw += prefix + "E = " + std::to_string(r.E) + "\n";
    mw += prefix + "A = " + std::to_string(r.A) + "\n";
    mw += prefix + "mwps = " + (r.mwps ? format_exact(*r.mwps) : std::string("undefined")) + "\n";
  };
  emit("all.", mwps(all));
  emit("correct.", mwps(correct));
  write_file_atomic(outs[2], mw);
  log(format_metric_table({{fs::path(a.ckpt).stem().string(), ev.metrics}}));
  finish_run(m, dir / "manifest.txt", outs);
  return 0;
}

// ---- ablate ------------------------------------------------------------------------

struct AblateArgs {
  Common c;
  std::string grid, data, tokenizer, teacher, out, seeds;
};

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(static_cast<std::uint64_t>(parse_int(tok, "seeds")));
  return out;
}

int run_ablate(const AblateArgs& a) {
  const TrainConfig base = TrainConfig::from_key_values(layered(a.c));
  require_file(a.grid);
  GridFile grid = parse_grid(read_file(a.grid));
  if (!a.seeds.empty()) grid.seeds = parse_seeds(a.seeds);

  const fs::path dir = a.out;
  const std::vector<fs::path> outs = {dir / "ablation.txt"};
  RunManifest m;
  m.command = "ablate";
  m.config = base.to_key_values();
  m.config["data"] = a.data;
  m.config["tokenizer"] = a.tokenizer;
  m.config["grid"] = a.grid;
  if (!a.teacher.empty()) m.config["teacher"] = a.teacher;
  std::string seeds;
  for (auto s : grid.seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
  m.config["seeds"] = seeds;
  std::vector<fs::path> inputs = {fs::path(a.data) / "train.tsv", fs::path(a.data) / "dev.tsv",
                                  fs::path(a.data) / "test.tsv", fs::path(a.data) / "lexicon.txt",
                                  a.tokenizer, a.grid};
  if (!a.teacher.empty()) inputs.push_back(a.teacher);
  if (!a.c.config.empty()) inputs.push_back(a.c.config);
  if (!begin_run(m, dir / "manifest.txt", outs, a.c, inputs)) return 0;

  const DataDir data = load_data(a.data);
  const BpeVocab vocab = BpeVocab::load(a.tokenizer);
  std::optional<Encoder> teacher;
  if (!a.teacher.empty()) {
    teacher = Encoder::load(a.teacher);
    freeze(*teacher);
    const auto it = teacher->metadata().find("tokenizer_sha256");
    if (it != teacher->metadata().end() && it->second != file_sha256(a.tokenizer))
      throw ValidationError("teacher " + a.teacher + " was trained with a different tokenizer than " +
                            a.tokenizer);
  }
  fs::create_directories(dir / "cells");
  const auto cell_path = [&](const std::string& cell, std::uint64_t seed) {
    return dir / "cells" / (cell + ".seed" + std::to_string(seed) + ".txt");
  };
  AblationOptions opts;
  opts.seeds = grid.seeds;
  opts.log = log;
  opts.lookup = [&](const std::string& cell, std::uint64_t seed) -> std::optional<RunRecord> {
    const fs::path p = cell_path(cell, seed);
    if (a.c.resume && fs::exists(p)) return RunRecord::load(p);
    return std::nullopt;
  };
  opts.done = [&](const std::string& cell, std::uint64_t seed, const RunRecord& r) {
    r.save(cell_path(cell, seed));
  };
  const auto rows = ablation_grid(data.train, data.dev, data.test, vocab, data.lexicon,
                                  teacher ? &*teacher : nullptr, base, grid.cells, opts);
  const std::string table = format_ablation_table(rows);
  write_file_atomic(outs[0], table);
  log(table);
  finish_run(m, dir / "manifest.txt", outs);
  return 0;
}

// ---- export-embeddings -------------------------------------------------------------

struct ExportArgs {
  Common c;
  std::vector<std::string> ckpts;
  std::string data, tokenizer, split = "test", out, mask_policy = "all-domain";
  std::size_t docs = 100;
  bool no_projection = false;
};

int run_export(const ExportArgs& a) {
  parse_split(a.split);
  const MaskPolicy policy = parse_mask_policy(a.mask_policy);
  const fs::path out = a.out;
  const fs::path manifest = fs::path(a.out + ".manifest.txt");
  RunManifest m;
  m.command = "export-embeddings";
  m.config = {{"data", a.data}, {"tokenizer", a.tokenizer}, {"split", a.split},
              {"docs", std::to_string(a.docs)}, {"mask_policy", a.mask_policy},
              {"projection", a.no_projection ? "false" : "true"}};
  std::vector<std::pair<std::string, fs::path>> sources;
  std::vector<fs::path> inputs = {fs::path(a.data) / (a.split + ".tsv"),
                                  fs::path(a.data) / "lexicon.txt", a.tokenizer};
  for (const auto& spec : a.ckpts) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ValidationError("--ckpt expects tag=path, got '" + spec + "'");
    sources.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
    m.config["ckpt." + spec.substr(0, eq)] = spec.substr(eq + 1);
    inputs.push_back(spec.substr(eq + 1));
  }
  if (!begin_run(m, manifest, {out}, a.c, inputs)) return 0;

  const BpeVocab vocab = BpeVocab::load(a.tokenizer);
  const auto docs = load_corpus(inputs[0]);
  const Lexicon lexicon = Lexicon::load(inputs[1]);
  std::vector<EmbeddingRow> rows;
  for (const auto& [tag, path] : sources) {
    const Encoder model = Encoder::load(path);
    const Dataset ds = prepare_dataset(docs, vocab, lexicon, model.config().max_len, policy);
    for (auto& w : word_embeddings(model, ds, a.docs))
      rows.push_back({std::move(w.vector), tag, w.knowledge});
  }
  export_embeddings(rows, out, !a.no_projection);
  log("wrote " + std::to_string(rows.size()) + " rows to " + out.string());
  finish_run(m, manifest, {out});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  kernels::tune_allocator();
  CLI::App app{"Knowledge-masked distillation from a domain teacher to a general student"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "OpenMP threads for kernels")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", g_quiet, "Suppress progress output");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic labeled corpus");
  add_common(gen_cmd, gen.c, false);
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--profile", gen.profile, "student or teacher");

  TokArgs tok;
  auto* tok_cmd = app.add_subcommand("train-tokenizer", "Train the subword vocabulary");
  add_common(tok_cmd, tok.c, false);
  tok_cmd->add_option("--data", tok.data, "Corpus directories (train split used)")->required();
  tok_cmd->add_option("--vocab-size", tok.vocab_size, "Target vocabulary size");
  tok_cmd->add_option("--out", tok.out, "Output directory")->required();

  TrainArgs pre;
  auto* pre_cmd = app.add_subcommand("pretrain-teacher", "Train and freeze the domain teacher");
  add_common(pre_cmd, pre.c, true);
  pre_cmd->add_option("--data", pre.data, "Teacher corpus directory")->required();
  pre_cmd->add_option("--tokenizer", pre.tokenizer, "Vocabulary file")->required();
  pre_cmd->add_option("--out", pre.out, "Output directory")->required();

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train a student, with or without a teacher");
  add_common(tr_cmd, tr.c, true);
  tr_cmd->add_option("--data", tr.data, "Student corpus directory")->required();
  tr_cmd->add_option("--tokenizer", tr.tokenizer, "Vocabulary file")->required();
  tr_cmd->add_option("--teacher", tr.teacher, "Frozen teacher checkpoint");
  tr_cmd->add_option("--out", tr.out, "Output directory")->required();
  tr_cmd->add_flag("--no-hidn", tr.no_hidn, "Disable the hidden-state term");
  tr_cmd->add_flag("--no-attn", tr.no_attn, "Disable the attention term");
  tr_cmd->add_option("--mask-policy", tr.mask_policy, "all-domain or lexicon")
      ->check(CLI::IsMember({"all-domain", "lexicon"}));

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  add_common(ev_cmd, ev.c, false);
  ev_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  ev_cmd->add_option("--data", ev.data, "Corpus directory")->required();
  ev_cmd->add_option("--tokenizer", ev.tokenizer, "Vocabulary file")->required();
  ev_cmd->add_option("--split", ev.split, "train, dev or test");
  ev_cmd->add_option("--out", ev.out, "Output directory")->required();

  AblateArgs ab;
  auto* ab_cmd = app.add_subcommand("ablate", "Run a grid of training variants over seeds");
  add_common(ab_cmd, ab.c, true);
  ab_cmd->add_option("--grid", ab.grid, "Grid file")->required();
  ab_cmd->add_option("--data", ab.data, "Student corpus directory")->required();
  ab_cmd->add_option("--tokenizer", ab.tokenizer, "Vocabulary file")->required();
  ab_cmd->add_option("--teacher", ab.teacher, "Frozen teacher checkpoint");
  ab_cmd->add_option("--seeds", ab.seeds, "Comma-separated seeds (overrides the grid file)");
  ab_cmd->add_option("--out", ab.out, "Output directory")->required();

  ExportArgs ex;
  auto* ex_cmd = app.add_subcommand("export-embeddings", "Write pooled word embeddings as TSV");
  add_common(ex_cmd, ex.c, false);
  ex_cmd->add_option("--ckpt", ex.ckpts, "tag=checkpoint (repeatable)")->required();
  ex_cmd->add_option("--data", ex.data, "Corpus directory")->required();
  ex_cmd->add_option("--tokenizer", ex.tokenizer, "Vocabulary file")->required();
  ex_cmd->add_option("--split", ex.split, "train, dev or test");
  ex_cmd->add_option("--docs", ex.docs, "Documents to export (0 = all)");
  ex_cmd->add_option("--mask-policy", ex.mask_policy, "all-domain or lexicon")
      ->check(CLI::IsMember({"all-domain", "lexicon"}));
  ex_cmd->add_flag("--no-projection", ex.no_projection, "Omit the PCA columns");
  ex_cmd->add_option("--out", ex.out, "Output TSV")->required();

  CLI11_PARSE(app, argc, argv);
#ifdef _OPENMP
  omp_set_num_threads(threads);
#endif
  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*tok_cmd) return run_train_tokenizer(tok);
    if (*pre_cmd) return run_training(pre, true);
    if (*tr_cmd) return run_training(tr, false);
    if (*ev_cmd) return run_eval(ev);
    if (*ab_cmd) return run_ablate(ab);
    if (*ex_cmd) return run_export(ex);
  } catch (const Refusal& e) {
    std::cerr << "refused: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
