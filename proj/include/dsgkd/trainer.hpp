#pragma once

// Teacher pretraining, baseline fine-tuning and knowledge-distilled training.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dsgkd/corpus.hpp"
#include "dsgkd/distill.hpp"
#include "dsgkd/encoder.hpp"
#include "dsgkd/io.hpp"
#include "dsgkd/metrics.hpp"
#include "dsgkd/textprep.hpp"
#include "dsgkd/tokenizer.hpp"

namespace dsgkd {

enum class StopMetric { kAuroc, kAuprc, kF1, kAccuracy };
StopMetric parse_stop_metric(std::string_view name);
const char* stop_metric_name(StopMetric m);

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 15;
  std::size_t patience = 15;  // epochs without improvement before stopping
  double lr_body = 1e-3;
  double lr_classifier = 1e-2;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;  // global L2 norm; 0 disables
  std::uint64_t seed = 42;
  double alpha = 0.6;
  double beta = 0.2;
  bool enable_hidn = true;
  bool enable_attn = true;
  MaskPolicy mask_policy = MaskPolicy::kAllDomainScript;
  StopMetric early_stop_metric = StopMetric::kAuroc;
  // Model shape; vocab_size comes from the tokenizer.
  EncoderConfig model;

  // Overrides on top of `base`; unknown keys raise ValidationError.
  static TrainConfig from_key_values(const KeyValues& kv, const TrainConfig& base);
  static TrainConfig from_key_values(const KeyValues& kv);
  // Defaults for teacher pretraining: fewer epochs on the larger corpus.
  static TrainConfig teacher_defaults();
  KeyValues to_key_values() const;
  void validate() const;
  LossWeights weights() const { return {alpha, beta}; }
  DistillSwitches switches() const { return {enable_hidn, enable_attn}; }
};

// One document prepared for the encoder.
struct Example {
  TokenizedInput tokens;
  std::vector<WordAnnotation> words;
  KnowledgeMask mask;
  int label = 0;
};

struct Dataset {
  std::vector<Example> examples;
  std::vector<int> labels() const;
};

Dataset prepare_dataset(const std::vector<Document>& docs, const BpeVocab& vocab,
                        const Lexicon& lexicon, std::size_t max_len, MaskPolicy policy,
                        const ScriptRanges& ranges = ScriptRanges());

inline constexpr std::size_t kDefaultVocabSize = 4000;

// Tokenizer training on preprocessed document text.
BpeVocab train_tokenizer(const std::vector<Document>& docs, std::size_t vocab_size,
                         const ScriptRanges& ranges = ScriptRanges());

// AdamW over two parameter groups (body and classifier head). Decay applies to
// matrices only.
class AdamW {
 public:
  struct Group {
    std::vector<Tensor> params;
    double lr = 0.0;
  };
  AdamW(std::vector<Group> groups, double weight_decay, double beta1, double beta2, double eps);

  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Group> groups_;
  double weight_decay_, beta1_, beta2_, eps_;
  std::vector<std::vector<std::vector<double>>> m_, v_;
  std::size_t t_ = 0;
};

AdamW make_optimizer(Encoder& model, const TrainConfig& config);

// Per-example pooled teacher values, one entry per layer, each row-major
// (k, d) for hidden and (k, width) for attention.
struct TeacherCache {
  std::size_t width = 0;
  std::size_t d = 0;
  std::vector<std::vector<std::vector<double>>> hidden;  // [example][layer]
  std::vector<std::vector<std::vector<double>>> attn;    // [example][layer]
  std::vector<std::int32_t> k;

  static TeacherCache build(const Encoder& teacher, const Dataset& data,
                            std::size_t batch_size = 32);
  // Batch targets for the given example indices, k padded to the batch max.
  TeacherTargets targets(std::span<const std::size_t> indices) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_pred = 0.0;
  double train_hidn = 0.0;
  double train_attn = 0.0;
  double dev_loss = 0.0;
  MetricReport dev;
};

struct RunRecord {
  std::string kind;  // teacher | baseline | distilled
  KeyValues config;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 before any epoch
  std::string best_checkpoint;
  std::optional<MetricReport> test;

  // key = value header followed by one tab-separated row per epoch.
  std::string to_text() const;
  static RunRecord parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static RunRecord load(const std::filesystem::path& path);
};

struct TrainResult {
  RunRecord record;
  Encoder model;
};

struct Evaluation {
  std::vector<double> scores;  // P(label 1)
  std::vector<int> predictions;
  MetricReport metrics;
  double loss = 0.0;
};

Evaluation evaluate(const Encoder& model, const Dataset& data, std::size_t batch_size = 64);

// Final-layer hidden states averaged over the tokens of each word that
// survived truncation, for the first `max_docs` examples (0 = all).
struct WordEmbedding {
  std::size_t example = 0;
  std::size_t word = 0;
  bool knowledge = false;  // word carries a nonzero mask value
  std::vector<double> vector;
};
std::vector<WordEmbedding> word_embeddings(const Encoder& model, const Dataset& data,
                                           std::size_t max_docs = 0, std::size_t batch_size = 64);

// Called after every optimizer step with the step's loss breakdown.
using StepObserver = std::function<void(std::size_t step, const LossBreakdown& loss)>;

struct TrainOptions {
  const Encoder* teacher = nullptr;
  // Precomputed teacher values for `train`; built on demand when null.
  const TeacherCache* cache = nullptr;
  StepObserver observer;
  // Optional progress lines (one per epoch).
  std::function<void(const std::string&)> log;
};

// Baseline (no teacher, or both switches off) or distilled training with
// early stopping on the dev split; the returned model holds the best epoch's
// weights.
TrainResult train_student(const Dataset& train, const Dataset& dev, std::size_t vocab_size,
                          const TrainConfig& config, const TrainOptions& options = {});

// Trains on a domain-rich corpus, then freezes the model.
TrainResult pretrain_teacher(const Dataset& train, const Dataset& dev, std::size_t vocab_size,
                             const TrainConfig& config,
                             std::function<void(const std::string&)> log = {});

// Checks shape compatibility for distillation.
void check_teacher_compatible(const EncoderConfig& teacher, const EncoderConfig& student);

struct AblationCell {
  std::string name;
  KeyValues overrides;
};

struct AblationRow {
  std::string name;
  KeyValues overrides;
  std::vector<std::uint64_t> seeds;
  std::vector<RunRecord> runs;  // one per seed

  double mean_auroc() const;
  double sd_auroc() const;  // sample standard deviation
};

// Every cell runs once per seed; each run is a full train_student followed
// by a test-split evaluation. `done` lets callers persist or skip cells.
struct AblationOptions {
  std::vector<std::uint64_t> seeds;  // empty: the base config's seed
  std::function<std::optional<RunRecord>(const std::string& cell, std::uint64_t seed)> lookup;
  std::function<void(const std::string& cell, std::uint64_t seed, const RunRecord&)> done;
  std::function<void(const std::string&)> log;
};

std::vector<AblationRow> ablation_grid(const std::vector<Document>& train,
                                       const std::vector<Document>& dev,
                                       const std::vector<Document>& test, const BpeVocab& vocab,
                                       const Lexicon& lexicon, const Encoder* teacher,
                                       const TrainConfig& base,
                                       const std::vector<AblationCell>& grid,
                                       const AblationOptions& options = {});

std::string format_ablation_table(const std::vector<AblationRow>& rows);

// Flat grid file: blocks separated by "[name]" headers, each followed by
// key = value overrides. An optional leading "seeds = 42,43,44" line applies
// to the whole grid.
struct GridFile {
  std::vector<AblationCell> cells;
  std::vector<std::uint64_t> seeds;
};
GridFile parse_grid(std::string_view text);

}  // namespace dsgkd
