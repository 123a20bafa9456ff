#include "dsgkd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "dsgkd/errors.hpp"

namespace dsgkd {

StopMetric parse_stop_metric(std::string_view name) {
  if (name == "auroc") return StopMetric::kAuroc;
  if (name == "auprc") return StopMetric::kAuprc;
  if (name == "f1") return StopMetric::kF1;
  if (name == "accuracy") return StopMetric::kAccuracy;
  throw ValidationError("unknown early-stop metric '" + std::string(name) +
                        "' (expected auroc, auprc, f1 or accuracy)");
}

const char* stop_metric_name(StopMetric m) {
  switch (m) {
    case StopMetric::kAuroc: return "auroc";
    case StopMetric::kAuprc: return "auprc";
    case StopMetric::kF1: return "f1";
    case StopMetric::kAccuracy: return "accuracy";
  }
  return "?";
}

// ---- configuration -----------------------------------------------------------------

namespace {

std::size_t parse_size(const std::string& value, const std::string& key) {
  const long long v = parse_int(value, key);
  if (v < 0) throw ValidationError("key '" + key + "': must be nonnegative, got " + value);
  return static_cast<std::size_t>(v);
}

}  // namespace

TrainConfig TrainConfig::from_key_values(const KeyValues& kv, const TrainConfig& base) {
  TrainConfig c = base;
  for (const auto& [key, value] : kv) {
    if (key == "batch_size") c.batch_size = parse_size(value, key);
    else if (key == "epochs") c.epochs = parse_size(value, key);
    else if (key == "patience") c.patience = parse_size(value, key);
    else if (key == "lr_body") c.lr_body = parse_double(value, key);
    else if (key == "lr_classifier") c.lr_classifier = parse_double(value, key);
    else if (key == "weight_decay") c.weight_decay = parse_double(value, key);
    else if (key == "adam_beta1") c.adam_beta1 = parse_double(value, key);
    else if (key == "adam_beta2") c.adam_beta2 = parse_double(value, key);
    else if (key == "adam_eps") c.adam_eps = parse_double(value, key);
    else if (key == "grad_clip") c.grad_clip = parse_double(value, key);
    else if (key == "seed") c.seed = parse_size(value, key);
    else if (key == "alpha") c.alpha = parse_double(value, key);
    else if (key == "beta") c.beta = parse_double(value, key);
    else if (key == "enable_hidn") c.enable_hidn = parse_bool(value, key);
    else if (key == "enable_attn") c.enable_attn = parse_bool(value, key);
    else if (key == "mask_policy") c.mask_policy = parse_mask_policy(value);
    else if (key == "early_stop_metric") c.early_stop_metric = parse_stop_metric(value);
    else if (key == "layers") c.model.layers = parse_size(value, key);
    else if (key == "hidden") c.model.hidden = parse_size(value, key);
    else if (key == "heads") c.model.heads = parse_size(value, key);
    else if (key == "max_len") c.model.max_len = parse_size(value, key);
    else if (key == "ffn_mult") c.model.ffn_mult = parse_size(value, key);
    else if (key == "dropout") c.model.dropout = parse_double(value, key);
    else throw ValidationError("unknown training key '" + key + "'");
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  return from_key_values(kv, TrainConfig{});
}

TrainConfig TrainConfig::teacher_defaults() {
  TrainConfig c;
  c.epochs = 6;
  return c;
}

KeyValues TrainConfig::to_key_values() const {
  KeyValues kv;
  kv["batch_size"] = std::to_string(batch_size);
  kv["epochs"] = std::to_string(epochs);
  kv["patience"] = std::to_string(patience);
  kv["lr_body"] = format_exact(lr_body);
  kv["lr_classifier"] = format_exact(lr_classifier);
  kv["weight_decay"] = format_exact(weight_decay);
  kv["adam_beta1"] = format_exact(adam_beta1);
  kv["adam_beta2"] = format_exact(adam_beta2);
  kv["adam_eps"] = format_exact(adam_eps);
  kv["grad_clip"] = format_exact(grad_clip);
  kv["seed"] = std::to_string(seed);
  kv["alpha"] = format_exact(alpha);
  kv["beta"] = format_exact(beta);
  kv["enable_hidn"] = enable_hidn ? "true" : "false";
  kv["enable_attn"] = enable_attn ? "true" : "false";
  kv["mask_policy"] = mask_policy_name(mask_policy);
  kv["early_stop_metric"] = stop_metric_name(early_stop_metric);
  kv["layers"] = std::to_string(model.layers);
  kv["hidden"] = std::to_string(model.hidden);
  kv["heads"] = std::to_string(model.heads);
  kv["max_len"] = std::to_string(model.max_len);
  kv["ffn_mult"] = std::to_string(model.ffn_mult);
  kv["dropout"] = format_exact(model.dropout);
  return kv;
}

void TrainConfig::validate() const {
  std::vector<std::string> bad;
  if (batch_size == 0) bad.push_back("batch_size");
  if (epochs == 0) bad.push_back("epochs");
  if (patience == 0) bad.push_back("patience");
  auto positive = [&](double v, const char* key) {
    if (!(v > 0.0) || !std::isfinite(v)) bad.push_back(key);
  };
  positive(lr_body, "lr_body");
  positive(lr_classifier, "lr_classifier");
  positive(adam_eps, "adam_eps");
  if (!(weight_decay >= 0.0)) bad.push_back("weight_decay");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) bad.push_back("adam_beta1");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) bad.push_back("adam_beta2");
  if (!(grad_clip >= 0.0)) bad.push_back("grad_clip");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) bad.push_back("alpha");
  if (!(beta >= 0.0) || !std::isfinite(beta)) bad.push_back("beta");
  if (!bad.empty()) {
    std::string msg = "invalid training configuration:";
    for (const auto& k : bad) msg += " " + k;
    throw ValidationError(msg);
  }
  EncoderConfig probe = model;
  if (probe.vocab_size == 0) probe.vocab_size = kNumSpecialTokens + 1;
  probe.validate();
}

// ---- data --------------------------------------------------------------------------

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.label);
  return out;
}

Dataset prepare_dataset(const std::vector<Document>& docs, const BpeVocab& vocab,
                        const Lexicon& lexicon, std::size_t max_len, MaskPolicy policy,
                        const ScriptRanges& ranges) {
  Dataset ds;
  ds.examples.reserve(docs.size());
  for (const auto& d : docs) {
    Example e;
    const std::string text = preprocess(d.text, ranges);
    e.tokens = encode(vocab, text, max_len);
    e.words = classify_words(text, lexicon, ranges);
    e.mask = build_mask(e.tokens, e.words, policy);
    e.label = d.label;
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

BpeVocab train_tokenizer(const std::vector<Document>& docs, std::size_t vocab_size,
                         const ScriptRanges& ranges) {
  std::vector<std::string> texts;
  texts.reserve(docs.size());
  for (const auto& d : docs) texts.push_back(preprocess(d.text, ranges));
  return train_bpe(texts, vocab_size);
}

// ---- optimizer ---------------------------------------------------------------------

AdamW::AdamW(std::vector<Group> groups, double weight_decay, double beta1, double beta2,
             double eps)
    : groups_(std::move(groups)), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2),
      eps_(eps) {
  for (const auto& g : groups_) {
    m_.emplace_back();
    v_.emplace_back();
    for (const auto& p : g.params) {
      m_.back().emplace_back(p.numel(), 0.0);
      v_.back().emplace_back(p.numel(), 0.0);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& g : groups_)
    for (auto& p : g.params) p.zero_grad();
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    auto& g = groups_[gi];
    for (std::size_t pi = 0; pi < g.params.size(); ++pi) {
      Tensor& p = g.params[pi];
      if (!p.requires_grad() || !p.has_grad()) continue;
      auto w = p.mutable_data();
      auto grad = p.grad();
      auto& m = m_[gi][pi];
      auto& v = v_[gi][pi];
      const double decay = p.dim() >= 2 ? weight_decay_ : 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= g.lr * (mhat / (std::sqrt(vhat) + eps_) + decay * w[i]);
      }
    }
  }
}

AdamW make_optimizer(Encoder& model, const TrainConfig& config) {
  AdamW::Group body{{}, config.lr_body};
  AdamW::Group head{{}, config.lr_classifier};
  for (auto& [name, p] : model.parameters()) {
    (Encoder::is_classifier_parameter(name) ? head : body).params.push_back(p);
  }
  return AdamW({std::move(body), std::move(head)}, config.weight_decay, config.adam_beta1,
               config.adam_beta2, config.adam_eps);
}

namespace {

void clip_gradients(Encoder& model, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (auto& [name, p] : model.parameters()) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (norm <= max_norm) return;
  const double f = max_norm / norm;
  for (auto& [name, p] : model.parameters()) {
    if (!p.has_grad()) continue;
    for (double& g : p.grad_accumulator()) g *= f;
  }
}

std::vector<const TokenizedInput*> token_ptrs(const Dataset& data,
                                             std::span<const std::size_t> idx) {
  std::vector<const TokenizedInput*> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(&data.examples[i].tokens);
  return out;
}

std::vector<const KnowledgeMask*> mask_ptrs(const Dataset& data, std::span<const std::size_t> idx) {
  std::vector<const KnowledgeMask*> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(&data.examples[i].mask);
  return out;
}

// Shuffled batches; within windows of eight batches examples are sorted by
// length so that padding stays small.
std::vector<std::vector<std::size_t>> make_batches(const Dataset& data, std::size_t batch_size,
                                                   std::mt19937_64& rng) {
  std::vector<std::size_t> order(data.examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t window = batch_size * 8;
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t w = 0; w < order.size(); w += window) {
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(w);
    const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), w + window));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
      return data.examples[a].tokens.active_length() < data.examples[b].tokens.active_length();
    });
    for (auto it = first; it < last; it += static_cast<std::ptrdiff_t>(batch_size)) {
      const auto end = std::min(last, it + static_cast<std::ptrdiff_t>(batch_size));
      batches.emplace_back(it, end);
    }
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

double stop_value(const MetricReport& r, StopMetric m) {
  constexpr double kUndefined = -std::numeric_limits<double>::infinity();
  switch (m) {
    case StopMetric::kAuroc: return r.auroc.value_or(kUndefined);
    case StopMetric::kAuprc: return r.auprc.value_or(kUndefined);
    case StopMetric::kF1: return r.f1;
    case StopMetric::kAccuracy: return r.accuracy;
  }
  return kUndefined;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

// ---- teacher cache -----------------------------------------------------------------

TeacherCache TeacherCache::build(const Encoder& teacher, const Dataset& data,
                                 std::size_t batch_size) {
  NoGradGuard guard;
  TeacherCache c;
  c.width = teacher.config().max_len;
  c.d = teacher.config().hidden;
  const std::size_t n = data.examples.size();
  c.hidden.resize(n);
  c.attn.resize(n);
  c.k.resize(n);
  const std::size_t layers = teacher.config().layers;
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, n - start));
    std::iota(idx.begin(), idx.end(), start);
    const TokenBatch tb = TokenBatch::from_inputs(token_ptrs(data, idx));
    const EncoderOutput out = teacher.forward(tb, {.capture = true, .training = false});
    const auto masks = mask_ptrs(data, idx);
    const PoolPlan plan = PoolPlan::build(masks, tb.length);
    const TeacherTargets t = teacher_targets(out, plan, c.width);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const std::size_t e = idx[b];
      const auto k = static_cast<std::size_t>(masks[b]->k);
      c.k[e] = masks[b]->k;
      c.hidden[e].resize(layers + 1);
      c.attn[e].resize(layers);
      for (std::size_t p = 0; p <= layers; ++p) {
        const double* src = t.hidden[p].data().data() + b * plan.k_max * c.d;
        c.hidden[e][p].assign(src, src + k * c.d);
      }
      for (std::size_t p = 0; p < layers; ++p) {
        const double* src = t.attn[p].data().data() + b * plan.k_max * c.width;
        c.attn[e][p].assign(src, src + k * c.width);
      }
    }
  }
  return c;
}

TeacherTargets TeacherCache::targets(std::span<const std::size_t> indices) const {
  TeacherTargets t;
  std::size_t k_max = 0;
  for (std::size_t i : indices) k_max = std::max(k_max, static_cast<std::size_t>(k[i]));
  t.k_max = k_max;
  const std::size_t B = indices.size();
  t.valid.assign(B * k_max, 0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::int32_t j = 0; j < k[indices[b]]; ++j) t.valid[b * k_max + static_cast<std::size_t>(j)] = 1;
  const std::size_t layers = indices.empty() ? 0 : attn[indices[0]].size();
  for (std::size_t p = 0; p <= layers; ++p) {
    std::vector<double> buf(B * k_max * d, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& src = hidden[indices[b]][p];
      std::copy(src.begin(), src.end(), buf.begin() + static_cast<std::ptrdiff_t>(b * k_max * d));
    }
    t.hidden.emplace_back(Shape{B, k_max, d}, std::move(buf));
  }
  for (std::size_t p = 0; p < layers; ++p) {
    std::vector<double> buf(B * k_max * width, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& src = attn[indices[b]][p];
      std::copy(src.begin(), src.end(),
                buf.begin() + static_cast<std::ptrdiff_t>(b * k_max * width));
    }
    t.attn.emplace_back(Shape{B, k_max, width}, std::move(buf));
  }
  return t;
}

// ---- evaluation --------------------------------------------------------------------

Evaluation evaluate(const Encoder& model, const Dataset& data, std::size_t batch_size) {
  if (data.examples.empty()) throw ValidationError("evaluate: empty dataset");
  NoGradGuard guard;
  Evaluation ev;
  const std::size_t n = data.examples.size();
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, n - start));
    std::iota(idx.begin(), idx.end(), start);
    const TokenBatch tb = TokenBatch::from_inputs(token_ptrs(data, idx));
    const EncoderOutput out = model.forward(tb, {.capture = false, .training = false});
    const auto logits = out.logits.data();
    const std::size_t C = out.logits.size(1);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const double* row = logits.data() + b * C;
      const double mx = *std::max_element(row, row + C);
      double z = 0.0;
      for (std::size_t c = 0; c < C; ++c) z += std::exp(row[c] - mx);
      const int y = data.examples[idx[b]].label;
      loss_sum += -(row[y] - mx - std::log(z));
      ev.scores.push_back(std::exp(row[1] - mx) / z);
      ev.predictions.push_back(static_cast<int>(std::max_element(row, row + C) - row));
    }
  }
  ev.loss = loss_sum / static_cast<double>(n);
  ev.metrics = binary_metrics(ev.scores, data.labels());
  return ev;
}

std::vector<WordEmbedding> word_embeddings(const Encoder& model, const Dataset& data,
                                           std::size_t max_docs, std::size_t batch_size) {
  const std::size_t n =
      max_docs == 0 ? data.examples.size() : std::min(max_docs, data.examples.size());
  NoGradGuard guard;
  std::vector<WordEmbedding> rows;
  const std::size_t d = model.config().hidden;
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, n - start));
    std::iota(idx.begin(), idx.end(), start);
    const TokenBatch tb = TokenBatch::from_inputs(token_ptrs(data, idx));
    const EncoderOutput out = model.forward(tb, {.capture = true, .training = false});
    const auto h = out.hidden.back().data();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const Example& ex = data.examples[idx[b]];
      std::map<std::int32_t, std::pair<std::vector<double>, std::size_t>> acc;
      std::map<std::int32_t, bool> knowledge;
      for (std::size_t t = 0; t < ex.tokens.length() && t < tb.length; ++t) {
        const std::int32_t w = ex.tokens.word_ids[t];
        if (w < 0) continue;
        auto& [sum, count] = acc[w];
        sum.resize(d, 0.0);
        const double* row = h.data() + (b * tb.length + t) * d;
        for (std::size_t i = 0; i < d; ++i) sum[i] += row[i];
        ++count;
        if (ex.mask.values[t] > 0) knowledge[w] = true;
      }
      for (auto& [w, sc] : acc) {
        WordEmbedding e{idx[b], static_cast<std::size_t>(w), knowledge.contains(w), std::move(sc.first)};
        for (double& v : e.vector) v /= static_cast<double>(sc.second);
        rows.push_back(std::move(e));
      }
    }
  }
  return rows;
}

// ---- training ----------------------------------------------------------------------

void check_teacher_compatible(const EncoderConfig& teacher, const EncoderConfig& student) {
  std::vector<std::string> diff;
  if (teacher.layers != student.layers) diff.push_back("layers");
  if (teacher.hidden != student.hidden) diff.push_back("hidden");
  if (teacher.max_len != student.max_len) diff.push_back("max_len");
  if (teacher.vocab_size != student.vocab_size) diff.push_back("vocab_size");
  if (!diff.empty()) {
    std::string msg = "teacher and student configurations differ in";
    for (const auto& k : diff) msg += " " + k;
    throw ValidationError(msg);
  }
}

TrainResult train_student(const Dataset& train, const Dataset& dev, std::size_t vocab_size,
                          const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (train.examples.empty()) throw ValidationError("training split is empty");
  if (dev.examples.empty()) throw ValidationError("dev split is empty");
  EncoderConfig mc = config.model;
  mc.vocab_size = vocab_size;
  mc.validate();

  const bool distill =
      options.teacher != nullptr && (config.enable_hidn || config.enable_attn);
  TeacherCache local_cache;
  const TeacherCache* cache = options.cache;
  if (options.teacher != nullptr) {
    check_teacher_compatible(options.teacher->config(), mc);
  }
  if (distill && cache == nullptr) {
    local_cache = TeacherCache::build(*options.teacher, train);
    cache = &local_cache;
  }
  if (distill && cache->k.size() != train.examples.size()) {
    throw ValidationError("teacher cache does not match the training split");
  }

  Encoder student(mc, config.seed);
  AdamW opt = make_optimizer(student, config);
  std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ULL + 1);
  const LossWeights w = config.weights();
  const DistillSwitches sw = config.switches();

  TrainResult result{RunRecord{}, student.clone()};
  RunRecord& rec = result.record;
  rec.kind = distill ? "distilled" : "baseline";
  rec.config = config.to_key_values();
  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochRecord er;
    er.epoch = epoch;
    std::size_t seen = 0;
    for (const auto& idx : make_batches(train, config.batch_size, rng)) {
      const TokenBatch tb = TokenBatch::from_inputs(token_ptrs(train, idx));
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(train.examples[i].label);
      const EncoderOutput out =
          student.forward(tb, {.capture = distill, .training = true, .rng = &rng});
      LossBreakdown loss;
      if (distill) {
        const PoolPlan plan = PoolPlan::build(mask_ptrs(train, idx), tb.length);
        const TeacherTargets targets = cache->targets(idx);
        loss = total_loss(out, &targets, plan, labels, w, sw, cache->width);
      } else {
        loss = total_loss(out, nullptr, PoolPlan{}, labels, w, sw, 0);
      }
      opt.zero_grad();
      loss.total.backward();
      clip_gradients(student, config.grad_clip);
      opt.step();
      ++step;
      const double bsz = static_cast<double>(idx.size());
      er.train_loss += loss.total.item() * bsz;
      er.train_pred += loss.pred * bsz;
      er.train_hidn += loss.hidn * bsz;
      er.train_attn += loss.attn * bsz;
      seen += idx.size();
      if (options.observer) options.observer(step, loss);
    }
    const double inv = 1.0 / static_cast<double>(seen);
    er.train_loss *= inv;
    er.train_pred *= inv;
    er.train_hidn *= inv;
    er.train_attn *= inv;
    const Evaluation ev = evaluate(student, dev);
    er.dev_loss = ev.loss;
    er.dev = ev.metrics;
    rec.epochs.push_back(er);
    const double value = stop_value(ev.metrics, config.early_stop_metric);
    if (options.log) {
      options.log("epoch " + std::to_string(epoch) + " loss " + fmt("%.4f", er.train_loss) +
                  " (pred " + fmt("%.4f", er.train_pred) + ", hidn " + fmt("%.4f", er.train_hidn) +
                  ", attn " + fmt("%.5f", er.train_attn) + ") dev " +
                  stop_metric_name(config.early_stop_metric) + " " + fmt("%.4f", value));
    }
    if (value > best) {
      best = value;
      since_best = 0;
      rec.best_epoch = epoch;
      result.model = student.clone();
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

TrainResult pretrain_teacher(const Dataset& train, const Dataset& dev, std::size_t vocab_size,
                             const TrainConfig& config, std::function<void(const std::string&)> log) {
  if (train.examples.empty()) throw ValidationError("teacher corpus is empty");
  TrainOptions opts;
  opts.log = std::move(log);
  TrainResult r = train_student(train, dev, vocab_size, config, opts);
  r.record.kind = "teacher";
  freeze(r.model);
  return r;
}

// ---- run records -------------------------------------------------------------------

namespace {

const char* kEpochHeader =
    "epoch\ttrain_loss\ttrain_pred\ttrain_hidn\ttrain_attn\tdev_loss\tdev_accuracy\tdev_auroc\t"
    "dev_auprc\tdev_recall\tdev_precision\tdev_f1\tdev_average";

std::string opt_str(const std::optional<double>& v) {
  return v ? format_exact(*v) : std::string("undefined");
}

std::optional<double> opt_parse(const std::string& s, const std::string& key) {
  if (s == "undefined") return std::nullopt;
  return parse_double(s, key);
}

}  // namespace

std::string RunRecord::to_text() const {
  std::ostringstream os;
  os << "kind = " << kind << '\n';
  os << "best_epoch = " << best_epoch << '\n';
  os << "best_checkpoint = " << best_checkpoint << '\n';
  for (const auto& [k, v] : config) os << "config." << k << " = " << v << '\n';
  if (test) os << test->to_key_values("test.");
  os << "[epochs]\n" << kEpochHeader << '\n';
  for (const auto& e : epochs) {
    os << e.epoch << '\t' << format_exact(e.train_loss) << '\t' << format_exact(e.train_pred) << '\t'
       << format_exact(e.train_hidn) << '\t' << format_exact(e.train_attn) << '\t'
       << format_exact(e.dev_loss) << '\t' << format_exact(e.dev.accuracy) << '\t'
       << opt_str(e.dev.auroc) << '\t' << opt_str(e.dev.auprc) << '\t' << format_exact(e.dev.recall)
       << '\t' << format_exact(e.dev.precision) << '\t' << format_exact(e.dev.f1) << '\t'
       << opt_str(e.dev.average) << '\n';
  }
  return os.str();
}

RunRecord RunRecord::parse(std::string_view text) {
  const auto split = text.find("[epochs]\n");
  if (split == std::string_view::npos) throw ParseError("run record lacks an [epochs] section");
  const KeyValues kv = parse_key_values(text.substr(0, split));
  RunRecord r;
  auto get = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("run record lacks '" + key + "'");
    return it->second;
  };
  r.kind = get("kind");
  r.best_epoch = static_cast<std::size_t>(parse_int(get("best_epoch"), "best_epoch"));
  auto ck = kv.find("best_checkpoint");
  if (ck != kv.end()) r.best_checkpoint = ck->second;
  bool has_test = false;
  for (const auto& [k, v] : kv) {
    if (k.rfind("config.", 0) == 0) r.config[k.substr(7)] = v;
    if (k.rfind("test.", 0) == 0) has_test = true;
  }
  if (has_test) r.test = MetricReport::from_key_values(std::string(text.substr(0, split)), "test.");
  std::istringstream in{std::string(text.substr(split + 9))};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.rfind("epoch\t", 0) == 0) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, '\t')) f.push_back(cell);
    if (f.size() != 13) throw ParseError("epoch row with " + std::to_string(f.size()) + " fields", lineno);
    EpochRecord e;
    e.epoch = static_cast<std::size_t>(parse_int(f[0], "epoch"));
    e.train_loss = parse_double(f[1], "train_loss");
    e.train_pred = parse_double(f[2], "train_pred");
    e.train_hidn = parse_double(f[3], "train_hidn");
    e.train_attn = parse_double(f[4], "train_attn");
    e.dev_loss = parse_double(f[5], "dev_loss");
    e.dev.accuracy = parse_double(f[6], "dev_accuracy");
    e.dev.auroc = opt_parse(f[7], "dev_auroc");
    e.dev.auprc = opt_parse(f[8], "dev_auprc");
    e.dev.recall = parse_double(f[9], "dev_recall");
    e.dev.precision = parse_double(f[10], "dev_precision");
    e.dev.f1 = parse_double(f[11], "dev_f1");
    e.dev.average = opt_parse(f[12], "dev_average");
    r.epochs.push_back(e);
  }
  return r;
}

void RunRecord::save(const std::filesystem::path& path) const { write_file_atomic(path, to_text()); }

RunRecord RunRecord::load(const std::filesystem::path& path) { return parse(read_file(path)); }

// ---- ablation ----------------------------------------------------------------------

double AblationRow::mean_auroc() const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : runs) {
    if (r.test && r.test->auroc) {
      s += *r.test->auroc;
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(n);
}

double AblationRow::sd_auroc() const {
  const double mu = mean_auroc();
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : runs) {
    if (r.test && r.test->auroc) {
      s += (*r.test->auroc - mu) * (*r.test->auroc - mu);
      ++n;
    }
  }
  return n < 2 ? 0.0 : std::sqrt(s / static_cast<double>(n - 1));
}

std::vector<AblationRow> ablation_grid(const std::vector<Document>& train,
                                       const std::vector<Document>& dev,
                                       const std::vector<Document>& test, const BpeVocab& vocab,
                                       const Lexicon& lexicon, const Encoder* teacher,
                                       const TrainConfig& base,
                                       const std::vector<AblationCell>& grid,
                                       const AblationOptions& options) {
  if (grid.empty()) throw ValidationError("ablation grid is empty");
  std::vector<std::uint64_t> seeds = options.seeds;
  if (seeds.empty()) seeds.push_back(base.seed);

  struct Prepared {
    Dataset train, dev, test;
    std::optional<TeacherCache> cache;
  };
  std::map<std::pair<MaskPolicy, std::size_t>, Prepared> prepared;
  auto data_for = [&](const TrainConfig& cfg) -> Prepared& {
    const auto key = std::make_pair(cfg.mask_policy, cfg.model.max_len);
    auto it = prepared.find(key);
    if (it == prepared.end()) {
      Prepared p;
      p.train = prepare_dataset(train, vocab, lexicon, cfg.model.max_len, cfg.mask_policy);
      p.dev = prepare_dataset(dev, vocab, lexicon, cfg.model.max_len, cfg.mask_policy);
      p.test = prepare_dataset(test, vocab, lexicon, cfg.model.max_len, cfg.mask_policy);
      it = prepared.emplace(key, std::move(p)).first;
    }
    return it->second;
  };

  std::vector<AblationRow> rows;
  for (const auto& cell : grid) {
    AblationRow row{cell.name, cell.overrides, seeds, {}};
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = TrainConfig::from_key_values(cell.overrides, base);
      cfg.seed = seed;
      if (options.lookup) {
        if (auto rec = options.lookup(cell.name, seed)) {
          row.runs.push_back(*rec);
          continue;
        }
      }
      Prepared& p = data_for(cfg);
      TrainOptions topts;
      topts.teacher = teacher;
      topts.log = options.log;
      if (teacher != nullptr && (cfg.enable_hidn || cfg.enable_attn)) {
        if (!p.cache) p.cache = TeacherCache::build(*teacher, p.train);
        topts.cache = &*p.cache;
      }
      if (options.log) options.log("cell " + cell.name + " seed " + std::to_string(seed));
      TrainResult r = train_student(p.train, p.dev, vocab.size(), cfg, topts);
      r.record.test = evaluate(r.model, p.test).metrics;
      if (options.done) options.done(cell.name, seed, r.record);
      row.runs.push_back(std::move(r.record));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::size_t name_w = 4;
  for (const auto& r : rows) name_w = std::max(name_w, r.name.size());
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s %5s %5s %6s %6s %15s %15s %15s\n", static_cast<int>(name_w),
                "cell", "hidn", "attn", "alpha", "beta", "AUROC", "AUPRC", "F1");
  os << buf;
  auto stats = [](const AblationRow& r, auto get) {
    std::vector<double> v;
    for (const auto& run : r.runs)
      if (run.test) {
        if (auto x = get(*run.test)) v.push_back(*x);
      }
    if (v.empty()) return std::string("n/a");
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= static_cast<double>(v.size());
    double sd = 0.0;
    for (double x : v) sd += (x - mu) * (x - mu);
    sd = v.size() > 1 ? std::sqrt(sd / static_cast<double>(v.size() - 1)) : 0.0;
    char b[48];
    std::snprintf(b, sizeof(b), "%.1f +- %.1f", mu * 100.0, sd * 100.0);
    return std::string(b);
  };
  for (const auto& r : rows) {
    const KeyValues& c = r.runs.empty() ? KeyValues{} : r.runs.front().config;
    auto cfg = [&](const char* k) {
      auto it = c.find(k);
      return it == c.end() ? std::string("-") : it->second;
    };
    const std::string hidn = cfg("enable_hidn") == "true" ? "yes" : "no";
    const std::string attn = cfg("enable_attn") == "true" ? "yes" : "no";
    std::snprintf(buf, sizeof(buf), "%-*s %5s %5s %6s %6s %15s %15s %15s\n",
                  static_cast<int>(name_w), r.name.c_str(), hidn.c_str(), attn.c_str(),
                  cfg("alpha").c_str(), cfg("beta").c_str(),
                  stats(r, [](const MetricReport& m) { return m.auroc; }).c_str(),
                  stats(r, [](const MetricReport& m) { return m.auprc; }).c_str(),
                  stats(r, [](const MetricReport& m) { return std::optional<double>(m.f1); }).c_str());
    os << buf;
  }
  return os.str();
}

GridFile parse_grid(std::string_view text) {
  GridFile g;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ParseError("malformed cell header", lineno);
      const std::string name = trim(line.substr(1, line.size() - 2));
      for (const auto& c : g.cells)
        if (c.name == name) throw ParseError("duplicate cell '" + name + "'", lineno);
      g.cells.push_back({name, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", lineno);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (g.cells.empty()) {
      if (key != "seeds") throw ParseError("only 'seeds' may precede the first cell", lineno);
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        try {
          g.seeds.push_back(static_cast<std::uint64_t>(parse_int(item, "seeds")));
        } catch (const ValidationError& e) {
          throw ParseError(e.what(), lineno);
        }
      }
      continue;
    }
    g.cells.back().overrides[key] = value;
  }
  if (g.cells.empty()) throw ParseError("grid defines no cells");
  for (const auto& c : g.cells) {
    try {
      (void)TrainConfig::from_key_values(c.overrides);
    } catch (const ValidationError& e) {
      throw ValidationError("cell '" + c.name + "': " + e.what());
    }
  }
  return g;
}

}  // namespace dsgkd
