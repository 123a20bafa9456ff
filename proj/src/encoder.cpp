#include "dsgkd/encoder.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dsgkd/io.hpp"

namespace dsgkd {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void EncoderConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("encoder config: " + msg); };
  if (layers < 1) fail("layers must be >= 1");
  if (hidden < 1) fail("hidden must be >= 1");
  if (heads < 1 || hidden % heads != 0) fail("hidden must be divisible by heads");
  if (max_len < 2) fail("max_len must be >= 2");
  if (ffn_mult < 1) fail("ffn_mult must be >= 1");
  if (vocab_size <= static_cast<std::size_t>(kNumSpecialTokens)) {
    fail("vocab_size must exceed the special tokens");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0,1)");
  if (num_classes < 2) fail("num_classes must be >= 2");
}

TokenBatch TokenBatch::from_inputs(std::span<const TokenizedInput* const> inputs,
                                   std::size_t length) {
  TokenBatch b;
  b.batch = inputs.size();
  if (length == 0) {
    for (const auto* in : inputs) {
      // Trailing pads carry no information and are trimmed.
      std::size_t last = in->ids.size();
      while (last > 0 && in->ids[last - 1] == kPadId) --last;
      length = std::max(length, last);
    }
    length = std::max<std::size_t>(length, 1);
  }
  b.length = length;
  b.ids.assign(b.batch * length, kPadId);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& ids = inputs[i]->ids;
    const std::size_t n = std::min(length, ids.size());
    std::copy_n(ids.begin(), n, b.ids.begin() + static_cast<std::ptrdiff_t>(i * length));
  }
  return b;
}

std::vector<std::uint8_t> TokenBatch::key_valid() const {
  std::vector<std::uint8_t> v(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) v[i] = ids[i] != kPadId ? 1 : 0;
  return v;
}

// ---- Encoder -------------------------------------------------------------------

void Encoder::add_param(std::string name, Shape shape, std::mt19937_64* rng, double fill) {
  std::vector<double> data(shape_numel(shape), fill);
  if (rng != nullptr) {
    std::normal_distribution<double> normal(0.0, 0.02);
    for (double& v : data) v = normal(*rng);
  }
  index_[name] = params_.size();
  params_.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data), true));
}

Encoder::Encoder(const EncoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.hidden;
  const std::size_t f = config_.hidden * config_.ffn_mult;
  add_param("embed.token", {config_.vocab_size, d}, &rng, 0.0);
  add_param("embed.position", {config_.max_len, d}, &rng, 0.0);
  for (std::size_t p = 0; p < config_.layers; ++p) {
    const std::string b = "block" + std::to_string(p) + ".";
    add_param(b + "ln1.gain", {d}, nullptr, 1.0);
    add_param(b + "ln1.bias", {d}, nullptr, 0.0);
    for (const char* proj : {"q", "k", "v", "o"}) {
      add_param(b + "attn." + proj + ".weight", {d, d}, &rng, 0.0);
      add_param(b + "attn." + proj + ".bias", {d}, nullptr, 0.0);
    }
    add_param(b + "ln2.gain", {d}, nullptr, 1.0);
    add_param(b + "ln2.bias", {d}, nullptr, 0.0);
    add_param(b + "ffn.in.weight", {d, f}, &rng, 0.0);
    add_param(b + "ffn.in.bias", {f}, nullptr, 0.0);
    add_param(b + "ffn.out.weight", {f, d}, &rng, 0.0);
    add_param(b + "ffn.out.bias", {d}, nullptr, 0.0);
  }
  add_param("final_ln.gain", {d}, nullptr, 1.0);
  add_param("final_ln.bias", {d}, nullptr, 0.0);
  add_param("classifier.weight", {d, config_.num_classes}, &rng, 0.0);
  add_param("classifier.bias", {config_.num_classes}, nullptr, 0.0);
}

Tensor& Encoder::parameter(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter " + name);
  return params_[it->second].second;
}

const Tensor& Encoder::parameter(const std::string& name) const {
  return const_cast<Encoder*>(this)->parameter(name);
}

bool Encoder::is_classifier_parameter(const std::string& name) {
  return name.rfind("classifier.", 0) == 0;
}

void Encoder::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

Encoder Encoder::clone() const {
  Encoder copy;
  copy.config_ = config_;
  copy.index_ = index_;
  copy.metadata_ = metadata_;
  copy.frozen_ = frozen_;
  for (const auto& [name, t] : params_) {
    copy.params_.emplace_back(
        name, Tensor(t.shape(), std::vector<double>(t.data().begin(), t.data().end()),
                     t.requires_grad()));
  }
  return copy;
}

Encoder& freeze(Encoder& model) {
  for (auto& [name, t] : model.params_) t.set_requires_grad(false);
  model.frozen_ = true;
  return model;
}

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matmul(x, w), b); }

}  // namespace

EncoderOutput Encoder::forward(const TokenBatch& batch, const ForwardOptions& options) const {
  if (batch.length > config_.max_len) {
    throw ValidationError("batch length " + std::to_string(batch.length) + " exceeds max_len " +
                          std::to_string(config_.max_len));
  }
  if (batch.batch == 0 || batch.length == 0) throw ValidationError("empty token batch");
  for (std::int32_t id : batch.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw ValidationError("token id " + std::to_string(id) + " >= vocab_size " +
                            std::to_string(config_.vocab_size));
    }
  }
  const bool use_dropout = options.training && options.rng != nullptr && config_.dropout > 0.0;
  auto drop = [&](const Tensor& t) {
    return use_dropout ? dropout(t, config_.dropout, *options.rng) : t;
  };
  const std::vector<std::uint8_t> key_valid = batch.key_valid();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(config_.hidden / config_.heads));

  EncoderOutput out;
  Tensor h = add(embedding(parameter("embed.token"), batch.ids, batch.batch, batch.length),
                 slice_rows(parameter("embed.position"), batch.length));
  if (options.capture) out.hidden.push_back(h);
  h = drop(h);
  for (std::size_t p = 0; p < config_.layers; ++p) {
    const std::string b = "block" + std::to_string(p) + ".";
    auto P = [&](const std::string& n) -> const Tensor& { return parameter(b + n); };
    const Tensor a = layernorm(h, P("ln1.gain"), P("ln1.bias"));
    const Tensor q = split_heads(linear(a, P("attn.q.weight"), P("attn.q.bias")), config_.heads);
    const Tensor k = split_heads(linear(a, P("attn.k.weight"), P("attn.k.bias")), config_.heads);
    const Tensor v = split_heads(linear(a, P("attn.v.weight"), P("attn.v.bias")), config_.heads);
    const Tensor scores = scale(matmul(q, transpose_last2(k)), inv_sqrt_dh);
    const Tensor probs = masked_softmax(scores, key_valid);
    if (options.capture) out.attn.push_back(probs);
    const Tensor ctx = merge_heads(matmul(drop(probs), v));
    h = add(h, drop(linear(ctx, P("attn.o.weight"), P("attn.o.bias"))));
    const Tensor n2 = layernorm(h, P("ln2.gain"), P("ln2.bias"));
    const Tensor ff = linear(gelu(linear(n2, P("ffn.in.weight"), P("ffn.in.bias"))),
                             P("ffn.out.weight"), P("ffn.out.bias"));
    h = add(h, drop(ff));
    if (options.capture) out.hidden.push_back(h);
  }
  const Tensor cls =
      select_position(layernorm(h, parameter("final_ln.gain"), parameter("final_ln.bias")), 0);
  out.logits = linear(cls, parameter("classifier.weight"), parameter("classifier.bias"));
  return out;
}

Tensor Encoder::extract_cls_embeddings(const TokenBatch& batch) const {
  NoGradGuard guard;
  ForwardOptions opts;
  opts.capture = true;
  const EncoderOutput out = forward(batch, opts);
  return select_position(out.hidden.back(), 0);
}

// ---- checkpoint ----------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'S', 'G', 'K', 'D', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw ParseError("checkpoint truncated while reading " + what);
  }
  return v;
}

}  // namespace

void Encoder::save(const std::filesystem::path& path) const {
  std::ostringstream header;
  header << "layers=" << config_.layers << '\n'
         << "hidden=" << config_.hidden << '\n'
         << "heads=" << config_.heads << '\n'
         << "max_len=" << config_.max_len << '\n'
         << "ffn_mult=" << config_.ffn_mult << '\n'
         << "vocab_size=" << config_.vocab_size << '\n'
         << "num_classes=" << config_.num_classes << '\n'
         << "dropout=" << format_exact(config_.dropout) << '\n'
         << "frozen=" << (frozen_ ? 1 : 0) << '\n';
  for (const auto& [k, v] : metadata_) header << "meta." << k << '=' << v << '\n';
  const std::string text = header.str();

  std::ostringstream os(std::ios::binary);
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(params_.size()));
  for (const auto& [name, t] : params_) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.dim()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  write_file_atomic(path, os.str());
}

Encoder Encoder::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("not a checkpoint file: " + path.string());
  }
  if (get<std::uint32_t>(is, "version") != kVersion) {
    throw ParseError("unsupported checkpoint version in " + path.string());
  }
  const auto header_len = get<std::uint32_t>(is, "header length");
  std::string text(header_len, '\0');
  if (!is.read(text.data(), header_len)) throw ParseError("checkpoint header truncated");

  Encoder model;
  bool frozen = false;
  const KeyValues kv = parse_key_values(text);
  for (const auto& [k, v] : kv) {
    if (k.rfind("meta.", 0) == 0) model.metadata_[k.substr(5)] = v;
  }
  auto num = [&](const char* key) -> std::size_t {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError(std::string("checkpoint header lacks ") + key);
    return std::stoull(it->second);
  };
  model.config_.layers = num("layers");
  model.config_.hidden = num("hidden");
  model.config_.heads = num("heads");
  model.config_.max_len = num("max_len");
  model.config_.ffn_mult = num("ffn_mult");
  model.config_.vocab_size = num("vocab_size");
  model.config_.num_classes = num("num_classes");
  model.config_.dropout = parse_double(kv.at("dropout"), "dropout");
  frozen = num("frozen") != 0;
  model.config_.validate();

  const auto count = get<std::uint32_t>(is, "parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw ParseError("checkpoint truncated in name");
    const auto ndim = get<std::uint32_t>(is, "rank");
    Shape shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(get<std::uint64_t>(is, "dims"));
    std::vector<double> data(shape_numel(shape));
    if (!is.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(double)))) {
      throw ParseError("checkpoint truncated in tensor " + name);
    }
    model.index_[name] = model.params_.size();
    model.params_.emplace_back(name, Tensor(std::move(shape), std::move(data), true));
  }
  // Names and shapes must match a freshly built model of the same config.
  const Encoder reference(model.config_, 0);
  if (reference.params_.size() != model.params_.size()) {
    throw ParseError("checkpoint parameter count does not match its config");
  }
  for (std::size_t i = 0; i < model.params_.size(); ++i) {
    if (reference.params_[i].first != model.params_[i].first ||
        reference.params_[i].second.shape() != model.params_[i].second.shape()) {
      throw ParseError("checkpoint parameter " + model.params_[i].first +
                       " does not match the encoder layout");
    }
  }
  if (frozen) freeze(model);
  return model;
}

}  // namespace dsgkd
