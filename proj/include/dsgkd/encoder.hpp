#pragma once

// Pre-norm transformer encoder with a binary classification head over [CLS].

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dsgkd/tensor.hpp"
#include "dsgkd/tokenizer.hpp"

namespace dsgkd {

struct EncoderConfig {
  std::size_t layers = 4;     // P
  std::size_t hidden = 64;    // d
  std::size_t heads = 4;      // h
  std::size_t max_len = 64;   // l
  std::size_t ffn_mult = 4;
  std::size_t vocab_size = 0;
  double dropout = 0.1;
  std::size_t num_classes = 2;

  // Throws ValidationError naming the offending field.
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

// Token ids of a padded batch, row-major (batch, length). Pad positions use
// kPadId and are excluded as attention keys.
struct TokenBatch {
  std::vector<std::int32_t> ids;
  std::size_t batch = 0;
  std::size_t length = 0;

  static TokenBatch from_inputs(std::span<const TokenizedInput* const> inputs,
                                std::size_t length = 0);
  std::vector<std::uint8_t> key_valid() const;
};

struct EncoderOutput {
  // layers+1 tensors (batch, length, d); index 0 is the embedding output.
  std::vector<Tensor> hidden;
  // layers tensors (batch, heads, length, length), post-softmax.
  std::vector<Tensor> attn;
  // (batch, num_classes)
  Tensor logits;

  bool captured() const { return !hidden.empty(); }
};

struct ForwardOptions {
  bool capture = true;
  // Dropout is active only when training is set and rng is provided.
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

class Encoder {
 public:
  // Weights ~ N(0, 0.02), layer-norm gains 1, all biases 0, drawn from `seed`.
  Encoder(const EncoderConfig& config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }

  EncoderOutput forward(const TokenBatch& batch, const ForwardOptions& options = {}) const;

  // Final-layer hidden state at [CLS], shape (batch, d).
  Tensor extract_cls_embeddings(const TokenBatch& batch) const;

  // Ordered (name, tensor) view of every parameter.
  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
  std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
  Tensor& parameter(const std::string& name);
  const Tensor& parameter(const std::string& name) const;
  // Whether the parameter belongs to the classification head.
  static bool is_classifier_parameter(const std::string& name);

  bool frozen() const { return frozen_; }
  void zero_grad();

  // Deep copy with independent storage.
  Encoder clone() const;

  // Metadata carried through checkpoints (e.g. tokenizer digest).
  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  void save(const std::filesystem::path& path) const;
  static Encoder load(const std::filesystem::path& path);

 private:
  friend Encoder& freeze(Encoder& model);
  Encoder() = default;
  void add_param(std::string name, Shape shape, std::mt19937_64* rng, double fill);

  EncoderConfig config_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::string> metadata_;
  bool frozen_ = false;
};

// Excludes every parameter from gradient recording and optimizer updates.
Encoder& freeze(Encoder& model);

}  // namespace dsgkd
