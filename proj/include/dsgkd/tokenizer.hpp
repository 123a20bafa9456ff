#pragma once

// Byte-pair-encoding subword tokenizer that keeps word boundaries.
//
// Words are whitespace-delimited; the first subword of a word is stored as-is
// and every following subword carries the "##" continuation prefix. Each
// emitted token records the index of the source word it came from.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dsgkd {

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kClsId = 1;
inline constexpr std::int32_t kSepId = 2;
inline constexpr std::int32_t kUnkId = 3;
inline constexpr std::int32_t kNumSpecialTokens = 4;
inline constexpr std::string_view kContinuation = "##";

struct TokenizedInput {
  std::vector<std::int32_t> ids;
  // Source word index per token; -1 for [CLS], [SEP] and [PAD].
  std::vector<std::int32_t> word_ids;

  std::size_t length() const { return ids.size(); }
  // Number of non-pad tokens.
  std::size_t active_length() const;
};

class BpeVocab {
 public:
  BpeVocab();

  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  std::size_t size() const { return id_to_token_.size(); }
  std::int32_t id_of(std::string_view token) const;  // kUnkId when absent
  bool contains(std::string_view token) const;
  const std::string& token_of(std::int32_t id) const;

  // "#MERGES" section (one space-separated pair per line) followed by a
  // "#VOCAB" section (token<TAB>id per line).
  void save(const std::filesystem::path& path) const;
  static BpeVocab load(const std::filesystem::path& path);
  std::string serialize() const;

  // Subword strings for one word, after applying merges in rank order.
  std::vector<std::string> segment_word(std::string_view word) const;

 private:
  friend BpeVocab train_bpe(const std::vector<std::string>& corpus, std::size_t vocab_size);
  std::int32_t add_token(const std::string& token);
  void add_merge(std::string left, std::string right);

  std::vector<std::pair<std::string, std::string>> merges_;
  std::map<std::pair<std::string, std::string>, std::size_t> merge_rank_;
  std::unordered_map<std::string, std::int32_t> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Learns merges greedily by pair frequency over the words of `corpus`
// (one preprocessed document per element). Ties go to the lexicographically
// smaller pair. Stops when the vocabulary reaches `vocab_size` or no pair
// remains.
BpeVocab train_bpe(const std::vector<std::string>& corpus, std::size_t vocab_size);

// [CLS] + subwords + [SEP], right-truncated so [SEP] is kept, padded to max_len.
TokenizedInput encode(const BpeVocab& vocab, std::string_view text, std::size_t max_len);

}  // namespace dsgkd
