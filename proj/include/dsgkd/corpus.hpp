#pragma once

// Synthetic bilingual clinical-style corpus: generation, statistics and the
// line-delimited record format "split<TAB>label<TAB>text".

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dsgkd/io.hpp"
#include "dsgkd/textprep.hpp"

namespace dsgkd {

enum class Split { kTrain, kDev, kTest };
const char* split_name(Split s);
Split parse_split(std::string_view name);  // throws ValidationError

struct Document {
  std::string id;  // optional
  Split split = Split::kTrain;
  int label = 0;
  std::string text;

  bool operator==(const Document&) const = default;
};

struct GeneratorConfig {
  std::string profile = "student";  // student | teacher (selects the base defaults)
  std::size_t n_train = 500;
  std::size_t n_dev = 400;
  std::size_t n_test = 1000;
  double ratio_local = 0.4325;
  double ratio_domain = 0.2329;
  double ratio_other = 0.3346;
  double lexicon_hit_rate = 0.20;  // fraction of Latin words that are lexicon terms
  std::size_t lexicon_size = 240;
  std::size_t emergency_terms = 100;  // lexicon prefix that indicates an emergency
  std::size_t local_cue_words = 4;  // local words that also indicate an emergency
  double cue_share = 0.55;           // share of planted evidence that is a local cue
  std::size_t local_pool_size = 600;
  std::size_t latin_pool_size = 600;
  std::size_t local_syllables = 160;
  std::string local_ranges = "AC00-D7A3";
  double positive_rate = 0.4;
  double near_miss_rate = 0.5;  // negatives carrying threshold-1 evidence words
  std::size_t threshold_words = 0;  // threshold = 1 + length / threshold_words; 0 means 1
  double signal_strength = 0.95;
  double label_noise = 0.05;
  std::size_t doc_len_min = 10;
  std::size_t doc_len_max = 22;
  double glue_rate = 0.3;
  double newline_rate = 0.05;
  std::uint64_t seed = 42;
  std::uint64_t pool_seed = 7;  // word pools and lexicon; shared across profiles

  static GeneratorConfig student_profile();
  static GeneratorConfig teacher_profile();

  // Unknown keys and out-of-range values raise ValidationError naming the key.
  // A "profile" key selects the base before the remaining keys apply.
  static GeneratorConfig from_key_values(const KeyValues& kv);
  KeyValues to_key_values() const;
  void validate() const;
};

struct GeneratedCorpus {
  std::vector<Document> documents;  // train, then dev, then test
  Lexicon lexicon;
  std::vector<std::string> emergency_terms;
  std::vector<std::string> local_cues;
};

GeneratedCorpus generate(const GeneratorConfig& config);

// Documents of one split, in order.
std::vector<Document> select_split(const std::vector<Document>& docs, Split split);

// Evidence count and threshold of the generator's label rule.
struct RuleEvidence {
  std::size_t evidence = 0;
  std::size_t threshold = 1;
  int label() const { return evidence >= threshold ? 1 : 0; }
};
RuleEvidence rule_evidence(std::string_view text, const GeneratedCorpus& corpus,
                           const GeneratorConfig& config);

struct SplitStats {
  std::size_t documents = 0;
  std::size_t positives = 0;
  std::size_t words = 0;
  std::size_t local = 0;
  std::size_t local_hits = 0;
  std::size_t latin = 0;
  std::size_t latin_hits = 0;
  std::size_t other = 0;

  double local_ratio() const;
  double latin_ratio() const;
  double other_ratio() const;
  double latin_hit_rate() const;
  bool operator==(const SplitStats&) const = default;
};

struct CorpusStats {
  std::map<std::string, SplitStats> splits;  // "train", "dev", "test", "total"

  std::string to_table() const;
  std::string to_key_values() const;
};

CorpusStats corpus_stats(const std::vector<Document>& docs, const Lexicon& lexicon,
                         const ScriptRanges& ranges = ScriptRanges());

// Three fields per line; an optional leading id field makes four. Text and
// ids escape backslash, tab, CR and LF as \\ \t \r \n. Malformed lines raise
// ParseError with the line number; repeated ids raise ValidationError.
std::vector<Document> load_corpus(const std::filesystem::path& path);
std::vector<Document> parse_corpus(std::string_view text);
void save_corpus(const std::vector<Document>& docs, const std::filesystem::path& path);
std::string serialize_corpus(const std::vector<Document>& docs);

}  // namespace dsgkd
