#pragma once

// Free-text cleanup, per-word script classification and knowledge masks.

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dsgkd/errors.hpp"

namespace dsgkd {

struct TokenizedInput;

// ---- UTF-8 ---------------------------------------------------------------------

// Decodes UTF-8; malformed bytes become U+FFFD.
std::vector<char32_t> utf8_decode(std::string_view text);
std::string utf8_encode(char32_t cp);
std::string utf8_encode(const std::vector<char32_t>& cps);
// Splits into UTF-8 characters (each element one code point's bytes).
std::vector<std::string> utf8_chars(std::string_view text);

// ---- script configuration ---------------------------------------------------------

// Inclusive code point ranges that count as the local script.
class ScriptRanges {
 public:
  // Hangul syllables AC00-D7A3 plus Hangul Jamo 1100-11FF.
  ScriptRanges();
  explicit ScriptRanges(std::vector<std::pair<char32_t, char32_t>> ranges);

  // "AC00-D7A3,1100-11FF" (hex, case-insensitive; single code points allowed).
  static ScriptRanges parse(std::string_view spec);
  std::string to_string() const;

  bool is_local(char32_t cp) const;
  const std::vector<std::pair<char32_t, char32_t>>& ranges() const { return ranges_; }

 private:
  std::vector<std::pair<char32_t, char32_t>> ranges_;
};

enum class CharClass { kSpace, kLatin, kLocal, kDigit, kSymbol };

CharClass classify_char(char32_t cp, const ScriptRanges& ranges);
bool is_latin_letter(char32_t cp);

// ---- lexicon -----------------------------------------------------------------------

class Lexicon {
 public:
  Lexicon() = default;
  // Terms are lowercased; empty or whitespace-containing terms are rejected.
  explicit Lexicon(const std::vector<std::string>& terms);

  // One term per line; '#' starts a comment; blank lines ignored.
  static Lexicon load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool contains(std::string_view word) const;  // case-folded lookup
  std::size_t size() const { return terms_.size(); }
  const std::set<std::string>& terms() const { return terms_; }

 private:
  std::set<std::string> terms_;
};

// ASCII case folding; other bytes unchanged.
std::string to_lower_ascii(std::string_view s);

// ---- preprocessing and annotation ----------------------------------------------------

// Removes CR/LF, separates script classes and alphanumerics from symbols with
// single spaces, collapses whitespace and trims.
std::string preprocess(std::string_view raw, const ScriptRanges& ranges = ScriptRanges());

std::vector<std::string> split_words(std::string_view text);

enum class Script { kLocal, kDomainLatin, kOther };
const char* script_name(Script s);

struct WordAnnotation {
  std::string surface;
  Script script = Script::kOther;
  bool is_lexicon_term = false;
};

Script classify_word(std::string_view word, const ScriptRanges& ranges);

std::vector<WordAnnotation> classify_words(std::string_view text, const Lexicon& lexicon,
                                           const ScriptRanges& ranges = ScriptRanges());

// ---- knowledge mask ----------------------------------------------------------------

enum class MaskPolicy {
  kAllDomainScript,  // every Latin-script word
  kLexiconOnly,      // Latin-script words that are lexicon terms
};
MaskPolicy parse_mask_policy(std::string_view name);
const char* mask_policy_name(MaskPolicy policy);

struct KnowledgeMask {
  // Per token: 0 for no knowledge, j in 1..k for the j-th knowledge word.
  std::vector<std::int32_t> values;
  std::int32_t k = 0;

  // Positions carrying domain knowledge (value > 0).
  std::vector<std::size_t> knowledge_positions() const;
};

KnowledgeMask build_mask(const TokenizedInput& tok, const std::vector<WordAnnotation>& annotations,
                         MaskPolicy policy = MaskPolicy::kAllDomainScript);

}  // namespace dsgkd
