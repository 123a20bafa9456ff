#include "dsgkd/textprep.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "dsgkd/tokenizer.hpp"

namespace dsgkd {

// ---- UTF-8 -------------------------------------------------------------------------

std::vector<char32_t> utf8_decode(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      len = 1;
      cp = c;
    } else if ((c >> 5) == 0x6) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c >> 4) == 0xE) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c >> 3) == 0x1E) {
      len = 4;
      cp = c & 0x07;
    }
    bool ok = len > 0 && i + len <= text.size();
    for (std::size_t j = 1; ok && j < len; ++j) {
      const auto cc = static_cast<unsigned char>(text[i + j]);
      if ((cc >> 6) != 0x2) ok = false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string utf8_encode(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

std::string utf8_encode(const std::vector<char32_t>& cps) {
  std::string out;
  for (char32_t cp : cps) out += utf8_encode(cp);
  return out;
}

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  for (char32_t cp : utf8_decode(text)) out.push_back(utf8_encode(cp));
  return out;
}

// ---- scripts -------------------------------------------------------------------------

ScriptRanges::ScriptRanges() : ranges_{{0xAC00, 0xD7A3}, {0x1100, 0x11FF}} {}

ScriptRanges::ScriptRanges(std::vector<std::pair<char32_t, char32_t>> ranges)
    : ranges_(std::move(ranges)) {
  for (const auto& [lo, hi] : ranges_) {
    if (lo > hi) throw ValidationError("script range with start after end");
  }
}

ScriptRanges ScriptRanges::parse(std::string_view spec) {
  std::vector<std::pair<char32_t, char32_t>> ranges;
  std::string item;
  std::istringstream in{std::string(spec)};
  auto parse_hex = [&](const std::string& s) -> char32_t {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(s, &used, 16);
    } catch (const std::exception&) {
      used = 0;
    }
    if (s.empty() || used != s.size()) {
      throw ValidationError("invalid code point '" + s + "' in script ranges '" +
                            std::string(spec) + "'");
    }
    return static_cast<char32_t>(v);
  };
  while (std::getline(in, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (item.empty()) continue;
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      const char32_t cp = parse_hex(item);
      ranges.emplace_back(cp, cp);
    } else {
      ranges.emplace_back(parse_hex(item.substr(0, dash)), parse_hex(item.substr(dash + 1)));
    }
  }
  if (ranges.empty()) throw ValidationError("empty script range specification");
  return ScriptRanges(std::move(ranges));
}

std::string ScriptRanges::to_string() const {
  std::ostringstream os;
  os << std::uppercase << std::hex;
  for (std::size_t i = 0; i < ranges_.size(); ++i) {
    if (i) os << ',';
    os << static_cast<unsigned long>(ranges_[i].first) << '-'
       << static_cast<unsigned long>(ranges_[i].second);
  }
  return os.str();
}

bool ScriptRanges::is_local(char32_t cp) const {
  return std::any_of(ranges_.begin(), ranges_.end(),
                     [cp](const auto& r) { return cp >= r.first && cp <= r.second; });
}

bool is_latin_letter(char32_t cp) {
  if ((cp >= 'A' && cp <= 'Z') || (cp >= 'a' && cp <= 'z')) return true;
  // Latin-1 supplement letters and Latin Extended-A/B.
  return cp >= 0xC0 && cp <= 0x24F && cp != 0xD7 && cp != 0xF7;
}

namespace {
bool is_space(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\v' || cp == '\f' ||
         cp == 0xA0 || cp == 0x3000;
}
}  // namespace

CharClass classify_char(char32_t cp, const ScriptRanges& ranges) {
  if (is_space(cp)) return CharClass::kSpace;
  if (is_latin_letter(cp)) return CharClass::kLatin;
  if (ranges.is_local(cp)) return CharClass::kLocal;
  if (cp >= '0' && cp <= '9') return CharClass::kDigit;
  return CharClass::kSymbol;
}

// ---- lexicon -------------------------------------------------------------------------

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

Lexicon::Lexicon(const std::vector<std::string>& terms) {
  for (const auto& t : terms) {
    if (t.empty()) throw ValidationError("lexicon term must be nonempty");
    for (char32_t cp : utf8_decode(t)) {
      if (is_space(cp)) throw ValidationError("lexicon term '" + t + "' contains whitespace");
    }
    terms_.insert(to_lower_ascii(t));
  }
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open lexicon file " + path.string());
  std::vector<std::string> terms;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    terms.push_back(line.substr(first, last - first + 1));
  }
  return Lexicon(terms);
}

void Lexicon::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write lexicon file " + path.string());
  out << "# domain lexicon, one lowercase term per line\n";
  for (const auto& t : terms_) out << t << '\n';
}

bool Lexicon::contains(std::string_view word) const {
  return terms_.count(to_lower_ascii(word)) > 0;
}

// ---- preprocessing -----------------------------------------------------------------------

std::string preprocess(std::string_view raw, const ScriptRanges& ranges) {
  std::string out;
  out.reserve(raw.size() + raw.size() / 4);
  CharClass prev = CharClass::kSpace;
  bool pending_space = false;
  for (char32_t cp : utf8_decode(raw)) {
    const CharClass cls = classify_char(cp, ranges);
    if (cls == CharClass::kSpace) {
      pending_space = true;
      continue;
    }
    if (prev != CharClass::kSpace && (pending_space || cls != prev)) out += ' ';
    out += utf8_encode(cp);
    prev = cls;
    pending_space = false;
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

const char* script_name(Script s) {
  switch (s) {
    case Script::kLocal:
      return "LOCAL";
    case Script::kDomainLatin:
      return "DOMAIN_LATIN";
    case Script::kOther:
      return "OTHER";
  }
  return "OTHER";
}

Script classify_word(std::string_view word, const ScriptRanges& ranges) {
  bool latin = false;
  bool local = false;
  for (char32_t cp : utf8_decode(word)) {
    latin = latin || is_latin_letter(cp);
    local = local || ranges.is_local(cp);
  }
  if (latin) return Script::kDomainLatin;
  if (local) return Script::kLocal;
  return Script::kOther;
}

std::vector<WordAnnotation> classify_words(std::string_view text, const Lexicon& lexicon,
                                           const ScriptRanges& ranges) {
  std::vector<WordAnnotation> out;
  for (auto& w : split_words(text)) {
    WordAnnotation a;
    a.script = classify_word(w, ranges);
    a.is_lexicon_term = lexicon.contains(w);
    a.surface = std::move(w);
    out.push_back(std::move(a));
  }
  return out;
}

// ---- knowledge mask --------------------------------------------------------------------

MaskPolicy parse_mask_policy(std::string_view name) {
  if (name == "all-domain" || name == "all_domain" || name == "ALL_DOMAIN_SCRIPT") {
    return MaskPolicy::kAllDomainScript;
  }
  if (name == "lexicon" || name == "lexicon-only" || name == "LEXICON_ONLY") {
    return MaskPolicy::kLexiconOnly;
  }
  throw ValidationError("unknown mask policy '" + std::string(name) +
                        "' (expected all-domain or lexicon)");
}

const char* mask_policy_name(MaskPolicy policy) {
  return policy == MaskPolicy::kAllDomainScript ? "all-domain" : "lexicon";
}

std::vector<std::size_t> KnowledgeMask::knowledge_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] > 0) out.push_back(i);
  }
  return out;
}

KnowledgeMask build_mask(const TokenizedInput& tok, const std::vector<WordAnnotation>& annotations,
                         MaskPolicy policy) {
  if (tok.word_ids.size() != tok.ids.size()) {
    throw ValidationError("tokenized input has mismatched ids/word_ids lengths");
  }
  KnowledgeMask mask;
  mask.values.assign(tok.ids.size(), 0);
  std::map<std::int32_t, std::int32_t> numbering;
  for (std::size_t i = 0; i < tok.word_ids.size(); ++i) {
    const std::int32_t w = tok.word_ids[i];
    if (w < 0) continue;
    if (static_cast<std::size_t>(w) >= annotations.size()) {
      throw ValidationError("token " + std::to_string(i) + " refers to word " + std::to_string(w) +
                            " but only " + std::to_string(annotations.size()) +
                            " annotations were given");
    }
    const WordAnnotation& a = annotations[static_cast<std::size_t>(w)];
    const bool knowledge = policy == MaskPolicy::kAllDomainScript
                               ? a.script == Script::kDomainLatin
                               : a.script == Script::kDomainLatin && a.is_lexicon_term;
    if (!knowledge) continue;
    auto [it, inserted] = numbering.try_emplace(w, mask.k + 1);
    if (inserted) ++mask.k;
    mask.values[i] = it->second;
  }
  return mask;
}

}  // namespace dsgkd
