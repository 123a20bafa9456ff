#include "dsgkd/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "dsgkd/errors.hpp"
#include "dsgkd/io.hpp"
#include "dsgkd/textprep.hpp"

namespace dsgkd {

namespace {

const std::string kSpecialTokens[kNumSpecialTokens] = {"[PAD]", "[CLS]", "[SEP]", "[UNK]"};

using Pair = std::pair<std::string, std::string>;

std::vector<std::string> initial_symbols(std::string_view word) {
  std::vector<std::string> symbols = utf8_chars(word);
  for (std::size_t i = 1; i < symbols.size(); ++i) {
    symbols[i] = std::string(kContinuation) + symbols[i];
  }
  return symbols;
}

std::string merged_token(const std::string& left, const std::string& right) {
  return left + right.substr(kContinuation.size());
}

// Replaces every non-overlapping occurrence of (left, right), scanning left to
// right.
bool apply_merge(std::vector<std::string>& symbols, const std::string& left,
                 const std::string& right) {
  bool changed = false;
  std::vector<std::string> out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
      out.push_back(merged_token(left, right));
      ++i;
      changed = true;
    } else {
      out.push_back(std::move(symbols[i]));
    }
  }
  symbols = std::move(out);
  return changed;
}

}  // namespace

std::size_t TokenizedInput::active_length() const {
  return static_cast<std::size_t>(
      std::count_if(ids.begin(), ids.end(), [](std::int32_t id) { return id != kPadId; }));
}

BpeVocab::BpeVocab() {
  for (const auto& s : kSpecialTokens) add_token(s);
}

std::int32_t BpeVocab::add_token(const std::string& token) {
  auto [it, inserted] =
      token_to_id_.try_emplace(token, static_cast<std::int32_t>(id_to_token_.size()));
  if (inserted) id_to_token_.push_back(token);
  return it->second;
}

void BpeVocab::add_merge(std::string left, std::string right) {
  merge_rank_.emplace(Pair{left, right}, merges_.size());
  merges_.emplace_back(std::move(left), std::move(right));
}

std::int32_t BpeVocab::id_of(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnkId : it->second;
}

bool BpeVocab::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) > 0;
}

const std::string& BpeVocab::token_of(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw ValidationError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<std::string> BpeVocab::segment_word(std::string_view word) const {
  std::vector<std::string> symbols = initial_symbols(word);
  while (symbols.size() > 1) {
    std::size_t best_rank = merges_.size();
    std::size_t best_pos = symbols.size();
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = merge_rank_.find(Pair{symbols[i], symbols[i + 1]});
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_pos = i;
      }
    }
    if (best_pos == symbols.size()) break;
    const auto& [left, right] = merges_[best_rank];
    apply_merge(symbols, left, right);
  }
  return symbols;
}

std::string BpeVocab::serialize() const {
  std::ostringstream os;
  os << "#MERGES\n";
  for (const auto& [l, r] : merges_) os << l << ' ' << r << '\n';
  os << "#VOCAB\n";
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) os << id_to_token_[i] << '\t' << i << '\n';
  return os.str();
}

void BpeVocab::save(const std::filesystem::path& path) const {
  write_file_atomic(path, serialize());
}

BpeVocab BpeVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open vocabulary file " + path.string());
  BpeVocab vocab;
  vocab.token_to_id_.clear();
  vocab.id_to_token_.clear();
  enum { kNone, kMerges, kVocab } section = kNone;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == "#MERGES") {
      section = kMerges;
      continue;
    }
    if (line == "#VOCAB") {
      section = kVocab;
      continue;
    }
    if (line.empty()) continue;
    if (section == kMerges) {
      const auto sp = line.find(' ');
      if (sp == std::string::npos || line.find(' ', sp + 1) != std::string::npos) {
        throw ParseError("merge line must hold exactly two symbols", lineno);
      }
      vocab.add_merge(line.substr(0, sp), line.substr(sp + 1));
    } else if (section == kVocab) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw ParseError("vocab line must be token<TAB>id", lineno);
      const std::string token = line.substr(0, tab);
      std::size_t id = 0;
      try {
        id = std::stoul(line.substr(tab + 1));
      } catch (const std::exception&) {
        throw ParseError("bad token id", lineno);
      }
      if (id != vocab.id_to_token_.size()) throw ParseError("token ids must be dense and ordered", lineno);
      if (vocab.add_token(token) != static_cast<std::int32_t>(id)) {
        throw ParseError("duplicate token '" + token + "'", lineno);
      }
    } else {
      throw ParseError("content before #MERGES section", lineno);
    }
  }
  for (std::int32_t i = 0; i < kNumSpecialTokens; ++i) {
    if (vocab.id_to_token_.size() <= static_cast<std::size_t>(i) ||
        vocab.id_to_token_[static_cast<std::size_t>(i)] != kSpecialTokens[i]) {
      throw ParseError("special tokens must occupy ids 0-3");
    }
  }
  return vocab;
}

BpeVocab train_bpe(const std::vector<std::string>& corpus, std::size_t vocab_size) {
  std::map<std::string, long> word_freq;
  for (const auto& doc : corpus) {
    for (auto& w : split_words(doc)) ++word_freq[w];
  }
  if (word_freq.empty()) throw ValidationError("train_bpe: empty corpus");

  std::vector<std::vector<std::string>> words;
  std::vector<long> freqs;
  std::set<std::string> alphabet;
  for (const auto& [w, f] : word_freq) {
    words.push_back(initial_symbols(w));
    freqs.push_back(f);
    alphabet.insert(words.back().begin(), words.back().end());
  }
  const std::size_t base = kNumSpecialTokens + alphabet.size();
  if (vocab_size < base) {
    throw ValidationError("train_bpe: vocab_size " + std::to_string(vocab_size) +
                          " is below the " + std::to_string(base) +
                          " special and alphabet symbols");
  }
  BpeVocab vocab;
  for (const auto& s : alphabet) vocab.add_token(s);

  std::map<Pair, long> counts;
  std::map<Pair, std::set<std::size_t>> where;
  auto add_pairs = [&](std::size_t w, long sign) {
    const auto& s = words[w];
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      Pair p{s[i], s[i + 1]};
      counts[p] += sign * freqs[w];
      if (sign > 0) where[p].insert(w);
    }
  };
  for (std::size_t w = 0; w < words.size(); ++w) add_pairs(w, +1);

  while (vocab.size() < vocab_size) {
    const Pair* best = nullptr;
    long best_count = 0;
    for (const auto& [p, c] : counts) {
      if (c > best_count) {  // strict: earlier (smaller) pair wins ties
        best = &p;
        best_count = c;
      }
    }
    if (best == nullptr) break;
    const Pair chosen = *best;
    const std::set<std::size_t> affected = where[chosen];
    for (std::size_t w : affected) {
      add_pairs(w, -1);
      apply_merge(words[w], chosen.first, chosen.second);
      add_pairs(w, +1);
    }
    for (auto it = counts.begin(); it != counts.end();) {
      it = it->second <= 0 ? counts.erase(it) : std::next(it);
    }
    vocab.add_token(merged_token(chosen.first, chosen.second));
    vocab.add_merge(chosen.first, chosen.second);
  }
  return vocab;
}

TokenizedInput encode(const BpeVocab& vocab, std::string_view text, std::size_t max_len) {
  if (max_len < 2) throw ValidationError("encode: max_len must be at least 2");
  TokenizedInput out;
  out.ids.reserve(max_len);
  out.word_ids.reserve(max_len);
  out.ids.push_back(kClsId);
  out.word_ids.push_back(-1);
  const std::size_t budget = max_len - 2;
  std::int32_t word_index = 0;
  bool full = false;
  for (const auto& w : split_words(text)) {
    for (const auto& piece : vocab.segment_word(w)) {
      if (out.ids.size() - 1 == budget) {
        full = true;
        break;
      }
      out.ids.push_back(vocab.id_of(piece));
      out.word_ids.push_back(word_index);
    }
    if (full) break;
    ++word_index;
  }
  out.ids.push_back(kSepId);
  out.word_ids.push_back(-1);
  out.ids.resize(max_len, kPadId);
  out.word_ids.resize(max_len, -1);
  return out;
}

}  // namespace dsgkd
