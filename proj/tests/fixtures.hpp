#pragma once

// Random micro batches and naive loop oracles shared by the test binaries.

#include <algorithm>
#include <cctype>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "dsgkd/corpus.hpp"
#include "dsgkd/distill.hpp"
#include "dsgkd/encoder.hpp"
#include "dsgkd/textprep.hpp"
#include "dsgkd/tokenizer.hpp"

namespace fixtures {

using namespace dsgkd;

struct MicroBatch {
  std::vector<TokenizedInput> inputs;
  std::vector<std::vector<WordAnnotation>> words;
  std::vector<KnowledgeMask> masks;
  std::vector<int> labels;
  TokenBatch tokens;

  std::vector<const KnowledgeMask*> mask_ptrs() const {
    std::vector<const KnowledgeMask*> p;
    for (const auto& m : masks) p.push_back(&m);
    return p;
  }
};

// Each example: [CLS], words of 1-3 subword tokens, [SEP], pads up to `length`.
// At most `max_k` words are Latin-script.
inline MicroBatch random_batch(std::mt19937_64& rng, std::size_t batch, std::size_t length,
                               std::size_t vocab, std::size_t max_k) {
  std::uniform_int_distribution<std::size_t> span(1, 3);
  std::uniform_int_distribution<std::int32_t> id(kNumSpecialTokens, static_cast<std::int32_t>(vocab) - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  MicroBatch mb;
  for (std::size_t b = 0; b < batch; ++b) {
    TokenizedInput t;
    std::vector<WordAnnotation> ann;
    t.ids.push_back(kClsId);
    t.word_ids.push_back(-1);
    std::uniform_int_distribution<std::size_t> active(2, length - 1);
    const std::size_t budget = active(rng);
    std::size_t latin = 0;
    while (t.ids.size() < budget) {
      const std::size_t n = std::min(span(rng), budget - t.ids.size());
      const bool is_latin = latin < max_k && u(rng) < 0.5;
      latin += is_latin ? 1 : 0;
      ann.push_back({"w", is_latin ? Script::kDomainLatin : Script::kLocal, false});
      for (std::size_t i = 0; i < n; ++i) {
        t.ids.push_back(id(rng));
        t.word_ids.push_back(static_cast<std::int32_t>(ann.size() - 1));
      }
    }
    t.ids.push_back(kSepId);
    t.word_ids.push_back(-1);
    while (t.ids.size() < length) {
      t.ids.push_back(kPadId);
      t.word_ids.push_back(-1);
    }
    mb.masks.push_back(build_mask(t, ann));
    mb.inputs.push_back(std::move(t));
    mb.words.push_back(std::move(ann));
    mb.labels.push_back(u(rng) < 0.5 ? 1 : 0);
  }
  std::vector<const TokenizedInput*> ptrs;
  for (const auto& t : mb.inputs) ptrs.push_back(&t);
  mb.tokens = TokenBatch::from_inputs(ptrs, length);
  return mb;
}

inline std::int32_t max_k(const std::vector<KnowledgeMask>& masks) {
  std::int32_t k = 0;
  for (const auto& m : masks) k = std::max(k, m.k);
  return k;
}

// (B, L, d) -> (B, kmax, d), one explicit loop per output entry.
inline std::vector<double> naive_pool_hidden(const std::vector<double>& h, std::size_t B,
                                             std::size_t L, std::size_t d,
                                             const std::vector<KnowledgeMask>& masks) {
  const auto K = static_cast<std::size_t>(max_k(masks));
  std::vector<double> out(B * K * d, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 1; j <= K; ++j)
      for (std::size_t f = 0; f < d; ++f) {
        double s = 0.0;
        int n = 0;
        for (std::size_t t = 0; t < L; ++t)
          if (masks[b].values[t] == static_cast<std::int32_t>(j)) {
            s += h[(b * L + t) * d + f];
            ++n;
          }
        out[(b * K + j - 1) * d + f] = n > 0 ? s / n : 0.0;
      }
  return out;
}

// (B, H, L, L) -> (B, kmax, width): mean over the word's query rows and heads.
inline std::vector<double> naive_pool_attention(const std::vector<double>& a, std::size_t B,
                                                std::size_t H, std::size_t L, std::size_t width,
                                                const std::vector<KnowledgeMask>& masks) {
  const auto K = static_cast<std::size_t>(max_k(masks));
  std::vector<double> out(B * K * width, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 1; j <= K; ++j)
      for (std::size_t key = 0; key < L; ++key) {
        double s = 0.0;
        int n = 0;
        for (std::size_t hh = 0; hh < H; ++hh)
          for (std::size_t q = 0; q < L; ++q)
            if (masks[b].values[q] == static_cast<std::int32_t>(j)) {
              s += a[((b * H + hh) * L + q) * L + key];
              ++n;
            }
        out[(b * K + j - 1) * width + key] = n > 0 ? s / n : 0.0;
      }
  return out;
}

inline EncoderConfig micro_config(std::size_t layers = 2, std::size_t d = 8, std::size_t l = 10) {
  EncoderConfig c;
  c.layers = layers;
  c.hidden = d;
  c.heads = 2;
  c.max_len = l;
  c.ffn_mult = 2;
  c.vocab_size = 20;
  c.dropout = 0.0;
  return c;
}

// Weights drawn larger than the default init so layers are far from linear.
inline Encoder perturbed_encoder(const EncoderConfig& c, std::uint64_t seed, double sd = 0.3) {
  Encoder e(c, seed);
  std::mt19937_64 rng(seed + 1000);
  std::normal_distribution<double> n(0.0, sd);
  for (auto& [name, t] : e.parameters())
    for (double& v : t.mutable_data()) v += n(rng);
  return e;
}

// Pairwise count over every (positive, negative) pair; ties count one half.
inline std::optional<double> brute_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        ++pairs;
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  if (pairs == 0) return std::nullopt;
  return num / static_cast<double>(pairs);
}

// Recomputes precision and recall from scratch at every distinct threshold,
// highest first, and sums (recall step) x precision.
inline std::optional<double> brute_auprc(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<double> th(s.begin(), s.end());
  std::sort(th.begin(), th.end(), std::greater<>());
  th.erase(std::unique(th.begin(), th.end()), th.end());
  std::size_t pos = 0;
  for (int v : y) pos += v == 1 ? 1 : 0;
  if (pos == 0 || pos == y.size()) return std::nullopt;
  double area = 0.0, prev_recall = 0.0;
  for (double t : th) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= t) (y[i] == 1 ? tp : fp)++;
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return area;
}

// Word counts of one document from its raw text: any ASCII letter makes a word
// Latin, a word wholly in the Hangul block is local, the rest is other.
struct NaiveCounts {
  std::size_t words = 0, local = 0, local_hits = 0, latin = 0, latin_hits = 0, other = 0;
};

inline NaiveCounts naive_counts(const std::string& raw, const Lexicon& lex) {
  NaiveCounts n;
  const std::string text = preprocess(raw);
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find(' ', start);
    if (end == std::string::npos) end = text.size();
    const std::string w = text.substr(start, end - start);
    start = end + 1;
    if (w.empty()) continue;
    ++n.words;
    bool ascii_letter = false;
    for (char ch : w) ascii_letter = ascii_letter || std::isalpha(static_cast<unsigned char>(ch));
    bool all_local = true;
    for (char32_t c : utf8_decode(w)) all_local = all_local && c >= 0xAC00 && c <= 0xD7A3;
    std::string lower = w;
    for (char& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (ascii_letter) {
      ++n.latin;
      n.latin_hits += lex.contains(lower) ? 1 : 0;
    } else if (all_local) {
      ++n.local;
      n.local_hits += lex.contains(w) ? 1 : 0;
    } else {
      ++n.other;
    }
  }
  return n;
}

inline SplitStats scan_stats(const std::vector<Document>& docs, const Lexicon& lex) {
  SplitStats s;
  for (const auto& d : docs) {
    ++s.documents;
    s.positives += static_cast<std::size_t>(d.label);
    const NaiveCounts n = naive_counts(d.text, lex);
    s.words += n.words;
    s.local += n.local;
    s.local_hits += n.local_hits;
    s.latin += n.latin;
    s.latin_hits += n.latin_hits;
    s.other += n.other;
  }
  return s;
}

}  // namespace fixtures
