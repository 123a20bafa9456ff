#include "dsgkd/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "dsgkd/errors.hpp"

namespace dsgkd {

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "dev") return Split::kDev;
  if (name == "test") return Split::kTest;
  throw ValidationError("unknown split '" + std::string(name) + "'");
}

// ---- configuration -----------------------------------------------------------------

GeneratorConfig GeneratorConfig::student_profile() {
  return GeneratorConfig{};
}

GeneratorConfig GeneratorConfig::teacher_profile() {
  GeneratorConfig c;
  c.profile = "teacher";
  c.n_train = 3000;
  c.n_dev = 400;
  c.n_test = 400;
  c.lexicon_hit_rate = 0.35;
  c.local_cue_words = 0;
  c.cue_share = 0.0;
  c.signal_strength = 1.0;
  c.label_noise = 0.0;
  c.seed = 4242;
  return c;
}

namespace {

template <class T>
void set_size(T& field, const std::string& key, const std::string& value) {
  const long long v = parse_int(value, key);
  if (v < 0) throw ValidationError("key '" + key + "': must be nonnegative, got " + value);
  field = static_cast<T>(v);
}

}  // namespace

GeneratorConfig GeneratorConfig::from_key_values(const KeyValues& kv) {
  GeneratorConfig c = student_profile();
  if (auto it = kv.find("profile"); it != kv.end()) {
    if (it->second == "teacher") {
      c = teacher_profile();
    } else if (it->second != "student") {
      throw ValidationError("key 'profile': expected student or teacher, got '" + it->second + "'");
    }
  }
  for (const auto& [key, value] : kv) {
    if (key == "profile") continue;
    else if (key == "n_train") set_size(c.n_train, key, value);
    else if (key == "n_dev") set_size(c.n_dev, key, value);
    else if (key == "n_test") set_size(c.n_test, key, value);
    else if (key == "ratio_local") c.ratio_local = parse_double(value, key);
    else if (key == "ratio_domain") c.ratio_domain = parse_double(value, key);
    else if (key == "ratio_other") c.ratio_other = parse_double(value, key);
    else if (key == "lexicon_hit_rate") c.lexicon_hit_rate = parse_double(value, key);
    else if (key == "lexicon_size") set_size(c.lexicon_size, key, value);
    else if (key == "emergency_terms") set_size(c.emergency_terms, key, value);
    else if (key == "local_cue_words") set_size(c.local_cue_words, key, value);
    else if (key == "cue_share") c.cue_share = parse_double(value, key);
    else if (key == "local_pool_size") set_size(c.local_pool_size, key, value);
    else if (key == "latin_pool_size") set_size(c.latin_pool_size, key, value);
    else if (key == "local_syllables") set_size(c.local_syllables, key, value);
    else if (key == "local_ranges") c.local_ranges = value;
    else if (key == "positive_rate") c.positive_rate = parse_double(value, key);
    else if (key == "near_miss_rate") c.near_miss_rate = parse_double(value, key);
    else if (key == "threshold_words") set_size(c.threshold_words, key, value);
    else if (key == "signal_strength") c.signal_strength = parse_double(value, key);
    else if (key == "label_noise") c.label_noise = parse_double(value, key);
    else if (key == "doc_len_min") set_size(c.doc_len_min, key, value);
    else if (key == "doc_len_max") set_size(c.doc_len_max, key, value);
    else if (key == "glue_rate") c.glue_rate = parse_double(value, key);
    else if (key == "newline_rate") c.newline_rate = parse_double(value, key);
    else if (key == "seed") set_size(c.seed, key, value);
    else if (key == "pool_seed") set_size(c.pool_seed, key, value);
    else throw ValidationError("unknown generator key '" + key + "'");
  }
  c.validate();
  return c;
}

KeyValues GeneratorConfig::to_key_values() const {
  KeyValues kv;
  kv["profile"] = profile;
  kv["n_train"] = std::to_string(n_train);
  kv["n_dev"] = std::to_string(n_dev);
  kv["n_test"] = std::to_string(n_test);
  kv["ratio_local"] = format_exact(ratio_local);
  kv["ratio_domain"] = format_exact(ratio_domain);
  kv["ratio_other"] = format_exact(ratio_other);
  kv["lexicon_hit_rate"] = format_exact(lexicon_hit_rate);
  kv["lexicon_size"] = std::to_string(lexicon_size);
  kv["emergency_terms"] = std::to_string(emergency_terms);
  kv["local_cue_words"] = std::to_string(local_cue_words);
  kv["cue_share"] = format_exact(cue_share);
  kv["local_pool_size"] = std::to_string(local_pool_size);
  kv["latin_pool_size"] = std::to_string(latin_pool_size);
  kv["local_syllables"] = std::to_string(local_syllables);
  kv["local_ranges"] = local_ranges;
  kv["positive_rate"] = format_exact(positive_rate);
  kv["near_miss_rate"] = format_exact(near_miss_rate);
  kv["threshold_words"] = std::to_string(threshold_words);
  kv["signal_strength"] = format_exact(signal_strength);
  kv["label_noise"] = format_exact(label_noise);
  kv["doc_len_min"] = std::to_string(doc_len_min);
  kv["doc_len_max"] = std::to_string(doc_len_max);
  kv["glue_rate"] = format_exact(glue_rate);
  kv["newline_rate"] = format_exact(newline_rate);
  kv["seed"] = std::to_string(seed);
  kv["pool_seed"] = std::to_string(pool_seed);
  return kv;
}

void GeneratorConfig::validate() const {
  std::vector<std::string> bad;
  auto unit = [&](double v, const char* key) {
    if (!(v >= 0.0 && v <= 1.0)) bad.push_back(key);
  };
  unit(ratio_local, "ratio_local");
  unit(ratio_domain, "ratio_domain");
  unit(ratio_other, "ratio_other");
  if (bad.empty() && std::abs(ratio_local + ratio_domain + ratio_other - 1.0) > 1e-9) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", ratio_local + ratio_domain + ratio_other);
    throw ValidationError("ratios ratio_local, ratio_domain, ratio_other sum to " +
                          std::string(buf) + ", expected 1");
  }
  unit(lexicon_hit_rate, "lexicon_hit_rate");
  unit(cue_share, "cue_share");
  unit(positive_rate, "positive_rate");
  unit(near_miss_rate, "near_miss_rate");
  unit(signal_strength, "signal_strength");
  unit(label_noise, "label_noise");
  unit(glue_rate, "glue_rate");
  unit(newline_rate, "newline_rate");
  if (n_train == 0) bad.push_back("n_train");
  if (n_dev == 0) bad.push_back("n_dev");
  if (n_test == 0) bad.push_back("n_test");
  if (lexicon_size == 0) bad.push_back("lexicon_size");
  if (emergency_terms == 0 || emergency_terms >= lexicon_size) bad.push_back("emergency_terms");
  if (local_pool_size <= local_cue_words) bad.push_back("local_pool_size");
  if (latin_pool_size == 0) bad.push_back("latin_pool_size");
  if (local_syllables < 2) bad.push_back("local_syllables");
  if (cue_share > 0.0 && local_cue_words == 0) bad.push_back("cue_share");
  if (doc_len_min == 0 || doc_len_max < doc_len_min) bad.push_back("doc_len_min/doc_len_max");
  if (!bad.empty()) {
    std::string msg = "invalid generator configuration:";
    for (const auto& k : bad) msg += " " + k;
    throw ValidationError(msg);
  }
  if (ratio_domain == 0.0 && cue_share < 1.0) {
    throw ValidationError("ratio_domain = 0 leaves no room for emergency terms");
  }
  const ScriptRanges ranges = ScriptRanges::parse(local_ranges);
  std::size_t cps = 0;
  for (const auto& [lo, hi] : ranges.ranges()) cps += static_cast<std::size_t>(hi - lo) + 1;
  if (cps < local_syllables) {
    throw ValidationError("key 'local_syllables': only " + std::to_string(cps) +
                          " code points in local_ranges");
  }
}

// ---- generation --------------------------------------------------------------------

namespace {

enum class Kind { kLocal, kDomain, kOther };

struct Pools {
  std::vector<std::string> local;  // non-cue local words
  std::vector<std::string> cues;
  std::vector<std::string> lexicon_plain;  // non-emergency lexicon terms
  std::vector<std::string> emergency;
  std::vector<std::string> latin;  // Latin words outside the lexicon
};

std::string latin_word(std::mt19937_64& rng) {
  static const char* consonants = "bcdfghjklmnprstvz";
  static const char* vowels = "aeiou";
  std::uniform_int_distribution<int> syl(2, 4);
  std::uniform_int_distribution<int> c(0, 16), v(0, 4), coin(0, 3);
  std::string w;
  const int n = syl(rng);
  for (int i = 0; i < n; ++i) {
    w += consonants[c(rng)];
    w += vowels[v(rng)];
    if (coin(rng) == 0) w += consonants[c(rng)];
  }
  return w;
}

Pools build_pools(const GeneratorConfig& cfg) {
  std::mt19937_64 rng(cfg.pool_seed);
  Pools p;
  // Latin: lexicon terms then plain words, all distinct.
  std::set<std::string> seen;
  std::vector<std::string> lex;
  while (lex.size() < cfg.lexicon_size) {
    std::string w = latin_word(rng);
    if (seen.insert(w).second) lex.push_back(w);
  }
  p.emergency.assign(lex.begin(), lex.begin() + static_cast<std::ptrdiff_t>(cfg.emergency_terms));
  p.lexicon_plain.assign(lex.begin() + static_cast<std::ptrdiff_t>(cfg.emergency_terms), lex.end());
  while (p.latin.size() < cfg.latin_pool_size) {
    std::string w = latin_word(rng);
    if (seen.insert(w).second) p.latin.push_back(w);
  }
  // Local syllable inventory drawn from the configured code points.
  const ScriptRanges ranges = ScriptRanges::parse(cfg.local_ranges);
  std::vector<char32_t> all;
  for (const auto& [lo, hi] : ranges.ranges())
    for (char32_t cp = lo; cp <= hi; ++cp) all.push_back(cp);
  std::vector<char32_t> syllables;
  std::sample(all.begin(), all.end(), std::back_inserter(syllables), cfg.local_syllables, rng);
  std::uniform_int_distribution<std::size_t> pick(0, syllables.size() - 1);
  std::uniform_int_distribution<int> len(1, 3);
  std::set<std::string> local_seen;
  std::vector<std::string> local;
  const std::size_t max_distinct = syllables.size() * syllables.size() * syllables.size();
  const std::size_t want = std::min(cfg.local_pool_size, max_distinct);
  while (local.size() < want) {
    std::vector<char32_t> cps;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) cps.push_back(syllables[pick(rng)]);
    std::string w = utf8_encode(cps);
    if (local_seen.insert(w).second) local.push_back(w);
  }
  p.cues.assign(local.begin(), local.begin() + static_cast<std::ptrdiff_t>(cfg.local_cue_words));
  p.local.assign(local.begin() + static_cast<std::ptrdiff_t>(cfg.local_cue_words), local.end());
  return p;
}

std::string other_word(std::mt19937_64& rng) {
  static const char* symbols = "/.-%:+()";
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < 0.6) {
    std::uniform_int_distribution<int> digits(1, 3), d(0, 9);
    std::string w;
    const int n = digits(rng);
    for (int i = 0; i < n; ++i) w += static_cast<char>('0' + d(rng));
    return w;
  }
  std::uniform_int_distribution<int> s(0, 7);
  return std::string(1, symbols[s(rng)]);
}

// Character class of a generated word (single-class by construction).
int word_class(const std::string& w, Kind k) {
  if (k == Kind::kLocal) return 0;
  if (k == Kind::kDomain) return 1;
  return (w[0] >= '0' && w[0] <= '9') ? 2 : 3;
}

template <class V>
const typename V::value_type& choose(const V& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

struct Draft {
  std::vector<Kind> kinds;
  std::vector<std::string> words;
  std::vector<bool> planted;
  int label = 0;
};

class DocumentGenerator {
 public:
  DocumentGenerator(const GeneratorConfig& cfg, const Pools& pools)
      : cfg_(cfg), pools_(pools), rng_(cfg.seed) {}

  // Documents of one split. Lexicon hits are placed once the whole split is
  // drafted: exactly round(rate * latin) - planted of the unplanted Latin
  // slots, chosen uniformly.
  std::vector<Document> split(Split split, std::size_t count) {
    std::vector<Draft> drafts;
    drafts.reserve(count);
    for (std::size_t i = 0; i < count; ++i) drafts.push_back(draft());

    std::size_t latin = 0, planted = 0;
    std::vector<std::pair<std::size_t, std::size_t>> open;
    for (std::size_t d = 0; d < drafts.size(); ++d) {
      for (std::size_t i = 0; i < drafts[d].kinds.size(); ++i) {
        if (drafts[d].kinds[i] != Kind::kDomain) continue;
        ++latin;
        if (drafts[d].planted[i]) ++planted;
        else open.emplace_back(d, i);
      }
    }
    const auto target = static_cast<std::size_t>(
        std::llround(cfg_.lexicon_hit_rate * static_cast<double>(latin)));
    const std::size_t hits = std::min(open.size(), target > planted ? target - planted : 0);
    std::shuffle(open.begin(), open.end(), rng_);
    for (std::size_t j = 0; j < open.size(); ++j) {
      const auto [d, i] = open[j];
      drafts[d].words[i] = j < hits ? choose(pools_.lexicon_plain, rng_) : choose(pools_.latin, rng_);
    }

    std::vector<Document> out;
    out.reserve(count);
    for (auto& dr : drafts) out.push_back(render(dr, split));
    return out;
  }

 private:
  Draft draft() {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> len(cfg_.doc_len_min, cfg_.doc_len_max);
    const std::size_t n = len(rng_);
    const std::size_t threshold =
        1 + (cfg_.threshold_words > 0 ? n / cfg_.threshold_words : 0);

    Draft dr;
    dr.kinds.resize(n);
    for (auto& k : dr.kinds) {
      const double r = u(rng_);
      k = r < cfg_.ratio_local ? Kind::kLocal
          : r < cfg_.ratio_local + cfg_.ratio_domain ? Kind::kDomain
                                                     : Kind::kOther;
    }
    const int target = u(rng_) < cfg_.positive_rate ? 1 : 0;
    std::size_t evidence = 0;
    if (target == 1) {
      evidence = threshold + (u(rng_) < 0.5 ? 0 : 1);
    } else if (threshold > 1 && u(rng_) < cfg_.near_miss_rate) {
      evidence = threshold - 1;
    }
    evidence = std::min(evidence, n);

    dr.words.resize(n);
    dr.planted.assign(n, false);
    for (std::size_t e = 0; e < evidence; ++e) {
      const bool cue = cfg_.local_cue_words > 0 && u(rng_) < cfg_.cue_share;
      const Kind want = cue ? Kind::kLocal : Kind::kDomain;
      std::vector<std::size_t> free_same, free_any;
      for (std::size_t i = 0; i < n; ++i) {
        if (dr.planted[i]) continue;
        free_any.push_back(i);
        if (dr.kinds[i] == want) free_same.push_back(i);
      }
      const std::size_t slot = !free_same.empty() ? choose(free_same, rng_) : choose(free_any, rng_);
      dr.kinds[slot] = want;
      dr.planted[slot] = true;
      dr.words[slot] = cue ? choose(pools_.cues, rng_) : choose(pools_.emergency, rng_);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (dr.planted[i]) continue;
      if (dr.kinds[i] == Kind::kLocal) dr.words[i] = choose(pools_.local, rng_);
      else if (dr.kinds[i] == Kind::kOther) dr.words[i] = other_word(rng_);
    }

    dr.label = evidence >= threshold ? 1 : 0;
    if (u(rng_) >= cfg_.signal_strength) dr.label = u(rng_) < cfg_.positive_rate ? 1 : 0;
    if (u(rng_) < cfg_.label_noise) dr.label = 1 - dr.label;
    return dr;
  }

  Document render(const Draft& dr, Split split) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto& words = dr.words;
    const auto& kinds = dr.kinds;
    std::string text;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i > 0) {
        const bool differ = word_class(words[i - 1], kinds[i - 1]) != word_class(words[i], kinds[i]);
        if (differ && u(rng_) < cfg_.glue_rate) {
          // glued
        } else if (u(rng_) < cfg_.newline_rate) {
          text += "\r\n";
        } else {
          text += ' ';
        }
      }
      text += words[i];
    }
    Document d;
    d.split = split;
    d.label = dr.label;
    d.text = std::move(text);
    return d;
  }

  const GeneratorConfig& cfg_;
  const Pools& pools_;
  std::mt19937_64 rng_;
};

}  // namespace

GeneratedCorpus generate(const GeneratorConfig& config) {
  config.validate();
  const Pools pools = build_pools(config);
  GeneratedCorpus out;
  std::vector<std::string> lex = pools.emergency;
  lex.insert(lex.end(), pools.lexicon_plain.begin(), pools.lexicon_plain.end());
  out.lexicon = Lexicon(lex);
  out.emergency_terms = pools.emergency;
  out.local_cues = pools.cues;
  DocumentGenerator gen(config, pools);
  const std::pair<Split, std::size_t> plan[] = {
      {Split::kTrain, config.n_train}, {Split::kDev, config.n_dev}, {Split::kTest, config.n_test}};
  for (const auto& [split, count] : plan) {
    auto docs = gen.split(split, count);
    out.documents.insert(out.documents.end(), docs.begin(), docs.end());
  }
  return out;
}

std::vector<Document> select_split(const std::vector<Document>& docs, Split split) {
  std::vector<Document> out;
  for (const auto& d : docs)
    if (d.split == split) out.push_back(d);
  return out;
}

RuleEvidence rule_evidence(std::string_view text, const GeneratedCorpus& corpus,
                           const GeneratorConfig& config) {
  const std::unordered_set<std::string> emergency(corpus.emergency_terms.begin(),
                                                  corpus.emergency_terms.end());
  const std::unordered_set<std::string> cues(corpus.local_cues.begin(), corpus.local_cues.end());
  const auto words = split_words(preprocess(text, ScriptRanges::parse(config.local_ranges)));
  RuleEvidence r;
  for (const auto& w : words) {
    if (emergency.count(to_lower_ascii(w)) || cues.count(w)) ++r.evidence;
  }
  r.threshold = 1 + (config.threshold_words > 0 ? words.size() / config.threshold_words : 0);
  return r;
}

// ---- statistics --------------------------------------------------------------------

namespace {
double ratio(std::size_t a, std::size_t b) {
  return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
}
}  // namespace

double SplitStats::local_ratio() const { return ratio(local, words); }
double SplitStats::latin_ratio() const { return ratio(latin, words); }
double SplitStats::other_ratio() const { return ratio(other, words); }
double SplitStats::latin_hit_rate() const { return ratio(latin_hits, latin); }

CorpusStats corpus_stats(const std::vector<Document>& docs, const Lexicon& lexicon,
                         const ScriptRanges& ranges) {
  CorpusStats s;
  for (const char* name : {"train", "dev", "test", "total"}) s.splits[name] = {};
  for (const auto& d : docs) {
    const auto words = classify_words(preprocess(d.text, ranges), lexicon, ranges);
    for (SplitStats* row : {&s.splits[split_name(d.split)], &s.splits["total"]}) {
      ++row->documents;
      row->positives += d.label == 1 ? 1 : 0;
      for (const auto& w : words) {
        ++row->words;
        switch (w.script) {
          case Script::kLocal:
            ++row->local;
            row->local_hits += w.is_lexicon_term ? 1 : 0;
            break;
          case Script::kDomainLatin:
            ++row->latin;
            row->latin_hits += w.is_lexicon_term ? 1 : 0;
            break;
          case Script::kOther:
            ++row->other;
            break;
        }
      }
    }
  }
  return s;
}

std::string CorpusStats::to_table() const {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-6s %6s %9s %18s %18s %10s %7s\n", "split", "docs", "words",
                "local (hits)", "latin (hits)", "other", "L:D:O");
  os << buf;
  for (const char* name : {"train", "dev", "test", "total"}) {
    auto it = splits.find(name);
    if (it == splits.end()) continue;
    const SplitStats& r = it->second;
    char local[32], latin[32], ratios[48];
    std::snprintf(local, sizeof(local), "%zu (%zu)", r.local, r.local_hits);
    std::snprintf(latin, sizeof(latin), "%zu (%zu)", r.latin, r.latin_hits);
    std::snprintf(ratios, sizeof(ratios), "%.2f:%.2f:%.2f", r.local_ratio(), r.latin_ratio(),
                  r.other_ratio());
    std::snprintf(buf, sizeof(buf), "%-6s %6zu %9zu %18s %18s %10zu %s\n", name, r.documents,
                  r.words, local, latin, r.other, ratios);
    os << buf;
  }
  return os.str();
}

std::string CorpusStats::to_key_values() const {
  std::ostringstream os;
  for (const auto& [name, r] : splits) {
    os << name << ".documents = " << r.documents << '\n'
       << name << ".positives = " << r.positives << '\n'
       << name << ".words = " << r.words << '\n'
       << name << ".local = " << r.local << '\n'
       << name << ".local_hits = " << r.local_hits << '\n'
       << name << ".latin = " << r.latin << '\n'
       << name << ".latin_hits = " << r.latin_hits << '\n'
       << name << ".other = " << r.other << '\n'
       << name << ".latin_hit_rate = " << format_exact(r.latin_hit_rate()) << '\n';
  }
  return os.str();
}

// ---- record format -----------------------------------------------------------------

namespace {

std::string escape_text(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_text(std::string_view text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\\' && i + 1 < text.size()) {
      const char n = text[i + 1];
      if (n == 'n' || n == 'r' || n == 't' || n == '\\') {
        out += n == 'n' ? '\n' : n == 'r' ? '\r' : n == 't' ? '\t' : '\\';
        ++i;
        continue;
      }
    }
    out += text[i];
  }
  return out;
}

}  // namespace

std::vector<Document> parse_corpus(std::string_view text) {
  std::vector<Document> docs;
  std::unordered_set<std::string> ids;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t s = 0;
    for (int i = 0; i < 3; ++i) {
      const std::size_t tab = line.find('\t', s);
      if (tab == std::string_view::npos) break;
      fields.push_back(line.substr(s, tab - s));
      s = tab + 1;
    }
    fields.push_back(line.substr(s));
    Document d;
    std::size_t f = 0;
    if (fields.size() == 4) {
      d.id = unescape_text(fields[0]);
      if (d.id.empty()) throw ParseError("empty id", lineno);
      f = 1;
    } else if (fields.size() != 3) {
      throw ParseError("expected split<TAB>label<TAB>text, found " +
                           std::to_string(fields.size()) + " field(s)",
                       lineno);
    }
    try {
      d.split = parse_split(fields[f]);
    } catch (const ValidationError&) {
      throw ParseError("invalid split '" + std::string(fields[f]) + "'", lineno);
    }
    if (fields[f + 1] == "0") {
      d.label = 0;
    } else if (fields[f + 1] == "1") {
      d.label = 1;
    } else {
      throw ParseError("invalid label '" + std::string(fields[f + 1]) + "'", lineno);
    }
    d.text = unescape_text(fields[f + 2]);
    if (split_words(preprocess(d.text)).empty()) throw ParseError("empty text", lineno);
    if (!d.id.empty() && !ids.insert(d.id).second) {
      throw ValidationError("line " + std::to_string(lineno) + ": duplicate id '" + d.id + "'");
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return parse_corpus(text);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string serialize_corpus(const std::vector<Document>& docs) {
  std::string out;
  for (const auto& d : docs) {
    if (!d.id.empty()) {
      out += escape_text(d.id);
      out += '\t';
    }
    out += split_name(d.split);
    out += '\t';
    out += d.label == 1 ? '1' : '0';
    out += '\t';
    out += escape_text(d.text);
    out += '\n';
  }
  return out;
}

void save_corpus(const std::vector<Document>& docs, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_corpus(docs));
}

}  // namespace dsgkd
