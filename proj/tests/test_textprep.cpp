#include <gtest/gtest.h>

#include <filesystem>

#include "dsgkd/io.hpp"
#include "dsgkd/textprep.hpp"
#include "dsgkd/tokenizer.hpp"

using namespace dsgkd;

namespace {

TokenizedInput hand_tokens(std::vector<std::int32_t> word_ids) {
  TokenizedInput t;
  t.word_ids = std::move(word_ids);
  for (auto w : t.word_ids) t.ids.push_back(w < 0 ? kPadId : 10 + w);
  return t;
}

WordAnnotation word(const std::string& s, Script script, bool term = false) {
  return {s, script, term};
}

}  // namespace

TEST(Utf8, RoundTripAndMalformed) {
  const std::string s = "a열b";
  const auto cps = utf8_decode(s);
  ASSERT_EQ(cps.size(), 3u);
  EXPECT_EQ(cps[1], U'열');
  EXPECT_EQ(utf8_encode(cps), s);
  EXPECT_EQ(utf8_decode("\xff")[0], 0xFFFDu);
  EXPECT_EQ(utf8_chars("열a").size(), 2u);
}

TEST(ScriptRanges, ParseAndFormat) {
  const ScriptRanges r = ScriptRanges::parse("ac00-d7a3,3131");
  EXPECT_TRUE(r.is_local(U'열'));
  EXPECT_TRUE(r.is_local(0x3131));
  EXPECT_FALSE(r.is_local(U'a'));
  EXPECT_EQ(ScriptRanges::parse(r.to_string()).ranges(), r.ranges());
  EXPECT_THROW(ScriptRanges::parse("zz-1"), ValidationError);
}

TEST(Preprocess, BoundaryRules) {
  EXPECT_EQ(preprocess("v/s\r\nfever38.5"), "v / s fever 38 . 5");
  EXPECT_EQ(preprocess("fever"), "fever");
  EXPECT_EQ(preprocess("열nausea"), "열 nausea");
  EXPECT_EQ(preprocess("  a \t\n b  "), "a b");
  EXPECT_EQ(preprocess(""), "");
}

TEST(ClassifyWords, ScriptsAndLexicon) {
  const Lexicon lex({"fever"});
  const auto w = classify_words("fever 있음 38", lex);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[0].script, Script::kDomainLatin);
  EXPECT_TRUE(w[0].is_lexicon_term);
  EXPECT_EQ(w[1].script, Script::kLocal);
  EXPECT_FALSE(w[1].is_lexicon_term);
  EXPECT_EQ(w[2].script, Script::kOther);
  EXPECT_TRUE(classify_words("", lex).empty());
  const auto upper = classify_words("FEVER", lex);
  EXPECT_EQ(upper[0].script, Script::kDomainLatin);
  EXPECT_TRUE(upper[0].is_lexicon_term);
}

TEST(ClassifyWords, MixedScriptIsLatin) {
  EXPECT_EQ(classify_word("열a", ScriptRanges()), Script::kDomainLatin);
  EXPECT_EQ(classify_word("123", ScriptRanges()), Script::kOther);
  EXPECT_EQ(classify_word("열", ScriptRanges()), Script::kLocal);
}

TEST(Lexicon, LoadSaveAndRejects) {
  const auto path = std::filesystem::temp_directory_path() / "dsgkd_lexicon_test.txt";
  write_file_atomic(path, "# terms\nFever\n\nvomiting\n");
  const Lexicon lex = Lexicon::load(path);
  EXPECT_EQ(lex.size(), 2u);
  EXPECT_TRUE(lex.contains("FEVER"));
  lex.save(path);
  EXPECT_EQ(Lexicon::load(path).terms(), lex.terms());
  std::filesystem::remove(path);
  EXPECT_THROW(Lexicon({"two words"}), ValidationError);
  EXPECT_THROW(Lexicon({""}), ValidationError);
}

TEST(KnowledgeMask, NoDomainWords) {
  const auto tok = hand_tokens({-1, 0, 1, -1});
  const std::vector<WordAnnotation> ann = {word("열", Script::kLocal), word("3", Script::kOther)};
  const KnowledgeMask m = build_mask(tok, ann);
  EXPECT_EQ(m.k, 0);
  for (auto v : m.values) EXPECT_EQ(v, 0);
}

TEST(KnowledgeMask, TwoKnowledgeWords) {
  // [CLS] 열 vomi ##ting fever [SEP] [PAD]
  const auto tok = hand_tokens({-1, 0, 1, 1, 2, -1, -1});
  const std::vector<WordAnnotation> ann = {word("열", Script::kLocal),
                                           word("vomiting", Script::kDomainLatin),
                                           word("fever", Script::kDomainLatin)};
  const KnowledgeMask m = build_mask(tok, ann);
  EXPECT_EQ(m.k, 2);
  EXPECT_EQ(m.values, (std::vector<std::int32_t>{0, 0, 1, 1, 2, 0, 0}));
  EXPECT_EQ(m.knowledge_positions(), (std::vector<std::size_t>{2, 3, 4}));
}

TEST(KnowledgeMask, TruncatedWordIsRenumbered) {
  // Word 3 (knowledge) lost to truncation.
  const auto tok = hand_tokens({-1, 0, 1, 2, -1});
  const std::vector<WordAnnotation> ann = {
      word("a", Script::kDomainLatin), word("열", Script::kLocal), word("b", Script::kDomainLatin),
      word("c", Script::kDomainLatin)};
  const KnowledgeMask m = build_mask(tok, ann);
  EXPECT_EQ(m.k, 2);
  for (auto v : m.values) EXPECT_LE(v, 2);
}

TEST(KnowledgeMask, LexiconPolicyIsSubset) {
  const auto tok = hand_tokens({-1, 0, 1, 1, 2, -1});
  const std::vector<WordAnnotation> ann = {word("fever", Script::kDomainLatin, true),
                                           word("vomiting", Script::kDomainLatin, false),
                                           word("열", Script::kLocal, true)};
  const KnowledgeMask all = build_mask(tok, ann, MaskPolicy::kAllDomainScript);
  const KnowledgeMask lex = build_mask(tok, ann, MaskPolicy::kLexiconOnly);
  EXPECT_EQ(all.k, 2);
  EXPECT_EQ(lex.k, 1);
  for (std::size_t i = 0; i < lex.values.size(); ++i)
    if (lex.values[i] > 0) {
      EXPECT_GT(all.values[i], 0);
    }
}

TEST(KnowledgeMask, MisalignmentRaises) {
  const auto tok = hand_tokens({-1, 0, 3, -1});
  const std::vector<WordAnnotation> ann = {word("a", Script::kDomainLatin)};
  EXPECT_THROW(build_mask(tok, ann), ValidationError);
}

TEST(MaskPolicy, Names) {
  EXPECT_EQ(parse_mask_policy("all-domain"), MaskPolicy::kAllDomainScript);
  EXPECT_EQ(parse_mask_policy("lexicon"), MaskPolicy::kLexiconOnly);
  EXPECT_STREQ(mask_policy_name(MaskPolicy::kLexiconOnly), "lexicon");
  EXPECT_THROW(parse_mask_policy("x"), ValidationError);
}
