#include <gtest/gtest.h>

#include <random>
#include <regex>

#include "pathgrpo/tagged_output.hpp"

using namespace pathgrpo;

TEST(Parse, CanonicalCase) {
  const auto out = parse("<think>nuclei vary</think><answer>B. Pleomorphism</answer>");
  EXPECT_TRUE(out.well_formed);
  EXPECT_EQ(out.think.value(), "nuclei vary");
  EXPECT_EQ(out.answer.value(), "B. Pleomorphism");
}

TEST(Parse, AnswerOnlyIsMalformed) {
  const auto out = parse("<answer>B</answer>");
  EXPECT_FALSE(out.well_formed);
  EXPECT_FALSE(out.think.has_value());
  EXPECT_EQ(out.answer.value(), "B");
}

TEST(Parse, DuplicateAnswerIsMalformed) {
  const auto out = parse("<think>a</think><answer>x</answer><answer>y</answer>");
  EXPECT_FALSE(out.well_formed);
  EXPECT_EQ(out.answer.value(), "x");
}

TEST(Parse, EmptyAndGarbage) {
  EXPECT_FALSE(parse("").well_formed);
  EXPECT_EQ(parse("").token_count, 0u);
  EXPECT_FALSE(parse("</think><think>").well_formed);
  EXPECT_FALSE(parse("<think>").think.has_value());
}

TEST(Parse, OrderAndOutsideText) {
  EXPECT_FALSE(parse("<answer>B</answer><think>t</think>").well_formed);
  EXPECT_FALSE(parse("hi <think>t</think><answer>B</answer>").well_formed);
  EXPECT_FALSE(parse("<think>t</think> so <answer>B</answer>").well_formed);
  EXPECT_FALSE(parse("<think>t</think><answer>B</answer>.").well_formed);
  EXPECT_TRUE(parse("\n  <think> t </think>\n\n<answer> B </answer>\t\n").well_formed);
}

TEST(Parse, FieldsTrimmedAndTokensCounted) {
  const auto out = parse("<think>\n  two words \n</think> <answer>  C. Fibrosis </answer>");
  EXPECT_EQ(out.think.value(), "two words");
  EXPECT_EQ(out.answer.value(), "C. Fibrosis");
  EXPECT_EQ(out.token_count, 8u);
}

TEST(Parse, PluggableTokenCounter) {
  const TokenCounter by_char = [](std::string_view s) { return s.size(); };
  EXPECT_EQ(parse("abc def", by_char).token_count, 7u);
}

TEST(Parse, TruncateKeepsSpacing) {
  EXPECT_EQ(truncate_tokens("a  b\tc d", 3), "a  b\tc ");
  EXPECT_EQ(truncate_tokens("a b", 5), "a b");
  EXPECT_EQ(truncate_tokens("  a b", 0), "  ");
  EXPECT_EQ(whitespace_token_count(truncate_tokens("x y z w v", 2)), 2u);
}

TEST(ExtractAnswer, LeadingLetterForms) {
  EXPECT_EQ(extract_answer("B. Pleomorphism"), (ParsedAnswer{'B', "Pleomorphism"}));
  EXPECT_EQ(extract_answer("Pleomorphism"), (ParsedAnswer{std::nullopt, "Pleomorphism"}));
  EXPECT_EQ(extract_answer("b) pleomorphism"), (ParsedAnswer{'B', "pleomorphism"}));
  EXPECT_EQ(extract_answer("C: Necrosis"), (ParsedAnswer{'C', "Necrosis"}));
  EXPECT_EQ(extract_answer("D Necrosis"), (ParsedAnswer{'D', "Necrosis"}));
  EXPECT_EQ(extract_answer("A"), (ParsedAnswer{'A', std::nullopt}));
  EXPECT_EQ(extract_answer("A."), (ParsedAnswer{'A', std::nullopt}));
  EXPECT_EQ(extract_answer(""), ParsedAnswer{});
  // A word starting with a letter is content, not a lead.
  EXPECT_EQ(extract_answer("Amyloid"), (ParsedAnswer{std::nullopt, "Amyloid"}));
  EXPECT_EQ(extract_answer("A.B"), (ParsedAnswer{std::nullopt, "A.B"}));
}

TEST(ExtractAnswer, AbsentBlock) {
  EXPECT_EQ(extract_answer(parse("<think>x</think>")), ParsedAnswer{});
}

namespace {

// Independent oracle: a whole-string regex that forbids any tag inside the
// two blocks.
bool regex_well_formed(const std::string& raw) {
  static const std::regex re(
      R"(^\s*<think>((?:(?!</?think>|</?answer>)[\s\S])*)</think>\s*<answer>((?:(?!</?think>|</?answer>)[\s\S])*)</answer>\s*$)");
  return std::regex_match(raw, re);
}

std::string random_output(std::mt19937_64& rng) {
  static const std::vector<std::string> pieces = {
      "<think>", "</think>", "<answer>", "</answer>", " ", "\n", "\t", "B.", "x", "nuclei", "<", ">", "/"};
  std::string s;
  const int n = static_cast<int>(rng() % 9);
  for (int i = 0; i < n; ++i) s += pieces[rng() % pieces.size()];
  return s;
}

std::string wrap_canonical(std::mt19937_64& rng) {
  static const std::vector<std::string> ws = {"", " ", "\n", "\t "};
  static const std::vector<std::string> words = {"", "a", "b c", " d ", "B. e"};
  return ws[rng() % ws.size()] + "<think>" + words[rng() % words.size()] + "</think>" +
         ws[rng() % ws.size()] + "<answer>" + words[rng() % words.size()] + "</answer>" +
         ws[rng() % ws.size()];
}

}  // namespace

TEST(ParseProperty, AgreesWithRegexOracle) {
  std::mt19937_64 rng(2024);
  int positives = 0;
  for (int i = 0; i < 20000; ++i) {
    const std::string raw = (i % 4 == 0) ? wrap_canonical(rng) : random_output(rng);
    const bool expected = regex_well_formed(raw);
    positives += expected ? 1 : 0;
    ASSERT_EQ(parse(raw).well_formed, expected) << "input: [" << raw << "]";
  }
  EXPECT_GT(positives, 1000);
}

TEST(ParseProperty, DeterministicAndReserializable) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 5000; ++i) {
    const std::string raw = (i % 2 == 0) ? wrap_canonical(rng) : random_output(rng);
    const auto a = parse(raw);
    EXPECT_EQ(a, parse(raw));
    EXPECT_EQ(a.raw, raw);
    if (!a.well_formed) continue;
    const auto b = parse("<think>" + *a.think + "</think><answer>" + *a.answer + "</answer>");
    EXPECT_TRUE(b.well_formed);
    EXPECT_EQ(b.think, a.think);
    EXPECT_EQ(b.answer, a.answer);
  }
}
