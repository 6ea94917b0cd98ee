#pragma once

// Strict parser for the `<think>...</think><answer>...</answer>` response
// format and the leading-letter answer split.

#include <cctype>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace pathgrpo {

using TokenCounter = std::function<std::size_t(std::string_view)>;

inline bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline bool all_space(std::string_view s) noexcept { return trim(s).empty(); }

/// Default tokenizer contract: maximal runs of non-whitespace.
inline std::size_t whitespace_token_count(std::string_view s) noexcept {
  std::size_t n = 0;
  bool in_token = false;
  for (char c : s) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++n;
    }
  }
  return n;
}

/// Keeps the first `max_tokens` whitespace tokens of `s`, preserving the
/// original spacing between them.
inline std::string truncate_tokens(std::string_view s, std::size_t max_tokens) {
  std::size_t n = 0;
  bool in_token = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (is_space(s[i])) {
      in_token = false;
    } else if (!in_token) {
      if (n == max_tokens) return std::string(s.substr(0, i));
      in_token = true;
      ++n;
    }
  }
  return std::string(s);
}

struct TaggedOutput {
  std::string raw;
  std::optional<std::string> think;
  std::optional<std::string> answer;
  bool well_formed = false;
  std::size_t token_count = 0;

  friend bool operator==(const TaggedOutput&, const TaggedOutput&) = default;
};

struct ParsedAnswer {
  std::optional<char> letter;
  std::optional<std::string> content;

  friend bool operator==(const ParsedAnswer&, const ParsedAnswer&) = default;
};

namespace detail {

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";

inline std::size_t count_occurrences(std::string_view hay, std::string_view needle) noexcept {
  std::size_t n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string_view::npos;
       pos = hay.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

struct Block {
  std::size_t open = std::string_view::npos;   // index of the opening tag
  std::size_t close = std::string_view::npos;  // index of the closing tag
  bool found() const noexcept { return open != std::string_view::npos; }
};

// First opening tag together with the first closing tag after it.
inline Block first_block(std::string_view s, std::string_view open, std::string_view close) {
  Block b;
  const std::size_t o = s.find(open);
  if (o == std::string_view::npos) return b;
  const std::size_t c = s.find(close, o + open.size());
  if (c == std::string_view::npos) return b;
  b.open = o;
  b.close = c;
  return b;
}

}  // namespace detail

/// Total: never throws on any input. Malformation is reported through
/// `well_formed`.
inline TaggedOutput parse(std::string_view raw, const TokenCounter& count_tokens) {
  using namespace detail;
  TaggedOutput out;
  out.raw = std::string(raw);
  out.token_count = count_tokens ? count_tokens(raw) : whitespace_token_count(raw);

  const Block think = first_block(raw, kThinkOpen, kThinkClose);
  const Block answer = first_block(raw, kAnswerOpen, kAnswerClose);
  if (think.found()) {
    const std::size_t begin = think.open + kThinkOpen.size();
    out.think = std::string(trim(raw.substr(begin, think.close - begin)));
  }
  if (answer.found()) {
    const std::size_t begin = answer.open + kAnswerOpen.size();
    out.answer = std::string(trim(raw.substr(begin, answer.close - begin)));
  }

  const bool one_each = count_occurrences(raw, kThinkOpen) == 1 &&
                        count_occurrences(raw, kThinkClose) == 1 &&
                        count_occurrences(raw, kAnswerOpen) == 1 &&
                        count_occurrences(raw, kAnswerClose) == 1;
  if (one_each && think.found() && answer.found() && think.close < answer.open) {
    const std::size_t think_end = think.close + kThinkClose.size();
    const std::size_t answer_end = answer.close + kAnswerClose.size();
    out.well_formed = all_space(raw.substr(0, think.open)) &&
                      all_space(raw.substr(think_end, answer.open - think_end)) &&
                      all_space(raw.substr(answer_end));
  }
  return out;
}

inline TaggedOutput parse(std::string_view raw) { return parse(raw, TokenCounter{}); }

/// Splits an answer block into its leading option letter and content.
/// Recognized leads: `X`, `X.`, `X)`, `X:` followed by whitespace or end of
/// text; the letter is upper-cased.
inline ParsedAnswer extract_answer(std::string_view answer_text) {
  ParsedAnswer pa;
  std::string_view s = trim(answer_text);
  if (s.empty()) return pa;

  const unsigned char first = static_cast<unsigned char>(s[0]);
  if (std::isalpha(first) && first < 0x80) {
    std::size_t i = 1;
    bool lead = false;
    if (i == s.size() || is_space(s[i])) {
      lead = true;
    } else if (s[i] == '.' || s[i] == ')' || s[i] == ':') {
      ++i;
      lead = i == s.size() || is_space(s[i]);
    }
    if (lead) {
      pa.letter = static_cast<char>(std::toupper(first));
      s = trim(s.substr(i));
    }
  }
  if (!s.empty()) pa.content = std::string(s);
  return pa;
}

inline ParsedAnswer extract_answer(const TaggedOutput& out) {
  if (!out.answer) return {};
  return extract_answer(*out.answer);
}

}  // namespace pathgrpo
