#pragma once

// Process-reward judge protocol: request/verdict types, rubric prompt
// rendering, the chat-completions request body and lenient score extraction
// from the judge's reply.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <nlohmann/json.hpp>

#include "pathgrpo/dataset.hpp"
#include "pathgrpo/error.hpp"

namespace pathgrpo {

struct JudgeRequest {
  std::string question;
  std::string options;  // rendered "A. ...\nB. ..." block
  std::string gold;     // rendered "B. ..."
  std::string model_output;
  std::optional<std::string> image_ref;
  std::string rubric_version = "v1";
};

struct JudgeVerdict {
  double integrity_raw = 0.0;
  double knowledge_raw = 0.0;
  double integrity = 0.0;
  double knowledge = 0.0;
  int attempts = 1;
  std::int64_t latency_ms = 0;
};

enum class JudgeErrorKind { timeout, transport, malformed_reply, refused };

inline std::string_view judge_error_name(JudgeErrorKind k) noexcept {
  switch (k) {
    case JudgeErrorKind::timeout: return "timeout";
    case JudgeErrorKind::transport: return "transport";
    case JudgeErrorKind::malformed_reply: return "malformed-reply";
    case JudgeErrorKind::refused: return "refused";
  }
  return "unknown";
}

struct JudgeFailure {
  JudgeErrorKind kind = JudgeErrorKind::transport;
  std::string message;
  int attempts = 0;
};

using JudgeResult = std::variant<JudgeVerdict, JudgeFailure>;

inline bool judge_ok(const JudgeResult& r) noexcept {
  return std::holds_alternative<JudgeVerdict>(r);
}

/// Anything that can score a reasoning chain. Implementations must be safe to
/// call from several threads at once.
class ProcessJudge {
 public:
  virtual ~ProcessJudge() = default;
  virtual JudgeResult judge(const JudgeRequest& req) = 0;
};

// ---------------------------------------------------------------------------
// Rubric and prompt

struct Rubric {
  std::string version;
  std::string integrity_criteria;
  std::string knowledge_criteria;
};

inline const Rubric& rubric_v1() {
  static const Rubric r{
      "v1",
      "Completeness of the reasoning chain (full score 1). A complete chain "
      "includes the analysis of image features, stepwise elimination of options, "
      "and reference to medical knowledge. Subtract 0.4 for every step that is "
      "absent; the score does not go below 0.",
      "Reasonableness of medical knowledge (full score 1). Look for breaches of "
      "basic histological definitions, logical contradictions, and the use of "
      "outdated or inappropriate pathological standards. Subtract 0.4 for every "
      "problem found; the score does not go below 0.",
  };
  return r;
}

inline const Rubric& rubric_for(std::string_view version) {
  if (version == "v1") return rubric_v1();
  throw ConfigError("unknown rubric version '" + std::string(version) + "' (known: v1)");
}

inline std::string render_options(const Problem& p) {
  std::string out;
  for (const auto& o : p.options) {
    if (!out.empty()) out += '\n';
    out += o.letter;
    out += ". ";
    out += o.content;
  }
  return out;
}

inline std::string render_gold(const Problem& p) {
  return std::string(1, p.gold.letter) + ". " + p.gold.content;
}

inline JudgeRequest make_judge_request(const Problem& p, std::string_view model_output,
                                       std::string rubric_version = "v1") {
  return JudgeRequest{p.question,   render_options(p),  render_gold(p),
                      std::string(model_output), p.image_ref, std::move(rubric_version)};
}

inline constexpr std::string_view kNoImageSentinel = "No image provided.";

inline std::string render_prompt(const JudgeRequest& req) {
  const Rubric& rubric = rubric_for(req.rubric_version);
  std::string s;
  s += "You are an expert pathologist reviewing a model's answer to a multiple-choice "
       "question. Score the model output on the two criteria below.\n\n";
  s += "Rubric version: " + rubric.version + "\n";
  s += "Integrity: " + rubric.integrity_criteria + "\n";
  s += "Knowledge: " + rubric.knowledge_criteria + "\n\n";
  s += "### Image\n";
  s += req.image_ref ? "Image reference: " + *req.image_ref : std::string(kNoImageSentinel);
  s += "\n\n### Question\n" + req.question + "\n\n";
  s += "### Options\n" + req.options + "\n\n";
  s += "### Standard answer\n" + req.gold + "\n\n";
  s += "### Model output\n" + req.model_output + "\n\n";
  s += "Reply with a single JSON object {\"integrity\": x, \"knowledge\": y}, where x and y "
       "are the scores after deductions. Do not add any other text.\n";
  return s;
}

/// Chat-completions request body for `prompt`.
inline nlohmann::json build_request_body(const std::string& model, const std::string& prompt,
                                         const std::optional<std::string>& image_ref) {
  nlohmann::json content = nlohmann::json::array();
  content.push_back({{"type", "text"}, {"text", prompt}});
  if (image_ref) {
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", *image_ref}}}});
  }
  return {{"model", model},
          {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})}};
}

// ---------------------------------------------------------------------------
// Reply parsing

struct ScorePair {
  double integrity = 0.0;
  double knowledge = 0.0;
};

namespace detail {

// End index (exclusive) of the balanced JSON object starting at `open`, or
// npos. Braces inside string literals are ignored.
inline std::size_t balanced_object_end(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

}  // namespace detail

/// First JSON object embedded in `content` that carries numeric `integrity`
/// and `knowledge` fields. Surrounding prose is ignored.
inline std::optional<ScorePair> extract_scores(std::string_view content) {
  for (std::size_t open = content.find('{'); open != std::string_view::npos;
       open = content.find('{', open + 1)) {
    const std::size_t end = detail::balanced_object_end(content, open);
    if (end == std::string_view::npos) continue;
    auto j = nlohmann::json::parse(content.substr(open, end - open), nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;
    auto i = j.find("integrity");
    auto k = j.find("knowledge");
    if (i == j.end() || k == j.end() || !i->is_number() || !k->is_number()) continue;
    return ScorePair{i->get<double>(), k->get<double>()};
  }
  return std::nullopt;
}

// Raw scores inside this window are clamped to [0,1]; outside it the reply is
// treated as malformed.
inline constexpr double kScoreWindowLow = -0.5;
inline constexpr double kScoreWindowHigh = 1.5;

inline double clamp_unit(double v) noexcept { return std::clamp(v, 0.0, 1.0); }

inline bool in_score_window(double v) noexcept {
  return std::isfinite(v) && v >= kScoreWindowLow && v <= kScoreWindowHigh;
}

}  // namespace pathgrpo
