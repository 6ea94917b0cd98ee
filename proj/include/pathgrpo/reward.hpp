#pragma once

// Reward channels: format, outcome accuracy and the judge-scored process
// reward, plus the stage-dependent combination into a single scalar.

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "pathgrpo/dataset.hpp"
#include "pathgrpo/error.hpp"
#include "pathgrpo/judge_protocol.hpp"
#include "pathgrpo/tagged_output.hpp"

namespace pathgrpo {

inline constexpr double kRubricDeduction = 0.4;

/// Version tag of the answer normalization applied before comparison.
inline constexpr std::string_view kNormalizationVersion = "norm-v1";

enum class JudgeStatus { ok, failed, skipped };

inline std::string_view judge_status_name(JudgeStatus s) noexcept {
  switch (s) {
    case JudgeStatus::ok: return "ok";
    case JudgeStatus::failed: return "failed";
    case JudgeStatus::skipped: return "skipped";
  }
  return "unknown";
}

struct RewardBreakdown {
  double format = 0.0;
  double accuracy = 0.0;
  double integrity = 0.0;
  double knowledge = 0.0;
  double process = 0.0;
  double total = 0.0;
  JudgeStatus judge_status = JudgeStatus::skipped;
};

struct RewardWeights {
  double format = 1.0;
  double accuracy = 1.0;
  double process = 1.0;
};

struct RewardPlan {
  bool use_format = true;
  bool use_accuracy = true;
  bool use_process = false;
  RewardWeights weights;

  void validate() const {
    if (!use_format && !use_accuracy && !use_process) {
      throw ConfigError("reward plan must enable at least one channel");
    }
    if (weights.format < 0 || weights.accuracy < 0 || weights.process < 0) {
      throw ConfigError("reward weights must be non-negative");
    }
  }

  double max_total() const noexcept {
    return (use_format ? weights.format : 0.0) + (use_accuracy ? weights.accuracy : 0.0) +
           (use_process ? weights.process : 0.0);
  }
};

/// Accuracy and format only.
inline RewardPlan outcome_plan() { return RewardPlan{true, true, false, {}}; }

/// Accuracy, format and the judge-scored process reward.
inline RewardPlan process_plan() { return RewardPlan{true, true, true, {}}; }

inline void to_json(nlohmann::json& j, const RewardPlan& p) {
  j = {{"use_format", p.use_format},
       {"use_accuracy", p.use_accuracy},
       {"use_process", p.use_process},
       {"weights",
        {{"format", p.weights.format},
         {"accuracy", p.weights.accuracy},
         {"process", p.weights.process}}}};
}

inline void from_json(const nlohmann::json& j, RewardPlan& p) {
  p = RewardPlan{};
  p.use_format = j.value("use_format", p.use_format);
  p.use_accuracy = j.value("use_accuracy", p.use_accuracy);
  p.use_process = j.value("use_process", p.use_process);
  if (auto w = j.find("weights"); w != j.end()) {
    p.weights.format = w->value("format", 1.0);
    p.weights.accuracy = w->value("accuracy", 1.0);
    p.weights.process = w->value("process", 1.0);
  }
  p.validate();
}

inline double format_reward(const TaggedOutput& out) noexcept { return out.well_formed ? 1.0 : 0.0; }

/// trim, ASCII case-fold, collapse internal whitespace runs to one space,
/// drop one trailing period.
inline std::string normalize_content(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (!out.empty() && out.back() == '.') out.pop_back();
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

inline double accuracy_reward(const ParsedAnswer& ans, const Option& gold) {
  if (!ans.letter || !ans.content) return 0.0;
  if (*ans.letter != gold.letter) return 0.0;
  return normalize_content(*ans.content) == normalize_content(gold.content) ? 1.0 : 0.0;
}

struct RubricScores {
  double integrity = 1.0;
  double knowledge = 1.0;
};

/// 1 minus 0.4 per defect, floored at 0.
inline double rubric_score(int defects) {
  if (defects < 0) throw ConfigError("rubric defect count must be >= 0");
  return std::max(0.0, 1.0 - kRubricDeduction * defects);
}

inline RubricScores rubric_scores(int missing_steps, int infractions) {
  return {rubric_score(missing_steps), rubric_score(infractions)};
}

inline double total_reward(const RewardBreakdown& b, const RewardPlan& plan) noexcept {
  double t = 0.0;
  if (plan.use_format) t += plan.weights.format * b.format;
  if (plan.use_accuracy) t += plan.weights.accuracy * b.accuracy;
  if (plan.use_process) t += plan.weights.process * b.process;
  return t;
}

/// parse -> extract -> channels -> total. The judge is consulted only when
/// the plan enables the process channel and the output is well-formed; a
/// malformed output has no reasoning chain to grade and scores process 0.
inline RewardBreakdown score_response(const Problem& problem, std::string_view raw,
                                      const RewardPlan& plan, ProcessJudge* judge,
                                      const std::string& rubric_version = "v1") {
  if (plan.use_process && judge == nullptr) {
    throw ConfigError("reward plan enables the process channel but no judge is configured");
  }
  const TaggedOutput out = parse(raw);
  RewardBreakdown b;
  b.format = format_reward(out);
  b.accuracy = accuracy_reward(extract_answer(out), problem.gold);

  if (plan.use_process && out.well_formed) {
    const JudgeResult r = judge->judge(make_judge_request(problem, raw, rubric_version));
    if (const auto* v = std::get_if<JudgeVerdict>(&r)) {
      b.integrity = v->integrity;
      b.knowledge = v->knowledge;
      b.process = (v->integrity + v->knowledge) / 2.0;
      b.judge_status = JudgeStatus::ok;
    } else {
      b.judge_status = JudgeStatus::failed;
    }
  }
  b.total = total_reward(b, plan);
  return b;
}

/// Only enabled channels are emitted.
inline nlohmann::json breakdown_to_json(const RewardBreakdown& b, const RewardPlan& plan) {
  nlohmann::json j;
  if (plan.use_format) j["format"] = b.format;
  if (plan.use_accuracy) j["accuracy"] = b.accuracy;
  if (plan.use_process) {
    j["integrity"] = b.integrity;
    j["knowledge"] = b.knowledge;
    j["process"] = b.process;
  }
  j["total"] = b.total;
  j["judge_status"] = std::string(judge_status_name(b.judge_status));
  return j;
}

}  // namespace pathgrpo
