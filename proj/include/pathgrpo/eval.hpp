#pragma once

// Exact-match evaluation: greedy decoding over the template table, answer-tag
// accuracy under the reward engine's match rule, and output-length statistics.

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathgrpo/dataset.hpp"
#include "pathgrpo/reward.hpp"
#include "pathgrpo/tagged_output.hpp"
#include "pathgrpo/toy_policy.hpp"

namespace pathgrpo {

struct EvalItem {
  std::string id;
  std::string predicted;  // content of the answer tag, empty when absent
  bool correct = false;
  std::size_t tokens = 0;

  friend bool operator==(const EvalItem&, const EvalItem&) = default;
};

struct EvalReport {
  std::string checkpoint_id;
  SplitTag split = SplitTag::test;
  std::size_t n = 0;
  double accuracy = 0.0;
  double avg_tokens = 0.0;
  std::string normalization = std::string(kNormalizationVersion);
  std::vector<EvalItem> per_problem;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

enum class DecodeMode { greedy, sample };

/// Scores already-generated outputs, one per problem, in the same order.
inline EvalReport evaluate_outputs(std::string checkpoint_id, SplitTag split,
                                   const std::vector<Problem>& problems,
                                   const std::vector<std::string>& outputs,
                                   const TokenCounter& count_tokens = {}) {
  if (problems.empty()) throw ConfigError("evaluation needs at least one problem");
  if (problems.size() != outputs.size()) {
    throw ConfigError("evaluation got " + std::to_string(outputs.size()) + " outputs for " +
                      std::to_string(problems.size()) + " problems");
  }
  EvalReport rep;
  rep.checkpoint_id = std::move(checkpoint_id);
  rep.split = split;
  rep.n = problems.size();
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const TaggedOutput out = parse(outputs[i], count_tokens);
    EvalItem item;
    item.id = problems[i].id;
    item.predicted = out.answer.value_or("");
    item.correct = accuracy_reward(extract_answer(out), problems[i].gold) == 1.0;
    item.tokens = out.token_count;
    rep.per_problem.push_back(std::move(item));
  }
  std::stable_sort(rep.per_problem.begin(), rep.per_problem.end(),
                   [](const EvalItem& a, const EvalItem& b) { return a.id < b.id; });
  std::size_t correct = 0;
  double tokens = 0.0;
  for (const auto& item : rep.per_problem) {
    correct += item.correct ? 1 : 0;
    tokens += static_cast<double>(item.tokens);
  }
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(rep.n);
  rep.avg_tokens = tokens / static_cast<double>(rep.n);
  return rep;
}

/// Decodes one response per problem and scores it. Greedy decoding takes the
/// most probable template, breaking ties by the lowest template id.
inline EvalReport evaluate(const PolicyParams& params, const std::vector<Problem>& problems,
                           std::string checkpoint_id, SplitTag split,
                           DecodeMode mode = DecodeMode::greedy, std::uint64_t seed = 0,
                           std::size_t max_generation_tokens = 1024,
                           const TokenCounter& count_tokens = {}) {
  std::vector<std::string> outputs;
  outputs.reserve(problems.size());
  std::mt19937_64 rng(seed);
  for (const auto& p : problems) {
    const Eigen::VectorXd lp = template_logprobs(params, p);
    const std::size_t id =
        mode == DecodeMode::greedy ? argmax_template(lp) : draw_template(lp, rng);
    outputs.push_back(truncate_tokens(template_at(id).render(p), max_generation_tokens));
  }
  return evaluate_outputs(std::move(checkpoint_id), split, problems, outputs, count_tokens);
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : r.per_problem) {
    items.push_back(
        {{"id", it.id}, {"predicted", it.predicted}, {"correct", it.correct}, {"tokens", it.tokens}});
  }
  return {{"checkpoint_id", r.checkpoint_id},
          {"split", std::string(split_tag_name(r.split))},
          {"n", r.n},
          {"accuracy", r.accuracy},
          {"avg_tokens", r.avg_tokens},
          {"normalization", r.normalization},
          {"per_problem", std::move(items)}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
  r.split = parse_split_tag(j.at("split").get<std::string>());
  r.n = j.at("n").get<std::size_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.avg_tokens = j.at("avg_tokens").get<double>();
  r.normalization = j.value("normalization", r.normalization);
  for (const auto& it : j.at("per_problem")) {
    r.per_problem.push_back({it.at("id").get<std::string>(), it.at("predicted").get<std::string>(),
                             it.at("correct").get<bool>(), it.at("tokens").get<std::size_t>()});
  }
  return r;
}

namespace detail {

inline std::string exact_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline constexpr std::string_view kReportCsvHeader = "checkpoint_id,split,n,accuracy,avg_tokens";

/// One row per report, in the order given. Values print with enough digits to
/// round-trip exactly.
inline std::string compare_csv(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ConfigError("comparison needs at least one report");
  std::string out(kReportCsvHeader);
  out += '\n';
  for (const auto& r : reports) {
    out += r.checkpoint_id + "," + std::string(split_tag_name(r.split)) + "," +
           std::to_string(r.n) + "," + detail::exact_double(r.accuracy) + "," +
           detail::exact_double(r.avg_tokens) + "\n";
  }
  return out;
}

struct ReportSummary {
  std::string checkpoint_id;
  SplitTag split = SplitTag::test;
  std::size_t n = 0;
  double accuracy = 0.0;
  double avg_tokens = 0.0;
};

inline std::vector<ReportSummary> parse_compare_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kReportCsvHeader) {
    throw ConfigError("comparison CSV lacks the expected header");
  }
  std::vector<ReportSummary> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    if (cells.size() != 5) throw ConfigError("comparison CSV row has " + std::to_string(cells.size()) + " cells");
    rows.push_back({cells[0], parse_split_tag(cells[1]), std::stoul(cells[2]),
                    std::strtod(cells[3].c_str(), nullptr), std::strtod(cells[4].c_str(), nullptr)});
  }
  return rows;
}

/// Aligned text table of accuracy and average output tokens per checkpoint.
inline std::string compare(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ConfigError("comparison needs at least one report");
  std::size_t name_w = std::string_view("checkpoint").size();
  for (const auto& r : reports) name_w = std::max(name_w, r.checkpoint_id.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_w)) << "checkpoint" << "  "
      << std::setw(5) << "split" << "  " << std::right << std::setw(6) << "n" << "  "
      << std::setw(8) << "acc(%)" << "  " << std::setw(10) << "avg_tokens" << '\n';
  for (const auto& r : reports) {
    out << std::left << std::setw(static_cast<int>(name_w)) << r.checkpoint_id << "  "
        << std::setw(5) << split_tag_name(r.split) << "  " << std::right << std::setw(6) << r.n
        << "  " << std::setw(8) << std::fixed << std::setprecision(2) << r.accuracy * 100.0
        << "  " << std::setw(10) << r.avg_tokens << '\n';
  }
  return out.str();
}

}  // namespace pathgrpo
