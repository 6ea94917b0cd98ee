#pragma once

// Plumbing behind the command-line tool: configuration layering
// (file < environment < command line), override validation and the
// subcommand bodies. Argument parsing itself lives in tools/.

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathgrpo/dataset.hpp"
#include "pathgrpo/error.hpp"
#include "pathgrpo/eval.hpp"
#include "pathgrpo/judge_client.hpp"
#include "pathgrpo/pipeline.hpp"
#include "pathgrpo/reward.hpp"

namespace pathgrpo::cli {

/// Bad invocation or unreadable input; maps to exit status 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline constexpr std::string_view kEnvPrefix = "PATHGRPO_";

inline void require_file(const std::string& path, std::string_view what) {
  if (path.empty()) throw UsageError(std::string(what) + " path is empty");
  if (!std::filesystem::is_regular_file(path)) {
    throw UsageError(std::string(what) + " not found: '" + path + "'");
  }
}

inline std::string read_file(const std::string& path, std::string_view what) {
  require_file(path, what);
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline nlohmann::json read_json_file(const std::string& path, std::string_view what) {
  auto j = nlohmann::json::parse(read_file(path, what), nullptr, false);
  if (j.is_discarded()) throw ConfigError(std::string(what) + " '" + path + "' is not valid JSON");
  return j;
}

// ---------------------------------------------------------------------------
// Override keys

/// Every key accepted by --override and by PATHGRPO_* environment variables.
inline const std::vector<std::string>& valid_override_keys() {
  static const std::vector<std::string> keys = {
      "seed",
      "init_checkpoint",
      "grpo.group_size",
      "grpo.clip_epsilon",
      "grpo.kl_beta",
      "grpo.std_floor",
      "train.learning_rate",
      "train.feature_dim",
      "train.letter_slots",
      "train.judge_abort_threshold",
      "train.judge_window",
      "lengths.max_prompt_tokens",
      "lengths.max_generation_tokens",
      "steps.sft",
      "steps.rl_outcome",
      "steps.rl_process",
      "judge.endpoint_url",
      "judge.model",
      "judge.timeout_ms",
      "judge.max_retries",
      "judge.backoff_base_ms",
      "judge.max_concurrent",
      "judge.auth_token_env",
      "judge.rubric_version",
      "judge.test_mode",
      "judge.jitter_seed",
  };
  return keys;
}

inline std::string joined_keys() {
  std::string out;
  for (const auto& k : valid_override_keys()) out += (out.empty() ? "" : ", ") + k;
  return out;
}

/// grpo.group_size -> PATHGRPO_GRPO_GROUP_SIZE
inline std::string env_name_for(std::string_view key) {
  std::string out(kEnvPrefix);
  for (char c : key) {
    out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

using Overrides = std::vector<std::pair<std::string, std::string>>;

inline std::pair<std::string, std::string> parse_override(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw UsageError("override '" + std::string(text) + "' is not of the form key=value");
  }
  std::string key(text.substr(0, eq));
  const auto& keys = valid_override_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    throw UsageError("unknown override key '" + key + "' (valid keys: " + joined_keys() + ")");
  }
  return {std::move(key), std::string(text.substr(eq + 1))};
}

inline Overrides parse_overrides(const std::vector<std::string>& texts) {
  Overrides out;
  for (const auto& t : texts) out.push_back(parse_override(t));
  return out;
}

/// Values for every valid key found in `env` (defaults to the process environment).
inline Overrides environment_overrides(
    const std::function<const char*(const char*)>& env = [](const char* n) { return std::getenv(n); }) {
  Overrides out;
  for (const auto& key : valid_override_keys()) {
    if (const char* v = env(env_name_for(key).c_str())) out.emplace_back(key, v);
  }
  return out;
}

/// Numbers, booleans and null parse as JSON; anything else is a string.
inline nlohmann::json override_value(const std::string& text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || j.is_object() || j.is_array()) return text;
  return j;
}

inline void apply_override(nlohmann::json& manifest, nlohmann::json& judge, const std::string& key,
                           const std::string& value) {
  const nlohmann::json v = override_value(value);
  const auto dot = key.find('.');
  if (dot == std::string::npos) {
    manifest[key] = v;
    return;
  }
  const std::string head = key.substr(0, dot);
  const std::string tail = key.substr(dot + 1);
  if (head == "judge") {
    judge[tail] = v;
  } else if (head == "steps") {
    for (auto& s : manifest["stage_sequence"]) {
      if (s.at("name") == tail) s["steps"] = v;
    }
  } else {
    manifest[head][tail] = v;
  }
}

struct LayeredConfig {
  RunManifest manifest;
  std::optional<JudgeConfig> judge;
};

/// Manifest and judge configuration with environment and command-line
/// overrides applied in that order on top of the files.
inline LayeredConfig layer_config(const nlohmann::json& manifest_file,
                                  const std::optional<nlohmann::json>& judge_file,
                                  const Overrides& env, const Overrides& cli,
                                  std::optional<std::uint64_t> seed_flag = std::nullopt) {
  nlohmann::json m = manifest_to_json(manifest_from_json(manifest_file));
  m.erase("checkpoints");
  nlohmann::json j = judge_file ? *judge_file : nlohmann::json(JudgeConfig{});
  bool judge_touched = judge_file.has_value();
  for (const auto* layer : {&env, &cli}) {
    for (const auto& [k, v] : *layer) {
      apply_override(m, j, k, v);
      judge_touched = judge_touched || k.rfind("judge.", 0) == 0;
    }
  }
  if (seed_flag) m["seed"] = *seed_flag;
  LayeredConfig out;
  out.manifest = manifest_from_json(m);
  if (judge_touched) {
    try {
      out.judge = j.get<JudgeConfig>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed judge config: ") + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

struct TrainArgs {
  std::string manifest_path;
  std::string dataset_path;
  std::optional<std::string> judge_config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
  require_file(a.dataset_path, "dataset");
  const auto manifest_json = read_json_file(a.manifest_path, "manifest");
  std::optional<nlohmann::json> judge_json;
  if (a.judge_config_path) judge_json = read_json_file(*a.judge_config_path, "judge config");
  const LayeredConfig cfg =
      layer_config(manifest_json, judge_json, environment_overrides(), parse_overrides(a.overrides), a.seed);

  const Dataset ds = load_dataset(a.dataset_path);
  std::unique_ptr<JudgeClient> judge;
  if (cfg.manifest.needs_judge()) {
    if (!cfg.judge) throw UsageError("manifest has an rl_process stage; pass --judge-config");
    judge = std::make_unique<JudgeClient>(*cfg.judge);
  }
  const ProtocolResult r = run_protocol(cfg.manifest, ds.problems, judge.get(), a.out_dir);
  for (const auto& c : r.manifest.checkpoints) {
    out << c.stage << " step " << c.step << " -> " << c.path << '\n';
  }
  return kExitOk;
}

struct EvalArgs {
  std::vector<std::string> checkpoint_paths;
  std::string dataset_path;
  std::string split = "test";
  std::string format = "json";
  std::optional<std::string> out_path;
  std::size_t max_generation_tokens = 1024;
};

/// Checkpoint id used in reports: file name without extension.
inline std::string checkpoint_id_for(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

inline std::string eval_report_text(const EvalArgs& a) {
  if (a.format != "json" && a.format != "csv" && a.format != "table") {
    throw UsageError("unknown format '" + a.format + "' (valid: json, csv, table)");
  }
  SplitTag split;
  try {
    split = parse_split_tag(a.split);
  } catch (const DatasetError& e) {
    throw UsageError(e.what());
  }
  if (a.checkpoint_paths.empty()) throw UsageError("at least one --checkpoint is required");
  for (const auto& c : a.checkpoint_paths) require_file(c, "checkpoint");
  require_file(a.dataset_path, "dataset");
  const Dataset ds = load_dataset(a.dataset_path);
  const auto problems = select_split(ds.problems, split);
  if (problems.empty()) {
    throw ConfigError("dataset '" + a.dataset_path + "' has no problems in split '" + a.split + "'");
  }
  std::vector<EvalReport> reports;
  for (const auto& c : a.checkpoint_paths) {
    const Checkpoint ck = load_checkpoint(c);
    reports.push_back(evaluate(ck.policy.current, problems, checkpoint_id_for(c), split,
                               DecodeMode::greedy, 0, a.max_generation_tokens));
  }
  if (a.format == "csv") return compare_csv(reports);
  if (a.format == "table") return compare(reports);
  if (reports.size() == 1) return report_to_json(reports.front()).dump(2) + "\n";
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(report_to_json(r));
  return arr.dump(2) + "\n";
}

inline void emit(const std::string& text, const std::optional<std::string>& path, std::ostream& out) {
  if (!path) {
    out << text;
    return;
  }
  std::ofstream f(*path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write '" + *path + "'");
  f << text;
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  emit(eval_report_text(a), a.out_path, out);
  return kExitOk;
}

struct ScoreArgs {
  std::string problems_path;
  std::string outputs_path;
  std::string plan = "stage2";
  std::optional<std::string> judge_config_path;
};

inline RewardPlan plan_named(const std::string& name) {
  if (name == "stage2") return outcome_plan();
  if (name == "stage3") return process_plan();
  throw UsageError("unknown reward plan '" + name + "' (valid: stage2, stage3)");
}

/// One output per line. A line that is a JSON string literal is decoded, so
/// outputs containing newlines can be stored escaped.
inline std::vector<std::string> read_outputs(const std::string& path) {
  std::istringstream in(read_file(path, "outputs file"));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line.front() == '"') {
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_string()) {
        out.push_back(j.get<std::string>());
        continue;
      }
    }
    out.push_back(line);
  }
  while (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

inline int cmd_score(const ScoreArgs& a, std::ostream& out) {
  const RewardPlan plan = plan_named(a.plan);
  std::unique_ptr<JudgeClient> judge;
  if (plan.use_process) {
    if (!a.judge_config_path) {
      throw UsageError("plan '" + a.plan + "' uses the process reward; pass --judge-config");
    }
    nlohmann::json j = read_json_file(*a.judge_config_path, "judge config");
    nlohmann::json unused;
    for (const auto& [k, v] : environment_overrides()) {
      if (k.rfind("judge.", 0) == 0) apply_override(unused, j, k, v);
    }
    try {
      judge = std::make_unique<JudgeClient>(j.get<JudgeConfig>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed judge config: ") + e.what());
    }
  }
  require_file(a.problems_path, "problems file");
  const Dataset ds = load_dataset(a.problems_path);
  const auto outputs = read_outputs(a.outputs_path);
  if (outputs.size() != ds.problems.size()) {
    throw ConfigError("problems file has " + std::to_string(ds.problems.size()) +
                      " records but outputs file has " + std::to_string(outputs.size()) + " lines");
  }
  const std::string rubric = judge ? judge->config().rubric_version : "v1";
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const RewardBreakdown b = score_response(ds.problems[i], outputs[i], plan, judge.get(), rubric);
    nlohmann::json line = breakdown_to_json(b, plan);
    line["id"] = ds.problems[i].id;
    out << line.dump() << '\n';
  }
  return kExitOk;
}

struct SplitArgs {
  std::string dataset_path;
  std::string out_path;
  std::uint64_t seed = 0;
  SplitSizes sizes;
};

inline SplitSizes parse_sizes(const std::string& text) {
  std::vector<std::size_t> v;
  std::stringstream ss(text);
  for (std::string cell; std::getline(ss, cell, ',');) {
    if (cell.empty() || cell.find_first_not_of("0123456789") != std::string::npos) {
      throw UsageError("split sizes must be three non-negative integers: '" + text + "'");
    }
    v.push_back(std::stoull(cell));
  }
  if (v.size() != 3) throw UsageError("split sizes must be sft,rl,test: '" + text + "'");
  return {v[0], v[1], v[2]};
}

inline int cmd_split(const SplitArgs& a, std::ostream& out) {
  require_file(a.dataset_path, "dataset");
  const Dataset ds = load_dataset(a.dataset_path);
  const SplitResult r = split(ds.problems, a.seed, a.sizes);
  std::vector<Problem> all;
  for (const auto* part : {&r.sft, &r.rl, &r.test}) all.insert(all.end(), part->begin(), part->end());
  write_dataset(a.out_path, all);
  const Dataset written = load_dataset(a.out_path);
  nlohmann::json counts(written.manifest.counts);
  out << nlohmann::json{{"path", written.manifest.path},
                        {"counts", counts},
                        {"checksum", written.manifest.checksum}}
             .dump()
      << '\n';
  return kExitOk;
}

/// Runs `body`, mapping errors to exit codes with a diagnostic on `err`.
template <class F>
int guarded(F&& body, std::ostream& err) {
  try {
    return body();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace pathgrpo::cli
