#pragma once

// Staged post-training: supervised fine-tuning, GRPO with outcome rewards,
// then GRPO with the judge-scored process reward added. The same machinery
// runs the control-arm variants.

#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathgrpo/dataset.hpp"
#include "pathgrpo/error.hpp"
#include "pathgrpo/grpo.hpp"
#include "pathgrpo/judge_protocol.hpp"
#include "pathgrpo/reward.hpp"
#include "pathgrpo/tagged_output.hpp"
#include "pathgrpo/toy_policy.hpp"

namespace pathgrpo {

class PipelineError : public Error {
 public:
  using Error::Error;
};

enum class StageKind { sft, rl_outcome, rl_process };

inline std::string_view stage_kind_name(StageKind k) noexcept {
  switch (k) {
    case StageKind::sft: return "sft";
    case StageKind::rl_outcome: return "rl_outcome";
    case StageKind::rl_process: return "rl_process";
  }
  return "unknown";
}

inline StageKind parse_stage_kind(std::string_view s) {
  if (s == "sft") return StageKind::sft;
  if (s == "rl_outcome") return StageKind::rl_outcome;
  if (s == "rl_process") return StageKind::rl_process;
  throw ConfigError("unknown stage '" + std::string(s) + "' (valid: sft, rl_outcome, rl_process)");
}

inline constexpr std::size_t kDefaultSftSteps = 18000;
inline constexpr std::size_t kDefaultRlOutcomeSteps = 2000;
inline constexpr std::size_t kDefaultRlProcessSteps = 2000;

struct StageSpec {
  StageKind name = StageKind::sft;
  std::string tag;  // checkpoint label, e.g. "alpha"
  std::size_t steps = kDefaultSftSteps;
  RewardPlan reward_plan = outcome_plan();
  SplitTag data_split = SplitTag::sft;
  std::size_t snapshot_every = 0;  // intermediate checkpoints; 0 = final only

  void validate() const {
    if (tag.empty()) throw ConfigError("stage " + std::string(stage_kind_name(name)) + " needs a tag");
    if (name == StageKind::rl_process && !reward_plan.use_process) {
      throw ConfigError("stage '" + tag + "': rl_process requires the process reward channel");
    }
    if (name == StageKind::rl_outcome && reward_plan.use_process) {
      throw ConfigError("stage '" + tag + "': rl_outcome must not use the process reward channel");
    }
    if (name != StageKind::sft) reward_plan.validate();
  }
};

inline StageSpec sft_stage(std::string tag, SplitTag split = SplitTag::sft,
                           std::size_t steps = kDefaultSftSteps) {
  return {StageKind::sft, std::move(tag), steps, outcome_plan(), split, 0};
}

inline StageSpec rl_outcome_stage(std::string tag, std::size_t steps = kDefaultRlOutcomeSteps) {
  return {StageKind::rl_outcome, std::move(tag), steps, outcome_plan(), SplitTag::rl, 0};
}

inline StageSpec rl_process_stage(std::string tag, std::size_t steps = kDefaultRlProcessSteps) {
  return {StageKind::rl_process, std::move(tag), steps, process_plan(), SplitTag::rl, 0};
}

struct SequenceLengths {
  std::size_t max_prompt_tokens = 1024;
  std::size_t max_generation_tokens = 1024;
};

struct TrainConfig {
  double learning_rate = 0.1;
  std::size_t feature_dim = kDefaultFeatureDim;
  std::size_t letter_slots = kDefaultLetterSlots;
  double judge_abort_threshold = 0.2;  // failure fraction within a window
  std::size_t judge_window = 100;      // calls
};

struct CheckpointRecord {
  std::string stage;  // stage tag
  std::size_t stage_index = 0;
  std::size_t step = 0;
  std::string path;
  nlohmann::json metrics;
};

struct RunManifest {
  std::vector<StageSpec> stage_sequence;
  std::uint64_t seed = 0;
  GrpoConfig grpo;
  SequenceLengths lengths;
  TrainConfig train;
  std::optional<std::string> init_checkpoint;  // start from this instead of fresh params
  std::vector<CheckpointRecord> checkpoints;   // filled in by run_protocol

  void validate() const {
    if (stage_sequence.empty()) throw ConfigError("manifest has no stages");
    for (const auto& s : stage_sequence) s.validate();
    grpo.validate();
    if (!(train.learning_rate > 0)) throw ConfigError("train.learning_rate must be > 0");
    if (train.letter_slots < 2 || train.letter_slots > kMaxOptions) {
      throw ConfigError("policy.letter_slots must be in [2, 8]");
    }
    if (train.judge_window == 0) throw ConfigError("judge.abort_window must be > 0");
  }

  bool needs_judge() const {
    for (const auto& s : stage_sequence) {
      if (s.reward_plan.use_process && s.name != StageKind::sft) return true;
    }
    return false;
  }
};

/// SFT -> RL(outcome) -> RL(outcome + process): alpha, beta, r1.
inline RunManifest default_manifest() {
  RunManifest m;
  m.stage_sequence = {sft_stage("alpha"), rl_outcome_stage("beta"), rl_process_stage("r1")};
  return m;
}

/// Control arms. delta: SFT only on the RL split. epsilon: RL(outcome) on
/// fresh parameters. gamma: SFT, then more SFT on the RL split.
inline RunManifest variant_manifest(std::string_view name) {
  RunManifest m;
  if (name == "default" || name == "r1") {
    return default_manifest();
  } else if (name == "delta") {
    m.stage_sequence = {sft_stage("delta", SplitTag::rl, kDefaultRlOutcomeSteps)};
  } else if (name == "epsilon") {
    m.stage_sequence = {rl_outcome_stage("epsilon")};
  } else if (name == "gamma") {
    m.stage_sequence = {sft_stage("alpha"), sft_stage("gamma", SplitTag::rl, kDefaultRlOutcomeSteps)};
  } else {
    throw ConfigError("unknown variant '" + std::string(name) +
                      "' (valid: default, delta, epsilon, gamma)");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Manifest (de)serialization

inline nlohmann::json stage_to_json(const StageSpec& s) {
  return {{"name", std::string(stage_kind_name(s.name))},
          {"tag", s.tag},
          {"steps", s.steps},
          {"reward_plan", s.reward_plan},
          {"data_split", std::string(split_tag_name(s.data_split))},
          {"snapshot_every", s.snapshot_every}};
}

inline StageSpec stage_from_json(const nlohmann::json& j) {
  StageSpec s;
  s.name = parse_stage_kind(j.at("name").get<std::string>());
  switch (s.name) {
    case StageKind::sft: s = sft_stage(""); break;
    case StageKind::rl_outcome: s = rl_outcome_stage(""); break;
    case StageKind::rl_process: s = rl_process_stage(""); break;
  }
  s.tag = j.value("tag", std::string(stage_kind_name(s.name)));
  s.steps = j.value("steps", s.steps);
  if (j.contains("reward_plan")) s.reward_plan = j["reward_plan"].get<RewardPlan>();
  if (j.contains("data_split")) s.data_split = parse_split_tag(j["data_split"].get<std::string>());
  s.snapshot_every = j.value("snapshot_every", s.snapshot_every);
  s.validate();
  return s;
}

inline nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : m.stage_sequence) stages.push_back(stage_to_json(s));
  nlohmann::json cks = nlohmann::json::array();
  for (const auto& c : m.checkpoints) {
    cks.push_back({{"stage", c.stage},
                   {"stage_index", c.stage_index},
                   {"step", c.step},
                   {"path", c.path},
                   {"metrics", c.metrics}});
  }
  nlohmann::json j = {
      {"stage_sequence", std::move(stages)},
      {"seed", m.seed},
      {"grpo", m.grpo},
      {"lengths",
       {{"max_prompt_tokens", m.lengths.max_prompt_tokens},
        {"max_generation_tokens", m.lengths.max_generation_tokens}}},
      {"train",
       {{"learning_rate", m.train.learning_rate},
        {"feature_dim", m.train.feature_dim},
        {"letter_slots", m.train.letter_slots},
        {"judge_abort_threshold", m.train.judge_abort_threshold},
        {"judge_window", m.train.judge_window}}},
      {"checkpoints", std::move(cks)}};
  j["init_checkpoint"] = m.init_checkpoint ? nlohmann::json(*m.init_checkpoint) : nlohmann::json();
  return j;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    if (auto v = j.find("variant"); v != j.end()) m = variant_manifest(v->get<std::string>());
    if (j.contains("stage_sequence")) {
      m.stage_sequence.clear();
      for (const auto& s : j["stage_sequence"]) m.stage_sequence.push_back(stage_from_json(s));
    }
    m.seed = j.value("seed", m.seed);
    if (j.contains("grpo")) m.grpo = j["grpo"].get<GrpoConfig>();
    if (auto l = j.find("lengths"); l != j.end()) {
      m.lengths.max_prompt_tokens = l->value("max_prompt_tokens", m.lengths.max_prompt_tokens);
      m.lengths.max_generation_tokens =
          l->value("max_generation_tokens", m.lengths.max_generation_tokens);
    }
    if (auto t = j.find("train"); t != j.end()) {
      m.train.learning_rate = t->value("learning_rate", m.train.learning_rate);
      m.train.feature_dim = t->value("feature_dim", m.train.feature_dim);
      m.train.letter_slots = t->value("letter_slots", m.train.letter_slots);
      m.train.judge_abort_threshold = t->value("judge_abort_threshold", m.train.judge_abort_threshold);
      m.train.judge_window = t->value("judge_window", m.train.judge_window);
    }
    if (auto c = j.find("init_checkpoint"); c != j.end() && !c->is_null()) {
      m.init_checkpoint = c->get<std::string>();
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run manifest: ") + e.what());
  }
}

inline RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read manifest '" + path + "'");
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("manifest '" + path + "' is not valid JSON");
  return manifest_from_json(j);
}

// ---------------------------------------------------------------------------
// Snapshots

inline void snapshot(const PolicyTriple& policy, const std::string& path,
                     const std::string& stage = "", std::size_t step = 0) {
  save_checkpoint(path, Checkpoint{policy, stage, step});
}

inline PolicyTriple restore(const std::string& path) { return load_checkpoint(path).policy; }

// ---------------------------------------------------------------------------
// Training loop

struct MetricsRecord {
  std::string stage;
  std::size_t step = 0;
  double mean_format = 0.0;
  double mean_accuracy = 0.0;
  double mean_process = 0.0;
  double mean_total = 0.0;
  double objective = 0.0;
  double mean_kl = 0.0;
  std::optional<double> nll;  // SFT steps only
  std::size_t judge_calls = 0;
  std::size_t judge_failures = 0;
  std::uint64_t old_snapshot_id = 0;
};

inline nlohmann::json metrics_to_json(const MetricsRecord& r) {
  nlohmann::json j = {{"stage", r.stage}, {"step", r.step}};
  if (r.nll) {
    j["mean_reward"] = nlohmann::json::object();
    j["nll"] = *r.nll;
  } else {
    j["mean_reward"] = {{"format", r.mean_format},
                        {"accuracy", r.mean_accuracy},
                        {"process", r.mean_process},
                        {"total", r.mean_total}};
  }
  j["objective"] = r.objective;
  j["mean_kl"] = r.mean_kl;
  j["judge_calls"] = r.judge_calls;
  j["judge_failures"] = r.judge_failures;
  return j;
}

/// splitmix64 finalizer; derives independent per-step seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1) + 0xbf58476d1ce4e5b9ULL * (c + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Visits every problem once per cycle in a seeded order that is reshuffled
/// between cycles.
class CyclingSampler {
 public:
  CyclingSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    seeded_shuffle(order_, rng_);
  }

  std::size_t next() {
    if (pos_ == order_.size()) {
      seeded_shuffle(order_, rng_);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

/// Rolling failure rate of judge calls over a fixed window.
class JudgeHealth {
 public:
  JudgeHealth(std::size_t window, double threshold) : window_(window), threshold_(threshold) {}

  void record(bool failed) {
    calls_.push_back(failed);
    failures_ += failed ? 1 : 0;
    if (calls_.size() > window_) {
      failures_ -= calls_.front() ? 1 : 0;
      calls_.pop_front();
    }
  }

  // Only judged once a full window has been observed.
  bool tripped() const noexcept {
    return calls_.size() == window_ &&
           static_cast<double>(failures_) > threshold_ * static_cast<double>(window_);
  }

  std::size_t window_failures() const noexcept { return failures_; }

 private:
  std::size_t window_;
  double threshold_;
  std::deque<bool> calls_;
  std::size_t failures_ = 0;
};

struct StageContext {
  const GrpoConfig* grpo = nullptr;
  const TrainConfig* train = nullptr;
  const SequenceLengths* lengths = nullptr;
  ProcessJudge* judge = nullptr;
  std::uint64_t seed = 0;
  std::size_t stage_index = 0;
  std::function<void(const MetricsRecord&)> on_metrics;
  // Called for intermediate snapshots (snapshot_every) with the step number.
  std::function<void(const PolicyTriple&, std::size_t)> on_snapshot;
  // Called after each RL step with the group that produced the update.
  std::function<void(const ResponseGroup&, const PolicyTriple&)> on_group;
};

struct StageResult {
  PolicyTriple policy;
  std::vector<MetricsRecord> metrics;
  std::size_t judge_calls = 0;
  std::size_t judge_failures = 0;
};

namespace detail {

inline std::string render_response(const Problem& p, std::size_t template_id,
                                   const SequenceLengths& lengths) {
  return truncate_tokens(template_at(template_id).render(p), lengths.max_generation_tokens);
}

inline MetricsRecord sft_step(const StageSpec& spec, PolicyTriple& policy, const Problem& p,
                              const TrainConfig& train, std::size_t step) {
  const SftStep s = sft_loss_and_grad(policy.current, p, gold_template_id(p));
  policy.current.theta -= train.learning_rate * s.gradient;
  policy.snapshot_old();
  MetricsRecord m;
  m.stage = spec.tag;
  m.step = step;
  m.nll = s.loss;
  m.objective = -s.loss;
  m.old_snapshot_id = policy.old_snapshot_id;
  return m;
}

}  // namespace detail

/// Samples one group for `p` from the old policy and scores it. Judge calls
/// for the G responses run concurrently; results keep their sampling order.
inline ResponseGroup rollout_group(const StageSpec& spec, const PolicyTriple& policy,
                                   const Problem& p, const StageContext& ctx,
                                   std::uint64_t sample_seed) {
  const GrpoConfig& grpo = *ctx.grpo;
  const auto draws = sample_group(policy.old, p, grpo.group_size, sample_seed);
  const Eigen::VectorXd x = featurize(p, policy.current.feature_dim());
  const Eigen::VectorXd lp_cur = template_logprobs(policy.current, x);
  const Eigen::VectorXd lp_ref = template_logprobs(policy.reference, x);

  ResponseGroup group;
  group.problem_id = p.id;
  group.old_snapshot_id = policy.old_snapshot_id;
  group.responses.resize(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    auto& r = group.responses[i];
    const auto k = static_cast<Eigen::Index>(draws[i].template_id);
    r.template_id = draws[i].template_id;
    r.raw_text = detail::render_response(p, r.template_id, *ctx.lengths);
    r.logprob_old = draws[i].logprob;
    r.logprob_current = lp_cur[k];
    r.logprob_ref = lp_ref[k];
  }

  const RewardPlan& plan = spec.reward_plan;
  if (plan.use_process) {
    std::vector<std::future<RewardBreakdown>> pending;
    for (const auto& r : group.responses) {
      pending.push_back(std::async(std::launch::async, [&, raw = r.raw_text] {
        return score_response(p, raw, plan, ctx.judge);
      }));
    }
    for (std::size_t i = 0; i < pending.size(); ++i) group.responses[i].reward = pending[i].get();
  } else {
    for (auto& r : group.responses) r.reward = score_response(p, r.raw_text, plan, nullptr);
  }
  return group;
}

/// Runs `spec.steps` updates. The reference policy is frozen at entry; under
/// the single-update regime the old policy is refreshed after every step.
inline StageResult run_stage(const StageSpec& spec, PolicyTriple policy,
                             const std::vector<Problem>& data, const StageContext& ctx) {
  spec.validate();
  if (data.empty()) throw PipelineError("stage '" + spec.tag + "' has no training data");
  for (const auto& p : data) {
    if (p.split != spec.data_split) {
      throw PipelineError("stage '" + spec.tag + "' expects split '" +
                          std::string(split_tag_name(spec.data_split)) + "' but problem '" +
                          p.id + "' is tagged '" +
                          (p.split ? std::string(split_tag_name(*p.split)) : "unassigned") + "'");
    }
  }
  const bool rl = spec.name != StageKind::sft;
  if (rl && spec.reward_plan.use_process && ctx.judge == nullptr) {
    throw PipelineError("stage '" + spec.tag + "' needs a judge for the process reward");
  }

  policy.freeze_reference();
  policy.snapshot_old();

  StageResult result;
  JudgeHealth health(ctx.train->judge_window, ctx.train->judge_abort_threshold);
  CyclingSampler sampler(data.size(), mix_seed(ctx.seed, ctx.stage_index, 0xC1C1E));

  for (std::size_t step = 1; step <= spec.steps; ++step) {
    const Problem& p = data[sampler.next()];
    MetricsRecord m;
    if (!rl) {
      m = detail::sft_step(spec, policy, p, *ctx.train, step);
    } else {
      ResponseGroup group =
          rollout_group(spec, policy, p, ctx, mix_seed(ctx.seed, ctx.stage_index, step));
      if (group.old_snapshot_id != policy.old_snapshot_id) {
        throw PipelineError("group sampled under a stale old-policy snapshot");
      }
      const ObjectiveParts parts = grpo_objective_parts(group, *ctx.grpo);
      const ToyPolicyHandle handle(policy.current, p, group);
      policy.current.theta += ctx.train->learning_rate * grpo_gradient(group, handle, *ctx.grpo);
      if (ctx.on_group) ctx.on_group(group, policy);
      policy.snapshot_old();

      m.stage = spec.tag;
      m.step = step;
      m.objective = parts.objective;
      m.mean_kl = parts.mean_kl;
      m.old_snapshot_id = group.old_snapshot_id;
      const double g = static_cast<double>(group.responses.size());
      for (const auto& r : group.responses) {
        m.mean_format += r.reward.format / g;
        m.mean_accuracy += r.reward.accuracy / g;
        m.mean_process += r.reward.process / g;
        m.mean_total += r.reward.total / g;
        if (r.reward.judge_status == JudgeStatus::skipped) continue;
        const bool failed = r.reward.judge_status == JudgeStatus::failed;
        ++m.judge_calls;
        m.judge_failures += failed ? 1 : 0;
        health.record(failed);
      }
      result.judge_calls += m.judge_calls;
      result.judge_failures += m.judge_failures;
      if (health.tripped()) {
        throw PipelineError("stage '" + spec.tag + "' aborted at step " + std::to_string(step) +
                            ": " + std::to_string(health.window_failures()) + " of the last " +
                            std::to_string(ctx.train->judge_window) +
                            " judge calls failed (threshold " +
                            std::to_string(ctx.train->judge_abort_threshold) + ")");
      }
    }
    if (ctx.on_metrics) ctx.on_metrics(m);
    result.metrics.push_back(std::move(m));
    if (spec.snapshot_every > 0 && step % spec.snapshot_every == 0 && step != spec.steps &&
        ctx.on_snapshot) {
      ctx.on_snapshot(policy, step);
    }
  }
  result.policy = std::move(policy);
  return result;
}

struct ProtocolResult {
  PolicyTriple final_policy;
  RunManifest manifest;  // with checkpoints filled in
  std::vector<MetricsRecord> metrics;
};

/// Runs the manifest's stages in order, each starting from the previous
/// stage's final parameters. When `out_dir` is non-empty, checkpoints go to
/// out_dir/checkpoints/<tag>.json, metrics to out_dir/metrics.jsonl and the
/// completed manifest to out_dir/run_manifest.json.
inline ProtocolResult run_protocol(const RunManifest& manifest, const std::vector<Problem>& dataset,
                                   ProcessJudge* judge, const std::string& out_dir = "") {
  manifest.validate();
  if (manifest.needs_judge() && judge == nullptr) {
    throw PipelineError("manifest includes an rl_process stage but no judge is configured");
  }

  ProtocolResult result;
  result.manifest = manifest;
  result.manifest.checkpoints.clear();

  PolicyTriple policy;
  if (manifest.init_checkpoint) {
    if (!std::filesystem::exists(*manifest.init_checkpoint)) {
      throw CheckpointError("initial checkpoint '" + *manifest.init_checkpoint + "' does not exist");
    }
    policy = restore(*manifest.init_checkpoint);
    if (policy.current.feature_dim() != manifest.train.feature_dim ||
        policy.current.template_count() != template_count_for(manifest.train.letter_slots)) {
      throw CheckpointError("initial checkpoint shape does not match the manifest's policy settings");
    }
  } else {
    policy = PolicyTriple::from(PolicyParams::zeros(manifest.train.feature_dim, manifest.train.letter_slots));
  }

  std::ofstream metrics_out;
  std::filesystem::path ck_dir;
  if (!out_dir.empty()) {
    ck_dir = std::filesystem::path(out_dir) / "checkpoints";
    std::filesystem::create_directories(ck_dir);
    metrics_out.open(std::filesystem::path(out_dir) / "metrics.jsonl", std::ios::trunc);
    if (!metrics_out) throw PipelineError("cannot write metrics under '" + out_dir + "'");
  }

  for (std::size_t si = 0; si < manifest.stage_sequence.size(); ++si) {
    const StageSpec& spec = manifest.stage_sequence[si];
    const auto data = select_split(dataset, spec.data_split);
    StageContext ctx;
    ctx.grpo = &manifest.grpo;
    ctx.train = &manifest.train;
    ctx.lengths = &manifest.lengths;
    ctx.judge = spec.reward_plan.use_process && spec.name != StageKind::sft ? judge : nullptr;
    ctx.seed = manifest.seed;
    ctx.stage_index = si;
    if (metrics_out.is_open()) {
      ctx.on_metrics = [&](const MetricsRecord& m) { metrics_out << metrics_to_json(m).dump() << '\n'; };
    }
    auto write_ck = [&](const PolicyTriple& p, std::size_t step, const std::string& file) {
      CheckpointRecord rec{spec.tag, si, step, "", nlohmann::json::object()};
      if (!ck_dir.empty()) {
        rec.path = (ck_dir / file).string();
        snapshot(p, rec.path, spec.tag, step);
      }
      return rec;
    };
    ctx.on_snapshot = [&](const PolicyTriple& p, std::size_t step) {
      result.manifest.checkpoints.push_back(
          write_ck(p, step, spec.tag + "-step" + std::to_string(step) + ".json"));
    };

    StageResult sr = run_stage(spec, std::move(policy), data, ctx);
    policy = std::move(sr.policy);

    CheckpointRecord rec = write_ck(policy, spec.steps, spec.tag + ".json");
    if (!sr.metrics.empty()) rec.metrics = metrics_to_json(sr.metrics.back());
    rec.metrics["judge_calls"] = sr.judge_calls;
    rec.metrics["judge_failures"] = sr.judge_failures;
    result.manifest.checkpoints.push_back(std::move(rec));
    for (auto& m : sr.metrics) result.metrics.push_back(std::move(m));
  }

  if (!out_dir.empty()) {
    std::ofstream mf(std::filesystem::path(out_dir) / "run_manifest.json", std::ios::trunc);
    mf << manifest_to_json(result.manifest).dump(2) << '\n';
  }
  result.final_policy = std::move(policy);
  return result;
}

}  // namespace pathgrpo
