#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "pathgrpo/cli.hpp"
#include "pathgrpo/mock_judge.hpp"
#include "support.hpp"

using namespace pathgrpo;
using namespace pathgrpo::cli;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args, const testsupport::TempDir& dir,
                  const std::string& env = "") {
  const std::string out = dir.file("stdout.txt"), err = dir.file("stderr.txt");
  const std::string cmd = env + " '" + std::string(PATHGRPO_CLI_PATH) + "' " + args + " >'" + out +
                          "' 2>'" + err + "'";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testsupport::read_text(out);
  r.err = testsupport::read_text(err);
  return r;
}

nlohmann::json small_manifest_json() {
  return {{"seed", 5},
          {"stage_sequence",
           {{{"name", "sft"}, {"tag", "alpha"}, {"steps", 30}, {"data_split", "sft"}},
            {{"name", "rl_outcome"}, {"tag", "beta"}, {"steps", 30}}}},
          {"train", {{"feature_dim", 32}}}};
}

void write_json(const std::string& path, const nlohmann::json& j) {
  testsupport::write_text(path, j.dump(2));
}

std::string fixture_dataset(const testsupport::TempDir& dir) {
  auto probs = testsupport::tagged_fixture(6, 6, 4);
  for (std::size_t i = 0; i < 3; ++i) {
    Problem p = make_synthetic_problems(20, 99)[i];
    p.id = "test-" + std::to_string(i);
    p.split = SplitTag::test;
    probs.push_back(p);
  }
  write_dataset(dir.file("data.jsonl"), probs);
  return dir.file("data.jsonl");
}

}  // namespace

TEST(Overrides, ParseAndReject) {
  EXPECT_EQ(parse_override("grpo.group_size=8"), (std::pair<std::string, std::string>{"grpo.group_size", "8"}));
  EXPECT_EQ(parse_override("judge.model=a=b").second, "a=b");
  try {
    parse_override("grpo.groupsize=8");
    FAIL();
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("grpo.groupsize"), std::string::npos);
    EXPECT_NE(msg.find("grpo.group_size"), std::string::npos);
    EXPECT_NE(msg.find("judge.endpoint_url"), std::string::npos);
  }
  EXPECT_THROW(parse_override("noequals"), UsageError);
  EXPECT_THROW(parse_override("=3"), UsageError);
}

TEST(Overrides, EnvironmentNames) {
  EXPECT_EQ(env_name_for("grpo.group_size"), "PATHGRPO_GRPO_GROUP_SIZE");
  EXPECT_EQ(env_name_for("seed"), "PATHGRPO_SEED");
  const auto env = environment_overrides([](const char* n) -> const char* {
    return std::string(n) == "PATHGRPO_GRPO_KL_BETA" ? "0.5" : nullptr;
  });
  ASSERT_EQ(env.size(), 1u);
  EXPECT_EQ(env[0].first, "grpo.kl_beta");
}

TEST(Overrides, ValueTyping) {
  EXPECT_EQ(override_value("4"), 4);
  EXPECT_EQ(override_value("true"), true);
  EXPECT_EQ(override_value("gpt-4o"), "gpt-4o");
  EXPECT_EQ(override_value("{\"a\":1}"), "{\"a\":1}");
}

TEST(Layering, FileThenEnvThenCli) {
  auto file = small_manifest_json();
  file["grpo"] = {{"kl_beta", 0.1}, {"clip_epsilon", 0.3}};
  const Overrides env = {{"grpo.kl_beta", "0.2"}, {"grpo.group_size", "6"}};
  const Overrides cli = {{"grpo.kl_beta", "0.3"}, {"steps.rl_outcome", "7"}};
  const auto c = layer_config(file, std::nullopt, env, cli, 11);
  EXPECT_DOUBLE_EQ(c.manifest.grpo.kl_beta, 0.3);
  EXPECT_EQ(c.manifest.grpo.group_size, 6u);
  EXPECT_DOUBLE_EQ(c.manifest.grpo.clip_epsilon, 0.3);
  EXPECT_EQ(c.manifest.stage_sequence[1].steps, 7u);
  EXPECT_EQ(c.manifest.stage_sequence[0].steps, 30u);
  EXPECT_EQ(c.manifest.seed, 11u);
  EXPECT_FALSE(c.judge);
}

TEST(Layering, JudgeKeys) {
  const nlohmann::json judge_file = {{"endpoint_url", "http://127.0.0.1:1/v1/chat/completions"},
                                     {"max_retries", 1}};
  const auto c = layer_config(small_manifest_json(), std::optional<nlohmann::json>(judge_file), {{"judge.max_retries", "2"}},
                              {{"judge.model", "local-judge"}});
  ASSERT_TRUE(c.judge);
  EXPECT_EQ(c.judge->max_retries, 2);
  EXPECT_EQ(c.judge->model, "local-judge");
  const auto d = layer_config(small_manifest_json(), std::nullopt, {}, {{"judge.test_mode", "true"}});
  ASSERT_TRUE(d.judge);
  EXPECT_TRUE(d.judge->test_mode);
}

TEST(Layering, BadValueIsConfigError) {
  EXPECT_THROW(layer_config(small_manifest_json(), std::nullopt, {}, {{"grpo.group_size", "1"}}),
               ConfigError);
}

TEST(Helpers, SizesAndOutputs) {
  EXPECT_EQ(parse_sizes("3,2,1").sft, 3u);
  EXPECT_THROW(parse_sizes("3,2"), UsageError);
  EXPECT_THROW(parse_sizes("3,-2,1"), UsageError);
  testsupport::TempDir dir;
  testsupport::write_text(dir.file("o.txt"), "plain\n\"line\\nbreak\"\n\n");
  const auto outs = read_outputs(dir.file("o.txt"));
  ASSERT_EQ(outs.size(), 2u);
  EXPECT_EQ(outs[1], "line\nbreak");
  EXPECT_EQ(checkpoint_id_for("/a/b/beta.json"), "beta");
}

TEST(Binary, MissingDatasetIsUsageError) {
  testsupport::TempDir dir;
  write_json(dir.file("m.json"), small_manifest_json());
  const auto r = run_cli("train --manifest " + dir.file("m.json") + " --dataset " +
                             dir.file("nope.jsonl") + " --out " + dir.file("run"),
                         dir);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find(dir.file("nope.jsonl")), std::string::npos) << r.err;
}

TEST(Binary, TrainRecordsOverridesAndCheckpoints) {
  testsupport::TempDir dir;
  const auto data = fixture_dataset(dir);
  write_json(dir.file("m.json"), small_manifest_json());
  const auto r = run_cli("train --manifest " + dir.file("m.json") + " --dataset " + data +
                             " --out " + dir.file("run") + " --override grpo.group_size=4" +
                             " --override grpo.kl_beta=0.5",
                         dir, "PATHGRPO_GRPO_KL_BETA=0.1 PATHGRPO_TRAIN_LEARNING_RATE=0.05");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto m = nlohmann::json::parse(testsupport::read_text(dir.file("run/run_manifest.json")));
  EXPECT_EQ(m["grpo"]["group_size"], 4);
  EXPECT_DOUBLE_EQ(m["grpo"]["kl_beta"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(m["train"]["learning_rate"].get<double>(), 0.05);
  EXPECT_TRUE(std::filesystem::exists(dir.file("run/checkpoints/alpha.json")));
  EXPECT_TRUE(std::filesystem::exists(dir.file("run/checkpoints/beta.json")));
}

TEST(Binary, UnknownOverrideListsKeys) {
  testsupport::TempDir dir;
  const auto data = fixture_dataset(dir);
  write_json(dir.file("m.json"), small_manifest_json());
  const auto r = run_cli("train --manifest " + dir.file("m.json") + " --dataset " + data +
                             " --out " + dir.file("run") + " --override grpo.size=4",
                         dir);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("grpo.group_size"), std::string::npos) << r.err;
}

TEST(Binary, ProcessStageWithoutJudgeConfigIsUsageError) {
  testsupport::TempDir dir;
  const auto data = fixture_dataset(dir);
  write_json(dir.file("m.json"), {{"variant", "default"}});
  const auto r = run_cli("train --manifest " + dir.file("m.json") + " --dataset " + data +
                             " --out " + dir.file("run"),
                         dir);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("--judge-config"), std::string::npos) << r.err;
}

TEST(Binary, TrainAgainstMockJudge) {
  testsupport::TempDir dir;
  const auto data = fixture_dataset(dir);
  MockJudgeServer server({mock_scores(1, 0.6)}, 0);
  auto manifest = small_manifest_json();
  manifest["stage_sequence"].push_back({{"name", "rl_process"}, {"tag", "r1"}, {"steps", 10}});
  write_json(dir.file("m.json"), manifest);
  write_json(dir.file("judge.json"), {{"endpoint_url", server.url()}, {"test_mode", true},
                                      {"backoff_base_ms", 1}});
  const auto r = run_cli("train --manifest " + dir.file("m.json") + " --dataset " + data +
                             " --judge-config " + dir.file("judge.json") + " --out " +
                             dir.file("run"),
                         dir);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_GT(server.request_count(), 0u);
  EXPECT_TRUE(std::filesystem::exists(dir.file("run/checkpoints/r1.json")));
}

TEST(Binary, EvalFormats) {
  testsupport::TempDir dir;
  const auto data = fixture_dataset(dir);
  snapshot(PolicyTriple::from(PolicyParams::zeros(32)), dir.file("zero.json"), "alpha", 0);
  const auto json = run_cli("eval --checkpoint " + dir.file("zero.json") + " --dataset " + data, dir);
  ASSERT_EQ(json.exit_code, 0) << json.err;
  const auto rep = report_from_json(nlohmann::json::parse(json.out));
  EXPECT_EQ(rep.n, 3u);
  EXPECT_EQ(rep.checkpoint_id, "zero");

  const auto csv = run_cli("eval --format csv --checkpoint " + dir.file("zero.json") +
                               " --checkpoint " + dir.file("zero.json") + " --dataset " + data,
                           dir);
  ASSERT_EQ(csv.exit_code, 0) << csv.err;
  const auto rows = parse_compare_csv(csv.out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].accuracy, rep.accuracy);

  const auto table = run_cli("eval --format table --split rl --checkpoint " + dir.file("zero.json") +
                                 " --dataset " + data + " --out " + dir.file("t.txt"),
                             dir);
  ASSERT_EQ(table.exit_code, 0);
  EXPECT_NE(testsupport::read_text(dir.file("t.txt")).find("avg_tokens"), std::string::npos);
}

TEST(Binary, EvalBadSplitListsSplits) {
  testsupport::TempDir dir;
  const auto data = fixture_dataset(dir);
  snapshot(PolicyTriple::from(PolicyParams::zeros(32)), dir.file("zero.json"), "alpha", 0);
  const auto r = run_cli("eval --split dev --checkpoint " + dir.file("zero.json") + " --dataset " + data, dir);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("sft"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("test"), std::string::npos) << r.err;
}

TEST(Binary, ScoreStage2) {
  testsupport::TempDir dir;
  const auto probs = testsupport::single_split_fixture(3, 8, SplitTag::test);
  write_dataset(dir.file("p.jsonl"), probs);
  const auto good = template_at(gold_template_id(probs[0])).render(probs[0]);
  testsupport::write_text(dir.file("o.txt"), good + "\nno tags\n<think>a</think><answer>Z. nope</answer>\n");
  const auto r = run_cli("score --problems " + dir.file("p.jsonl") + " --outputs " + dir.file("o.txt"), dir);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  std::istringstream lines(r.out);
  std::vector<nlohmann::json> rows;
  for (std::string l; std::getline(lines, l);) rows.push_back(nlohmann::json::parse(l));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0]["total"], 2.0);
  EXPECT_EQ(rows[1]["total"], 0.0);
  EXPECT_EQ(rows[2]["format"], 1.0);
  EXPECT_EQ(rows[2]["accuracy"], 0.0);
  EXPECT_EQ(rows[0]["id"], probs[0].id);
}

TEST(Binary, ScoreStage3NeedsJudgeConfig) {
  testsupport::TempDir dir;
  write_dataset(dir.file("p.jsonl"), testsupport::single_split_fixture(1, 8, SplitTag::test));
  testsupport::write_text(dir.file("o.txt"), "x\n");
  const auto r = run_cli("score --plan stage3 --problems " + dir.file("p.jsonl") + " --outputs " +
                             dir.file("o.txt"),
                         dir);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("--judge-config"), std::string::npos) << r.err;
}

TEST(Binary, ScoreStage3ClampsJudgeScores) {
  testsupport::TempDir dir;
  const auto probs = testsupport::single_split_fixture(2, 8, SplitTag::test);
  write_dataset(dir.file("p.jsonl"), probs);
  std::string outs;
  for (const auto& p : probs) outs += template_at(gold_template_id(p)).render(p) + "\n";
  testsupport::write_text(dir.file("o.txt"), outs);
  MockJudgeServer server({mock_scores(1.2, -0.1)}, 0);
  write_json(dir.file("judge.json"), {{"endpoint_url", server.url()}, {"test_mode", true}});
  const auto r = run_cli("score --plan stage3 --problems " + dir.file("p.jsonl") + " --outputs " +
                             dir.file("o.txt") + " --judge-config " + dir.file("judge.json"),
                         dir);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto first = nlohmann::json::parse(r.out.substr(0, r.out.find('\n')));
  EXPECT_EQ(first["integrity"], 1.0);
  EXPECT_EQ(first["knowledge"], 0.0);
  EXPECT_EQ(first["process"], 0.5);
  EXPECT_EQ(first["total"], 2.5);
  EXPECT_EQ(server.request_count(), 2u);
}

TEST(Binary, ScoreLineCountMismatch) {
  testsupport::TempDir dir;
  write_dataset(dir.file("p.jsonl"), testsupport::single_split_fixture(2, 8, SplitTag::test));
  testsupport::write_text(dir.file("o.txt"), "x\n");
  const auto r = run_cli("score --problems " + dir.file("p.jsonl") + " --outputs " + dir.file("o.txt"), dir);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("2 records"), std::string::npos) << r.err;
}

TEST(Binary, SplitAssignsTags) {
  testsupport::TempDir dir;
  write_dataset(dir.file("raw.jsonl"), make_synthetic_problems(20, 3));
  const auto r = run_cli("split --dataset " + dir.file("raw.jsonl") + " --sizes 10,6,4 --seed 2 --out " +
                             dir.file("tagged.jsonl"),
                         dir);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto summary = nlohmann::json::parse(r.out);
  EXPECT_EQ(summary["counts"]["sft"], 10);
  EXPECT_EQ(summary["counts"]["rl"], 6);
  EXPECT_EQ(summary["counts"]["test"], 4);
  const auto again = run_cli("split --dataset " + dir.file("raw.jsonl") + " --sizes 10,6,4 --seed 2 --out " +
                                 dir.file("tagged2.jsonl"),
                             dir);
  EXPECT_EQ(nlohmann::json::parse(again.out)["checksum"], summary["checksum"]);
  EXPECT_EQ(run_cli("split --dataset " + dir.file("raw.jsonl") + " --sizes 30,0,0 --out " +
                        dir.file("x.jsonl"),
                    dir)
                .exit_code,
            1);
}

TEST(Binary, MissingSubcommandIsUsageError) {
  testsupport::TempDir dir;
  EXPECT_NE(run_cli("", dir).exit_code, 0);
  EXPECT_NE(run_cli("train", dir).exit_code, 0);
}
