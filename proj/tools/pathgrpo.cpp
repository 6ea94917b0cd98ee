#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mock_server_main.hpp"
#include "pathgrpo/cli.hpp"

using namespace pathgrpo;
using namespace pathgrpo::cli;

int main(int argc, char** argv) {
  CLI::App app{"pathgrpo: staged GRPO post-training on a template policy"};
  app.require_subcommand(1);

  TrainArgs train;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "run the stages of a run manifest");
  t->add_option("--manifest", train.manifest_path, "run manifest (JSON)")->required();
  t->add_option("--dataset", train.dataset_path, "dataset (JSONL)")->required();
  t->add_option("--judge-config", train.judge_config_path, "judge client config (JSON)");
  t->add_option("--out", train.out_dir, "output directory")->required();
  t->add_option("--override", train.overrides, "key=value, repeatable");
  auto* seed_opt = t->add_option("--seed", train_seed, "overrides the manifest seed");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "greedy evaluation of checkpoints on a split");
  e->add_option("--checkpoint", eval.checkpoint_paths, "checkpoint file, repeatable")->required();
  e->add_option("--dataset", eval.dataset_path, "dataset (JSONL)")->required();
  e->add_option("--split", eval.split, "sft, rl or test")->capture_default_str();
  e->add_option("--format", eval.format, "json, csv or table")->capture_default_str();
  e->add_option("--out", eval.out_path, "write the report here instead of stdout");
  e->add_option("--max-gen-tokens", eval.max_generation_tokens)->capture_default_str();

  ScoreArgs score;
  auto* s = app.add_subcommand("score", "score model outputs against problems, one per line");
  s->add_option("--problems", score.problems_path, "problems (JSONL)")->required();
  s->add_option("--outputs", score.outputs_path, "one output per line")->required();
  s->add_option("--plan", score.plan, "stage2 or stage3")->capture_default_str();
  s->add_option("--judge-config", score.judge_config_path, "judge client config (JSON)");

  std::string mock_script;
  std::string mock_host = "127.0.0.1";
  int mock_port = 8089;
  auto* m = app.add_subcommand("judge-mock", "serve a scripted mock judge");
  m->add_option("--port", mock_port)->capture_default_str();
  m->add_option("--script", mock_script, "mock script (JSON array)")->required();
  m->add_option("--host", mock_host)->capture_default_str();

  SplitArgs split_args;
  std::string sizes = "3000,1000,1385";
  auto* sp = app.add_subcommand("split", "assign sft/rl/test tags by seeded shuffle");
  sp->add_option("--dataset", split_args.dataset_path, "dataset (JSONL)")->required();
  sp->add_option("--sizes", sizes, "sft,rl,test")->capture_default_str();
  sp->add_option("--seed", split_args.seed)->capture_default_str();
  sp->add_option("--out", split_args.out_path, "tagged dataset output")->required();

  CLI11_PARSE(app, argc, argv);

  return guarded(
      [&]() -> int {
        if (t->parsed()) {
          if (seed_opt->count() > 0) train.seed = train_seed;
          return cmd_train(train, std::cout);
        }
        if (e->parsed()) return cmd_eval(eval, std::cout);
        if (s->parsed()) return cmd_score(score, std::cout);
        if (m->parsed()) {
          require_file(mock_script, "mock script");
          return serve_mock_judge(mock_script, mock_port, mock_host);
        }
        split_args.sizes = parse_sizes(sizes);
        return cmd_split(split_args, std::cout);
      },
      std::cerr);
}
