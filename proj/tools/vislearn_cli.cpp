// Command-line front end: dataset generation, RL pretraining, single-run
// evaluation, full experiments and the live tutoring service.
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vislearn/harness.hpp"
#include "vislearn/live_service.hpp"

namespace fs = std::filesystem;
using namespace vislearn;

namespace {

ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : ExperimentConfig::load(path);
}

WorldConfig fold_world(const ExperimentConfig& config, int fold) {
  WorldConfig wc = config.world;
  wc.seed = fold_seeds(config.master_seed, fold).world;
  return wc;
}

void write_q_files(const fs::path& dir, const RlTables& tables) {
  fs::create_directories(dir);
  std::ofstream d(dir / "dialogue.q"), t(dir / "threshold.q");
  if (!d || !t) throw Error("cannot write Q-tables to " + dir.string());
  save_dialogue_q(d, tables.dialogue);
  save_threshold_q(t, tables.threshold);
}

RlTables read_q_files(const fs::path& dir) {
  std::ifstream d(dir / "dialogue.q"), t(dir / "threshold.q");
  if (!d || !t) throw Error("missing dialogue.q or threshold.q in " + dir.string());
  return {load_dialogue_q(d), load_threshold_q(t)};
}

HttpService* g_service = nullptr;
void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vislearn: interactive visual attribute learning"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("-c,--config", config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);

  auto* gen = app.add_subcommand("gen-data", "Write one fold's synthetic dataset");
  int gen_fold = 0;
  std::string gen_out;
  gen->add_option("--fold", gen_fold, "Fold whose world seed is used")->check(CLI::NonNegativeNumber);
  gen->add_option("-o,--out", gen_out, "Output file")->required();

  auto* train = app.add_subcommand("train", "Pretrain RL Q-tables on one fold's world");
  int train_fold = 0;
  std::string train_out;
  train->add_option("--fold", train_fold)->check(CLI::NonNegativeNumber);
  train->add_option("-o,--out", train_out, "Policy directory for dialogue.q and threshold.q")->required();

  auto* eval = app.add_subcommand("eval", "One greedy learning run on one fold");
  int eval_fold = 0;
  std::string eval_condition = "constant95", eval_policy;
  eval->add_option("--fold", eval_fold)->check(CLI::NonNegativeNumber);
  eval->add_option("--condition", eval_condition, "rl, constant95, decay05 or decay01");
  eval->add_option("--policy-dir", eval_policy, "Q-tables for rl (pretrained on the fold when omitted)");

  auto* exp = app.add_subcommand("experiment", "All conditions over all folds; writes a run directory");
  std::string exp_out;
  std::optional<std::uint64_t> exp_seed;
  std::optional<int> exp_folds, exp_threads;
  std::vector<std::string> exp_conditions;
  exp->add_option("-o,--out", exp_out, "Run directory")->required();
  exp->add_option("--seed", exp_seed, "Master seed");
  exp->add_option("--folds", exp_folds)->check(CLI::PositiveNumber);
  exp->add_option("--threads", exp_threads)->check(CLI::NonNegativeNumber);
  exp->add_option("--conditions", exp_conditions)->delimiter(',');

  auto* serve = app.add_subcommand("serve", "Run the live tutoring service");
  std::string host = "127.0.0.1", state_dir, policy_dir;
  int port = 8080;
  serve->add_option("--host", host);
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve->add_option("--state-dir", state_dir, "Session logs; restored on startup");
  serve->add_option("--policy-dir", policy_dir, "Q-tables for rl-pretrained sessions");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig config = load_config(config_path);

    if (*gen) {
      Dataset data = generate_dataset(fold_world(config, gen_fold));
      std::ofstream out(gen_out);
      if (!out) throw Error("cannot write " + gen_out);
      write_dataset(out, data);
      std::cout << "wrote " << data.train.size() << " train and " << data.test.size() << " test objects to "
                << gen_out << "\n";
    } else if (*train) {
      config.agent.inventory = config.world.inventory;
      Dataset data = generate_dataset(fold_world(config, train_fold));
      RlTables tables = pretrain_rl(config, data, make_tutor(config), fold_seeds(config.master_seed, train_fold));
      write_q_files(train_out, tables);
      std::cout << "trained " << config.rl_pretrain_runs << " runs; dialogue states " << tables.dialogue.size()
                << ", threshold states " << tables.threshold.size() << "\n";
    } else if (*eval) {
      auto cond = parse_condition(eval_condition);
      if (!cond) throw Error("unknown condition '" + eval_condition + "'");
      config.agent.inventory = config.world.inventory;
      const auto seeds = fold_seeds(config.master_seed, eval_fold);
      Dataset data = generate_dataset(fold_world(config, eval_fold));
      TutorModel tutor = make_tutor(config);
      std::vector<std::size_t> order(static_cast<std::size_t>(config.instances));
      std::iota(order.begin(), order.end(), std::size_t{0});
      RlTables tables;
      if (*cond == Condition::Rl)
        tables = eval_policy.empty() ? pretrain_rl(config, data, tutor, seeds) : read_q_files(eval_policy);
      RunResult run = run_learning(*cond, config.agent, data, order, tutor,
                                   *cond == Condition::Rl ? &tables : nullptr, false, seeds.run);
      std::cout << "instances\taccuracy\tcost\tthreshold\n";
      for (const auto& p : run.curve)
        std::cout << p.instances << '\t' << format_double(p.accuracy.per_attribute()) << '\t'
                  << format_double(p.cumulative_cost) << '\t' << format_double(p.threshold) << '\n';
      const double delta = run.curve.back().accuracy.per_attribute() - run.initial.per_attribute();
      std::cout << "final accuracy " << format_double(run.curve.back().accuracy.per_attribute()) << ", total cost "
                << format_double(run.total_cost) << ", penalties " << run.penalties;
      if (run.total_cost > 0) std::cout << ", R_perf " << format_double(r_perf(delta, run.total_cost));
      std::cout << "\n";
    } else if (*exp) {
      if (exp_seed) config.master_seed = *exp_seed;
      if (exp_folds) config.folds = *exp_folds;
      if (exp_threads) config.threads = *exp_threads;
      if (!exp_conditions.empty()) {
        config.conditions.clear();
        for (const auto& name : exp_conditions) {
          auto c = parse_condition(name);
          if (!c) throw Error("unknown condition '" + name + "'");
          config.conditions.push_back(*c);
        }
      }
      ExperimentResult result = run_experiment(config, [](int fold, Condition c) {
        std::cerr << "fold " << fold << " " << to_string(c) << " done\n";
      });
      write_run_directory(exp_out, config, result);
      std::cout << summary_table(result.summary);
    } else if (*serve) {
      ServiceConfig sc;
      sc.state_dir = state_dir;
      sc.policy_dir = policy_dir;
      sc.world = config.world;
      sc.agent = config.agent;
      sc.costs = config.tutor.costs;
      if (!config.lexicon.empty())
        sc.lexicon = std::make_shared<const TemplateLexicon>(TemplateLexicon::load(config.lexicon));
      SessionManager sessions(std::move(sc));
      HttpService http(sessions);
      const int bound = http.bind(host, port);
      g_service = &http;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on http://" << host << ":" << bound << std::endl;
      http.run();
      g_service = nullptr;
    }
  } catch (const std::exception& e) {
    std::cerr << "vislearn: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
