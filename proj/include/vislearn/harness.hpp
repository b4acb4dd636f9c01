#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vislearn/policy.hpp"
#include "vislearn/tutor.hpp"
#include "vislearn/world.hpp"

namespace vislearn {

/// Everything a run depends on. Serialised as JSON (see docs/config.md); the
/// manifest of each run directory stores this exact object and its hash.
struct ExperimentConfig {
  std::uint64_t master_seed = 20170901;
  int folds = 20;
  int instances = 500;
  std::vector<Condition> conditions{kConditions.begin(), kConditions.end()};
  /// Training runs per fold before the rl condition is evaluated greedily.
  int rl_pretrain_runs = 20;
  /// Worker threads over folds; 0 picks the hardware concurrency.
  int threads = 0;
  WorldConfig world;
  AgentConfig agent;
  TutorConfig tutor;
  std::string action_table;  // optional action table file
  std::string lexicon;       // optional lexicon file

  /// Throws Error on unknown keys, wrong types or invalid values.
  static ExperimentConfig from_json_text(std::string_view text);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Canonical JSON (sorted keys, two-space indent).
  std::string to_json_text() const;
  void validate() const;
};

/// Tutor model described by the config: the action table when given, else the
/// built-in mapping; the lexicon file when given, else default English.
TutorModel make_tutor(const ExperimentConfig& config);

struct RunRecord {
  Condition condition = Condition::Constant95;
  int fold = 0;
  RunResult run;

  double final_accuracy() const { return run.curve.back().accuracy.per_attribute(); }
  double delta_accuracy() const { return final_accuracy() - run.initial.per_attribute(); }
};

struct ConditionSummary {
  Condition condition = Condition::Constant95;
  int runs = 0;
  double initial_accuracy = 0;
  double final_accuracy_mean = 0;
  double final_accuracy_std = 0;
  double final_joint_mean = 0;
  double final_joint_std = 0;
  double total_cost_mean = 0;
  double total_cost_std = 0;
  double delta_accuracy_mean = 0;
  double r_perf = 0;  // delta_accuracy_mean / total_cost_mean
  double penalties_mean = 0;
};

struct ExperimentResult {
  std::vector<RunRecord> records;  // ordered by fold, then condition order of the config
  std::vector<ConditionSummary> summary;
  const ConditionSummary& of(Condition c) const;
};

/// Accuracy gain per unit of tutoring cost. Throws Error unless total_cost > 0.
double r_perf(double delta_acc, double total_cost);

/// Per-fold seed stream: fold f uses derive_seed(master_seed, f).
struct FoldSeeds {
  std::uint64_t fold = 0;
  std::uint64_t world = 0;
  std::uint64_t run = 0;
  std::uint64_t pretrain(int run_index) const;
  std::uint64_t pretrain_order(int run_index) const;
};
FoldSeeds fold_seeds(std::uint64_t master_seed, int fold);

/// Pretrains RL tables on one fold's world (rl_pretrain_runs runs, exploring).
RlTables pretrain_rl(const ExperimentConfig& config, const Dataset& data, const TutorModel& tutor,
                     const FoldSeeds& seeds);

using ProgressFn = std::function<void(int fold, Condition condition)>;

/// All conditions over all folds. Folds run on worker threads; results do not
/// depend on the thread count.
ExperimentResult run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

/// Fold means and sample standard deviations per condition, in the order conditions first appear.
std::vector<ConditionSummary> summarize(std::span<const RunRecord> records);

/// Writes curves_accuracy.tsv, curves_cost.tsv and curves_acc_vs_cost.tsv:
/// one row per (condition, bin), fold-averaged with std columns.
void emit_curves(std::span<const RunRecord> records, const std::filesystem::path& dir);

/// emit_curves plus records.tsv, summary.tsv and manifest.json.
void write_run_directory(const std::filesystem::path& dir, const ExperimentConfig& config,
                         const ExperimentResult& result);

std::string summary_table(std::span<const ConditionSummary> summary);

}  // namespace vislearn
