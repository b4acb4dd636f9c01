#include "vislearn/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace vislearn {

using nlohmann::json;

namespace {

// Reads `key` into `out` when present; rejects keys outside `allowed`.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(path_ + " must be an object");
  }
  ~ObjectReader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items())
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) throw Error("unknown config key " + path_ + "." + key);
  }
  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error("config key " + path_ + "." + key + ": " + e.what());
    }
  }
  const json* child(const std::string& key) {
    seen_.push_back(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for fewer than two values.
double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v), ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<Condition> conditions_in_order(std::span<const RunRecord> records) {
  std::vector<Condition> out;
  for (const auto& r : records)
    if (std::find(out.begin(), out.end(), r.condition) == out.end()) out.push_back(r.condition);
  return out;
}

// Runs of one condition ordered by fold, so aggregates do not depend on record order.
std::vector<const RunRecord*> runs_of(std::span<const RunRecord> records, Condition cond) {
  std::vector<const RunRecord*> runs;
  for (const auto& r : records)
    if (r.condition == cond) runs.push_back(&r);
  std::stable_sort(runs.begin(), runs.end(), [](const RunRecord* a, const RunRecord* b) { return a->fold < b->fold; });
  return runs;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

void check_written(std::ofstream& out, const std::filesystem::path& p) {
  out.flush();
  if (!out) throw Error("write failed: " + p.string());
}

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kDigits[v & 15];
  return s;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  {
    ObjectReader r(j, "config");
    r.read("master_seed", c.master_seed);
    r.read("folds", c.folds);
    r.read("instances", c.instances);
    r.read("rl_pretrain_runs", c.rl_pretrain_runs);
    r.read("threads", c.threads);
    std::vector<std::string> conds;
    r.read("conditions", conds);
    if (j.contains("conditions")) {
      c.conditions.clear();
      for (const auto& name : conds) {
        auto cond = parse_condition(name);
        if (!cond) throw Error("unknown condition '" + name + "'");
        c.conditions.push_back(*cond);
      }
    }
    if (const auto* w = r.child("world")) {
      ObjectReader rw(*w, "world");
      rw.read("noise_sigma", c.world.noise_sigma);
      rw.read("train_size", c.world.train_size);
      rw.read("test_size", c.world.test_size);
      rw.read("shape_bins", c.world.shape_bins);
      rw.read("colours", c.world.inventory.colours);
      rw.read("shapes", c.world.inventory.shapes);
    }
    if (const auto* v = r.child("vision")) {
      ObjectReader rv(*v, "vision");
      rv.read("learning_rate", c.agent.vision.learning_rate);
      rv.read("l2", c.agent.vision.l2);
    }
    if (const auto* t = r.child("tutor")) {
      ObjectReader rt(*t, "tutor");
      rt.read("initiative_prob", c.tutor.initiative_prob);
      rt.read("chatter_prob", c.tutor.chatter_prob);
      rt.read("action_table", c.action_table);
      rt.read("lexicon", c.lexicon);
      if (const auto* k = rt.child("costs")) {
        ObjectReader rk(*k, "tutor.costs");
        rk.read("inform", c.tutor.costs.inform);
        rk.read("ack", c.tutor.costs.ack);
        rk.read("correction", c.tutor.costs.correction);
      }
    }
    if (const auto* d = r.child("dialogue_rl")) {
      ObjectReader rd(*d, "dialogue_rl");
      rd.read("epsilon", c.agent.dialogue_sarsa.epsilon);
      rd.read("alpha", c.agent.dialogue_sarsa.alpha);
      rd.read("gamma", c.agent.dialogue_sarsa.gamma);
      rd.read("penalty", c.agent.episode.penalty);
      rd.read("turn_cap", c.agent.episode.turn_cap);
      rd.read("completion_reward", c.agent.episode.completion_reward);
    }
    if (const auto* t = r.child("threshold_rl")) {
      ObjectReader rt(*t, "threshold_rl");
      rt.read("epsilon", c.agent.threshold_sarsa.epsilon);
      rt.read("alpha", c.agent.threshold_sarsa.alpha);
      rt.read("gamma", c.agent.threshold_sarsa.gamma);
      rt.read("reward_scale", c.agent.reward_scale);
      rt.read("initial", c.agent.initial_threshold);
    }
  }
  c.agent.inventory = c.world.inventory;
  c.agent.instances = c.instances;
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return from_json_text(ss.str());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string ExperimentConfig::to_json_text() const {
  json j;
  j["master_seed"] = master_seed;
  j["folds"] = folds;
  j["instances"] = instances;
  j["rl_pretrain_runs"] = rl_pretrain_runs;
  j["threads"] = threads;
  j["conditions"] = json::array();
  for (auto c : conditions) j["conditions"].push_back(std::string(to_string(c)));
  j["world"] = {{"noise_sigma", world.noise_sigma},
                {"train_size", world.train_size},
                {"test_size", world.test_size},
                {"shape_bins", world.shape_bins},
                {"colours", world.inventory.colours},
                {"shapes", world.inventory.shapes}};
  j["vision"] = {{"learning_rate", agent.vision.learning_rate}, {"l2", agent.vision.l2}};
  j["tutor"] = {{"initiative_prob", tutor.initiative_prob},
                {"chatter_prob", tutor.chatter_prob},
                {"action_table", action_table},
                {"lexicon", lexicon},
                {"costs", {{"inform", tutor.costs.inform}, {"ack", tutor.costs.ack}, {"correction", tutor.costs.correction}}}};
  j["dialogue_rl"] = {{"epsilon", agent.dialogue_sarsa.epsilon},
                      {"alpha", agent.dialogue_sarsa.alpha},
                      {"gamma", agent.dialogue_sarsa.gamma},
                      {"penalty", agent.episode.penalty},
                      {"turn_cap", agent.episode.turn_cap},
                      {"completion_reward", agent.episode.completion_reward}};
  j["threshold_rl"] = {{"epsilon", agent.threshold_sarsa.epsilon},
                       {"alpha", agent.threshold_sarsa.alpha},
                       {"gamma", agent.threshold_sarsa.gamma},
                       {"reward_scale", agent.reward_scale},
                       {"initial", agent.initial_threshold}};
  return j.dump(2) + "\n";
}

void ExperimentConfig::validate() const {
  if (folds < 1) throw Error("folds must be >= 1");
  if (instances < kInstancesPerBin || instances % kInstancesPerBin != 0 || instances > kBins * kInstancesPerBin)
    throw Error("instances must be a multiple of 10 in [10, 500]");
  if (static_cast<std::size_t>(instances) > world.train_size) throw Error("instances exceed world.train_size");
  if (conditions.empty()) throw Error("no conditions selected");
  if (rl_pretrain_runs < 0) throw Error("rl_pretrain_runs must be >= 0");
  if (threads < 0) throw Error("threads must be >= 0");
  if (world.noise_sigma < 0) throw Error("world.noise_sigma must be >= 0");
  world.inventory.validate();
  if (!(agent.vision.learning_rate > 0)) throw Error("vision.learning_rate must be positive");
  if (agent.vision.l2 < 0) throw Error("vision.l2 must be >= 0");
  for (const auto* s : {&agent.dialogue_sarsa, &agent.threshold_sarsa}) {
    if (!(s->alpha > 0 && s->alpha <= 1)) throw Error("SARSA alpha must lie in (0, 1]");
    if (!(s->epsilon >= 0 && s->epsilon <= 1)) throw Error("SARSA epsilon must lie in [0, 1]");
    if (!(s->gamma >= 0 && s->gamma <= 1)) throw Error("SARSA gamma must lie in [0, 1]");
  }
  if (agent.episode.turn_cap < 2) throw Error("dialogue_rl.turn_cap must be >= 2");
  if (agent.episode.penalty < 0) throw Error("dialogue_rl.penalty must be >= 0");
  threshold_index(agent.initial_threshold);
  for (double p : {tutor.initiative_prob, tutor.chatter_prob})
    if (!(p >= 0 && p <= 1)) throw Error("tutor probabilities must lie in [0, 1]");
}

TutorModel make_tutor(const ExperimentConfig& config) {
  std::shared_ptr<const TemplateLexicon> lexicon;
  if (!config.lexicon.empty()) lexicon = std::make_shared<TemplateLexicon>(TemplateLexicon::load(config.lexicon));
  if (!config.action_table.empty()) return TutorModel::load(config.action_table, config.tutor, lexicon);
  return TutorModel(config.tutor, lexicon);
}

const ConditionSummary& ExperimentResult::of(Condition c) const {
  for (const auto& s : summary)
    if (s.condition == c) return s;
  throw Error("no summary for condition " + std::string(to_string(c)));
}

double r_perf(double delta_acc, double total_cost) {
  if (!(total_cost > 0)) throw Error("R_perf needs a positive tutoring cost");
  return delta_acc / total_cost;
}

std::uint64_t FoldSeeds::pretrain(int run_index) const {
  return derive_seed(fold, 1000 + static_cast<std::uint64_t>(run_index));
}
std::uint64_t FoldSeeds::pretrain_order(int run_index) const {
  return derive_seed(fold, 2000 + static_cast<std::uint64_t>(run_index));
}

FoldSeeds fold_seeds(std::uint64_t master_seed, int fold) {
  FoldSeeds s;
  s.fold = derive_seed(master_seed, static_cast<std::uint64_t>(fold));
  s.world = derive_seed(s.fold, 0);
  s.run = derive_seed(s.fold, 1);
  return s;
}

RlTables pretrain_rl(const ExperimentConfig& config, const Dataset& data, const TutorModel& tutor,
                     const FoldSeeds& seeds) {
  RlTables tables;
  std::vector<std::size_t> order(static_cast<std::size_t>(config.instances));
  for (int run = 0; run < config.rl_pretrain_runs; ++run) {
    std::vector<std::size_t> all(data.train.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    Rng shuffle(seeds.pretrain_order(run));
    std::shuffle(all.begin(), all.end(), shuffle);
    std::copy_n(all.begin(), order.size(), order.begin());
    run_learning(Condition::Rl, config.agent, data, order, tutor, &tables, true, seeds.pretrain(run));
  }
  return tables;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  const TutorModel tutor = make_tutor(config);
  ExperimentConfig cfg = config;
  cfg.agent.inventory = cfg.world.inventory;

  std::vector<std::vector<RunRecord>> per_fold(static_cast<std::size_t>(cfg.folds));
  std::atomic<int> next{0};
  std::mutex progress_mutex;
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (int fold = next++; fold < cfg.folds; fold = next++) {
      try {
        auto seeds = fold_seeds(cfg.master_seed, fold);
        WorldConfig wc = cfg.world;
        wc.seed = seeds.world;
        Dataset data = generate_dataset(wc);
        std::vector<std::size_t> order(static_cast<std::size_t>(cfg.instances));
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto& out = per_fold[static_cast<std::size_t>(fold)];
        for (auto cond : cfg.conditions) {
          RunRecord rec;
          rec.condition = cond;
          rec.fold = fold;
          if (cond == Condition::Rl) {
            RlTables tables = pretrain_rl(cfg, data, tutor, seeds);
            rec.run = run_learning(cond, cfg.agent, data, order, tutor, &tables, false, seeds.run);
          } else {
            rec.run = run_learning(cond, cfg.agent, data, order, tutor, nullptr, false, seeds.run);
          }
          out.push_back(std::move(rec));
          if (progress) {
            std::lock_guard lock(progress_mutex);
            progress(fold, cond);
          }
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = cfg.folds;
      }
    }
  };

  int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
  threads = std::min(threads, cfg.folds);
  std::vector<std::thread> pool;
  for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  ExperimentResult result;
  for (auto& fold : per_fold)
    for (auto& rec : fold) result.records.push_back(std::move(rec));
  result.summary = summarize(result.records);
  return result;
}

std::vector<ConditionSummary> summarize(std::span<const RunRecord> records) {
  std::vector<ConditionSummary> out;
  for (auto cond : conditions_in_order(records)) {
    std::vector<double> init, fin, joint, cost, delta, pen;
    for (const auto* r : runs_of(records, cond)) {
      if (r->run.curve.empty()) throw Error("run record without curve");
      init.push_back(r->run.initial.per_attribute());
      fin.push_back(r->final_accuracy());
      joint.push_back(r->run.curve.back().accuracy.joint);
      cost.push_back(r->run.total_cost);
      delta.push_back(r->delta_accuracy());
      pen.push_back(r->run.penalties);
    }
    ConditionSummary s;
    s.condition = cond;
    s.runs = static_cast<int>(fin.size());
    s.initial_accuracy = mean_of(init);
    s.final_accuracy_mean = mean_of(fin);
    s.final_accuracy_std = std_of(fin);
    s.final_joint_mean = mean_of(joint);
    s.final_joint_std = std_of(joint);
    s.total_cost_mean = mean_of(cost);
    s.total_cost_std = std_of(cost);
    s.delta_accuracy_mean = mean_of(delta);
    s.r_perf = s.total_cost_mean > 0 ? r_perf(s.delta_accuracy_mean, s.total_cost_mean) : 0.0;
    s.penalties_mean = mean_of(pen);
    out.push_back(s);
  }
  return out;
}

void emit_curves(std::span<const RunRecord> records, const std::filesystem::path& dir) {
  if (records.empty()) throw Error("no records to emit");
  std::filesystem::create_directories(dir);
  const auto acc_path = dir / "curves_accuracy.tsv";
  const auto cost_path = dir / "curves_cost.tsv";
  const auto avc_path = dir / "curves_acc_vs_cost.tsv";
  auto acc = open_out(acc_path);
  auto cost = open_out(cost_path);
  auto avc = open_out(avc_path);
  acc << "condition\tinstances\taccuracy_mean\taccuracy_std\tjoint_mean\tjoint_std\tthreshold_mean\n";
  cost << "condition\tinstances\tcost_mean\tcost_std\n";
  avc << "condition\tinstances\tcost_mean\taccuracy_mean\taccuracy_std\n";
  for (auto cond : conditions_in_order(records)) {
    const auto runs = runs_of(records, cond);
    const std::size_t bins = runs.front()->run.curve.size();
    for (const auto* r : runs)
      if (r->run.curve.size() != bins) throw Error("runs of one condition differ in length");
    for (std::size_t b = 0; b < bins; ++b) {
      std::vector<double> a, j, c, t;
      for (const auto* r : runs) {
        const auto& p = r->run.curve[b];
        a.push_back(p.accuracy.per_attribute());
        j.push_back(p.accuracy.joint);
        c.push_back(p.cumulative_cost);
        t.push_back(p.threshold);
      }
      const std::string head = std::string(to_string(cond)) + '\t' + std::to_string(runs.front()->run.curve[b].instances);
      acc << head << '\t' << format_double(mean_of(a)) << '\t' << format_double(std_of(a)) << '\t'
          << format_double(mean_of(j)) << '\t' << format_double(std_of(j)) << '\t' << format_double(mean_of(t)) << '\n';
      cost << head << '\t' << format_double(mean_of(c)) << '\t' << format_double(std_of(c)) << '\n';
      avc << head << '\t' << format_double(mean_of(c)) << '\t' << format_double(mean_of(a)) << '\t'
          << format_double(std_of(a)) << '\n';
    }
  }
  check_written(acc, acc_path);
  check_written(cost, cost_path);
  check_written(avc, avc_path);
}

std::string summary_table(std::span<const ConditionSummary> summary) {
  std::ostringstream out;
  out << "condition\truns\tinitial_accuracy\tfinal_accuracy_mean\tfinal_accuracy_std\tfinal_joint_mean\t"
         "final_joint_std\ttotal_cost_mean\ttotal_cost_std\tdelta_accuracy_mean\tr_perf\tpenalties_mean\n";
  for (const auto& s : summary)
    out << to_string(s.condition) << '\t' << s.runs << '\t' << format_double(s.initial_accuracy) << '\t'
        << format_double(s.final_accuracy_mean) << '\t' << format_double(s.final_accuracy_std) << '\t'
        << format_double(s.final_joint_mean) << '\t' << format_double(s.final_joint_std) << '\t'
        << format_double(s.total_cost_mean) << '\t' << format_double(s.total_cost_std) << '\t'
        << format_double(s.delta_accuracy_mean) << '\t' << format_double(s.r_perf) << '\t'
        << format_double(s.penalties_mean) << '\n';
  return out.str();
}

void write_run_directory(const std::filesystem::path& dir, const ExperimentConfig& config,
                         const ExperimentResult& result) {
  std::filesystem::create_directories(dir);
  emit_curves(result.records, dir);

  const auto rec_path = dir / "records.tsv";
  auto rec = open_out(rec_path);
  rec << "condition\tfold\tinstances\tcolour\tshape\tper_attribute\tjoint\tcumulative_cost\tthreshold\n";
  for (const auto& r : result.records) {
    const auto& i = r.run.initial;
    rec << to_string(r.condition) << '\t' << r.fold << "\t0\t" << format_double(i.colour) << '\t'
        << format_double(i.shape) << '\t' << format_double(i.per_attribute()) << '\t' << format_double(i.joint)
        << "\t0\t-\n";
    for (const auto& p : r.run.curve)
      rec << to_string(r.condition) << '\t' << r.fold << '\t' << p.instances << '\t'
          << format_double(p.accuracy.colour) << '\t' << format_double(p.accuracy.shape) << '\t'
          << format_double(p.accuracy.per_attribute()) << '\t' << format_double(p.accuracy.joint) << '\t'
          << format_double(p.cumulative_cost) << '\t' << format_double(p.threshold) << '\n';
  }
  check_written(rec, rec_path);

  const auto sum_path = dir / "summary.tsv";
  auto sum = open_out(sum_path);
  sum << summary_table(result.summary);
  check_written(sum, sum_path);

  const std::string cfg_text = config.to_json_text();
  json manifest;
  manifest["format"] = "vislearn-run v1";
  manifest["config"] = json::parse(cfg_text);
  manifest["config_hash"] = "fnv1a64:" + hex64(fnv1a64(cfg_text));
  json seeds = json::array();
  for (int f = 0; f < config.folds; ++f) {
    auto s = fold_seeds(config.master_seed, f);
    seeds.push_back({{"fold", f}, {"fold_seed", s.fold}, {"world_seed", s.world}, {"run_seed", s.run}});
  }
  manifest["seeds"] = seeds;
  manifest["files"] = {"records.tsv", "summary.tsv", "curves_accuracy.tsv", "curves_cost.tsv",
                       "curves_acc_vs_cost.tsv"};
  const auto man_path = dir / "manifest.json";
  auto man = open_out(man_path);
  man << manifest.dump(2) << '\n';
  check_written(man, man_path);
}

}  // namespace vislearn
