#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vislearn/common.hpp"
#include "vislearn/dialogue.hpp"
#include "vislearn/tutor.hpp"
#include "vislearn/vision.hpp"
#include "vislearn/world.hpp"

namespace vislearn {

// ---------------------------------------------------------------- Q-table

/// Tabular action values over integer-coded states and actions. Missing
/// entries read as `initial`.
class QTable {
 public:
  using Key = std::pair<std::uint32_t, std::uint8_t>;

  explicit QTable(double initial = 0.0) : initial_(initial) {}

  double get(std::uint32_t state, std::uint8_t action) const;
  void set(std::uint32_t state, std::uint8_t action, double value);
  std::size_t visits(std::uint32_t state, std::uint8_t action) const;
  void visit(std::uint32_t state, std::uint8_t action);
  double initial() const { return initial_; }
  const std::map<Key, double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  /// One "state <TAB> action <TAB> value <TAB> visits" line per entry, the
  /// first two rendered by the given names; values in shortest round-trip form.
  void save(std::ostream& out, std::string_view kind, const std::function<std::string(std::uint32_t)>& state_name,
            const std::function<std::string(std::uint8_t)>& action_name) const;
  static QTable load(std::istream& in, std::string_view kind,
                     const std::function<std::uint32_t(std::string_view)>& parse_state,
                     const std::function<std::uint8_t(std::string_view)>& parse_action);

  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  double initial_;
  std::map<Key, double> values_;
  std::map<Key, std::size_t> visits_;
};

struct SarsaConfig {
  double epsilon = 0.2;
  double alpha = 0.1;
  double gamma = 1.0;
};

/// Q(s,a) += alpha (r + gamma Q(s',a') - Q(s,a)); `next` empty means terminal.
/// Throws Error on a non-finite reward.
void sarsa_update(QTable& q, std::uint32_t s, std::uint8_t a, double r,
                  std::optional<std::pair<std::uint32_t, std::uint8_t>> next, double alpha, double gamma);

/// With probability epsilon a uniform legal action, else the legal argmax with
/// ties to the earliest action in `legal`. The rng is not touched when epsilon is 0.
/// Throws Error on an empty legal set.
std::uint8_t select_action(const QTable& q, std::uint32_t s, std::span<const std::uint8_t> legal, double epsilon,
                           Rng& rng);

// ---------------------------------------------------------------- threshold MDP

inline constexpr std::array<double, 7> kThresholdGrid{0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
inline constexpr int kBins = 50;
inline constexpr int kInstancesPerBin = 10;

enum class ThresholdAction : std::uint8_t { Increase, Decrease, Keep };
inline constexpr std::array<ThresholdAction, 3> kThresholdActions{ThresholdAction::Increase, ThresholdAction::Decrease,
                                                                  ThresholdAction::Keep};
std::string_view to_string(ThresholdAction a);

/// Grid index of a threshold; throws Error when `thd` is not a grid value.
std::size_t threshold_index(double thd);

struct ThresholdState {
  int bin = 0;               // 0..49
  std::size_t threshold = 6;  // index into kThresholdGrid
  int delta = 0;             // -1, 0, 1

  double value() const { return kThresholdGrid[threshold]; }
  std::uint32_t code() const;
  static ThresholdState from_code(std::uint32_t code);
  /// "bin=3,thd=0.8,delta=-1"
  std::string str() const;
  static ThresholdState parse(std::string_view text);
  friend bool operator==(const ThresholdState&, const ThresholdState&) = default;
};

inline constexpr std::uint32_t kThresholdStateCount = kBins * 7 * 3;

/// Sign of cur - prev; differences within 1e-12 count as 0.
int delta_acc_level(double prev_acc, double cur_acc);

/// Moves one 0.05 grid step, clamped to [0.65, 0.95].
double apply_threshold_action(double thd, ThresholdAction a);

/// k (cur - prev).
double threshold_reward(double prev_acc, double cur_acc, double k = 100.0);

enum class Schedule : std::uint8_t { Constant95, Decay05, Decay01 };

/// constant95: 0.95; decay05: max(0.65, 0.95 - 0.05 bin); decay01: max(0.65, 0.95 - 0.01 bin).
double baseline_threshold_schedule(Schedule kind, int bin);

// ---------------------------------------------------------------- dialogue MDP

struct DialogueState {
  int c_state = 0;
  int s_state = 0;
  std::optional<ActKind> pre_da;  // most informative act of the last tutor turn
  CategorySet pre_context;        // categories discussed so far

  std::uint32_t code() const;
  static DialogueState from_code(std::uint32_t code);
  /// "c=0,s=2,da=Inform,ctx=colour&shape"; absent values print as "none".
  std::string str() const;
  static DialogueState parse(std::string_view text);
  friend bool operator==(const DialogueState&, const DialogueState&) = default;
};

inline constexpr std::uint32_t kDialogueStateCount = 3 * 3 * (kActKindCount + 1) * 4;

enum class LearnerActionKind : std::uint8_t { AskWH, AskPolar, Inform, DoNotKnow, Ack, Listen };

struct LearnerAction {
  LearnerActionKind kind = LearnerActionKind::Listen;
  CategorySet target;

  /// Canonical index 0..13: the four targeted kinds over colour, shape, both; then Ack, Listen.
  std::uint8_t index() const;
  static LearnerAction from_index(std::uint8_t i);
  /// "AskWH(colour)", "Ack()"
  std::string str() const;
  static LearnerAction parse(std::string_view text);
  friend bool operator==(const LearnerAction&, const LearnerAction&) = default;
};

inline constexpr std::uint8_t kLearnerActionCount = 14;

/// Inform/AskPolar need confidence > 0.5 on every target, DoNotKnow needs
/// confidence <= 0.5 on every target; the rest are always allowed.
bool is_legal(LearnerAction a, const std::array<double, 2>& confidence);

/// Status of both categories plus the last tutor act and discussed categories.
DialogueState encode_dialogue_state(const GroundingMap& map, const VisualObject& object, const DialogueContext& ctx,
                                    double thd);

/// The pre_da value of a tutor turn: Inform > Reject > Ack > first act.
std::optional<ActKind> summarize_tutor_turn(const Turn& turn);

/// 10 - total cost - p * penalties.
double global_reward(const CostLedger& ledger, int penalty_count, double p = 2.0);

/// Colour first: status 0 asks, status 1 checks the best guess; both known closes with Ack.
LearnerAction rule_policy(const DialogueState& s);

// ---------------------------------------------------------------- episodes

struct EpisodeRules {
  int turn_cap = 30;
  double penalty = 2.0;
  double completion_reward = 10.0;
};

/// The learner side of one dialogue about one object. Used step by step by
/// both the simulator loop and the live service, so both apply identical
/// knowledge updates, cost accounting and penalties.
class DialogueEpisode {
 public:
  /// `map` must outlive the episode; it is trained in place by tutor labels.
  DialogueEpisode(GroundingMap& map, const VisualObject& object, double threshold, EpisodeRules rules = {});

  /// Tutor opening move, charged at `rates`. Empty or Listen-only turns record nothing.
  void open(Turn acts, std::string utterance, const CostRates& rates = {});

  /// Records a learner move for `a` and returns its act. Counts a penalty when
  /// the move is incoherent. Throws Error if the episode is finished or `a` is illegal.
  const DialogueAct& learner_move(LearnerAction a, const TemplateLexicon& lexicon, Rng& nlg_rng);
  /// Records a learner turn outside the MDP (CLrRequest, closing Ack).
  void learner_aside(DialogueAct act, std::string utterance);

  /// Records a tutor reply: trains on its labels, charges `costs`, then checks
  /// termination and the turn cap. Returns the step reward.
  double tutor_move(Turn acts, std::string utterance, const std::vector<CostEntry>& costs);

  DialogueState state() const;
  std::vector<LearnerAction> legal_actions() const;
  std::array<double, 2> confidences() const;
  std::array<PredictionStatus, 2> statuses() const;
  /// Concrete act for an abstract action; claims carry the best-guess words.
  DialogueAct realise(LearnerAction a) const;
  bool incoherent(LearnerAction a) const;

  bool finished() const { return finished_; }
  bool capped() const { return capped_; }
  int penalties() const { return penalties_; }
  int steps() const { return steps_; }
  double threshold() const { return threshold_; }
  const DialogueContext& context() const { return ctx_; }
  const CostLedger& ledger() const { return ledger_; }
  const VisualObject& object() const { return *object_; }
  const EpisodeRules& rules() const { return rules_; }
  /// The learner act the next tutor turn answers (null before any learner move).
  const DialogueAct* awaiting_reply() const { return pending_ ? &*pending_ : nullptr; }
  /// 10 - cost - p * penalties once finished.
  double total_reward() const;

 private:
  void check_done();

  GroundingMap* map_;
  const VisualObject* object_;
  double threshold_;
  EpisodeRules rules_;
  DialogueContext ctx_;
  CostLedger ledger_;
  std::optional<DialogueAct> pending_;
  int penalties_ = 0;
  int step_penalties_ = 0;
  int steps_ = 0;
  bool finished_ = false;
  bool capped_ = false;
};

/// Decides learner moves; may learn from transitions.
class DialoguePolicy {
 public:
  virtual ~DialoguePolicy() = default;
  virtual LearnerAction choose(const DialogueState& s, std::span<const LearnerAction> legal, Rng& rng) = 0;
  /// `next` is empty at the end of the episode.
  virtual void observe(const DialogueState&, LearnerAction, double /*reward*/,
                       std::optional<std::pair<DialogueState, LearnerAction>> /*next*/) {}
};

class RulePolicy final : public DialoguePolicy {
 public:
  LearnerAction choose(const DialogueState& s, std::span<const LearnerAction> legal, Rng& rng) override;
};

/// epsilon-greedy over a dialogue Q-table; learns with SARSA when `learning`.
class SarsaPolicy final : public DialoguePolicy {
 public:
  SarsaPolicy(QTable& q, SarsaConfig config, bool learning);
  LearnerAction choose(const DialogueState& s, std::span<const LearnerAction> legal, Rng& rng) override;
  void observe(const DialogueState& s, LearnerAction a, double reward,
               std::optional<std::pair<DialogueState, LearnerAction>> next) override;
  const QTable& table() const { return *q_; }

 private:
  QTable* q_;
  SarsaConfig config_;
  bool learning_;
};

struct EpisodeRngs {
  Rng& tutor;
  Rng& policy;
  Rng& nlg;
};

struct EpisodeResult {
  std::vector<TurnRecord> turns;
  CostLedger ledger;
  int penalties = 0;
  int steps = 0;
  bool capped = false;
  double reward = 0.0;
};

/// Simulated dialogue: tutor opening, alternating learner/tutor turns until both
/// attributes are known or provided, then a closing learner Ack (outside the MDP).
EpisodeResult run_dialogue_episode(DialoguePolicy& policy, GroundingMap& map, const TutorModel& tutor,
                                   const VisualObject& object, double thd, const EpisodeRules& rules,
                                   EpisodeRngs rngs);

std::string dialogue_state_name(std::uint32_t code);
std::string dialogue_action_name(std::uint8_t a);
std::string threshold_state_name(std::uint32_t code);
std::string threshold_action_name(std::uint8_t a);
void save_dialogue_q(std::ostream& out, const QTable& q);
QTable load_dialogue_q(std::istream& in);
void save_threshold_q(std::ostream& out, const QTable& q);
QTable load_threshold_q(std::istream& in);

// ---------------------------------------------------------------- learning runs

enum class Condition : std::uint8_t { Rl, Constant95, Decay05, Decay01 };
inline constexpr std::array<Condition, 4> kConditions{Condition::Rl, Condition::Constant95, Condition::Decay05,
                                                      Condition::Decay01};
std::string_view to_string(Condition c);
std::optional<Condition> parse_condition(std::string_view text);

struct AgentConfig {
  AttributeInventory inventory = AttributeInventory::default_inventory();
  /// Learning rate 3: at 0.1 no confidence reaches even the lowest threshold
  /// within 500 instances, so every schedule behaves alike.
  ClassifierConfig vision{3.0, 0.0};
  EpisodeRules episode;
  SarsaConfig dialogue_sarsa;
  SarsaConfig threshold_sarsa;
  double reward_scale = 100.0;
  double initial_threshold = 0.95;
  int instances = 500;
};

/// Q-tables of the RL learner. With `learning` false both are read only and
/// every choice is greedy.
struct RlTables {
  QTable dialogue;
  QTable threshold;
};

struct CurvePoint {
  int instances = 0;
  AccuracyReport accuracy;
  double cumulative_cost = 0.0;
  double threshold = 0.0;  // threshold in force during the bin
};

struct RunResult {
  AccuracyReport initial;
  std::vector<CurvePoint> curve;  // one point per bin
  double total_cost = 0.0;
  int penalties = 0;
  int zero_turn_episodes = 0;
  int capped_episodes = 0;
};

/// One learning run over `order` (indices into train, a multiple of 10 long)
/// with fresh classifiers. Accuracy on `test` is evaluated before the first
/// instance and after every bin. The rl condition reads and, when `learning`,
/// updates `tables`; baselines use the rule policy and their fixed schedule.
RunResult run_learning(Condition condition, const AgentConfig& config, const Dataset& data,
                       std::span<const std::size_t> order, const TutorModel& tutor, RlTables* tables, bool learning,
                       std::uint64_t seed);

}  // namespace vislearn
