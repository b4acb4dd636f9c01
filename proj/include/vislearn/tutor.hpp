#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vislearn/common.hpp"
#include "vislearn/dialogue.hpp"
#include "vislearn/world.hpp"

namespace vislearn {

/// Tutoring cost per attribute: information 5, confirmation/rejection 0.5,
/// correction of a learner statement 5.
struct CostRates {
  double inform = 5.0;
  double ack = 0.5;
  double correction = 5.0;
};

enum class CostKind : std::uint8_t { None, Inform, Ack, Correction };

std::string_view to_string(CostKind k);

struct CostEntry {
  DialogueAct act;  // the tutor act that incurred the cost
  CostKind kind = CostKind::None;
  double cost = 0.0;
};

class CostLedger {
 public:
  void add(CostEntry entry);
  void add(const std::vector<CostEntry>& entries);
  double total() const { return total_; }
  const std::vector<CostEntry>& entries() const { return entries_; }
  std::size_t count(CostKind kind) const;

 private:
  double total_ = 0.0;
  std::vector<CostEntry> entries_;
};

/// Charges one tutor turn answering `learner_act` (may be null):
///  - Inform: `inform` per category, or `correction` when it corrects a
///    refuted learner statement (Inform) on that category, absorbing the Reject;
///  - Ack of a learner claim: `ack` per confirmed category;
///  - Reject of a learner claim: `ack` per refuted category unless absorbed;
///    a bare Reject of anything else: `ack` once;
///  - every other act: 0.
std::vector<CostEntry> charge(const DialogueAct* learner_act, const Turn& tutor_turn, const CostRates& rates = {});

/// Per-category correctness of a learner claim against the truth.
enum class Verdict : std::uint8_t { None, Correct, Wrong };

/// Conditioning key of the action table: the learner act kind, its categories
/// and per-category verdicts, plus whether the tutor's last turn was a question.
struct ConditionKey {
  ActKind kind = ActKind::Listen;
  CategorySet categories;
  std::array<Verdict, 2> verdicts{Verdict::None, Verdict::None};
  bool awaiting = false;

  static ConditionKey of(const DialogueAct& learner_act, const VisualObject& truth, bool awaiting);
  /// e.g. "Inform(colour=wrong&shape=correct)", "Listen()|awaiting".
  std::string str() const;
  static ConditionKey parse(std::string_view text);

  friend auto operator<=>(const ConditionKey&, const ConditionKey&) = default;
};

/// Tutor acts with "*" as the word of an Inform meaning "the true attribute".
struct TutorOutcome {
  Turn acts;
  double weight = 1.0;
};

struct TutorConfig {
  double initiative_prob = 0.5;
  /// Chance that an idle tutor points at an open attribute (Focus) instead of asking.
  double chatter_prob = 0.05;
  CostRates costs;
};

struct TutorResponse {
  Turn acts;
  std::string utterance;
  std::vector<CostEntry> costs;
};

/// Act-level conditional tutor model. Keys absent from the table fall back to
/// the built-in mapping: correct claims are acknowledged, wrong ones rejected
/// and corrected, questions and "don't know" answered with the true words.
class TutorModel {
 public:
  /// A null lexicon selects the default English one.
  explicit TutorModel(TutorConfig config = {}, std::shared_ptr<const TemplateLexicon> lexicon = nullptr);

  /// Frequency table over (learner act + verdicts) -> next tutor turn from an
  /// annotated corpus (see docs/formats.md). Throws Error on an empty corpus
  /// or malformed tags.
  static TutorModel fit(std::istream& corpus, TutorConfig config = {},
                        std::shared_ptr<const TemplateLexicon> lexicon = nullptr);

  /// Action table file: "key -> outcome tags | weight" lines plus optional
  /// "initiative <p>" and "chatter <p>" settings. Settings absent from the
  /// file keep the values of `config`.
  static TutorModel load(const std::filesystem::path& path, TutorConfig config = {},
                         std::shared_ptr<const TemplateLexicon> lexicon = nullptr);
  void save(std::ostream& out) const;

  void set_outcomes(const ConditionKey& key, std::vector<TutorOutcome> outcomes);
  const std::map<ConditionKey, std::vector<TutorOutcome>>& table() const { return table_; }
  const TutorConfig& config() const { return config_; }
  const TemplateLexicon& lexicon() const { return *lexicon_; }

  /// Either [Ask(colour&shape)] with probability initiative_prob, or nothing.
  Turn open_dialogue(const VisualObject& object, Rng& rng) const;

  /// Next tutor turn for a learner act. Throws Error for tutor-only learner acts.
  TutorResponse respond(const DialogueAct& learner_act, const DialogueContext& ctx, const VisualObject& truth,
                        Rng& rng) const;

  /// The built-in mapping for a key, with "*" words.
  Turn core_outcome(const ConditionKey& key, CategorySet open_categories, Rng& rng) const;

 private:
  TutorConfig config_;
  std::shared_ptr<const TemplateLexicon> lexicon_;
  std::map<ConditionKey, std::vector<TutorOutcome>> table_;
};

}  // namespace vislearn
