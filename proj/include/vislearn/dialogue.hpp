#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vislearn/common.hpp"

namespace vislearn {

enum class Actor : std::uint8_t { Learner, Tutor };

enum class ActKind : std::uint8_t {
  Listen,
  Inform,
  Ask,
  Polar,
  Ack,
  Reject,
  Focus,
  CLr,
  CLrRequest,
  Help,
  HelpRequest,
  Check,
  Repeat,
  Retry,
  DoNotKnow,
};

inline constexpr std::size_t kActKindCount = 15;

std::string_view to_string(ActKind k);
std::optional<ActKind> parse_act_kind(std::string_view name);
std::string_view to_string(Actor a);

/// Whether `actor` may perform an act of kind `k`.
bool actor_may(Actor actor, ActKind k);

/// A typed dialogue move. `categories` lists the attribute categories the act
/// is about; `words` carries the attribute word per category for acts that
/// assert a value (Inform, Polar).
struct DialogueAct {
  ActKind kind = ActKind::Listen;
  CategorySet categories;
  std::array<std::optional<std::string>, 2> words;

  static DialogueAct listen() { return {}; }
  static DialogueAct of(ActKind kind, CategorySet cats = {}) { return {kind, cats, {}}; }
  static DialogueAct inform(std::optional<std::string> colour, std::optional<std::string> shape);
  static DialogueAct polar(std::optional<std::string> colour, std::optional<std::string> shape);

  const std::optional<std::string>& word(Category c) const { return words[index_of(c)]; }
  void set_word(Category c, std::string w) {
    categories.add(c);
    words[index_of(c)] = std::move(w);
  }
  /// Inform or Polar: the act claims attribute values.
  bool is_claim() const { return kind == ActKind::Inform || kind == ActKind::Polar; }

  /// Throws Error when slots do not fit the kind (e.g. Ask with words, Inform without).
  void validate() const;

  /// Annotation-tag form, e.g. "Inform(colour:red&shape:square)", "Ask(colour)", "Ack()".
  std::string tag() const;

  friend bool operator==(const DialogueAct&, const DialogueAct&) = default;
};

/// Parses one annotation tag. Throws Error on malformed input.
DialogueAct parse_tag(std::string_view tag);

/// One turn may hold several acts, e.g. Reject(colour) Inform(colour:blue).
using Turn = std::vector<DialogueAct>;

/// Whitespace-separated sequence of tags.
Turn parse_tags(std::string_view text);
std::string tags(const Turn& turn);

/// Canonical form of a turn: Listen acts dropped from non-empty turns and
/// adjacent acts of the same kind over disjoint categories merged into one.
Turn normalize(Turn turn);

struct Template {
  Actor actor = Actor::Tutor;
  Turn acts;  // claim acts carry no words here; the text holds placeholders
  double weight = 1.0;
  std::string text;
  std::vector<std::string> tokens;
};

/// Utterance templates and attribute surface forms. Loaded from a text file:
///
///   # comment
///   extends default                          (optional, first directive only)
///   word <colour|shape> <attribute> <surface>
///   template <learner|tutor> <tags joined by '+'> <weight> <text with {colour}/{shape}>
///
/// Placeholders stand for the word slots of Inform/Polar acts.
class TemplateLexicon {
 public:
  static const TemplateLexicon& default_english();
  static TemplateLexicon from_text(std::string_view text);
  static TemplateLexicon load(const std::filesystem::path& path);

  /// Renders a (normalised) turn. Acts are grouped greedily into the longest
  /// runs covered by a template; each group samples one template by weight.
  /// Throws Error when some act has no template.
  std::string generate(Actor actor, const Turn& turn, Rng& rng) const;

  /// Lowercases, strips punctuation, then finds a segmentation of the tokens
  /// into templates of `actor` using the fewest segments (longest matches).
  /// Returns the normalised turn, or nullopt for unparseable text.
  std::optional<Turn> parse(std::string_view utterance, Actor actor = Actor::Tutor) const;

  const std::string& surface(const std::string& word) const;
  const std::vector<Template>& templates() const { return templates_; }
  /// Whether some template of `actor` renders exactly this act group.
  bool has_template(Actor actor, const Turn& group) const;

 private:
  void add_line(std::string_view line, std::size_t lineno);
  std::vector<std::size_t> matching(Actor actor, const Turn& group) const;

  std::vector<Template> templates_;
  std::map<std::string, std::string> surface_;  // word -> surface
  std::map<std::string, std::string> word_of_;  // surface -> word
  std::map<std::string, Category> category_;    // word -> category
};

std::vector<std::string> tokenize_utterance(std::string_view text);

struct TurnRecord {
  Actor actor;
  Turn acts;
  std::string utterance;
};

/// Labels carried by a tutor turn, given the learner's claim it answers (if
/// any): Inform words, plus confirmed words of the claim for each Ack.
struct Label {
  Category category;
  std::string word;
  friend bool operator==(const Label&, const Label&) = default;
};
std::vector<Label> labels_in(const Turn& tutor_turn, const DialogueAct* learner_claim);

/// Categories a Reject in `tutor_turn` refutes; an empty Reject() refutes the claim's categories.
CategorySet rejected_in(const Turn& tutor_turn, const DialogueAct* learner_claim);

/// Per-dialogue record used by the dialogue MDP.
class DialogueContext {
 public:
  explicit DialogueContext(int object_id = -1) : object_id_(object_id) {}

  /// Appends a turn. Throws Error if an act is not legal for `actor`.
  void update(Actor actor, Turn acts, std::string utterance);

  int object_id() const { return object_id_; }
  const std::vector<TurnRecord>& turns() const { return turns_; }
  CategorySet discussed() const { return discussed_; }
  CategorySet provided() const { return provided_; }
  /// Categories whose learner guess the tutor refuted without supplying the answer.
  CategorySet refuted() const { return refuted_; }

  const TurnRecord* last_turn() const { return turns_.empty() ? nullptr : &turns_.back(); }
  const TurnRecord* last_tutor_turn() const;
  /// Most recent learner act, skipping clarification requests.
  const DialogueAct* last_learner_act() const;
  /// The most recent learner act if it is a claim (Inform/Polar), else nullptr.
  const DialogueAct* pending_claim() const;
  /// Whether the last turn is a tutor turn containing a question.
  bool tutor_awaits_answer() const;

 private:
  int object_id_;
  std::vector<TurnRecord> turns_;
  CategorySet discussed_;
  CategorySet provided_;
  CategorySet refuted_;
};

}  // namespace vislearn
