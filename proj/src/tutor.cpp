#include "vislearn/tutor.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace vislearn {

namespace {

constexpr std::string_view kTruthWord = "*";

std::shared_ptr<const TemplateLexicon> default_lexicon() {
  return {&TemplateLexicon::default_english(), [](const TemplateLexicon*) {}};
}

bool uses_awaiting(ActKind k) { return k == ActKind::Listen || k == ActKind::Ack; }

bool is_question(const DialogueAct& a) { return a.kind == ActKind::Ask || a.kind == ActKind::Retry; }

// Whether the tutor's latest turn asked something the learner's reply answers.
bool tutor_asked(const DialogueContext& ctx) {
  const auto* t = ctx.last_tutor_turn();
  return t && std::any_of(t->acts.begin(), t->acts.end(), is_question);
}

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Correct:
      return "correct";
    case Verdict::Wrong:
      return "wrong";
    default:
      return "";
  }
}

CategorySet with_verdict(const ConditionKey& key, Verdict v) {
  CategorySet out;
  for (auto c : key.categories.members())
    if (key.verdicts[index_of(c)] == v) out.add(c);
  return out;
}

DialogueAct inform_truth(CategorySet cats) {
  DialogueAct a = DialogueAct::of(ActKind::Inform);
  for (auto c : cats.members()) a.set_word(c, std::string(kTruthWord));
  return a;
}

// Replaces "*" words with the truth and drops acknowledgements or rejections
// that would contradict it.
Turn instantiate(const Turn& outcome, const ConditionKey& key, const DialogueAct& learner_act,
                 const VisualObject& truth) {
  Turn out;
  const bool claim = learner_act.is_claim();
  const CategorySet correct = with_verdict(key, Verdict::Correct);
  const CategorySet wrong = with_verdict(key, Verdict::Wrong);
  for (auto act : outcome) {
    if (act.kind == ActKind::Inform || act.kind == ActKind::Polar) {
      for (auto c : act.categories.members()) act.words[index_of(c)] = truth.label(c);
    } else if (claim && (act.kind == ActKind::Ack || act.kind == ActKind::Reject)) {
      CategorySet target = act.categories.empty() ? learner_act.categories : act.categories;
      CategorySet allowed = target.intersect(act.kind == ActKind::Ack ? correct : wrong);
      if (allowed.empty()) continue;
      if (!act.categories.empty() || allowed != target) act.categories = allowed;
    }
    out.push_back(std::move(act));
  }
  if (out.empty()) out.push_back(DialogueAct::listen());
  return normalize(std::move(out));
}

std::vector<TutorOutcome> parse_outcome_line(const std::string& rhs, double weight) {
  Turn acts = parse_tags(rhs);
  for (const auto& a : acts)
    if (!actor_may(Actor::Tutor, a.kind)) throw Error(std::string(to_string(a.kind)) + " is not a tutor act");
  return {{std::move(acts), weight}};
}

}  // namespace

std::string_view to_string(CostKind k) {
  switch (k) {
    case CostKind::Inform:
      return "inform";
    case CostKind::Ack:
      return "ack";
    case CostKind::Correction:
      return "correction";
    default:
      return "none";
  }
}

void CostLedger::add(CostEntry entry) {
  total_ += entry.cost;
  entries_.push_back(std::move(entry));
}

void CostLedger::add(const std::vector<CostEntry>& entries) {
  for (const auto& e : entries) add(e);
}

std::size_t CostLedger::count(CostKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [&](const CostEntry& e) { return e.kind == kind; }));
}

std::vector<CostEntry> charge(const DialogueAct* learner_act, const Turn& tutor_turn, const CostRates& rates) {
  const DialogueAct* claim = learner_act && learner_act->is_claim() ? learner_act : nullptr;
  CategorySet corrected;
  if (claim && claim->kind == ActKind::Inform) {
    CategorySet informed;
    for (const auto& a : tutor_turn)
      if (a.kind == ActKind::Inform) informed.add(a.categories);
    corrected = rejected_in(tutor_turn, claim).intersect(informed).intersect(claim->categories);
  }
  std::vector<CostEntry> out;
  for (const auto& act : tutor_turn) {
    switch (act.kind) {
      case ActKind::Inform:
        for (auto c : act.categories.members()) {
          if (corrected.has(c))
            out.push_back({act, CostKind::Correction, rates.correction});
          else
            out.push_back({act, CostKind::Inform, rates.inform});
        }
        break;
      case ActKind::Ack:
        if (claim) {
          CategorySet cats = act.categories.empty() ? claim->categories : act.categories.intersect(claim->categories);
          for (std::size_t i = 0; i < cats.size(); ++i) out.push_back({act, CostKind::Ack, rates.ack});
          if (cats.empty()) out.push_back({act, CostKind::None, 0.0});
        } else {
          out.push_back({act, CostKind::None, 0.0});
        }
        break;
      case ActKind::Reject:
        if (claim) {
          CategorySet cats = act.categories.empty() ? claim->categories : act.categories;
          for (auto c : cats.members()) {
            if (corrected.has(c))
              out.push_back({act, CostKind::None, 0.0});
            else
              out.push_back({act, CostKind::Ack, rates.ack});
          }
        } else {
          out.push_back({act, CostKind::Ack, rates.ack});
        }
        break;
      default:
        out.push_back({act, CostKind::None, 0.0});
    }
  }
  return out;
}

ConditionKey ConditionKey::of(const DialogueAct& learner_act, const VisualObject& truth, bool awaiting) {
  ConditionKey key;
  key.kind = learner_act.kind;
  key.categories = learner_act.categories;
  if (learner_act.is_claim())
    for (auto c : learner_act.categories.members())
      key.verdicts[index_of(c)] = *learner_act.word(c) == truth.label(c) ? Verdict::Correct : Verdict::Wrong;
  key.awaiting = awaiting && uses_awaiting(learner_act.kind);
  return key;
}

std::string ConditionKey::str() const {
  std::string out(to_string(kind));
  out += '(';
  bool first = true;
  for (auto c : categories.members()) {
    if (!first) out += '&';
    first = false;
    out += to_string(c);
    auto v = verdicts[index_of(c)];
    if (v != Verdict::None) out += "=" + std::string(verdict_name(v));
  }
  out += ')';
  if (awaiting) out += "|awaiting";
  return out;
}

ConditionKey ConditionKey::parse(std::string_view text) {
  text = trim(text);
  ConditionKey key;
  auto bar = text.find('|');
  if (bar != std::string_view::npos) {
    if (trim(text.substr(bar + 1)) != "awaiting") throw Error("bad key suffix in '" + std::string(text) + "'");
    key.awaiting = true;
    text = trim(text.substr(0, bar));
  }
  // Reuse the tag grammar: "colour=wrong" becomes a word slot "wrong".
  std::string as_tag(text);
  std::replace(as_tag.begin(), as_tag.end(), '=', ':');
  DialogueAct act = parse_tag(as_tag);
  key.kind = act.kind;
  key.categories = act.categories;
  for (auto c : act.categories.members()) {
    const auto& w = act.word(c);
    if (!w) continue;
    if (*w == "correct")
      key.verdicts[index_of(c)] = Verdict::Correct;
    else if (*w == "wrong")
      key.verdicts[index_of(c)] = Verdict::Wrong;
    else
      throw Error("bad verdict '" + *w + "' in key '" + std::string(text) + "'");
  }
  if (key.awaiting && !uses_awaiting(key.kind)) throw Error("'|awaiting' only applies to Listen and Ack keys");
  return key;
}

TutorModel::TutorModel(TutorConfig config, std::shared_ptr<const TemplateLexicon> lexicon)
    : config_(config), lexicon_(lexicon ? std::move(lexicon) : default_lexicon()) {
  for (double p : {config_.initiative_prob, config_.chatter_prob})
    if (!(p >= 0.0 && p <= 1.0)) throw Error("tutor probabilities must lie in [0, 1]");
}

void TutorModel::set_outcomes(const ConditionKey& key, std::vector<TutorOutcome> outcomes) {
  if (outcomes.empty()) throw Error("no outcomes for key " + key.str());
  for (const auto& o : outcomes)
    if (!(o.weight > 0)) throw Error("outcome weights must be positive (key " + key.str() + ")");
  table_[key] = std::move(outcomes);
}

Turn TutorModel::open_dialogue(const VisualObject&, Rng& rng) const {
  if (uniform01(rng) < config_.initiative_prob) return {DialogueAct::of(ActKind::Ask, CategorySet::both())};
  return {};
}

Turn TutorModel::core_outcome(const ConditionKey& key, CategorySet open_categories, Rng& rng) const {
  switch (key.kind) {
    case ActKind::Inform:
    case ActKind::Polar: {
      Turn out;
      auto right = with_verdict(key, Verdict::Correct);
      auto wrong = with_verdict(key, Verdict::Wrong);
      if (!right.empty()) out.push_back(DialogueAct::of(ActKind::Ack, right));
      if (!wrong.empty()) {
        out.push_back(DialogueAct::of(ActKind::Reject, wrong));
        out.push_back(inform_truth(wrong));
      }
      return out;
    }
    case ActKind::Ask:
    case ActKind::DoNotKnow:
      return {inform_truth(key.categories)};
    case ActKind::HelpRequest:
      if (open_categories.empty()) return {DialogueAct::of(ActKind::Help)};
      return {DialogueAct::of(ActKind::Help), inform_truth(open_categories)};
    case ActKind::CLrRequest:
      return {DialogueAct::of(ActKind::Repeat)};
    case ActKind::Listen:
    case ActKind::Ack:
      if (key.awaiting) return {DialogueAct::of(ActKind::Retry)};
      if (open_categories.empty()) return {DialogueAct::listen()};
      if (config_.chatter_prob > 0 && uniform01(rng) < config_.chatter_prob)
        return {DialogueAct::of(ActKind::Focus, CategorySet{open_categories.members().front()})};
      return {DialogueAct::of(ActKind::Ask, open_categories)};
    default:
      return {DialogueAct::listen()};
  }
}

TutorResponse TutorModel::respond(const DialogueAct& learner_act, const DialogueContext& ctx,
                                  const VisualObject& truth, Rng& rng) const {
  if (!actor_may(Actor::Learner, learner_act.kind))
    throw Error(std::string(to_string(learner_act.kind)) + " is not a learner act");
  learner_act.validate();
  auto key = ConditionKey::of(learner_act, truth, tutor_asked(ctx));
  Turn outcome;
  if (auto it = table_.find(key); it != table_.end()) {
    double total = 0;
    for (const auto& o : it->second) total += o.weight;
    double r = uniform01(rng) * total;
    outcome = it->second.back().acts;
    for (const auto& o : it->second) {
      r -= o.weight;
      if (r < 0) {
        outcome = o.acts;
        break;
      }
    }
  } else {
    outcome = core_outcome(key, CategorySet::both().minus(ctx.provided()), rng);
  }
  TutorResponse resp;
  resp.acts = instantiate(outcome, key, learner_act, truth);
  resp.utterance = lexicon_->generate(Actor::Tutor, resp.acts, rng);
  resp.costs = charge(&learner_act, resp.acts, config_.costs);
  return resp;
}

TutorModel TutorModel::fit(std::istream& corpus, TutorConfig config, std::shared_ptr<const TemplateLexicon> lexicon) {
  struct Counts {
    std::vector<std::pair<std::string, Turn>> outcomes;  // tags -> abstract turn
    std::vector<double> counts;
  };
  std::map<ConditionKey, Counts> counts;
  std::optional<VisualObject> truth;
  std::optional<DialogueAct> pending;  // learner act awaiting a tutor response
  bool pending_awaiting = false;
  bool awaiting = false;
  std::size_t pairs = 0, lineno = 0;
  std::string line;
  auto fail = [&](const std::string& why) {
    throw Error("corpus line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(corpus, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.rfind("object", 0) == 0) {
      VisualObject o;
      for (const auto& field : split_ws(t.substr(6))) {
        auto eq = field.find('=');
        if (eq == std::string::npos) fail("expected key=value in object line");
        auto cat = parse_category(std::string_view(field).substr(0, eq));
        if (!cat) fail("unknown category in object line");
        (*cat == Category::Colour ? o.colour_label : o.shape_label) = field.substr(eq + 1);
      }
      if (o.colour_label.empty() || o.shape_label.empty()) fail("object line needs colour= and shape=");
      truth = o;
      pending.reset();
      awaiting = false;
      continue;
    }
    if (t.size() < 2 || t[1] != ':' || (t[0] != 'T' && t[0] != 'L')) fail("expected 'T:' or 'L:' turn");
    if (!truth) fail("turn before any 'object' line");
    Turn acts;
    try {
      acts = parse_tags(t.substr(2));
    } catch (const Error& e) {
      fail(e.what());
    }
    if (acts.empty()) fail("empty turn");
    Actor actor = t[0] == 'T' ? Actor::Tutor : Actor::Learner;
    for (const auto& a : acts) {
      if (!actor_may(actor, a.kind)) fail(std::string(to_string(a.kind)) + " is not a " + std::string(to_string(actor)) + " act");
      try {
        a.validate();
      } catch (const Error& e) {
        fail(e.what());
      }
    }
    if (actor == Actor::Learner) {
      pending = acts.back();
      pending_awaiting = awaiting;
      awaiting = false;
      continue;
    }
    if (pending) {
      auto key = ConditionKey::of(*pending, *truth, pending_awaiting);
      Turn abstract = acts;
      for (auto& a : abstract)
        if (a.kind == ActKind::Inform || a.kind == ActKind::Polar)
          for (auto c : a.categories.members()) a.words[index_of(c)] = std::string(kTruthWord);
      abstract = normalize(std::move(abstract));
      auto& slot = counts[key];
      auto text = tags(abstract);
      auto it = std::find_if(slot.outcomes.begin(), slot.outcomes.end(), [&](const auto& p) { return p.first == text; });
      if (it == slot.outcomes.end()) {
        slot.outcomes.emplace_back(text, abstract);
        slot.counts.push_back(1.0);
      } else {
        slot.counts[static_cast<std::size_t>(it - slot.outcomes.begin())] += 1.0;
      }
      ++pairs;
      pending.reset();
    }
    awaiting = std::any_of(acts.begin(), acts.end(), is_question);
  }
  if (pairs == 0) throw Error("corpus contains no learner/tutor exchanges");
  TutorModel model(config, std::move(lexicon));
  for (auto& [key, c] : counts) {
    std::vector<TutorOutcome> outs;
    for (std::size_t i = 0; i < c.outcomes.size(); ++i) outs.push_back({c.outcomes[i].second, c.counts[i]});
    model.set_outcomes(key, std::move(outs));
  }
  return model;
}

void TutorModel::save(std::ostream& out) const {
  out << "# vislearn tutor action table v1\n";
  out << "initiative " << format_double(config_.initiative_prob) << '\n';
  out << "chatter " << format_double(config_.chatter_prob) << '\n';
  for (const auto& [key, outs] : table_)
    for (const auto& o : outs) out << key.str() << " -> " << tags(o.acts) << " | " << format_double(o.weight) << '\n';
}

TutorModel TutorModel::load(const std::filesystem::path& path, TutorConfig config,
                            std::shared_ptr<const TemplateLexicon> lexicon) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open action table: " + path.string());
  std::map<ConditionKey, std::vector<TutorOutcome>> table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    try {
      auto tok = split_ws(t);
      if (tok[0] == "initiative" || tok[0] == "chatter") {
        if (tok.size() != 2) throw Error("expected '" + tok[0] + " <probability>'");
        (tok[0] == "initiative" ? config.initiative_prob : config.chatter_prob) = parse_double(tok[1]);
        continue;
      }
      auto arrow = t.find("->");
      if (arrow == std::string_view::npos) throw Error("expected 'key -> outcome | weight'");
      auto rhs = t.substr(arrow + 2);
      double weight = 1.0;
      if (auto bar = rhs.rfind('|'); bar != std::string_view::npos) {
        weight = parse_double(rhs.substr(bar + 1));
        rhs = rhs.substr(0, bar);
      }
      auto key = ConditionKey::parse(t.substr(0, arrow));
      for (auto& o : parse_outcome_line(std::string(rhs), weight)) table[key].push_back(std::move(o));
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  TutorModel model(config, std::move(lexicon));
  for (auto& [key, outs] : table) model.set_outcomes(key, std::move(outs));
  return model;
}

}  // namespace vislearn
