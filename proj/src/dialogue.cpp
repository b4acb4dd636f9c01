#include "vislearn/dialogue.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <sstream>

namespace vislearn {

namespace {

constexpr std::array<std::string_view, kActKindCount> kKindNames{
    "Listen", "Inform", "Ask",         "Polar", "Ack",    "Reject", "Focus",     "CLr",
    "CLrRequest", "Help", "HelpRequest", "Check", "Repeat", "Retry", "DoNotKnow",
};

bool is_stripped_punct(char ch) {
  return ch == '.' || ch == ',' || ch == '?' || ch == '!' || ch == ';' || ch == ':' || ch == '"';
}

std::string group_signature(const Turn& group) {
  std::string out;
  for (const auto& a : group) {
    if (!out.empty()) out += '+';
    out += std::string(to_string(a.kind)) + "(" + to_string(a.categories) + ")";
  }
  return out;
}

}  // namespace

std::string_view to_string(ActKind k) { return kKindNames[static_cast<std::size_t>(k)]; }

std::optional<ActKind> parse_act_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == name) return static_cast<ActKind>(i);
  return std::nullopt;
}

std::string_view to_string(Actor a) { return a == Actor::Learner ? "learner" : "tutor"; }

bool actor_may(Actor actor, ActKind k) {
  switch (k) {
    case ActKind::Reject:
    case ActKind::Focus:
    case ActKind::CLr:
    case ActKind::Help:
    case ActKind::Check:
    case ActKind::Repeat:
    case ActKind::Retry:
      return actor == Actor::Tutor;
    case ActKind::CLrRequest:
    case ActKind::HelpRequest:
    case ActKind::DoNotKnow:
      return actor == Actor::Learner;
    default:
      return true;
  }
}

DialogueAct DialogueAct::inform(std::optional<std::string> colour, std::optional<std::string> shape) {
  DialogueAct a{ActKind::Inform, {}, {}};
  if (colour) a.set_word(Category::Colour, std::move(*colour));
  if (shape) a.set_word(Category::Shape, std::move(*shape));
  return a;
}

DialogueAct DialogueAct::polar(std::optional<std::string> colour, std::optional<std::string> shape) {
  auto a = inform(std::move(colour), std::move(shape));
  a.kind = ActKind::Polar;
  return a;
}

void DialogueAct::validate() const {
  for (auto c : kCategories)
    if (words[index_of(c)] && !categories.has(c)) throw Error(tag() + ": word outside its categories");
  bool any_word = words[0].has_value() || words[1].has_value();
  switch (kind) {
    case ActKind::Inform:
    case ActKind::Polar:
      if (categories.empty()) throw Error(tag() + ": needs at least one attribute");
      for (auto c : categories.members())
        if (!word(c)) throw Error(tag() + ": missing word for " + std::string(to_string(c)));
      return;
    case ActKind::Ask:
    case ActKind::Focus:
    case ActKind::DoNotKnow:
      if (categories.empty()) throw Error(tag() + ": needs a category");
      [[fallthrough]];
    case ActKind::Ack:
    case ActKind::Reject:
      if (any_word) throw Error(tag() + ": carries no attribute words");
      return;
    default:
      if (!categories.empty() || any_word) throw Error(tag() + ": carries no slots");
  }
}

std::string DialogueAct::tag() const {
  std::string out(to_string(kind));
  out += '(';
  bool first = true;
  for (auto c : categories.members()) {
    if (!first) out += '&';
    first = false;
    out += to_string(c);
    if (word(c)) out += ":" + *word(c);
  }
  out += ')';
  return out;
}

DialogueAct parse_tag(std::string_view tag) {
  tag = trim(tag);
  auto open = tag.find('(');
  if (open == std::string_view::npos || tag.back() != ')') throw Error("malformed act tag: '" + std::string(tag) + "'");
  auto kind = parse_act_kind(tag.substr(0, open));
  if (!kind) throw Error("unknown act kind in tag: '" + std::string(tag) + "'");
  DialogueAct act = DialogueAct::of(*kind);
  auto body = tag.substr(open + 1, tag.size() - open - 2);
  while (!body.empty()) {
    auto amp = body.find('&');
    auto part = trim(body.substr(0, amp));
    body = amp == std::string_view::npos ? std::string_view{} : body.substr(amp + 1);
    auto colon = part.find(':');
    auto cat = parse_category(trim(part.substr(0, colon)));
    if (!cat) throw Error("unknown category in tag: '" + std::string(tag) + "'");
    if (act.categories.has(*cat)) throw Error("repeated category in tag: '" + std::string(tag) + "'");
    act.categories.add(*cat);
    if (colon != std::string_view::npos) {
      auto w = trim(part.substr(colon + 1));
      if (w.empty()) throw Error("empty word in tag: '" + std::string(tag) + "'");
      act.words[index_of(*cat)] = std::string(w);
    }
  }
  return act;
}

Turn parse_tags(std::string_view text) {
  Turn out;
  std::size_t depth = 0, start = 0;
  std::string_view rest = trim(text);
  for (std::size_t i = 0; i < rest.size(); ++i) {
    char ch = rest[i];
    if (ch == '(') ++depth;
    if (ch == ')') {
      if (depth == 0) throw Error("unbalanced ')' in '" + std::string(text) + "'");
      if (--depth == 0) {
        out.push_back(parse_tag(rest.substr(start, i + 1 - start)));
        start = i + 1;
        while (start < rest.size() && std::isspace(static_cast<unsigned char>(rest[start]))) ++start;
      }
    }
  }
  if (depth != 0 || trim(rest.substr(std::min(start, rest.size()))).size() != 0)
    throw Error("malformed tag sequence: '" + std::string(text) + "'");
  return out;
}

std::string tags(const Turn& turn) {
  std::string out;
  for (const auto& a : turn) {
    if (!out.empty()) out += ' ';
    out += a.tag();
  }
  return out;
}

Turn normalize(Turn turn) {
  Turn out;
  for (auto& act : turn) {
    if (act.kind == ActKind::Listen && turn.size() > 1) continue;
    if (!out.empty()) {
      auto& prev = out.back();
      bool mergeable = prev.kind == act.kind && !act.categories.empty() && !prev.categories.empty() &&
                       prev.categories.intersect(act.categories).empty() &&
                       (act.kind == ActKind::Inform || act.kind == ActKind::Polar || act.kind == ActKind::Ack ||
                        act.kind == ActKind::Reject || act.kind == ActKind::Ask || act.kind == ActKind::DoNotKnow);
      if (mergeable) {
        for (auto c : act.categories.members()) {
          prev.categories.add(c);
          prev.words[index_of(c)] = act.words[index_of(c)];
        }
        continue;
      }
    }
    out.push_back(std::move(act));
  }
  if (out.empty() && !turn.empty()) out.push_back(DialogueAct::listen());
  return out;
}

std::vector<std::string> tokenize_utterance(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char ch : text) {
    if (is_stripped_punct(ch))
      cleaned += ' ';
    else
      cleaned += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  return split_ws(cleaned);
}

// ---------------------------------------------------------------- lexicon

const TemplateLexicon& TemplateLexicon::default_english() {
  extern const char* const kDefaultLexiconText;
  static const TemplateLexicon lexicon = from_text(kDefaultLexiconText);
  return lexicon;
}

TemplateLexicon TemplateLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open lexicon file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

TemplateLexicon TemplateLexicon::from_text(std::string_view text) {
  TemplateLexicon lex;
  std::size_t lineno = 0;
  bool first_directive = true;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t == "extends default") {
      if (!first_directive) throw Error("lexicon line " + std::to_string(lineno) + ": 'extends' must come first");
      lex = default_english();
      first_directive = false;
      continue;
    }
    first_directive = false;
    lex.add_line(t, lineno);
  }
  if (lex.templates_.empty()) throw Error("lexicon has no templates");
  return lex;
}

void TemplateLexicon::add_line(std::string_view line, std::size_t lineno) {
  auto fail = [&](const std::string& why) {
    throw Error("lexicon line " + std::to_string(lineno) + ": " + why);
  };
  auto tok = split_ws(line);
  if (tok[0] == "word") {
    if (tok.size() != 4) fail("expected 'word <category> <attribute> <surface>'");
    if (!parse_category(tok[1])) fail("unknown category '" + tok[1] + "'");
    auto old = surface_.find(tok[2]);
    if (old != surface_.end()) word_of_.erase(old->second);
    auto clash = word_of_.find(tok[3]);
    if (clash != word_of_.end() && clash->second != tok[2]) fail("surface '" + tok[3] + "' already used");
    surface_[tok[2]] = tok[3];
    word_of_[tok[3]] = tok[2];
    category_[tok[2]] = *parse_category(tok[1]);
    return;
  }
  if (tok[0] != "template") fail("unknown directive '" + tok[0] + "'");
  if (tok.size() < 4) fail("expected 'template <actor> <tags> <weight> <text>'");
  Template t;
  if (tok[1] == "tutor")
    t.actor = Actor::Tutor;
  else if (tok[1] == "learner")
    t.actor = Actor::Learner;
  else
    fail("unknown actor '" + tok[1] + "'");
  std::string_view sig = tok[2];
  while (!sig.empty()) {
    auto plus = sig.find('+');
    t.acts.push_back(parse_tag(sig.substr(0, plus)));
    sig = plus == std::string_view::npos ? std::string_view{} : sig.substr(plus + 1);
  }
  for (const auto& a : t.acts)
    if (!actor_may(t.actor, a.kind)) fail(std::string(to_string(a.kind)) + " is not a " + tok[1] + " act");
  t.weight = parse_double(tok[3]);
  if (!(t.weight >= 0)) fail("negative weight");
  // Text is the remainder of the line after the fourth field.
  std::size_t pos = 0;
  for (int field = 0; field < 4; ++field) {
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    while (pos < line.size() && !std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
  }
  t.text = std::string(trim(line.substr(pos)));
  t.tokens = tokenize_utterance(t.text);
  for (auto c : kCategories) {
    std::string ph = "{" + std::string(to_string(c)) + "}";
    bool needs = std::any_of(t.acts.begin(), t.acts.end(),
                             [&](const DialogueAct& a) { return a.is_claim() && a.categories.has(c); });
    bool has = std::find(t.tokens.begin(), t.tokens.end(), ph) != t.tokens.end();
    if (needs != has) fail("placeholder " + ph + (needs ? " missing" : " not used by any act"));
  }
  templates_.push_back(std::move(t));
}

const std::string& TemplateLexicon::surface(const std::string& word) const {
  auto it = surface_.find(word);
  if (it == surface_.end()) throw Error("lexicon has no surface form for '" + word + "'");
  return it->second;
}

std::vector<std::size_t> TemplateLexicon::matching(Actor actor, const Turn& group) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < templates_.size(); ++i) {
    const auto& t = templates_[i];
    if (t.actor != actor || t.acts.size() != group.size()) continue;
    bool ok = true;
    for (std::size_t k = 0; k < group.size() && ok; ++k)
      ok = t.acts[k].kind == group[k].kind && t.acts[k].categories == group[k].categories;
    if (ok) out.push_back(i);
  }
  return out;
}

bool TemplateLexicon::has_template(Actor actor, const Turn& group) const {
  for (auto i : matching(actor, group))
    if (templates_[i].weight > 0) return true;
  return false;
}

std::string TemplateLexicon::generate(Actor actor, const Turn& turn, Rng& rng) const {
  std::string out;
  std::size_t pos = 0;
  while (pos < turn.size()) {
    bool done = false;
    for (std::size_t len = turn.size() - pos; len >= 1 && !done; --len) {
      Turn group(turn.begin() + static_cast<std::ptrdiff_t>(pos), turn.begin() + static_cast<std::ptrdiff_t>(pos + len));
      std::vector<std::size_t> cands;
      double total = 0;
      for (auto i : matching(actor, group))
        if (templates_[i].weight > 0) {
          cands.push_back(i);
          total += templates_[i].weight;
        }
      if (cands.empty()) continue;
      double r = uniform01(rng) * total;
      std::size_t pick = cands.back();
      for (auto i : cands) {
        r -= templates_[i].weight;
        if (r < 0) {
          pick = i;
          break;
        }
      }
      std::string text = templates_[pick].text;
      for (const auto& act : group)
        for (auto c : kCategories)
          if (act.is_claim() && act.word(c)) {
            std::string ph = "{" + std::string(to_string(c)) + "}";
            auto at = text.find(ph);
            if (at != std::string::npos) text.replace(at, ph.size(), surface(*act.word(c)));
          }
      if (!text.empty()) {
        if (!out.empty()) out += ' ';
        out += text;
      }
      pos += len;
      done = true;
    }
    if (!done)
      throw Error("no " + std::string(to_string(actor)) + " template for " + group_signature({turn[pos]}));
  }
  return out;
}

std::optional<Turn> TemplateLexicon::parse(std::string_view utterance, Actor actor) const {
  auto tokens = tokenize_utterance(utterance);
  const std::size_t n = tokens.size();
  if (n == 0) {
    for (const auto& t : templates_)
      if (t.actor == actor && t.tokens.empty()) return Turn{DialogueAct::listen()};
    return std::nullopt;
  }
  // Category of a token, if it is a surface form.
  auto category_of_token = [&](const std::string& tok) -> std::optional<std::pair<Category, std::string>> {
    auto it = word_of_.find(tok);
    if (it == word_of_.end()) return std::nullopt;
    return std::pair{category_.at(it->second), it->second};
  };

  struct Cell {
    std::size_t segments = std::numeric_limits<std::size_t>::max();
    std::size_t from = 0;
    std::size_t tmpl = 0;
    Turn acts;
  };
  // best[i]: fewest segments covering tokens[i..n); ties prefer the longer first segment.
  std::vector<Cell> best(n + 1);
  best[n].segments = 0;
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t ti = 0; ti < templates_.size(); ++ti) {
      const auto& t = templates_[ti];
      if (t.actor != actor || t.tokens.empty() || i + t.tokens.size() > n) continue;
      Turn acts = t.acts;
      bool ok = true;
      for (std::size_t k = 0; k < t.tokens.size() && ok; ++k) {
        const auto& want = t.tokens[k];
        const auto& got = tokens[i + k];
        if (want.size() > 2 && want.front() == '{' && want.back() == '}') {
          auto cat = parse_category(std::string_view(want).substr(1, want.size() - 2));
          auto hit = category_of_token(got);
          ok = cat && hit && hit->first == *cat;
          if (ok)
            for (auto& a : acts)
              if (a.is_claim() && a.categories.has(*cat)) a.words[index_of(*cat)] = hit->second;
        } else {
          ok = want == got;
        }
      }
      if (!ok) continue;
      std::size_t end = i + t.tokens.size();
      if (best[end].segments == std::numeric_limits<std::size_t>::max()) continue;
      std::size_t segs = best[end].segments + 1;
      auto& cell = best[i];
      bool better = segs < cell.segments || (segs == cell.segments && end > cell.from);
      if (better) cell = Cell{segs, end, ti, std::move(acts)};
    }
  }
  if (best[0].segments == std::numeric_limits<std::size_t>::max()) return std::nullopt;
  Turn out;
  for (std::size_t i = 0; i < n; i = best[i].from) out.insert(out.end(), best[i].acts.begin(), best[i].acts.end());
  return normalize(std::move(out));
}

// ---------------------------------------------------------------- context

std::vector<Label> labels_in(const Turn& tutor_turn, const DialogueAct* learner_claim) {
  std::vector<Label> out;
  auto push = [&](Category c, const std::string& w) {
    for (auto& l : out)
      if (l.category == c) {
        l.word = w;
        return;
      }
    out.push_back({c, w});
  };
  for (const auto& act : tutor_turn) {
    if (act.kind == ActKind::Inform) {
      for (auto c : act.categories.members()) push(c, *act.word(c));
    } else if (act.kind == ActKind::Ack && learner_claim && learner_claim->is_claim()) {
      CategorySet cats = act.categories.empty() ? learner_claim->categories
                                                : act.categories.intersect(learner_claim->categories);
      for (auto c : cats.members()) push(c, *learner_claim->word(c));
    }
  }
  return out;
}

CategorySet rejected_in(const Turn& tutor_turn, const DialogueAct* learner_claim) {
  CategorySet out;
  for (const auto& act : tutor_turn) {
    if (act.kind != ActKind::Reject) continue;
    if (!act.categories.empty())
      out.add(act.categories);
    else if (learner_claim && learner_claim->is_claim())
      out.add(learner_claim->categories);
  }
  return out;
}

void DialogueContext::update(Actor actor, Turn acts, std::string utterance) {
  for (const auto& a : acts) {
    if (!actor_may(actor, a.kind))
      throw Error(std::string(to_string(a.kind)) + " is not a legal " + std::string(to_string(actor)) + " act");
    a.validate();
  }
  if (actor == Actor::Tutor) {
    const DialogueAct* claim = pending_claim();
    for (const auto& l : labels_in(acts, claim)) provided_.add(l.category);
    refuted_.add(rejected_in(acts, claim));
    refuted_ = refuted_.minus(provided_);
  }
  for (const auto& a : acts) discussed_.add(a.categories);
  turns_.push_back({actor, std::move(acts), std::move(utterance)});
}

const TurnRecord* DialogueContext::last_tutor_turn() const {
  for (auto it = turns_.rbegin(); it != turns_.rend(); ++it)
    if (it->actor == Actor::Tutor) return &*it;
  return nullptr;
}

const DialogueAct* DialogueContext::last_learner_act() const {
  for (auto it = turns_.rbegin(); it != turns_.rend(); ++it) {
    if (it->actor != Actor::Learner || it->acts.empty()) continue;
    if (it->acts.back().kind == ActKind::CLrRequest) continue;
    return &it->acts.back();
  }
  return nullptr;
}

const DialogueAct* DialogueContext::pending_claim() const {
  for (auto it = turns_.rbegin(); it != turns_.rend(); ++it) {
    if (it->actor == Actor::Tutor) return nullptr;
    if (it->acts.empty() || it->acts.back().kind == ActKind::CLrRequest) continue;
    return it->acts.back().is_claim() ? &it->acts.back() : nullptr;
  }
  return nullptr;
}

bool DialogueContext::tutor_awaits_answer() const {
  const auto* last = last_turn();
  if (!last || last->actor != Actor::Tutor) return false;
  return std::any_of(last->acts.begin(), last->acts.end(),
                     [](const DialogueAct& a) { return a.kind == ActKind::Ask || a.kind == ActKind::Retry; });
}

}  // namespace vislearn
