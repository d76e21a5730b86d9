#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace xssynth {

inline constexpr std::string_view kPayloadMarker = "attack(%L%)";
inline constexpr std::string_view kLineMarker = "%L%";
// Digits pass every encoder unchanged, so injected attacks carry this in place of kLineMarker.
inline constexpr std::string_view kLineToken = "4815162342";
// Separator between attributes inside a tag. Without it an unquoted value
// would run into the next attribute name.
inline constexpr std::string_view kAttrSeparator = " ";

struct Symbol {
  enum class Kind { Terminal, NonTerminal, Closure, Group, Payload };
  Kind kind = Kind::Terminal;
  std::string text;                              // lexeme or nonterminal name
  std::vector<std::vector<Symbol>> alternatives;  // Group alternatives; Closure body in [0]
  int min = 0;                                   // Closure: 0 for `*`, 1 for `+`
  // NonTerminal: lexemes that may not occur anywhere in its expansion. Used
  // where a quoted value must not contain its own quote character.
  std::vector<std::string> exclude;
};

using Production = std::vector<Symbol>;

namespace sym {
inline Symbol t(std::string lexeme) { return {Symbol::Kind::Terminal, std::move(lexeme), {}, 0, {}}; }
inline Symbol n(std::string name, std::vector<std::string> exclude = {}) {
  return {Symbol::Kind::NonTerminal, std::move(name), {}, 0, std::move(exclude)};
}
inline Symbol payload() { return {Symbol::Kind::Payload, "PAYLOAD", {}, 0, {}}; }
inline Symbol star(Production body) { return {Symbol::Kind::Closure, "*", {std::move(body)}, 0, {}}; }
inline Symbol plus(Production body) { return {Symbol::Kind::Closure, "+", {std::move(body)}, 1, {}}; }
inline Symbol group(std::vector<Production> alts) {
  return {Symbol::Kind::Group, "()", std::move(alts), 0, {}};
}
}  // namespace sym

struct Grammar {
  std::string name;
  std::string start;
  std::map<std::string, std::vector<Production>> rules;
  // Nonterminals whose alternatives are single terminals the browser treats
  // alike (any URI attribute, any url()-valued property).
  std::set<std::string> interchangeable;

  // Every referenced nonterminal is defined and PAYLOAD is reachable.
  void validate() const {
    if (!rules.count(start)) throw std::logic_error(name + ": undefined start " + start);
    std::set<std::string> seen;
    bool payload = false;
    std::vector<std::string> work{start};
    auto visit = [&](auto&& self, const Symbol& s) -> void {
      switch (s.kind) {
        case Symbol::Kind::Payload: payload = true; break;
        case Symbol::Kind::NonTerminal:
          if (!rules.count(s.text)) throw std::logic_error(name + ": undefined " + s.text);
          if (seen.insert(s.text).second) work.push_back(s.text);
          break;
        case Symbol::Kind::Closure:
        case Symbol::Kind::Group:
          for (const auto& p : s.alternatives)
            for (const auto& x : p) self(self, x);
          break;
        case Symbol::Kind::Terminal: break;
      }
    };
    seen.insert(start);
    while (!work.empty()) {
      auto nt = work.back();
      work.pop_back();
      for (const auto& p : rules.at(nt))
        for (const auto& s : p) visit(visit, s);
    }
    if (!payload) throw std::logic_error(name + ": PAYLOAD unreachable");
  }
};

inline const std::vector<std::string>& uri_host_names() {
  static const std::vector<std::string> v = {
      "src",     "href",    "codebase", "cite",       "action", "background",
      "data",    "classid", "longdesc", "profile",    "usemap", "formaction",
      "icon",    "manifest", "poster",  "srcset",     "archive"};
  return v;
}

inline const std::vector<std::string>& css_property_names() {
  static const std::vector<std::string> v = {"background-image", "list-style-image", "content",
                                             "cursor",           "cue-after",        "cue-before"};
  return v;
}

namespace detail {

using Rules = std::map<std::string, std::vector<Production>>;

inline void add_uri_rules(Rules& r) {
  using namespace sym;
  r["URIATRIB"] = {{n("URIHOST"), t("="), n("URIVAL")}};
  for (const auto& h : uri_host_names()) r["URIHOST"].push_back({t(h)});
  r["URIVAL"] = {{t("'"), n("URI"), t("'")}, {t("\""), n("URI"), t("\"")}, {n("URI")}};
  r["URI"] = {{t("javascript:"), payload()}};
}

inline void add_css_rules(Rules& r) {
  using namespace sym;
  add_uri_rules(r);
  r["STYLEATRIB"] = {{t("style"), t("="), n("STYLEVAL")}};
  r["STYLEVAL"] = {{t("'"), n("STYLE", {"'"}), t("'")},
                   {t("\""), n("STYLE", {"\""}), t("\"")},
                   {plus({n("CSSPROP")})}};  // an empty unquoted value swallows what follows
  r["STYLE"] = {{star({n("CSSPROP")})}};
  r["CSSPROP"] = {{n("PROPNAME"), t(":"), n("PROPVAL"), t(";")}};
  for (const auto& p : css_property_names()) r["PROPNAME"].push_back({t(p)});
  r["PROPVAL"] = {{t("url("), n("URIVAL"), t(")")}};
}

inline void add_event_rules(Rules& r) {
  using namespace sym;
  r["EVENTATRIB"] = {{n("EVENTNAME"), t("="), n("EVENTVAL")}};
  r["EVENTNAME"] = {{t("onclick")}};
  r["EVENTVAL"] = {{t("'"), payload(), t("'")}, {t("\""), payload(), t("\"")}, {payload()}};
}

}  // namespace detail

// URI, CSS, EVENT, HTML, JS in that order.
inline std::vector<Grammar> build_grammars() {
  using namespace sym;
  std::vector<Grammar> out;

  Grammar uri{"URI", "URIATRIB", {}, {}};
  detail::add_uri_rules(uri.rules);
  out.push_back(std::move(uri));

  Grammar css{"CSS", "CSS", {}, {}};
  detail::add_css_rules(css.rules);
  // A bare declaration appended after an existing one inside a style value.
  css.rules["CSS"] = {{n("STYLEATRIB")}, {t(";"), n("CSSPROP")}};
  out.push_back(std::move(css));

  Grammar event{"EVENT", "EVENTATRIB", {}, {}};
  detail::add_event_rules(event.rules);
  out.push_back(std::move(event));

  Grammar html{"HTML", "HTML", {}, {}};
  detail::add_css_rules(html.rules);
  detail::add_event_rules(html.rules);
  auto& h = html.rules;
  h["HTML"] = {{star({n("ELEM")})}};
  h["ELEM"] = {{n("IMG")}, {n("STYLEBLOCK")}, {n("SCRIPT")}, {n("SPECIAL")}};
  h["IMG"] = {{t("<img"), n("ATRIBLIST"), t(">")}};
  h["ATRIBLIST"] = {{star({t(std::string(kAttrSeparator)), n("ATTRIBUTE")})}};
  h["ATTRIBUTE"] = {{n("URIATRIB")}, {n("STYLEATRIB")}, {n("EVENTATRIB")}};
  h["STYLEBLOCK"] = {{t("<style>"), star({n("CSSPROP")}), t("</style>")}};
  h["SCRIPT"] = {{t("<script>"), payload(), t("</script>")}};
  h["SPECIAL"] = {{group({{t("</textarea>")}, {t("</title>")}})}};
  out.push_back(std::move(html));

  Grammar js{"JS", "JS", {}, {}};
  auto& j = js.rules;
  // Second alternative closes a call argument and comments out the rest.
  j["JS"] = {{n("ADDITIVEXP")}, {n("LITERAL"), t(")"), t(";"), payload(), t(";"), t("//")}};
  j["ADDITIVEXP"] = {{n("PRIMARYEXP"), n("ADDITIVEPART")}};
  j["ADDITIVEPART"] = {{star({t("+"), n("PRIMARYEXP")})}};
  j["PRIMARYEXP"] = {{payload()}, {n("LITERAL")}};
  j["LITERAL"] = {{t("\""), t("1"), t("\"")}, {t("'"), t("1"), t("'")}, {t("1")}};
  out.push_back(std::move(js));

  for (auto& g : out) {
    for (const char* nt : {"URIHOST", "PROPNAME"})
      if (g.rules.count(nt)) g.interchangeable.insert(nt);
    g.validate();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Derivation

struct DerivationOptions {
  int closure_bound = 2;
  int max_payloads = -1;  // prune above this many payloads; -1 = no limit
  // Closure iterations that contain no payload, counted once per outermost
  // such iteration; -1 = no limit.
  int max_free_iterations = -1;
  // Expand only the first alternative of interchangeable nonterminals.
  bool representatives_only = false;
};

// Options used for the attack corpus: single-payload sentences with at most
// one payload-free repetition (context padding).
inline DerivationOptions corpus_derivation(int bound, bool all_alternatives = false) {
  return {bound, 1, 1, !all_alternatives};
}

struct Sentence {
  std::vector<std::string> tokens;  // PAYLOAD appears as "PAYLOAD"
  std::vector<std::size_t> payload_positions;
  std::string origin;
  std::vector<std::string> derivation;  // "NT -> #alt", leftmost order
};

namespace detail {

class Deriver {
 public:
  Deriver(const Grammar& g, DerivationOptions opt) : g_(g), opt_(opt) {
    lexemes_.push_back("PAYLOAD");
  }

  std::vector<Sentence> run() {
    std::vector<Sentence> out;
    for (const auto& p : expand_nt(g_.start, {})) {
      Sentence s;
      s.origin = g_.name;
      for (std::size_t i = 0; i < p.toks.size(); ++i) {
        s.tokens.push_back(lexemes_[p.toks[i]]);
        if (p.toks[i] == kPayloadId) s.payload_positions.push_back(i);
      }
      for (auto code : p.rules) s.derivation.push_back(rule_names_[code]);
      out.push_back(std::move(s));
    }
    return out;
  }

 private:
  static constexpr int kPayloadId = 0;

  struct Partial {
    std::vector<int> toks;
    std::vector<int> rules;
    int payloads = 0;
    int free = 0;
  };
  using Exclude = std::vector<std::string>;  // kept sorted

  bool within_limits(int payloads, int free) const {
    return (opt_.max_payloads < 0 || payloads <= opt_.max_payloads) &&
           (opt_.max_free_iterations < 0 || free <= opt_.max_free_iterations);
  }

  static Partial join(const Partial& a, const Partial& b) {
    Partial c = a;
    c.toks.insert(c.toks.end(), b.toks.begin(), b.toks.end());
    c.rules.insert(c.rules.end(), b.rules.begin(), b.rules.end());
    c.payloads += b.payloads;
    c.free += b.free;
    return c;
  }

  int lexeme_id(const std::string& s) {
    auto it = lexeme_ids_.find(s);
    if (it != lexeme_ids_.end()) return it->second;
    int id = static_cast<int>(lexemes_.size());
    lexemes_.push_back(s);
    lexeme_ids_.emplace(s, id);
    return id;
  }

  int rule_code(const std::string& nt, std::size_t alt) {
    std::string name = nt + " -> #" + std::to_string(alt + 1);
    auto it = rule_ids_.find(name);
    if (it != rule_ids_.end()) return it->second;
    int id = static_cast<int>(rule_names_.size());
    rule_names_.push_back(name);
    rule_ids_.emplace(name, id);
    return id;
  }

  std::vector<Partial> expand_seq(const Production& seq, const Exclude& ex) {
    std::vector<Partial> acc{Partial{}};
    for (const auto& s : seq) {
      auto parts = expand_symbol(s, ex);
      std::vector<Partial> next;
      for (const auto& a : acc)
        for (const auto& b : parts)
          if (within_limits(a.payloads + b.payloads, a.free + b.free)) next.push_back(join(a, b));
      acc = std::move(next);
      if (acc.empty()) break;
    }
    return acc;
  }

  std::vector<Partial> expand_symbol(const Symbol& s, const Exclude& ex) {
    switch (s.kind) {
      case Symbol::Kind::Terminal:
        if (std::binary_search(ex.begin(), ex.end(), s.text)) return {};
        return {Partial{{lexeme_id(s.text)}, {}, 0, 0}};
      case Symbol::Kind::Payload: return {Partial{{kPayloadId}, {}, 1, 0}};
      case Symbol::Kind::NonTerminal: {
        Exclude merged = ex;
        for (const auto& e : s.exclude)
          if (!std::binary_search(merged.begin(), merged.end(), e))
            merged.insert(std::upper_bound(merged.begin(), merged.end(), e), e);
        return expand_nt(s.text, merged);
      }
      case Symbol::Kind::Group: {
        std::vector<Partial> out;
        for (const auto& alt : s.alternatives) {
          auto parts = expand_seq(alt, ex);
          out.insert(out.end(), parts.begin(), parts.end());
        }
        return out;
      }
      case Symbol::Kind::Closure: return expand_closure(s, ex);
    }
    return {};
  }

  std::vector<Partial> expand_closure(const Symbol& s, const Exclude& ex) {
    auto body = expand_seq(s.alternatives.at(0), ex);
    if (opt_.max_free_iterations >= 0)
      for (auto& b : body)
        if (b.payloads == 0) b.free = 1;
    std::vector<Partial> out;
    std::vector<Partial> layer{Partial{}};
    for (int k = 0; k <= opt_.closure_bound; ++k) {
      if (k >= s.min) out.insert(out.end(), layer.begin(), layer.end());
      if (k == opt_.closure_bound) break;
      std::vector<Partial> next;
      for (const auto& a : layer)
        for (const auto& b : body)
          if (within_limits(a.payloads + b.payloads, a.free + b.free)) next.push_back(join(a, b));
      layer = std::move(next);
    }
    return out;
  }

  std::vector<Partial> expand_nt(const std::string& name, const Exclude& ex) {
    auto key = std::make_pair(name, ex);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    const auto& prods = g_.rules.at(name);
    std::size_t count = prods.size();
    if (opt_.representatives_only && g_.interchangeable.count(name)) count = std::min<std::size_t>(count, 1);
    std::vector<Partial> out;
    for (std::size_t k = 0; k < count; ++k) {
      int code = rule_code(name, k);
      for (auto& p : expand_seq(prods[k], ex)) {
        p.rules.insert(p.rules.begin(), code);
        out.push_back(std::move(p));
      }
    }
    memo_.emplace(key, out);
    return out;
  }

  const Grammar& g_;
  DerivationOptions opt_;
  std::vector<std::string> lexemes_;
  std::map<std::string, int> lexeme_ids_;
  std::vector<std::string> rule_names_;
  std::map<std::string, int> rule_ids_;
  std::map<std::pair<std::string, Exclude>, std::vector<Partial>> memo_;
};

}  // namespace detail

// Leftmost derivation of every sentence with each closure applied 0..bound
// times (1..bound for `+`). Order: rule index, then expansion count.
inline std::vector<Sentence> derive_sentences(const Grammar& g, const DerivationOptions& opt) {
  if (opt.closure_bound < 0) throw std::invalid_argument("closure bound must be >= 0");
  return detail::Deriver(g, opt).run();
}

inline std::vector<Sentence> derive_sentences(const Grammar& g, int closure_bound) {
  return derive_sentences(g, DerivationOptions{closure_bound, -1, -1});
}

// ---------------------------------------------------------------------------
// Attack strings

struct AttackString {
  std::vector<std::string> tokens;
  std::size_t payload_index = 0;
  std::string origin;
  std::size_t left_removed = 0;
  std::size_t right_removed = 0;
  std::string rendered;
};

inline bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Lexemes are concatenated; one space keeps two word characters apart.
inline std::string render(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    std::string_view lx = t == "PAYLOAD" ? kPayloadMarker : std::string_view(t);
    if (lx.empty()) continue;
    if (!out.empty() && is_word_char(out.back()) && is_word_char(lx.front())) out += ' ';
    out += lx;
  }
  return out;
}

// Left trims drop leading tokens up to the first payload; each left trim is
// then right-trimmed down to the payload. Deduplicated by token sequence.
inline std::vector<AttackString> trim_variants(const Sentence& s) {
  auto first = std::find(s.tokens.begin(), s.tokens.end(), "PAYLOAD");
  if (first == s.tokens.end()) throw std::invalid_argument("sentence has no PAYLOAD");
  std::size_t p = static_cast<std::size_t>(first - s.tokens.begin());
  std::vector<AttackString> out;
  std::set<std::vector<std::string>> seen;
  for (std::size_t l = 0; l <= p; ++l) {
    std::size_t len = s.tokens.size() - l;
    std::size_t pay = p - l;
    for (std::size_t r = 0; r + pay < len; ++r) {
      std::vector<std::string> toks(s.tokens.begin() + static_cast<std::ptrdiff_t>(l),
                                    s.tokens.end() - static_cast<std::ptrdiff_t>(r));
      if (!seen.insert(toks).second) continue;
      AttackString a;
      a.rendered = render(toks);
      a.tokens = std::move(toks);
      a.payload_index = pay;
      a.origin = s.origin;
      a.left_removed = l;
      a.right_removed = r;
      out.push_back(std::move(a));
    }
  }
  return out;
}

// False when a tag in the sentence repeats an attribute name. Browsers keep
// only the first occurrence, so such a sentence cannot carry its payload.
inline bool distinct_attributes(const std::vector<std::string>& tokens) {
  std::set<std::string> names;
  bool in_tag = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (t.size() > 1 && t[0] == '<' && is_word_char(t[1])) {
      in_tag = true;
      names.clear();
    } else if (t == ">") {
      in_tag = false;
    } else if (in_tag && t == kAttrSeparator && i + 1 < tokens.size()) {
      if (!names.insert(tokens[i + 1]).second) return false;
    }
  }
  return true;
}

namespace detail {
inline std::string_view strip_spaces(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  return s;
}
}  // namespace detail

// Union of trim variants over single-payload sentences of all grammars,
// deduplicated on the rendered string (outer spaces ignored), in grammar,
// sentence and trim order.
inline std::vector<AttackString> generate_corpus(int bound = 2, bool all_alternatives = false) {
  if (bound < 1) throw std::invalid_argument("closure bound must be >= 1");
  std::vector<AttackString> out;
  std::unordered_set<std::string> seen;
  for (const auto& g : build_grammars()) {
    for (const auto& s : derive_sentences(g, corpus_derivation(bound, all_alternatives))) {
      if (s.payload_positions.size() != 1 || !distinct_attributes(s.tokens)) continue;
      for (auto& a : trim_variants(s)) {
        if (std::count(a.tokens.begin(), a.tokens.end(), "PAYLOAD") != 1) continue;
        if (!seen.insert(std::string(detail::strip_spaces(a.rendered))).second) continue;
        out.push_back(std::move(a));
      }
    }
  }
  return out;
}

// Rendered strings with outer spaces removed, for set comparisons.
inline std::set<std::string> rendered_set(const std::vector<AttackString>& corpus) {
  std::set<std::string> out;
  for (const auto& a : corpus) out.insert(std::string(detail::strip_spaces(a.rendered)));
  return out;
}

// Untrimmed single-payload sentences of one grammar, as used by the corpus.
inline std::vector<Sentence> corpus_sentences(const Grammar& g, int bound = 2,
                                              bool all_alternatives = false) {
  std::vector<Sentence> out;
  for (auto& s : derive_sentences(g, corpus_derivation(bound, all_alternatives)))
    if (s.payload_positions.size() == 1 && distinct_attributes(s.tokens))
      out.push_back(std::move(s));
  return out;
}

inline std::string replace_all(std::string_view text, std::string_view from, std::string_view to) {
  std::string out;
  std::size_t i = 0;
  while (true) {
    auto k = text.find(from, i);
    if (k == std::string_view::npos) break;
    out.append(text.substr(i, k - i));
    out += to;
    i = k + from.size();
  }
  out.append(text.substr(i));
  return out;
}

inline bool has_line_marker(std::string_view text) {
  return text.find(kLineMarker) != std::string_view::npos || text.find(kLineToken) != std::string_view::npos;
}

// Replaces every line marker and line token with `line`.
inline std::string substitute_line(std::string_view text, int line) {
  std::string num = std::to_string(line);
  return replace_all(replace_all(text, kLineMarker, num), kLineToken, num);
}

// The form of an attack that is bound to a source during injection.
inline std::string injectable(std::string_view attack) { return replace_all(attack, kLineMarker, kLineToken); }

}  // namespace xssynth
