#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "xssynth/encoders.hpp"
#include "xssynth/template_ir.hpp"

namespace xssynth {

struct AnalysisConfig {
  std::set<std::string> untrusted_sources = {"request.getParameter", "searchProfile"};
  std::map<std::string, EncoderId> encoders = {
      {"escapeHtml", EncoderId::Html},         {"escapeHtmlDecimal", EncoderId::HtmlDecimal},
      {"escapeJavaScript", EncoderId::JavaScript}, {"escapeUrl", EncoderId::Url},
      {"escapeCss", EncoderId::Css},           {"identity", EncoderId::Identity}};
  // "expr-sink" stands for `<%= %>`; the rest are output method names.
  std::set<std::string> sinks = {"expr-sink", "out.write", "out.print", "out.println"};
  std::vector<std::string> unsafe_sinks = {"setInterval", "setTimeout", "eval"};
  std::string benign_constant = "1";
  EncoderVariant variant;

  // Throws Error when an invariant is broken.
  void validate() const {
    if (benign_constant.empty()) throw Error("benign_constant must be non-empty");
    for (char c : benign_constant)
      if (std::string_view("<>\"'&;()+\\/=`").find(c) != std::string_view::npos)
        throw Error("benign_constant must not contain markup or script metacharacters");
    for (const auto& s : untrusted_sources)
      if (s.empty()) throw Error("empty untrusted source name");
    for (const auto& [name, id] : encoders)
      if (name.empty()) throw Error("empty encoder name");
  }
};

struct SourceSite {
  std::string callee;
  std::string text;  // rendered call, e.g. request.getParameter("pid")
  SourcePos pos;
  friend bool operator==(const SourceSite& a, const SourceSite& b) { return a.pos == b.pos; }
};

struct EncoderSite {
  EncoderId id = EncoderId::Identity;
  std::string callee;
  SourcePos pos;       // position of the callee name
  std::size_t end_offset = 0;  // one past the call's ')'
  friend bool operator==(const EncoderSite& a, const EncoderSite& b) {
    return a.pos == b.pos && a.id == b.id;
  }
};

struct SinkSite {
  SourcePos pos;
  std::string expr;  // rendered written expression
  WriteOrigin origin = WriteOrigin::ExprSink;
};

struct FlowTuple {
  SourceSite source;
  SinkSite sink;
  std::vector<EncoderSite> encoders;  // application order
  std::vector<std::string> variable_chain;

  EncoderChain chain() const {
    EncoderChain out;
    for (const auto& e : encoders) out.push_back(e.id);
    return out;
  }
  bool unencoded() const {
    return std::all_of(encoders.begin(), encoders.end(),
                       [](const EncoderSite& e) { return e.id == EncoderId::Identity; });
  }
};

using Path = StmtList;

struct InjectionPoint {
  std::size_t flow = 0;  // index into XssUnitTest::flows
  std::string focus_variable;
  SourceSite site;
};

struct XssUnitTest {
  std::string id;
  std::string template_name;
  StmtList stmts;
  std::vector<FlowTuple> flows;
  std::vector<InjectionPoint> injection_points;
  std::vector<int> origin_lines;

  // Distinct sink lines fed by at least one flow, ascending.
  std::vector<int> sink_lines() const {
    std::set<int> s;
    for (const auto& f : flows) s.insert(f.sink.pos.line);
    return {s.begin(), s.end()};
  }
  // Distinct source sites in first-appearance order.
  std::vector<SourceSite> source_sites() const {
    std::vector<SourceSite> out;
    for (const auto& ip : injection_points)
      if (std::find(out.begin(), out.end(), ip.site) == out.end()) out.push_back(ip.site);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Path enumeration

namespace detail {

// Every arm is expanded independently; `cond_counter` numbers captures along
// one path, so it is copied per arm.
inline void enumerate_into(const StmtList& list, std::size_t from, Path prefix, int& cond_counter,
                           std::vector<Path>& out) {
  for (std::size_t i = from; i < list.size(); ++i) {
    const Stmt& s = list[i];
    std::vector<std::pair<ExprPtr, const StmtList*>> arms;
    if (const auto* f = std::get_if<If>(&s.node)) {
      arms = {{f->cond, &f->then_branch}, {f->cond, &f->else_branch}};
    } else if (const auto* sw = std::get_if<Switch>(&s.node)) {
      for (const auto& c : sw->cases) arms.push_back({sw->scrutinee, &c.body});
      arms.push_back({sw->scrutinee, &sw->default_body});
    } else {
      prefix.push_back(s);
      continue;
    }
    for (const auto& [cond, body] : arms) {
      int counter = cond_counter + 1;
      Path p = prefix;
      p.push_back(Stmt{CondCapture{"e" + std::to_string(counter), cond}, s.pos});
      // Expand the arm, then continue with the remainder of this list.
      int arm_counter = counter;
      StmtList arm_and_rest = *body;
      arm_and_rest.insert(arm_and_rest.end(), list.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                          list.end());
      enumerate_into(arm_and_rest, 0, std::move(p), arm_counter, out);
    }
    return;
  }
  out.push_back(std::move(prefix));
}

}  // namespace detail

inline std::vector<Path> enumerate_paths(const TemplateDoc& doc) {
  const TemplateDoc* d = &doc;
  TemplateDoc normalized;
  if (!doc.normalized) {
    normalized = normalize_writes(doc);
    d = &normalized;
  }
  std::vector<Path> out;
  int counter = 0;
  detail::enumerate_into(d->body, 0, {}, counter, out);
  return out;
}

// ---------------------------------------------------------------------------
// Taint analysis

namespace detail {

struct TaintedValue {
  struct Strand {
    SourceSite source;
    std::vector<EncoderSite> encoders;
    std::vector<std::string> variables;
  };
  std::vector<Strand> strands;
};

class TaintEvaluator {
 public:
  explicit TaintEvaluator(const AnalysisConfig& cfg) : cfg_(cfg) {}

  TaintedValue eval(const Expr& e) const {
    return std::visit(
        [&](const auto& n) -> TaintedValue {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, Var>) {
            auto it = env_.find(head(n.name));
            return it == env_.end() ? TaintedValue{} : it->second;
          } else if constexpr (std::is_same_v<T, Concat>) {
            auto l = eval(*n.left);
            auto r = eval(*n.right);
            l.strands.insert(l.strands.end(), r.strands.begin(), r.strands.end());
            return l;
          } else if constexpr (std::is_same_v<T, Call>) {
            if (cfg_.untrusted_sources.count(n.callee)) {
              SourceSite site{n.callee, to_string(e), e.pos};
              return TaintedValue{{{site, {}, {}}}};
            }
            TaintedValue merged;
            for (const auto& a : n.args) {
              auto v = eval(*a);
              merged.strands.insert(merged.strands.end(), v.strands.begin(), v.strands.end());
            }
            auto enc = cfg_.encoders.find(n.callee);
            if (enc != cfg_.encoders.end())
              for (auto& s : merged.strands)
                s.encoders.push_back({enc->second, n.callee, e.pos, n.end_offset});
            return merged;
          } else {
            return TaintedValue{};
          }
        },
        e.node);
  }

  void assign(const std::string& var, TaintedValue v) {
    for (auto& s : v.strands) s.variables.push_back(var);
    env_[var] = std::move(v);
  }

  static std::string head(const std::string& dotted) { return dotted.substr(0, dotted.find('.')); }

 private:
  const AnalysisConfig& cfg_;
  std::map<std::string, TaintedValue> env_;
};

inline bool is_sink(const Write& w, const AnalysisConfig& cfg) {
  switch (w.origin) {
    case WriteOrigin::Html: return false;
    case WriteOrigin::ExprSink: return cfg.sinks.count("expr-sink") > 0;
    case WriteOrigin::Call: return cfg.sinks.count(w.method) > 0;
  }
  return false;
}

}  // namespace detail

inline std::vector<FlowTuple> taint_analysis(const Path& path, const AnalysisConfig& config) {
  std::vector<FlowTuple> flows;
  detail::TaintEvaluator ev(config);
  for (const auto& s : path) {
    if (const auto* d = std::get_if<Decl>(&s.node)) {
      ev.assign(d->var, ev.eval(*d->init));
    } else if (const auto* a = std::get_if<Assign>(&s.node)) {
      ev.assign(a->var, ev.eval(*a->value));
    } else if (const auto* w = std::get_if<Write>(&s.node)) {
      if (!detail::is_sink(*w, config)) continue;
      for (auto& strand : ev.eval(*w->value).strands) {
        FlowTuple f;
        f.source = strand.source;
        f.sink = {s.pos, to_string(*w->value), w->origin};
        f.encoders = std::move(strand.encoders);
        f.variable_chain = std::move(strand.variables);
        if (f.variable_chain.empty()) f.variable_chain.push_back(f.source.text);
        flows.push_back(std::move(f));
      }
    }
  }
  return flows;
}

namespace detail {

inline bool whitespace_only_markup(const Stmt& s) {
  const auto* w = std::get_if<Write>(&s.node);
  if (!w || w->origin != WriteOrigin::Html) return false;
  const auto* lit = std::get_if<StrLit>(&w->value->node);
  return lit && lit->value.find_first_not_of(" \t\r\n") == std::string::npos;
}

}  // namespace detail

inline std::vector<XssUnitTest> extract_unit_tests(const TemplateDoc& doc,
                                                   const AnalysisConfig& config) {
  std::vector<XssUnitTest> out;
  auto paths = enumerate_paths(doc);
  for (auto& path : paths) {
    auto flows = taint_analysis(path, config);
    if (flows.empty()) continue;
    XssUnitTest t;
    t.template_name = doc.name;
    t.id = doc.name + "#" + std::to_string(out.size() + 1);
    std::set<int> lines;
    for (const auto& s : path)
      if (!detail::whitespace_only_markup(s)) lines.insert(s.pos.line);
    t.origin_lines.assign(lines.begin(), lines.end());
    t.stmts = std::move(path);
    t.flows = std::move(flows);
    for (std::size_t i = 0; i < t.flows.size(); ++i)
      t.injection_points.push_back({i, t.flows[i].variable_chain.front(), t.flows[i].source});
    out.push_back(std::move(t));
  }
  return out;
}

inline std::vector<FlowTuple> flag_unencoded_flows(const std::vector<XssUnitTest>& tests) {
  std::vector<FlowTuple> out;
  for (const auto& t : tests)
    for (const auto& f : t.flows)
      if (f.unencoded()) out.push_back(f);
  return out;
}

}  // namespace xssynth
