#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include "xssynth/attack_gen.hpp"
#include "xssynth/browser_model.hpp"
#include "xssynth/encoders.hpp"
#include "xssynth/harness.hpp"
#include "xssynth/taint_cfg.hpp"
#include "xssynth/template_ir.hpp"

namespace xssynth {

enum class Scenario {
  SingleVar,
  MultiVarSingleSink,
  SharedEncoderMultiSink,
  SharedPlusExtraEncoder,
  IndependentFlows,
  CrossUnitShared
};

enum class UnrepairableReason {
  UnsafeSink,
  ChainTooLong,
  MultiContextSink,
  ConflictAcrossUnits,
  ExhaustedCandidates
};

inline std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::SingleVar: return "SingleVar";
    case Scenario::MultiVarSingleSink: return "MultiVarSingleSink";
    case Scenario::SharedEncoderMultiSink: return "SharedEncoderMultiSink";
    case Scenario::SharedPlusExtraEncoder: return "SharedPlusExtraEncoder";
    case Scenario::IndependentFlows: return "IndependentFlows";
    case Scenario::CrossUnitShared: return "CrossUnitShared";
  }
  return "SingleVar";
}

inline std::string_view reason_name(UnrepairableReason r) {
  switch (r) {
    case UnrepairableReason::UnsafeSink: return "UnsafeSink";
    case UnrepairableReason::ChainTooLong: return "ChainTooLong";
    case UnrepairableReason::MultiContextSink: return "MultiContextSink";
    case UnrepairableReason::ConflictAcrossUnits: return "ConflictAcrossUnits";
    case UnrepairableReason::ExhaustedCandidates: return "ExhaustedCandidates";
  }
  return "ExhaustedCandidates";
}

struct Replacement {
  EncoderSite site;
  EncoderChain chain;  // application order; written as nested calls
};

struct RepairPlan {
  std::vector<Replacement> replacements;  // ascending site offset
  bool extension = false;                 // produced by the Identity-collapse family

  void set(const EncoderSite& site, EncoderChain chain) {
    auto it = std::find_if(replacements.begin(), replacements.end(),
                           [&](const Replacement& r) { return r.site.pos.offset == site.pos.offset; });
    if (it != replacements.end()) {
      it->chain = std::move(chain);
    } else {
      replacements.push_back({site, std::move(chain)});
      std::sort(replacements.begin(), replacements.end(), [](const Replacement& a, const Replacement& b) {
        return a.site.pos.offset < b.site.pos.offset;
      });
    }
  }
  void merge(const RepairPlan& other) {
    for (const auto& r : other.replacements) set(r.site, r.chain);
    extension = extension || other.extension;
  }
};

// Flows linked by a shared encoder site or sink, i.e. one repair problem.
struct FlowGroup {
  std::vector<FlowTuple> flows;               // distinct flows
  std::vector<std::set<std::string>> units;   // unit-test ids per flow
  std::vector<int> sink_lines() const {
    std::set<int> s;
    for (const auto& f : flows) s.insert(f.sink.pos.line);
    return {s.begin(), s.end()};
  }
  std::vector<int> source_lines() const {
    std::set<int> s;
    for (const auto& f : flows) s.insert(f.source.pos.line);
    return {s.begin(), s.end()};
  }
  std::vector<EncoderSite> sites() const {
    std::vector<EncoderSite> out;
    for (const auto& f : flows)
      for (const auto& e : f.encoders)
        if (std::find(out.begin(), out.end(), e) == out.end()) out.push_back(e);
    std::sort(out.begin(), out.end(),
              [](const EncoderSite& a, const EncoderSite& b) { return a.pos.offset < b.pos.offset; });
    return out;
  }
};

struct GroupOutcome {
  std::vector<int> sink_lines;
  Scenario scenario = Scenario::SingleVar;
  std::optional<RepairPlan> plan;
  std::optional<UnrepairableReason> reason;
  std::size_t tried_rank = 0;       // plans evaluated before the winner
  std::size_t plans_evaluated = 0;
  std::vector<std::string> notes;
};

struct RepairResult {
  bool fixed = false;
  Scenario scenario = Scenario::SingleVar;
  std::optional<UnrepairableReason> reason;  // set when !fixed
  RepairPlan plan;                           // merged plans of the fixed groups
  std::string patched_text;                  // set when fixed
  std::size_t tried_rank = 0;
  std::vector<GroupOutcome> groups;

  const GroupOutcome* group_for_sink(int line) const {
    for (const auto& g : groups)
      if (std::find(g.sink_lines.begin(), g.sink_lines.end(), line) != g.sink_lines.end()) return &g;
    return nullptr;
  }
};

struct RepairOptions {
  // Disables the Identity-collapse plans for two-encoder chains.
  bool strict_paper = false;
  unsigned threads = 1;
};

// ---------------------------------------------------------------------------
// Patching

namespace detail {

inline std::string call_name_for(EncoderId id, const AnalysisConfig& cfg) {
  for (const auto& [name, e] : cfg.encoders)
    if (e == id && name == encoder_call_name(id)) return name;
  for (const auto& [name, e] : cfg.encoders)
    if (e == id) return name;
  return std::string(encoder_call_name(id));
}

}  // namespace detail

// Rewrites only the encoder call names (and adds closing parentheses for
// nested chains); every other byte is preserved.
inline std::string emit_patch(std::string_view source, const RepairPlan& plan,
                              const AnalysisConfig& config = {}) {
  std::string out(source);
  auto reps = plan.replacements;
  std::sort(reps.begin(), reps.end(), [](const Replacement& a, const Replacement& b) {
    return a.site.pos.offset > b.site.pos.offset;
  });
  for (const auto& r : reps) {
    if (r.chain.empty()) throw Error("emit_patch: empty chain");
    const auto& s = r.site;
    if (s.pos.offset + s.callee.size() > out.size() || s.end_offset > out.size() ||
        out.compare(s.pos.offset, s.callee.size(), s.callee) != 0)
      throw Error("emit_patch: site '" + s.callee + "' does not match the source");
    std::string head;
    for (auto it = r.chain.rbegin(); it != r.chain.rend(); ++it) {
      if (!head.empty()) head += "(";
      head += detail::call_name_for(*it, config);
    }
    out.insert(s.end_offset, std::string(r.chain.size() - 1, ')'));
    out.replace(s.pos.offset, s.callee.size(), head);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grouping and classification

namespace detail {

inline bool same_flow(const FlowTuple& a, const FlowTuple& b) {
  return a.source == b.source && a.sink.pos == b.sink.pos && a.encoders == b.encoders;
}

inline std::vector<FlowGroup> group_flows(const std::vector<XssUnitTest>& units) {
  FlowGroup all;
  for (const auto& u : units)
    for (const auto& f : u.flows) {
      auto it = std::find_if(all.flows.begin(), all.flows.end(),
                             [&](const FlowTuple& g) { return same_flow(f, g); });
      if (it == all.flows.end()) {
        all.flows.push_back(f);
        all.units.push_back({u.id});
      } else {
        all.units[static_cast<std::size_t>(it - all.flows.begin())].insert(u.id);
      }
    }
  std::vector<std::size_t> parent(all.flows.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < all.flows.size(); ++i)
    for (std::size_t j = i + 1; j < all.flows.size(); ++j) {
      const auto& a = all.flows[i];
      const auto& b = all.flows[j];
      bool linked = a.sink.pos == b.sink.pos;
      for (const auto& e : a.encoders)
        if (std::find(b.encoders.begin(), b.encoders.end(), e) != b.encoders.end()) linked = true;
      if (linked) parent[find(i)] = find(j);
    }
  std::map<std::size_t, FlowGroup> by_root;
  for (std::size_t i = 0; i < all.flows.size(); ++i) {
    auto& g = by_root[find(i)];
    g.flows.push_back(all.flows[i]);
    g.units.push_back(all.units[i]);
  }
  std::vector<FlowGroup> out;
  for (auto& [root, g] : by_root) out.push_back(std::move(g));
  return out;
}

inline bool co_occur(const std::set<std::string>& a, const std::set<std::string>& b) {
  return std::any_of(a.begin(), a.end(), [&](const std::string& id) { return b.count(id) > 0; });
}

// Site shared by every flow of the group, if any.
inline std::optional<EncoderSite> common_site(const FlowGroup& g) {
  for (const auto& e : g.flows.front().encoders)
    if (std::all_of(g.flows.begin(), g.flows.end(), [&](const FlowTuple& f) {
          return std::find(f.encoders.begin(), f.encoders.end(), e) != f.encoders.end();
        }))
      return e;
  return std::nullopt;
}

}  // namespace detail

inline Scenario classify(const FlowGroup& g) {
  for (std::size_t i = 0; i < g.flows.size(); ++i)
    for (std::size_t j = i + 1; j < g.flows.size(); ++j)
      if (!detail::co_occur(g.units[i], g.units[j])) return Scenario::CrossUnitShared;
  if (g.flows.size() == 1) return Scenario::SingleVar;
  auto sinks = g.sink_lines();
  bool one_sink = std::all_of(g.flows.begin(), g.flows.end(), [&](const FlowTuple& f) {
    return f.sink.pos == g.flows.front().sink.pos;
  });
  if (one_sink) return Scenario::MultiVarSingleSink;
  bool extra = std::any_of(g.flows.begin(), g.flows.end(),
                           [](const FlowTuple& f) { return f.encoders.size() > 1; });
  return extra ? Scenario::SharedPlusExtraEncoder : Scenario::SharedEncoderMultiSink;
}

// Candidate plans in the order they are tried. Empty when the scenario has
// no plan family for this shape of group.
inline std::vector<RepairPlan> propose_plans(const FlowGroup& g, Scenario scenario,
                                             const RepairOptions& opt = {}) {
  std::vector<RepairPlan> plans;
  const auto cands = candidate_encoders();
  auto sites = g.sites();
  auto uniform = [&] {
    for (const auto& c : cands) {
      RepairPlan p;
      for (const auto& s : sites) p.set(s, c);
      plans.push_back(std::move(p));
    }
  };
  switch (scenario) {
    case Scenario::SingleVar: {
      const auto& enc = g.flows.front().encoders;
      if (enc.size() == 1) {
        uniform();
      } else if (enc.size() == 2) {
        for (auto outer : {EncoderId::Html, EncoderId::Url}) {
          RepairPlan p;
          p.set(enc[0], {EncoderId::JavaScript});
          p.set(enc[1], {outer});
          plans.push_back(std::move(p));
        }
        if (!opt.strict_paper)
          for (const auto& c : cands) {
            RepairPlan p;
            p.extension = true;
            p.set(enc[0], c);
            p.set(enc[1], {EncoderId::Identity});
            plans.push_back(std::move(p));
          }
      }
      break;
    }
    case Scenario::MultiVarSingleSink:
      if (std::all_of(g.flows.begin(), g.flows.end(),
                      [](const FlowTuple& f) { return f.encoders.size() == 1; }))
        uniform();
      break;
    case Scenario::SharedEncoderMultiSink:
    case Scenario::CrossUnitShared:
      if (sites.size() == 1) uniform();
      break;
    case Scenario::SharedPlusExtraEncoder: {
      auto shared = detail::common_site(g);
      if (!shared) break;
      for (const auto& c : cands) {
        if (c.size() != 2 || c[0] == EncoderId::Identity || c[1] == EncoderId::Identity) continue;
        RepairPlan p;
        p.set(*shared, {c[0]});
        for (const auto& s : sites)
          if (!(s == *shared)) p.set(s, {c[1]});
        plans.push_back(std::move(p));
      }
      break;
    }
    case Scenario::IndependentFlows: break;
  }
  return plans;
}

// ---------------------------------------------------------------------------
// Verification

namespace detail {

// Characters every wrong encoder garbles but a correct one delivers intact;
// the line marker ties each occurrence to the write that emitted it.
inline constexpr std::string_view kProbe = "a b&c<d>";
inline constexpr std::string_view kProbeToken = "zqxprobe";

struct SinkFilter {
  std::set<int> sinks;
  std::set<int> sources;
};

inline bool flow_in(const FlowTuple& f, const SinkFilter& filt) {
  return filt.sinks.count(f.sink.pos.line) && filt.sources.count(f.source.pos.line);
}

// Every sink of the filter receives the probe text unchanged, as seen by the
// interpreter that finally consumes it.
inline bool round_trips(const std::vector<XssUnitTest>& units, const SinkFilter& filt,
                        const AnalysisConfig& config, std::vector<std::string>* notes) {
  for (const auto& u : units)
    for (const auto& site : u.source_sites()) {
      std::set<int> lines;
      for (const auto& f : u.flows)
        if (f.source == site && flow_in(f, filt)) lines.insert(f.sink.pos.line);
      if (lines.empty()) continue;
      std::string page =
          interpret_slice(u, {{site.pos.offset, std::string(kProbe) + std::string(kLineToken)}}, config);
      auto views = data_views(page);
      for (int line : lines) {
        std::string tagged = std::string(kProbe) + std::to_string(line);
        std::string untagged = std::string(kProbe) + std::string(kLineToken);
        bool ok = std::any_of(views.begin(), views.end(), [&](const DataView& v) {
          return v.text.find(tagged) != std::string::npos || v.text.find(untagged) != std::string::npos;
        });
        if (!ok) {
          if (notes) notes->push_back("benign value garbled at line " + std::to_string(line));
          return false;
        }
      }
    }
  return true;
}

}  // namespace detail

struct Verification {
  bool ok = false;
  std::vector<std::string> notes;
};

// Applies `plan`, re-parses and re-detects. With `only` set, findings outside
// those sinks/sources are ignored (used while other groups are still open).
inline Verification verify_plan(const TemplateDoc& doc, const RepairPlan& plan,
                                const AnalysisConfig& config, const std::vector<AttackString>& corpus,
                                const std::optional<detail::SinkFilter>& only = std::nullopt,
                                unsigned threads = 1) {
  Verification v;
  TemplateDoc patched;
  try {
    patched = parse_template(emit_patch(doc.source, plan, config), doc.name);
  } catch (const Error& e) {
    v.notes.push_back(std::string("patched template does not parse: ") + e.what());
    return v;
  }
  auto units = extract_unit_tests(patched, config);
  DetectOptions dopt;
  dopt.threads = threads;
  dopt.first_hit_only = true;
  auto report = detect_units(patched.name, units, corpus, config, dopt);
  detail::SinkFilter filt;
  if (only) {
    filt = *only;
  } else {
    for (const auto& u : units)
      for (const auto& f : u.flows) {
        filt.sinks.insert(f.sink.pos.line);
        filt.sources.insert(f.source.pos.line);
      }
  }
  for (const auto& f : report.findings)
    if (filt.sinks.count(f.sink_line)) {
      v.notes.push_back("attack still succeeds at line " + std::to_string(f.sink_line) + ": " +
                        f.attack_rendered);
      return v;
    }
  for (const auto& f : report.static_findings)
    if (detail::flow_in(f, filt)) {
      v.notes.push_back("unencoded flow remains at line " + std::to_string(f.sink.pos.line));
      return v;
    }
  v.ok = detail::round_trips(units, filt, config, &v.notes);
  return v;
}

// ---------------------------------------------------------------------------
// Context probes

namespace detail {

// Renders each unit with an inert token at the group's sources and reports
// where in the page it lands.
inline std::vector<std::pair<std::string, ParseContext>> probe_sites(
    const std::vector<XssUnitTest>& units, const FlowGroup& g, const AnalysisConfig& config) {
  std::vector<std::pair<std::string, ParseContext>> out;  // (left context, parse context)
  SinkFilter filt{{}, {}};
  for (int l : g.sink_lines()) filt.sinks.insert(l);
  for (int l : g.source_lines()) filt.sources.insert(l);
  for (const auto& u : units)
    for (const auto& site : u.source_sites()) {
      bool relevant = std::any_of(u.flows.begin(), u.flows.end(),
                                  [&](const FlowTuple& f) { return f.source == site && flow_in(f, filt); });
      if (!relevant) continue;
      std::string page = interpret_slice(u, {{site.pos.offset, std::string(kProbeToken)}}, config);
      auto report = scan(page, true);
      for (auto at = page.find(kProbeToken); at != std::string::npos;
           at = page.find(kProbeToken, at + 1)) {
        ParseContext ctx = ParseContext::HtmlBody;
        std::size_t best = std::string::npos;
        for (const auto& span : report.trace)
          if (span.begin <= at && at < span.end && (best == std::string::npos || span.end - span.begin < best)) {
            best = span.end - span.begin;
            ctx = span.context;
          }
        std::size_t from = at > 64 ? at - 64 : 0;
        out.push_back({page.substr(from, at - from), ctx});
      }
    }
  return out;
}

inline bool unsafe_left_context(const std::string& left, const AnalysisConfig& config) {
  for (const auto& name : config.unsafe_sinks) {
    std::string escaped;
    for (char c : name) {
      if (std::string_view(".^$|()[]{}*+?\\").find(c) != std::string_view::npos) escaped += '\\';
      escaped += c;
    }
    std::regex re("(^|[^A-Za-z0-9_$])" + escaped + "\\s*\\(\\s*['\"]?[^'\"()]*$");
    if (std::regex_search(left, re)) return true;
  }
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Search

namespace detail {

inline SinkFilter filter_of(const FlowGroup& g) {
  SinkFilter f;
  for (int l : g.sink_lines()) f.sinks.insert(l);
  for (int l : g.source_lines()) f.sources.insert(l);
  return f;
}

inline GroupOutcome repair_group(const TemplateDoc& doc, const std::vector<XssUnitTest>& units,
                                 const FlowGroup& g, const AnalysisConfig& config,
                                 const std::vector<AttackString>& corpus, const RepairOptions& opt) {
  GroupOutcome out;
  out.sink_lines = g.sink_lines();
  out.scenario = classify(g);
  auto probes = probe_sites(units, g, config);
  for (const auto& [left, ctx] : probes)
    if (unsafe_left_context(left, config)) {
      out.reason = UnrepairableReason::UnsafeSink;
      out.notes.push_back("value reaches a string-evaluating API: " + left.substr(left.rfind('\n') + 1));
      return out;
    }
  for (const auto& f : g.flows)
    if (f.encoders.size() > 2) {
      out.reason = UnrepairableReason::ChainTooLong;
      out.notes.push_back("flow to line " + std::to_string(f.sink.pos.line) + " passes " +
                          std::to_string(f.encoders.size()) + " encoders");
      return out;
    }
  if (g.sites().empty()) {
    out.reason = UnrepairableReason::ExhaustedCandidates;
    out.notes.push_back("no encoder call to replace");
    return out;
  }
  const auto filt = filter_of(g);

  if (out.scenario == Scenario::CrossUnitShared) {
    auto plans = propose_plans(g, out.scenario, opt);
    // Per unit test, the candidates that verify on that unit's sinks alone.
    std::set<std::string> unit_ids;
    for (const auto& u : g.units) unit_ids.insert(u.begin(), u.end());
    std::vector<bool> keep(plans.size(), !plans.empty());
    for (const auto& id : unit_ids) {
      SinkFilter uf;
      for (std::size_t i = 0; i < g.flows.size(); ++i)
        if (g.units[i].count(id)) {
          uf.sinks.insert(g.flows[i].sink.pos.line);
          uf.sources.insert(g.flows[i].source.pos.line);
        }
      for (std::size_t k = 0; k < plans.size(); ++k)
        if (keep[k]) {
          ++out.plans_evaluated;
          keep[k] = verify_plan(doc, plans[k], config, corpus, uf, opt.threads).ok;
        }
    }
    for (std::size_t k = 0; k < plans.size(); ++k)
      if (keep[k] && verify_plan(doc, plans[k], config, corpus, filt, opt.threads).ok) {
        out.plan = plans[k];
        out.tried_rank = k;
        return out;
      }
    out.reason = plans.empty() ? UnrepairableReason::ExhaustedCandidates
                               : UnrepairableReason::ConflictAcrossUnits;
    return out;
  }

  auto plans = propose_plans(g, out.scenario, opt);
  for (std::size_t k = 0; k < plans.size(); ++k) {
    ++out.plans_evaluated;
    auto v = verify_plan(doc, plans[k], config, corpus, filt, opt.threads);
    if (v.ok) {
      out.plan = plans[k];
      out.tried_rank = k;
      if (plans[k].extension) out.notes.push_back("plan uses the Identity-collapse extension");
      return out;
    }
    std::string desc;
    for (const auto& r : plans[k].replacements)
      desc += (desc.empty() ? "" : " ") + std::string("line ") + std::to_string(r.site.pos.line) + "=" +
              chain_to_string(r.chain);
    out.notes.push_back(desc + ": " + (v.notes.empty() ? "rejected" : v.notes.front()));
  }
  std::set<ParseContext> contexts;
  for (const auto& [left, ctx] : probes) contexts.insert(ctx);
  out.reason = contexts.size() > 1 ? UnrepairableReason::MultiContextSink
                                   : UnrepairableReason::ExhaustedCandidates;
  return out;
}

}  // namespace detail

inline std::vector<FlowGroup> vulnerable_groups(const std::vector<XssUnitTest>& units,
                                                const DetectionReport& report) {
  std::set<int> vuln;
  for (int l : report.vulnerable_sinks()) vuln.insert(l);
  std::vector<FlowGroup> out;
  for (auto& g : detail::group_flows(units)) {
    auto sinks = g.sink_lines();
    if (std::any_of(sinks.begin(), sinks.end(), [&](int l) { return vuln.count(l) > 0; }))
      out.push_back(std::move(g));
  }
  return out;
}

// Throws Error when the template has nothing to repair.
inline RepairResult repair(const TemplateDoc& doc, const AnalysisConfig& config,
                           const std::vector<AttackString>& corpus, const RepairOptions& opt = {}) {
  auto units = extract_unit_tests(doc, config);
  DetectOptions dopt;
  dopt.threads = opt.threads;
  dopt.first_hit_only = true;
  auto report = detect_units(doc.name, units, corpus, config, dopt);
  if (report.clean()) throw Error(doc.name + ": no vulnerable sink to repair");

  RepairResult result;
  auto groups = vulnerable_groups(units, report);
  for (const auto& g : groups) {
    result.groups.push_back(detail::repair_group(doc, units, g, config, corpus, opt));
    const auto& o = result.groups.back();
    if (o.plan) {
      result.plan.merge(*o.plan);
      result.tried_rank += o.tried_rank;
    } else if (!result.reason) {
      result.reason = o.reason;
    }
  }
  result.scenario = result.groups.size() > 1 ? Scenario::IndependentFlows : result.groups.front().scenario;
  if (result.reason) return result;

  // Combined plan must leave the whole template clean.
  auto v = verify_plan(doc, result.plan, config, corpus, std::nullopt, opt.threads);
  if (!v.ok) {
    result.reason = UnrepairableReason::ExhaustedCandidates;
    for (auto& g : result.groups) g.notes.insert(g.notes.end(), v.notes.begin(), v.notes.end());
    return result;
  }
  result.fixed = true;
  result.patched_text = emit_patch(doc.source, result.plan, config);
  return result;
}

}  // namespace xssynth
