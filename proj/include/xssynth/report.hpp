#pragma once

#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "xssynth/harness.hpp"
#include "xssynth/repair.hpp"
#include "xssynth/taint_cfg.hpp"

namespace xssynth {

inline nlohmann::json to_json(const FlowTuple& f) {
  nlohmann::json enc = nlohmann::json::array();
  for (const auto& e : f.encoders)
    enc.push_back({{"encoder", encoder_id_name(e.id)}, {"call", e.callee}, {"line", e.pos.line}});
  return {{"source", f.source.text},
          {"source_line", f.source.pos.line},
          {"sink_line", f.sink.pos.line},
          {"sink", f.sink.expr},
          {"encoders", enc},
          {"variables", f.variable_chain}};
}

inline nlohmann::json to_json(const Finding& f) {
  return {{"template", f.template_name},
          {"unit_test_id", f.unit_test_id},
          {"sink_line", f.sink_line},
          {"variable", f.focus_variable},
          {"attack_index", f.attack_index},
          {"attack_rendered", f.attack_rendered},
          {"context", f.context ? nlohmann::json(std::string(context_name(*f.context))) : nlohmann::json()}};
}

inline nlohmann::json to_json(const DetectionReport& r) {
  nlohmann::json findings = nlohmann::json::array();
  for (const auto& f : r.findings) findings.push_back(to_json(f));
  nlohmann::json unencoded = nlohmann::json::array();
  for (const auto& f : r.static_findings) unencoded.push_back(to_json(f));
  return {{"template", r.template_name},
          {"vulnerable_sinks", r.vulnerable_sinks()},
          {"findings", findings},
          {"unencoded_flows", unencoded},
          {"diagnostics", r.diagnostics},
          {"stats",
           {{"unit_tests", r.stats.unit_tests},
            {"attacks_tried", r.stats.attacks_tried},
            {"elapsed_ms", r.stats.elapsed_ms}}}};
}

inline nlohmann::json to_json(const XssUnitTest& u) {
  nlohmann::json flows = nlohmann::json::array();
  for (const auto& f : u.flows) flows.push_back(to_json(f));
  return {{"id", u.id}, {"origin_lines", u.origin_lines}, {"flows", flows}, {"code", to_string(u.stmts)}};
}

inline nlohmann::json to_json(const RepairPlan& p) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : p.replacements) {
    nlohmann::json chain = nlohmann::json::array();
    for (auto id : r.chain) chain.push_back(encoder_id_name(id));
    out.push_back({{"line", r.site.pos.line}, {"column", r.site.pos.col}, {"was", r.site.callee}, {"chain", chain}});
  }
  return out;
}

inline nlohmann::json to_json(const RepairResult& r, const std::string& written_to = {}) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.groups) {
    nlohmann::json j = {{"sink_lines", g.sink_lines},
                        {"scenario", scenario_name(g.scenario)},
                        {"plans_evaluated", g.plans_evaluated},
                        {"notes", g.notes}};
    if (g.plan) {
      j["plan"] = to_json(*g.plan);
      j["tried_rank"] = g.tried_rank;
      j["extension"] = g.plan->extension;
    }
    if (g.reason) j["reason"] = reason_name(*g.reason);
    groups.push_back(std::move(j));
  }
  nlohmann::json out = {{"status", r.fixed ? "Fixed" : "Unrepairable"},
                        {"scenario", scenario_name(r.scenario)},
                        {"groups", groups}};
  if (r.fixed) {
    out["plan"] = to_json(r.plan);
    out["tried_rank"] = r.tried_rank;
    if (!written_to.empty()) out["output"] = written_to;
  } else {
    out["reason"] = reason_name(*r.reason);
  }
  return out;
}

// Human-readable findings table: one row per vulnerable sink.
inline std::string to_table(const DetectionReport& r) {
  std::ostringstream os;
  os << r.template_name << ": ";
  if (r.clean()) {
    os << "clean (" << r.stats.unit_tests << " unit tests, " << r.stats.attacks_tried << " attacks)\n";
    return os.str();
  }
  auto sinks = r.vulnerable_sinks();
  os << sinks.size() << " vulnerable sink" << (sinks.size() == 1 ? "" : "s") << "\n";
  for (int line : sinks) {
    const Finding* first = nullptr;
    std::size_t n = 0;
    for (const auto& f : r.findings)
      if (f.sink_line == line) {
        if (!first) first = &f;
        ++n;
      }
    os << "  line " << line;
    if (first) {
      os << "  " << (first->context ? context_name(*first->context) : std::string_view("string-match"))
         << "  variable " << first->focus_variable << "  " << n << " attack" << (n == 1 ? "" : "s")
         << ", e.g. " << first->attack_rendered;
    }
    for (const auto& f : r.static_findings)
      if (f.sink.pos.line == line) {
        os << "  (unencoded: " << f.source.text << ")";
        break;
      }
    os << "\n";
  }
  return os.str();
}

}  // namespace xssynth
