#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "xssynth/attack_gen.hpp"
#include "xssynth/browser_model.hpp"
#include "xssynth/encoders.hpp"
#include "xssynth/taint_cfg.hpp"
#include "xssynth/template_ir.hpp"

namespace xssynth {

struct Finding {
  std::string template_name;
  std::string unit_test_id;
  int sink_line = 0;
  std::string focus_variable;
  std::size_t attack_index = 0;  // position in the corpus
  std::string attack_rendered;
  std::optional<ParseContext> context;  // empty for string-match findings
};

struct DetectionStats {
  std::size_t unit_tests = 0;
  std::size_t attacks_tried = 0;
  double elapsed_ms = 0;
};

struct DetectionReport {
  std::string template_name;
  std::vector<Finding> findings;
  std::vector<FlowTuple> static_findings;
  std::vector<std::string> diagnostics;
  DetectionStats stats;

  // Distinct vulnerable sink lines (attack-confirmed or unencoded), ascending.
  std::vector<int> vulnerable_sinks() const {
    std::set<int> s;
    for (const auto& f : findings) s.insert(f.sink_line);
    for (const auto& f : static_findings) s.insert(f.sink.pos.line);
    return {s.begin(), s.end()};
  }
  bool clean() const { return findings.empty() && static_findings.empty(); }
};

// Source call site (by offset) -> injected value.
using Bindings = std::map<std::size_t, std::string>;

namespace detail {

class SliceInterpreter {
 public:
  SliceInterpreter(const AnalysisConfig& cfg, const Bindings& bindings)
      : cfg_(cfg), bindings_(bindings) {}

  std::string run(const StmtList& stmts) {
    std::string out;
    for (const auto& s : stmts) {
      if (const auto* d = std::get_if<Decl>(&s.node)) {
        env_[d->var] = eval(*d->init);
      } else if (const auto* a = std::get_if<Assign>(&s.node)) {
        env_[a->var] = eval(*a->value);
      } else if (const auto* w = std::get_if<Write>(&s.node)) {
        std::string v = eval(*w->value);
        // The line of this write is what a payload reports when it runs.
        if (has_line_marker(v)) v = substitute_line(v, s.pos.line);
        out += v;
      } else if (std::holds_alternative<CondCapture>(s.node)) {
        // Captured conditions evaluate to a benign `true`; never rendered.
      } else {
        throw Error("interpret_slice: branching statement in a unit test");
      }
    }
    return out;
  }

 private:
  std::string eval(const Expr& e) {
    return std::visit(
        [&](const auto& n) -> std::string {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, StrLit>) {
            return n.value;
          } else if constexpr (std::is_same_v<T, BoolLit>) {
            return n.value ? "true" : "false";
          } else if constexpr (std::is_same_v<T, Var>) {
            auto it = env_.find(n.name.substr(0, n.name.find('.')));
            if (it == env_.end()) throw Error("interpret_slice: unbound variable '" + n.name + "'");
            return it->second;
          } else if constexpr (std::is_same_v<T, Concat>) {
            return eval(*n.left) + eval(*n.right);
          } else {
            if (cfg_.untrusted_sources.count(n.callee)) {
              auto b = bindings_.find(e.pos.offset);
              return b == bindings_.end() ? cfg_.benign_constant : b->second;
            }
            auto enc = cfg_.encoders.find(n.callee);
            if (enc != cfg_.encoders.end())
              return encode(enc->second, cfg_.variant, n.args.empty() ? "" : eval(*n.args[0]));
            // Unknown helpers pass their first argument through.
            return n.args.empty() ? cfg_.benign_constant : eval(*n.args[0]);
          }
        },
        e.node);
  }

  const AnalysisConfig& cfg_;
  const Bindings& bindings_;
  std::map<std::string, std::string> env_;
};

// The slice evaluated once into literal text and encoded source values.
// Every encoder maps strings character by character, so encode(a + b) ==
// encode(a) + encode(b) and rendering reduces to concatenation. Produces
// the same text as SliceInterpreter.
class CompiledSlice {
 public:
  CompiledSlice(const StmtList& stmts, const AnalysisConfig& cfg)
      : variant_(cfg.variant), benign_(cfg.benign_constant) {
    for (const auto& s : stmts) {
      if (const auto* d = std::get_if<Decl>(&s.node)) {
        env_[d->var] = eval(*d->init, cfg);
      } else if (const auto* a = std::get_if<Assign>(&s.node)) {
        env_[a->var] = eval(*a->value, cfg);
      } else if (const auto* w = std::get_if<Write>(&s.node)) {
        Segment seg{eval(*w->value, cfg), s.pos.line};
        for (auto& p : seg.pieces)
          if (p.source) p.text = apply_chain(p.chain, variant_, benign_);
        segments_.push_back(std::move(seg));
      } else if (!std::holds_alternative<CondCapture>(s.node)) {
        throw Error("interpret_slice: branching statement in a unit test");
      }
    }
    env_.clear();
  }

  std::string render(const Bindings& bindings) const {
    std::string out;
    std::string seg_text;
    for (const auto& seg : segments_) {
      seg_text.clear();
      for (const auto& p : seg.pieces) {
        auto b = p.source ? bindings.find(p.site) : bindings.end();
        if (b == bindings.end())
          seg_text += p.text;
        else
          seg_text += apply_chain(p.chain, variant_, b->second);
      }
      if (has_line_marker(seg_text))
        out += substitute_line(seg_text, seg.line);
      else
        out += seg_text;
    }
    return out;
  }

 private:
  struct Piece {
    std::string text;  // literal, or the encoded benign value of a source
    bool source = false;
    std::size_t site = 0;
    EncoderChain chain;
  };
  using Value = std::vector<Piece>;
  struct Segment {
    Value pieces;
    int line = 0;
  };

  static void append(Value& v, Value more) {
    for (auto& p : more) {
      if (!p.source && !v.empty() && !v.back().source)
        v.back().text += p.text;
      else
        v.push_back(std::move(p));
    }
  }

  Value eval(const Expr& e, const AnalysisConfig& cfg) {
    return std::visit(
        [&](const auto& n) -> Value {
          using T = std::decay_t<decltype(n)>;
          if constexpr (std::is_same_v<T, StrLit>) {
            return {Piece{n.value, false, 0, {}}};
          } else if constexpr (std::is_same_v<T, BoolLit>) {
            return {Piece{n.value ? "true" : "false", false, 0, {}}};
          } else if constexpr (std::is_same_v<T, Var>) {
            auto it = env_.find(n.name.substr(0, n.name.find('.')));
            if (it == env_.end()) throw Error("interpret_slice: unbound variable '" + n.name + "'");
            return it->second;
          } else if constexpr (std::is_same_v<T, Concat>) {
            Value v = eval(*n.left, cfg);
            append(v, eval(*n.right, cfg));
            return v;
          } else {
            if (cfg.untrusted_sources.count(n.callee)) return {Piece{"", true, e.pos.offset, {}}};
            auto enc = cfg.encoders.find(n.callee);
            if (enc != cfg.encoders.end()) {
              Value v = n.args.empty() ? Value{} : eval(*n.args[0], cfg);
              for (auto& p : v) {
                if (p.source)
                  p.chain.push_back(enc->second);
                else
                  p.text = encode(enc->second, variant_, p.text);
              }
              return v;
            }
            return n.args.empty() ? Value{Piece{benign_, false, 0, {}}} : eval(*n.args[0], cfg);
          }
        },
        e.node);
  }

  EncoderVariant variant_;
  std::string benign_;
  std::map<std::string, Value> env_;
  std::vector<Segment> segments_;
};

}  // namespace detail

inline std::string interpret_slice(const XssUnitTest& unit, const Bindings& bindings,
                                   const AnalysisConfig& config) {
  return detail::SliceInterpreter(config, bindings).run(unit.stmts);
}

inline std::string interpret_slice(const StmtList& stmts, const Bindings& bindings,
                                   const AnalysisConfig& config) {
  return detail::SliceInterpreter(config, bindings).run(stmts);
}

enum class DetectMode { BrowserModel, StringMatch };

struct DetectOptions {
  DetectMode mode = DetectMode::BrowserModel;
  unsigned threads = 1;
  // Stop a (unit test, variable) pair after its first successful attack on
  // every sink it feeds. Findings then hold one attack per vulnerable sink.
  bool first_hit_only = false;
};

namespace detail {

inline void dedup_findings(std::vector<Finding>& fs) {
  auto key = [](const Finding& f) {
    return std::tie(f.unit_test_id, f.sink_line, f.focus_variable, f.attack_index);
  };
  std::sort(fs.begin(), fs.end(), [&](const Finding& a, const Finding& b) { return key(a) < key(b); });
  fs.erase(std::unique(fs.begin(), fs.end(),
                       [&](const Finding& a, const Finding& b) { return key(a) == key(b); }),
           fs.end());
}

struct InjectionJob {
  const XssUnitTest* unit;
  SourceSite site;
  std::string focus;
};

inline std::vector<Finding> run_injection(const InjectionJob& job,
                                          const std::vector<AttackString>& corpus,
                                          const AnalysisConfig& config, const DetectOptions& opt,
                                          std::size_t& tried, std::set<std::string>& diagnostics) {
  std::vector<Finding> out;
  std::vector<int> sinks;
  for (const auto& f : job.unit->flows)
    if (f.source == job.site) sinks.push_back(f.sink.pos.line);
  std::sort(sinks.begin(), sinks.end());
  sinks.erase(std::unique(sinks.begin(), sinks.end()), sinks.end());
  std::set<int> confirmed;
  const detail::CompiledSlice slice(job.unit->stmts, config);
  Bindings bindings;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (opt.first_hit_only && confirmed.size() == sinks.size()) break;
    bindings[job.site.pos.offset] = injectable(corpus[i].rendered);
    std::string page = slice.render(bindings);
    ++tried;
    auto record = [&](int line, std::optional<ParseContext> ctx) {
      if (!std::binary_search(sinks.begin(), sinks.end(), line)) {
        diagnostics.insert(job.unit->id + ": payload ran with line " + std::to_string(line) +
                           ", which is not a sink fed by " + job.site.text);
        return;
      }
      if (opt.first_hit_only && confirmed.count(line)) return;
      confirmed.insert(line);
      out.push_back({job.unit->template_name, job.unit->id, line, job.focus, i, corpus[i].rendered, ctx});
    };
    if (opt.mode == DetectMode::StringMatch) {
      for (int line : sinks)
        if (page.find(substitute_line(corpus[i].rendered, line)) != std::string::npos)
          record(line, std::nullopt);
    } else {
      for (const auto& h : scan(page).hits) record(h.line, h.context);
    }
  }
  return out;
}

inline std::vector<InjectionJob> injection_jobs(const XssUnitTest& unit) {
  std::vector<InjectionJob> jobs;
  for (const auto& ip : unit.injection_points) {
    bool seen = std::any_of(jobs.begin(), jobs.end(),
                            [&](const InjectionJob& j) { return j.site == ip.site; });
    if (!seen) jobs.push_back({&unit, ip.site, ip.focus_variable});
  }
  return jobs;
}

}  // namespace detail

// One focus variable at a time; all other sources return the benign constant.
inline std::vector<Finding> run_unit_test(const XssUnitTest& unit,
                                          const std::vector<AttackString>& corpus,
                                          const AnalysisConfig& config,
                                          const DetectOptions& opt = {}) {
  std::vector<Finding> out;
  std::size_t tried = 0;
  std::set<std::string> diags;
  for (const auto& job : detail::injection_jobs(unit)) {
    auto fs = detail::run_injection(job, corpus, config, opt, tried, diags);
    out.insert(out.end(), fs.begin(), fs.end());
  }
  detail::dedup_findings(out);
  return out;
}

inline DetectionReport detect_units(const std::string& template_name,
                                    const std::vector<XssUnitTest>& units,
                                    const std::vector<AttackString>& corpus,
                                    const AnalysisConfig& config, const DetectOptions& opt = {}) {
  auto t0 = std::chrono::steady_clock::now();
  DetectionReport r;
  r.template_name = template_name;
  r.stats.unit_tests = units.size();
  r.static_findings = flag_unencoded_flows(units);

  std::vector<detail::InjectionJob> jobs;
  for (const auto& u : units) {
    auto js = detail::injection_jobs(u);
    jobs.insert(jobs.end(), js.begin(), js.end());
  }
  std::vector<std::vector<Finding>> results(jobs.size());
  std::vector<std::size_t> tried(jobs.size(), 0);
  std::vector<std::set<std::string>> diags(jobs.size());
  unsigned workers = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(jobs.size())));
  if (workers <= 1) {
    for (std::size_t k = 0; k < jobs.size(); ++k)
      results[k] = detail::run_injection(jobs[k], corpus, config, opt, tried[k], diags[k]);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < jobs.size(); k = next++)
          results[k] = detail::run_injection(jobs[k], corpus, config, opt, tried[k], diags[k]);
      });
    for (auto& t : pool) t.join();
  }
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    r.findings.insert(r.findings.end(), results[k].begin(), results[k].end());
    r.stats.attacks_tried += tried[k];
    for (const auto& d : diags[k])
      if (std::find(r.diagnostics.begin(), r.diagnostics.end(), d) == r.diagnostics.end())
        r.diagnostics.push_back(d);
  }
  detail::dedup_findings(r.findings);
  r.stats.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline DetectionReport detect(const TemplateDoc& doc, const AnalysisConfig& config,
                              const std::vector<AttackString>& corpus,
                              const DetectOptions& opt = {}) {
  return detect_units(doc.name, extract_unit_tests(doc, config), corpus, config, opt);
}

// Reports an attack whenever its text reaches the page unchanged, without
// asking whether a browser would run it.
inline DetectionReport baseline_string_match(const TemplateDoc& doc, const AnalysisConfig& config,
                                             const std::vector<AttackString>& corpus,
                                             DetectOptions opt = {}) {
  opt.mode = DetectMode::StringMatch;
  return detect(doc, config, corpus, opt);
}

}  // namespace xssynth
