#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xssynth/attack_gen.hpp"
#include "xssynth/config.hpp"
#include "xssynth/harness.hpp"
#include "xssynth/repair.hpp"
#include "xssynth/report.hpp"
#include "xssynth/template_ir.hpp"

namespace xssynth {

enum ExitCode : int { kExitClean = 0, kExitFindings = 1, kExitUsage = 2 };

// Worker count: hardware concurrency, capped by XSSYNTH_THREADS when set.
inline unsigned thread_budget() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("XSSYNTH_THREADS")) {
    char* end = nullptr;
    long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

namespace detail {

// Runs job(i) for i in [0, n) on up to `workers` threads.
inline void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& job) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  for (auto& t : pool) t.join();
}

struct FileOutcome {
  int code = kExitClean;
  std::string out;  // stdout text (non-JSON mode)
  std::string err;
  nlohmann::json json;
};

inline int worst(int a, int b) {
  if (a == kExitUsage || b == kExitUsage) return kExitUsage;
  return std::max(a, b);
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthesizes XSS attacks against template pages, detects vulnerable sinks and repairs encoders."};
  app.name("xssynth");
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "flat JSON configuration file")->check(CLI::ExistingFile);

  int bound = 2;
  bool json = false;
  bool all_alternatives = false;
  auto* gen = app.add_subcommand("gen-attacks", "print the attack corpus");
  gen->add_option("--bound", bound, "closure bound (>= 2)")->check(CLI::Range(2, 16));
  gen->add_flag("--json", json, "emit a JSON document");
  gen->add_flag("--all-alternatives", all_alternatives,
                "expand interchangeable host/property names instead of one representative");

  std::vector<std::string> files;
  auto* extract = app.add_subcommand("extract", "dump the XSS unit tests of each template");
  extract->add_option("files", files, "template files")->required()->check(CLI::ExistingFile);
  extract->add_flag("--json", json, "emit JSON");

  bool baseline = false;
  bool first_hit = false;
  auto* detect_cmd = app.add_subcommand("detect", "run every attack against every unit test");
  detect_cmd->add_option("files", files, "template files")->required()->check(CLI::ExistingFile);
  detect_cmd->add_flag("--json", json, "emit JSON");
  detect_cmd->add_flag("--baseline", baseline, "plain string matching instead of the browser model");
  detect_cmd->add_flag("--first-hit", first_hit, "stop at the first successful attack per sink");

  bool in_place = false;
  bool strict_paper = false;
  auto* repair_cmd = app.add_subcommand("repair", "replace encoders on vulnerable flows");
  repair_cmd->add_option("files", files, "template files")->required()->check(CLI::ExistingFile);
  repair_cmd->add_flag("--in-place", in_place, "overwrite the template instead of writing <file>.fixed");
  repair_cmd->add_flag("--strict-paper", strict_paper,
                       "only the published plan families (no Identity-collapse plans)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitClean;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitClean;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  ToolConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_config(config_path);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  const unsigned threads = thread_budget();

  if (gen->parsed()) {
    auto corpus = generate_corpus(bound, all_alternatives);
    if (json) {
      out << corpus_to_json(corpus, bound).dump(2) << "\n";
    } else {
      for (const auto& a : corpus)
        out << a.origin << '\t' << a.left_removed << ',' << a.right_removed << '\t' << a.rendered << '\n';
    }
    return kExitClean;
  }

  std::vector<AttackString> corpus;
  if (!extract->parsed()) {
    try {
      corpus = cfg.corpus_path ? corpus_from_json(read_file(*cfg.corpus_path))
                               : generate_corpus(cfg.closure_bound);
    } catch (const Error& e) {
      err << "error: " << e.what() << "\n";
      return kExitUsage;
    }
  }

  std::vector<detail::FileOutcome> results(files.size());
  // Files run in parallel; detection inside a file then stays single-threaded.
  unsigned inner = files.size() > 1 ? 1u : threads;
  detail::parallel_for(files.size(), threads, [&](std::size_t i) {
    auto& r = results[i];
    const std::string& path = files[i];
    TemplateDoc doc;
    try {
      doc = parse_template(read_file(path), path);
    } catch (const Error& e) {
      r.code = kExitUsage;
      r.err = "error: " + path + ": " + e.what() + "\n";
      r.json = {{"file", path}, {"error", e.what()}};
      return;
    }
    try {
      if (extract->parsed()) {
        auto units = extract_unit_tests(doc, cfg.analysis);
        r.json = {{"file", path}, {"unit_tests", nlohmann::json::array()}};
        r.out = "== " + path + ": " + std::to_string(units.size()) + " unit test(s)\n";
        for (const auto& u : units) {
          r.json["unit_tests"].push_back(to_json(u));
          r.out += "-- " + u.id + "  lines";
          for (int l : u.origin_lines) r.out += " " + std::to_string(l);
          r.out += "\n";
          for (const auto& f : u.flows) {
            r.out += "   flow " + f.source.text + " -> line " + std::to_string(f.sink.pos.line) + " via [";
            for (std::size_t k = 0; k < f.encoders.size(); ++k)
              r.out += (k ? ", " : "") + std::string(encoder_id_name(f.encoders[k].id));
            r.out += "]\n";
          }
          r.out += to_string(u.stmts);
        }
      } else if (detect_cmd->parsed()) {
        DetectOptions opt;
        opt.threads = inner;
        opt.first_hit_only = first_hit;
        auto rep = baseline ? baseline_string_match(doc, cfg.analysis, corpus, opt)
                            : detect(doc, cfg.analysis, corpus, opt);
        r.code = rep.clean() ? kExitClean : kExitFindings;
        r.json = to_json(rep);
        r.json["file"] = path;
        r.out = to_table(rep);
      } else {
        RepairOptions opt;
        opt.strict_paper = strict_paper;
        opt.threads = inner;
        std::optional<RepairResult> res;
        try {
          res = repair(doc, cfg.analysis, corpus, opt);
        } catch (const Error&) {
          r.json = {{"file", path}, {"status", "Clean"}};
          return;
        }
        std::string target;
        if (res->fixed) {
          target = in_place ? path : path + ".fixed";
          std::ofstream o(target, std::ios::binary | std::ios::trunc);
          o << res->patched_text;
          if (!o) throw Error("cannot write " + target);
        } else {
          r.code = kExitFindings;
        }
        r.json = to_json(*res, target);
        r.json["file"] = path;
      }
    } catch (const Error& e) {
      r.code = kExitUsage;
      r.err = "error: " + path + ": " + e.what() + "\n";
      r.json = {{"file", path}, {"error", e.what()}};
    }
  });

  int code = kExitClean;
  nlohmann::json all = nlohmann::json::array();
  for (const auto& r : results) {
    code = detail::worst(code, r.code);
    err << r.err;
    all.push_back(r.json);
  }
  bool emit_json = json || repair_cmd->parsed();
  if (emit_json)
    out << all.dump(2) << "\n";
  else
    for (const auto& r : results) out << r.out;
  return code;
}

}  // namespace xssynth
