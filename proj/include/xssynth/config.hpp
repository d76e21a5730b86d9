#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "xssynth/attack_gen.hpp"
#include "xssynth/encoders.hpp"
#include "xssynth/taint_cfg.hpp"

namespace xssynth {

struct ToolConfig {
  AnalysisConfig analysis;
  int closure_bound = 2;
  std::optional<std::string> corpus_path;  // pre-generated corpus (gen-attacks --json)

  void validate() const {
    analysis.validate();
    if (closure_bound < 2) throw Error("closure_bound must be at least 2");
    for (const auto& s : analysis.unsafe_sinks)
      if (s.empty()) throw Error("empty unsafe sink name");
  }
};

namespace detail {

inline std::vector<std::string> string_list(const nlohmann::json& j, const char* key) {
  if (!j.is_array()) throw Error(std::string("config: '") + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw Error(std::string("config: '") + key + "' must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace detail

// Keys absent from the document keep their defaults.
inline ToolConfig parse_config(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw Error("config: top level must be an object");
  static const std::set<std::string> kKeys = {"untrusted_sources", "encoders",      "sinks",
                                              "unsafe_sinks",      "variant",       "benign_constant",
                                              "closure_bound",     "corpus_path"};
  ToolConfig cfg;
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.count(key)) throw Error("config: unknown key '" + key + "'");
    if (key == "untrusted_sources") {
      auto v = detail::string_list(value, "untrusted_sources");
      cfg.analysis.untrusted_sources = {v.begin(), v.end()};
    } else if (key == "sinks") {
      auto v = detail::string_list(value, "sinks");
      cfg.analysis.sinks = {v.begin(), v.end()};
    } else if (key == "unsafe_sinks") {
      cfg.analysis.unsafe_sinks = detail::string_list(value, "unsafe_sinks");
    } else if (key == "encoders") {
      if (!value.is_object()) throw Error("config: 'encoders' must map call names to encoder ids");
      cfg.analysis.encoders.clear();
      for (const auto& [name, id] : value.items()) {
        auto e = id.is_string() ? encoder_from_id_name(id.get<std::string>()) : std::nullopt;
        if (!e) throw Error("config: unknown encoder id for '" + name + "'");
        cfg.analysis.encoders[name] = *e;
      }
    } else if (key == "variant") {
      std::string v = value.is_string() ? value.get<std::string>() : "";
      if (v == "Permissive")
        cfg.analysis.variant.js_style = JsStyle::Permissive;
      else if (v == "Strict")
        cfg.analysis.variant.js_style = JsStyle::Strict;
      else
        throw Error("config: 'variant' must be \"Permissive\" or \"Strict\"");
    } else if (key == "benign_constant") {
      if (!value.is_string()) throw Error("config: 'benign_constant' must be a string");
      cfg.analysis.benign_constant = value.get<std::string>();
    } else if (key == "closure_bound") {
      if (!value.is_number_integer()) throw Error("config: 'closure_bound' must be an integer");
      cfg.closure_bound = value.get<int>();
    } else {
      if (!value.is_string()) throw Error("config: 'corpus_path' must be a string");
      cfg.corpus_path = value.get<std::string>();
    }
  }
  cfg.validate();
  return cfg;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ToolConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

// ---------------------------------------------------------------------------
// JSON forms

inline nlohmann::json to_json(const AttackString& a, std::size_t index) {
  return {{"index", index},
          {"origin", a.origin},
          {"left_removed", a.left_removed},
          {"right_removed", a.right_removed},
          {"rendered", a.rendered}};
}

inline nlohmann::json corpus_to_json(const std::vector<AttackString>& corpus, int bound) {
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < corpus.size(); ++i) items.push_back(to_json(corpus[i], i));
  return {{"closure_bound", bound}, {"size", corpus.size()}, {"attacks", items}};
}

// Accepts the document written by corpus_to_json.
inline std::vector<AttackString> corpus_from_json(std::string_view text) {
  std::vector<AttackString> out;
  try {
    auto j = nlohmann::json::parse(text);
    for (const auto& a : j.at("attacks")) {
      AttackString s;
      s.rendered = a.at("rendered").get<std::string>();
      s.origin = a.value("origin", "");
      s.left_removed = a.value("left_removed", std::size_t{0});
      s.right_removed = a.value("right_removed", std::size_t{0});
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("corpus: ") + e.what());
  }
  return out;
}

}  // namespace xssynth
