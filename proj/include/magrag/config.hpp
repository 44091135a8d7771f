#pragma once

// Configuration.
//
// A TOML-style file of [section] headers and key = value lines. Values are
// quoted strings, numbers or booleans; "${NAME}" inside a string expands to
// the environment variable NAME. Relative paths are resolved against the
// directory holding the config file.
//
// Precedence: command-line flag > config file > built-in default.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "magrag/error.hpp"
#include "magrag/graph.hpp"
#include "magrag/retrieval.hpp"
#include "magrag/text.hpp"

namespace magrag {

struct ChatSettings {
  std::string provider = "scripted";  // scripted | openai
  ProviderConfig remote{"https://api.openai.com/v1", "gpt-4", "OPENAI_API_KEY"};
  std::filesystem::path script;       // JSON script for the scripted provider
};

struct EmbeddingSettings {
  std::string provider = "hash";  // hash | openai
  ProviderConfig remote{"https://api.openai.com/v1", "text-embedding-3-small", "OPENAI_API_KEY"};
  std::size_t dimension = 64;
};

struct Config {
  ChatSettings chat;
  EmbeddingSettings embedding;
  double epsilon = default_epsilon;
  int k = default_top_k;
  std::size_t knowledge_budget_chars = default_knowledge_budget_chars;
  bool dd_same_layer_only = false;
  bool dd_expansion = false;
  std::filesystem::path prompt_dir;  // empty: built-in prompts
  std::filesystem::path results_dir = "results";
  std::size_t max_document_chars = default_max_document_chars;
  double extraction_temperature = 0.0;
  double terminology_temperature = 0.0;
  double knowledge_temperature = 0.2;
  double modeling_temperature = 0.2;
  double judge_temperature = 0.0;
  std::string model_tag;  // defaults to the chat model name

  void validate() const {
    if (k < 1) throw Error(ErrorCode::config, "k must be >= 1");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw Error(ErrorCode::config, "epsilon must lie in [0, 1)");
    if (embedding.dimension == 0) throw Error(ErrorCode::config, "embedding dimension must be positive");
    if (max_document_chars == 0) throw Error(ErrorCode::config, "max_document_chars must be positive");
    for (double t : {extraction_temperature, terminology_temperature, knowledge_temperature,
                     modeling_temperature, judge_temperature})
      if (t < 0.0 || t > 1.0) throw Error(ErrorCode::config, "temperatures must lie in [0, 1]");
    chat.remote.validate();
    embedding.remote.validate();
  }

  std::string effective_model_tag() const {
    if (!model_tag.empty()) return model_tag;
    return chat.provider == "scripted" ? std::string("scripted") : chat.remote.model_name;
  }
};

// "section.key" -> raw value text (strings unquoted and env-expanded).
using KeyValues = std::map<std::string, std::string>;

inline std::string expand_env(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '$' && i + 1 < s.size() && s[i + 1] == '{') {
      auto close = s.find('}', i + 2);
      if (close == std::string_view::npos) throw Error(ErrorCode::config, "unterminated ${ in config value");
      auto name = std::string(s.substr(i + 2, close - i - 2));
      if (const char* v = std::getenv(name.c_str())) out += v;
      i = close;
    } else {
      out += s[i];
    }
  }
  return out;
}

inline KeyValues parse_config_text(std::string_view body) {
  KeyValues kv;
  std::string section;
  std::size_t line_no = 0;
  for (auto raw : text::split_lines(body)) {
    ++line_no;
    auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto where = [&] { return "config line " + std::to_string(line_no) + ": "; };
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorCode::config, where() + "bad section header", {}, line_no);
      section = std::string(text::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::config, where() + "expected key = value", {}, line_no);
    auto key = std::string(text::trim(line.substr(0, eq)));
    auto value = text::trim(line.substr(eq + 1));
    std::string parsed;
    if (!value.empty() && value.front() == '"') {
      auto close = value.find('"', 1);
      if (close == std::string_view::npos) throw Error(ErrorCode::config, where() + "unterminated string", {}, line_no);
      auto rest = text::trim(value.substr(close + 1));
      if (!rest.empty() && rest.front() != '#')
        throw Error(ErrorCode::config, where() + "trailing characters after string", {}, line_no);
      parsed = expand_env(value.substr(1, close - 1));
    } else {
      auto hash = value.find('#');
      parsed = std::string(text::trim(value.substr(0, hash)));
    }
    kv[section.empty() ? key : section + "." + key] = parsed;
  }
  return kv;
}

namespace detail {

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::config, "config key '" + key + "' expects a number, got '" + v + "'");
}

inline long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    long long n = std::stoll(v, &used);
    if (used == v.size()) return n;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::config, "config key '" + key + "' expects an integer, got '" + v + "'");
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw Error(ErrorCode::config, "config key '" + key + "' expects true or false, got '" + v + "'");
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  auto n = to_int(key, v);
  if (n < 0) throw Error(ErrorCode::config, "config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(n);
}

inline void apply_remote(ProviderConfig& p, const std::string& key, const std::string& field, const std::string& v) {
  if (field == "endpoint") p.endpoint = v;
  else if (field == "model") p.model_name = v;
  else if (field == "api_key_env") p.api_key_ref = v;
  else if (field == "timeout_ms") p.timeout = std::chrono::milliseconds(to_int(key, v));
  else if (field == "max_retries") p.max_retries = static_cast<int>(to_int(key, v));
  else if (field == "min_interval_ms") p.min_interval = std::chrono::milliseconds(to_int(key, v));
  else throw Error(ErrorCode::config, "unknown config key '" + key + "'");
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& v) {
  std::filesystem::path p(v);
  return (p.is_relative() && !base.empty()) ? base / p : p;
}

}  // namespace detail

// Applies key/values onto cfg. base_dir anchors relative paths.
inline void apply_config(Config& cfg, const KeyValues& kv, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  for (const auto& [key, v] : kv) {
    auto dot = key.find('.');
    auto section = dot == std::string::npos ? std::string() : key.substr(0, dot);
    auto field = dot == std::string::npos ? key : key.substr(dot + 1);

    if (section == "chat") {
      if (field == "provider") cfg.chat.provider = v;
      else if (field == "script") cfg.chat.script = resolve(base_dir, v);
      else apply_remote(cfg.chat.remote, key, field, v);
    } else if (section == "embedding") {
      if (field == "provider") cfg.embedding.provider = v;
      else if (field == "dimension") cfg.embedding.dimension = to_size(key, v);
      else apply_remote(cfg.embedding.remote, key, field, v);
    } else if (section == "graph") {
      if (field == "epsilon") cfg.epsilon = to_double(key, v);
      else if (field == "dd_same_layer_only") cfg.dd_same_layer_only = to_bool(key, v);
      else if (field == "max_document_chars") cfg.max_document_chars = to_size(key, v);
      else throw Error(ErrorCode::config, "unknown config key '" + key + "'");
    } else if (section == "retrieval") {
      if (field == "k") cfg.k = static_cast<int>(to_int(key, v));
      else if (field == "knowledge_budget_chars") cfg.knowledge_budget_chars = to_size(key, v);
      else if (field == "dd_expansion") cfg.dd_expansion = to_bool(key, v);
      else throw Error(ErrorCode::config, "unknown config key '" + key + "'");
    } else if (section == "agents") {
      if (field == "extraction_temperature") cfg.extraction_temperature = to_double(key, v);
      else if (field == "terminology_temperature") cfg.terminology_temperature = to_double(key, v);
      else if (field == "knowledge_temperature") cfg.knowledge_temperature = to_double(key, v);
      else if (field == "modeling_temperature") cfg.modeling_temperature = to_double(key, v);
      else if (field == "judge_temperature") cfg.judge_temperature = to_double(key, v);
      else if (field == "model_tag") cfg.model_tag = v;
      else throw Error(ErrorCode::config, "unknown config key '" + key + "'");
    } else if (section == "paths") {
      if (field == "prompts") cfg.prompt_dir = resolve(base_dir, v);
      else if (field == "results") cfg.results_dir = resolve(base_dir, v);
      else throw Error(ErrorCode::config, "unknown config key '" + key + "'");
    } else {
      throw Error(ErrorCode::config, "unknown config key '" + key + "'");
    }
  }
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::config, "cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  Config cfg;
  apply_config(cfg, parse_config_text(buf.str()), path.parent_path());
  return cfg;
}

}  // namespace magrag
