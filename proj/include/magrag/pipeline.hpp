#pragma once

// The three run modes over a user query:
//   mag-rag  : terminology -> retrieval over the graph -> modeling
//   pure-ma  : terminology -> knowledge generation agent -> modeling
//   pure-llm : a single direct-answer call
// Stages run strictly in sequence. A failing stage aborts the run with a
// StageError that carries the trace recorded so far.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "magrag/error.hpp"
#include "magrag/graph.hpp"
#include "magrag/prompts.hpp"
#include "magrag/providers.hpp"
#include "magrag/retrieval.hpp"

namespace magrag {

enum class Mode { mag_rag, pure_ma, pure_llm };

constexpr std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::mag_rag: return "mag-rag";
    case Mode::pure_ma: return "pure-ma";
    case Mode::pure_llm: return "pure-llm";
  }
  return "";
}

// Method-label suffix used in score tables: G (MAG-RAG), T (pure MA), D (pure LLM).
constexpr char mode_suffix(Mode m) {
  switch (m) {
    case Mode::mag_rag: return 'G';
    case Mode::pure_ma: return 'T';
    case Mode::pure_llm: return 'D';
  }
  return '?';
}

inline std::optional<Mode> parse_mode(std::string_view s) {
  for (auto m : {Mode::mag_rag, Mode::pure_ma, Mode::pure_llm})
    if (mode_name(m) == s) return m;
  return std::nullopt;
}

inline std::optional<Mode> mode_from_suffix(char c) {
  for (auto m : {Mode::mag_rag, Mode::pure_ma, Mode::pure_llm})
    if (mode_suffix(m) == c) return m;
  return std::nullopt;
}

struct UserQuery {
  std::string query_id;
  std::string text;
};

struct TerminologicalDescription {
  std::string text;
  std::string source_query;
};

namespace stage {
inline constexpr std::string_view terminology = "terminology";
inline constexpr std::string_view retrieval = "retrieval";
inline constexpr std::string_view knowledge_generation = "knowledge_generation";
inline constexpr std::string_view modeling = "modeling";
inline constexpr std::string_view direct_answer = "direct_answer";
}  // namespace stage

struct TraceEntry {
  std::string stage;
  std::string prompt;  // agent prompt used; empty for retrieval
  double elapsed_ms = 0.0;
  std::size_t completion_chars = 0;
};

using KnowledgeUsed = std::variant<std::monostate, KnowledgeBundle, std::string>;

struct ModelingResult {
  std::string query_id;
  std::string query_text;
  Mode mode = Mode::pure_llm;
  std::string model;        // base-model tag, e.g. the chat model name
  std::string description;  // terminological description (empty for pure-llm)
  std::string text;
  KnowledgeUsed knowledge_used;
  std::vector<TraceEntry> trace;
  int k = 0;
  std::string started;
  std::string finished;
};

class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause, std::vector<TraceEntry> partial_trace)
      : Error(ErrorCode::stage_failure,
              "stage '" + stage + "' failed: [" + std::string(cause.code_name()) + "] " + cause.what(),
              cause.detail()),
        stage_(std::move(stage)),
        cause_(cause.code()),
        partial_trace_(std::move(partial_trace)) {}

  const std::string& stage() const noexcept { return stage_; }
  ErrorCode cause() const noexcept { return cause_; }
  const std::vector<TraceEntry>& partial_trace() const noexcept { return partial_trace_; }

 private:
  std::string stage_;
  ErrorCode cause_;
  std::vector<TraceEntry> partial_trace_;
};

struct AgentSettings {
  double terminology_temperature = 0.0;
  double knowledge_temperature = 0.2;
  double modeling_temperature = 0.2;
  int max_output = 4096;
  std::string model_tag = "model";
};

inline std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  auto t = std::chrono::system_clock::to_time_t(now);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
  return out.str();
}

class Pipeline {
 public:
  // embed may be null when only pure-ma / pure-llm runs are needed.
  Pipeline(ChatProvider& chat, EmbeddingProvider* embed, PromptSet prompts, AgentSettings settings = {})
      : chat_(chat), embed_(embed), prompts_(std::move(prompts)), settings_(std::move(settings)) {}

  TerminologicalDescription terminologize(const UserQuery& query, std::vector<TraceEntry>& trace) {
    validate(query);
    auto text = call_agent(stage::terminology, agent::terminology, {{"query", query.text}},
                           settings_.terminology_temperature, trace);
    return {std::move(text), query.query_id};
  }

  ModelingResult run_mag_rag(const UserQuery& query, const KnowledgeGraph& graph,
                             const RetrievalOptions& options = {}) {
    validate(query);
    require(!graph.nodes().empty(), "mag-rag requires a non-empty graph");
    if (embed_ == nullptr) throw Error(ErrorCode::config, "mag-rag requires an embedding provider");
    auto result = start(query, Mode::mag_rag);
    result.k = options.k;

    auto description = terminologize(query, result.trace);
    result.description = description.text;

    auto t0 = std::chrono::steady_clock::now();
    KnowledgeBundle bundle;
    try {
      bundle = retrieve_topk(graph, description.text, *embed_, options);
    } catch (const Error& e) {
      throw StageError(std::string(stage::retrieval), e, result.trace);
    }
    result.trace.push_back({std::string(stage::retrieval), "", elapsed_ms(t0), bundle.total_characters});

    result.text = call_agent(stage::modeling, agent::modeling,
                             {{"description", description.text}, {"knowledge", bundle.render()}},
                             settings_.modeling_temperature, result.trace);
    result.knowledge_used = std::move(bundle);
    result.finished = utc_timestamp();
    return result;
  }

  ModelingResult run_pure_ma(const UserQuery& query) {
    validate(query);
    auto result = start(query, Mode::pure_ma);
    auto description = terminologize(query, result.trace);
    result.description = description.text;
    auto knowledge = call_agent(stage::knowledge_generation, agent::knowledge_generation,
                                {{"description", description.text}}, settings_.knowledge_temperature,
                                result.trace);
    result.text = call_agent(stage::modeling, agent::modeling,
                             {{"description", description.text}, {"knowledge", knowledge}},
                             settings_.modeling_temperature, result.trace);
    result.knowledge_used = std::move(knowledge);
    result.finished = utc_timestamp();
    return result;
  }

  ModelingResult run_pure_llm(const UserQuery& query) {
    validate(query);
    auto result = start(query, Mode::pure_llm);
    result.text = call_agent(stage::direct_answer, agent::direct_answer, {{"query", query.text}},
                             settings_.modeling_temperature, result.trace);
    result.finished = utc_timestamp();
    return result;
  }

  const PromptSet& prompts() const noexcept { return prompts_; }

 private:
  static void validate(const UserQuery& query) {
    require(!text::trim(query.text).empty(), "query text is empty");
    require(!query.query_id.empty(), "query id is empty");
  }

  ModelingResult start(const UserQuery& query, Mode mode) const {
    ModelingResult r;
    r.query_id = query.query_id;
    r.query_text = query.text;
    r.mode = mode;
    r.model = settings_.model_tag;
    r.started = utc_timestamp();
    return r;
  }

  static double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }

  std::string call_agent(std::string_view stage_name, std::string_view agent_name,
                         const std::map<std::string, std::string>& slots, double temperature,
                         std::vector<TraceEntry>& trace) {
    const auto& prompt = prompts_.get(agent_name);
    ChatRequest request;
    request.agent = std::string(agent_name);
    request.system_prompt = prompt.system;
    request.user_content = fill_template(prompt.user_template, slots);
    request.temperature = temperature;
    request.max_output = settings_.max_output;

    auto t0 = std::chrono::steady_clock::now();
    std::string completion;
    try {
      completion = chat_.chat(request);
    } catch (const Error& e) {
      throw StageError(std::string(stage_name), e, trace);
    }
    trace.push_back({std::string(stage_name), std::string(agent_name), elapsed_ms(t0), completion.size()});
    return completion;
  }

  ChatProvider& chat_;
  EmbeddingProvider* embed_;
  PromptSet prompts_;
  AgentSettings settings_;
};

// ---------------------------------------------------------------------------
// Result files
//
// Markdown with a front-matter block, then the query, the modeling text, the
// knowledge used and the trace. Marker comments delimit the machine-read
// blocks so results can be re-read by the eval harness.

namespace detail {

inline void write_block(std::ostream& out, std::string_view name, std::string_view body) {
  out << "<!-- magrag:" << name << " -->\n" << body;
  if (body.empty() || body.back() != '\n') out << '\n';
  out << "<!-- /magrag:" << name << " -->\n";
}

inline std::optional<std::string> read_block(std::string_view doc, std::string_view name) {
  auto open = "<!-- magrag:" + std::string(name) + " -->\n";
  auto close = "<!-- /magrag:" + std::string(name) + " -->";
  auto b = doc.find(open);
  if (b == std::string_view::npos) return std::nullopt;
  b += open.size();
  auto e = doc.find(close, b);
  if (e == std::string_view::npos) return std::nullopt;
  auto body = std::string(doc.substr(b, e - b));
  if (!body.empty() && body.back() == '\n') body.pop_back();
  return body;
}

}  // namespace detail

inline std::string render_result(const ModelingResult& r) {
  std::ostringstream out;
  out << "---\n"
      << "query_id: " << r.query_id << '\n'
      << "mode: " << mode_name(r.mode) << '\n'
      << "model: " << r.model << '\n'
      << "k: " << r.k << '\n'
      << "prompt_set_version: " << prompt_set_version << '\n'
      << "started: " << r.started << '\n'
      << "finished: " << r.finished << '\n'
      << "---\n\n";

  out << "# Query\n\n";
  detail::write_block(out, "query", r.query_text);
  if (!r.description.empty()) {
    out << "\n# Terminological Description\n\n";
    detail::write_block(out, "description", r.description);
  }
  out << "\n# Modeling Result\n\n";
  detail::write_block(out, "result", r.text);

  out << "\n# Knowledge\n\n";
  if (const auto* bundle = std::get_if<KnowledgeBundle>(&r.knowledge_used)) {
    out << "Retrieved " << bundle->chains.size() << " chain(s), " << bundle->total_characters
        << " characters.\n";
    for (const auto& n : bundle->notices) out << "> notice: " << n << '\n';
    out << '\n';
    detail::write_block(out, "knowledge", bundle->render());
  } else if (const auto* generated = std::get_if<std::string>(&r.knowledge_used)) {
    out << "Generated by the knowledge generation agent.\n\n";
    detail::write_block(out, "knowledge", *generated);
  } else {
    out << "None.\n";
  }

  out << "\n# Trace\n\n```text\n";
  for (const auto& t : r.trace)
    out << t.stage << '\t' << (t.prompt.empty() ? "-" : t.prompt) << '\t' << std::fixed
        << std::setprecision(3) << t.elapsed_ms << "ms\t" << t.completion_chars << '\n';
  out << "```\n";
  return out.str();
}

// Counts the retrieved chains in a rendered result.
inline std::size_t count_rendered_chains(std::string_view rendered) {
  std::size_t n = 0, pos = 0;
  while ((pos = rendered.find("<!-- chain doc_id=", pos)) != std::string_view::npos) {
    ++n;
    ++pos;
  }
  return n;
}

// Reads back the fields the eval harness needs: id, mode, model, query,
// description, modeling text and the trace stage names.
inline ModelingResult parse_result(std::string_view doc) {
  auto bad = [](const std::string& why) { return Error(ErrorCode::corrupt_file, "result file: " + why); };
  auto lines = text::split_lines(doc);
  if (lines.empty() || lines[0] != "---") throw bad("missing front matter");
  std::map<std::string, std::string> front;
  std::size_t i = 1;
  for (; i < lines.size() && lines[i] != "---"; ++i) {
    auto colon = lines[i].find(':');
    if (colon == std::string_view::npos) throw bad("bad front matter line");
    front[std::string(text::trim(lines[i].substr(0, colon)))] = std::string(text::trim(lines[i].substr(colon + 1)));
  }
  if (i == lines.size()) throw bad("unterminated front matter");

  ModelingResult r;
  r.query_id = front["query_id"];
  auto mode = parse_mode(front["mode"]);
  if (r.query_id.empty() || !mode) throw bad("front matter lacks query_id or mode");
  r.mode = *mode;
  r.model = front["model"];
  r.started = front["started"];
  r.finished = front["finished"];
  try {
    r.k = front["k"].empty() ? 0 : std::stoi(front["k"]);
  } catch (const std::exception&) {
    throw bad("bad k");
  }
  auto query = detail::read_block(doc, "query");
  auto result = detail::read_block(doc, "result");
  if (!query || !result) throw bad("missing query or result block");
  r.query_text = *query;
  r.text = *result;
  r.description = detail::read_block(doc, "description").value_or("");
  if (auto knowledge = detail::read_block(doc, "knowledge"); knowledge && r.mode == Mode::pure_ma)
    r.knowledge_used = *knowledge;

  auto trace_at = doc.find("# Trace\n\n```text\n");
  if (trace_at != std::string_view::npos) {
    auto body = doc.substr(trace_at + 17);
    body = body.substr(0, body.find("```"));
    for (auto line : text::split_lines(body)) {
      if (text::trim(line).empty()) continue;
      auto fields = text::split(line, '\t');
      TraceEntry t;
      t.stage = fields[0];
      if (fields.size() > 1 && fields[1] != "-") t.prompt = fields[1];
      r.trace.push_back(std::move(t));
    }
  }
  return r;
}

inline std::string sanitize_file_component(std::string_view s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out.empty() ? "query" : out;
}

// Writes a new result file and never overwrites an existing one.
inline std::filesystem::path write_result(const ModelingResult& r, const std::filesystem::path& results_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(results_dir);
  auto stamp = text::replace_all(text::replace_all(r.started.empty() ? utc_timestamp() : r.started, ":", ""), ".", "");
  auto stem = stamp + "_" + sanitize_file_component(r.query_id) + "_" + std::string(mode_name(r.mode));
  auto path = results_dir / (stem + ".md");
  for (int n = 1; fs::exists(path); ++n) path = results_dir / (stem + "-" + std::to_string(n) + ".md");
  std::ofstream out(path, std::ios::binary);
  out << render_result(r);
  out.flush();
  if (!out) throw Error(ErrorCode::unreadable_file, "failed writing " + path.string());
  return path;
}

}  // namespace magrag
