#pragma once

// The build / query / inspect / eval workflows behind the magrag command.
// Each command returns its exit status and reports failures as a single
// "error[E_CODE] ..." line on the error stream.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "magrag/config.hpp"
#include "magrag/corpus.hpp"
#include "magrag/error.hpp"
#include "magrag/eval.hpp"
#include "magrag/graph.hpp"
#include "magrag/pipeline.hpp"
#include "magrag/prompts.hpp"
#include "magrag/providers.hpp"
#include "magrag/retrieval.hpp"

namespace magrag::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_failure = 1;
inline constexpr int exit_usage = 2;

inline int report_error(std::ostream& err, const Error& e, std::string_view context = {}) {
  err << "error[" << e.code_name() << "] ";
  if (!context.empty()) err << context << ": ";
  err << e.what() << '\n';
  return e.code() == ErrorCode::usage ? exit_usage : exit_failure;
}

inline std::unique_ptr<ChatProvider> make_chat_provider(const Config& cfg) {
  if (cfg.chat.provider == "openai") return std::make_unique<OpenAiChatProvider>(cfg.chat.remote);
  if (cfg.chat.provider == "scripted") {
    if (cfg.chat.script.empty()) throw Error(ErrorCode::config, "scripted chat provider needs chat.script");
    std::ifstream in(cfg.chat.script, std::ios::binary);
    if (!in) throw Error(ErrorCode::config, "cannot read chat script " + cfg.chat.script.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::config, "chat script " + cfg.chat.script.string() + " is not valid JSON: " + e.what());
    }
    auto fake = std::make_unique<ScriptedChatProvider>(std::map<std::string, std::string>{}, cfg.chat.remote.max_retries);
    for (const auto& [key, value] : j.items()) {
      if (!value.is_string()) throw Error(ErrorCode::config, "chat script entry '" + key + "' is not a string");
      fake->set(key, value.get<std::string>());
    }
    return fake;
  }
  throw Error(ErrorCode::config, "unknown chat provider '" + cfg.chat.provider + "'");
}

inline std::unique_ptr<EmbeddingProvider> make_embedding_provider(const Config& cfg) {
  if (cfg.embedding.provider == "openai")
    return std::make_unique<OpenAiEmbeddingProvider>(cfg.embedding.remote, cfg.embedding.dimension);
  if (cfg.embedding.provider == "hash") return std::make_unique<HashEmbeddingProvider>(cfg.embedding.dimension);
  throw Error(ErrorCode::config, "unknown embedding provider '" + cfg.embedding.provider + "'");
}

inline AgentSettings agent_settings(const Config& cfg) {
  AgentSettings s;
  s.terminology_temperature = cfg.terminology_temperature;
  s.knowledge_temperature = cfg.knowledge_temperature;
  s.modeling_temperature = cfg.modeling_temperature;
  s.model_tag = cfg.effective_model_tag();
  return s;
}

// ---------------------------------------------------------------------------

struct BuildArgs {
  std::filesystem::path corpus_dir;
  std::filesystem::path out_path;
  bool force = false;
};

inline int cmd_build(const BuildArgs& args, const Config& cfg, std::ostream& out, std::ostream& err) {
  std::string stage = "config";
  try {
    cfg.validate();
    if (args.corpus_dir.empty() || !std::filesystem::is_directory(args.corpus_dir))
      throw Error(ErrorCode::usage, "corpus directory '" + args.corpus_dir.string() +
                                        "' not found (usage: magrag build --corpus DIR --out FILE)");
    if (args.out_path.empty()) throw Error(ErrorCode::usage, "missing --out FILE");
    if (std::filesystem::exists(args.out_path) && !args.force)
      throw Error(ErrorCode::output_exists, "'" + args.out_path.string() + "' exists; pass --force to overwrite");

    auto prompts = load_prompt_set(cfg.prompt_dir);
    auto chat = make_chat_provider(cfg);
    auto embed = make_embedding_provider(cfg);

    stage = "load_corpus";
    auto docs = load_corpus(args.corpus_dir, cfg.max_document_chars);
    for (const auto& d : docs)
      if (d.truncated) out << "note: " << d.doc_id << " truncated to " << cfg.max_document_chars << " characters\n";

    ExtractionOptions extraction;
    extraction.temperature = cfg.extraction_temperature;
    std::vector<ExtractedKnowledge> extracted;
    for (const auto& d : docs) {
      stage = "extraction of '" + d.doc_id + "'";
      extracted.push_back(extract_knowledge(d, *chat, prompts, extraction));
    }

    stage = "build_graph";
    auto graph = build_graph(extracted, *embed, {cfg.epsilon, cfg.dd_same_layer_only});

    stage = "save_graph";
    save_graph(graph, args.out_path);
    out << "wrote " << args.out_path.string() << '\n';
    print_stats(graph_stats(graph), out);
    return exit_ok;
  } catch (const Error& e) {
    return report_error(err, e, stage);
  }
}

// ---------------------------------------------------------------------------

struct QueryArgs {
  std::filesystem::path graph_path;
  std::string question;
  std::filesystem::path question_file;
  std::string query_id;
  Mode mode = Mode::mag_rag;
};

inline std::string default_query_id(std::string_view question) {
  std::ostringstream s;
  s << "q-" << std::hex << std::setw(8) << std::setfill('0') << (text::fnv1a64(question) & 0xffffffffULL);
  return s.str();
}

inline int cmd_query(const QueryArgs& args, const Config& cfg, std::ostream& out, std::ostream& err) {
  try {
    cfg.validate();
    UserQuery query;
    if (!args.question_file.empty()) {
      std::ifstream in(args.question_file, std::ios::binary);
      if (!in) throw Error(ErrorCode::usage, "cannot read question file " + args.question_file.string());
      std::ostringstream buf;
      buf << in.rdbuf();
      query.text = std::string(text::trim(buf.str()));
    } else {
      query.text = std::string(text::trim(args.question));
    }
    if (query.text.empty()) throw Error(ErrorCode::usage, "question is empty (use --question or --question-file)");
    query.query_id = args.query_id.empty() ? default_query_id(query.text) : args.query_id;

    std::optional<KnowledgeGraph> graph;
    if (args.mode == Mode::mag_rag) {
      if (args.graph_path.empty() || !std::filesystem::exists(args.graph_path))
        throw Error(ErrorCode::missing_graph, "graph file '" + args.graph_path.string() +
                                                  "' not found; run 'magrag build' first");
      graph.emplace(load_graph(args.graph_path));
    }

    auto chat = make_chat_provider(cfg);
    std::unique_ptr<EmbeddingProvider> embed;
    if (args.mode == Mode::mag_rag) embed = make_embedding_provider(cfg);
    Pipeline pipeline(*chat, embed.get(), load_prompt_set(cfg.prompt_dir), agent_settings(cfg));

    ModelingResult result;
    switch (args.mode) {
      case Mode::mag_rag:
        result = pipeline.run_mag_rag(query, *graph, {cfg.k, cfg.knowledge_budget_chars, cfg.dd_expansion});
        break;
      case Mode::pure_ma: result = pipeline.run_pure_ma(query); break;
      case Mode::pure_llm: result = pipeline.run_pure_llm(query); break;
    }
    auto path = write_result(result, cfg.results_dir);
    out << path.string() << '\n';
    return exit_ok;
  } catch (const StageError& e) {
    err << "error[" << e.code_name() << "] stage " << e.stage() << ": " << e.what() << '\n';
    return exit_failure;
  } catch (const Error& e) {
    return report_error(err, e);
  }
}

// ---------------------------------------------------------------------------

struct InspectArgs {
  std::filesystem::path graph_path;
  bool stats = false;
  std::string node;
  std::string doc;
};

inline int cmd_inspect(const InspectArgs& args, std::ostream& out, std::ostream& err) {
  try {
    auto graph = load_graph(args.graph_path);
    if (!args.node.empty()) {
      const auto& n = graph.node(args.node);
      out << "node: " << n.node_id << "\ndoc: " << n.doc_id << "\nlayer: " << layer_code(n.layer)
          << "\nkeywords: " << n.keywords << "\n\n" << n.content << '\n';
      for (const auto* e : graph.incident_edges(n.node_id))
        out << edge_kind_code(e->kind) << ' ' << e->endpoint_a << " -- " << e->endpoint_b << ' '
            << format_score(e->weight) << '\n';
    } else if (!args.doc.empty()) {
      auto pt = make_node_id(args.doc, Layer::pt);
      if (!graph.find_node(pt)) throw Error(ErrorCode::unknown_node, "unknown document '" + args.doc + "'");
      auto chain = walk_sd_chain(graph, pt);
      for (std::size_t i = 0; i < chain.size(); ++i)
        out << "### " << layer_code(all_layers[i]) << ": " << layer_title(all_layers[i]) << '\n' << chain[i] << "\n\n";
    } else {
      print_stats(graph_stats(graph), out);
    }
    return exit_ok;
  } catch (const Error& e) {
    return report_error(err, e);
  }
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::filesystem::path results_dir;
  std::filesystem::path scores_csv;
  std::filesystem::path report_path = "magrag-report.md";
};

inline std::vector<std::filesystem::path> result_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (dir.empty() || !std::filesystem::is_directory(dir)) return files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".md") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

inline int cmd_eval(const EvalArgs& args, const Config& cfg, std::ostream& out, std::ostream& err) {
  try {
    cfg.validate();
    auto files = result_files(args.results_dir);
    if (files.empty() && args.scores_csv.empty())
      throw Error(ErrorCode::usage, "nothing to evaluate: no result files and no --scores CSV");

    std::optional<ScoreTable> imported;
    if (!args.scores_csv.empty()) imported = import_scores(args.scores_csv);

    std::vector<ScoreCard> cards;
    if (!files.empty()) {
      auto chat = make_chat_provider(cfg);
      auto prompts = load_prompt_set(cfg.prompt_dir);
      Rubric rubric;
      for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        ModelingResult r;
        try {
          r = parse_result(buf.str());
        } catch (const Error& e) {
          throw Error(e.code(), f.string() + ": " + e.what());
        }
        cards.push_back(judge(r, rubric, *chat, prompts, cfg.judge_temperature));
      }
    }

    auto report = render_report(imported, cards);
    if (args.report_path.has_parent_path()) std::filesystem::create_directories(args.report_path.parent_path());
    std::ofstream rep(args.report_path, std::ios::binary);
    rep << report;
    rep.flush();
    if (!rep) throw Error(ErrorCode::unreadable_file, "failed writing " + args.report_path.string());
    out << "judged " << cards.size() << " result(s)";
    if (imported) out << ", imported " << imported->methods.size() << "x" << imported->questions.size() << " scores";
    out << "\nwrote " << args.report_path.string() << '\n';
    return exit_ok;
  } catch (const Error& e) {
    return report_error(err, e);
  }
}

}  // namespace magrag::cli
