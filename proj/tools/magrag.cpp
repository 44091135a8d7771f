#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "magrag/cli.hpp"

namespace {

constexpr const char* default_config_path = "magrag.toml";

struct Overrides {
  std::optional<double> epsilon;
  std::optional<int> k;
  std::optional<std::size_t> budget;
  std::optional<std::string> results_dir;
  std::optional<std::string> prompts;
  bool dd_same_layer_only = false;

  magrag::KeyValues key_values() const {
    magrag::KeyValues kv;
    if (epsilon) {
      std::ostringstream s;
      s << std::setprecision(17) << *epsilon;
      kv["graph.epsilon"] = s.str();
    }
    if (k) kv["retrieval.k"] = std::to_string(*k);
    if (budget) kv["retrieval.knowledge_budget_chars"] = std::to_string(*budget);
    if (results_dir) kv["paths.results"] = *results_dir;
    if (prompts) kv["paths.prompts"] = *prompts;
    if (dd_same_layer_only) kv["graph.dd_same_layer_only"] = "true";
    return kv;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"magrag: layered knowledge graph retrieval for optimization modeling"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides overrides;
  app.add_option("--config", config_path, "Config file (default: ./magrag.toml if present)");

  magrag::cli::BuildArgs build;
  auto* build_cmd = app.add_subcommand("build", "Extract knowledge from a corpus and build the graph");
  build_cmd->add_option("--corpus", build.corpus_dir, "Directory of .md/.txt documents")->required();
  build_cmd->add_option("--out", build.out_path, "Graph file to write")->required();
  build_cmd->add_flag("--force", build.force, "Overwrite an existing graph file");
  build_cmd->add_option("--epsilon", overrides.epsilon, "DD edge similarity threshold (strict)");
  build_cmd->add_flag("--dd-same-layer-only", overrides.dd_same_layer_only, "Only link DD edges within a layer");
  build_cmd->add_option("--prompts", overrides.prompts, "Prompt asset directory");

  magrag::cli::QueryArgs query;
  std::string mode = "mag-rag";
  auto* query_cmd = app.add_subcommand("query", "Run one modeling query");
  query_cmd->add_option("--graph", query.graph_path, "Graph file (required for mag-rag)");
  auto* question_opt = query_cmd->add_option("--question", query.question, "Question text");
  auto* question_file_opt = query_cmd->add_option("--question-file", query.question_file, "File holding the question");
  question_opt->excludes(question_file_opt);
  query_cmd->add_option("--query-id", query.query_id, "Identifier recorded with the result");
  query_cmd->add_option("--mode", mode, "mag-rag | pure-ma | pure-llm")
      ->check(CLI::IsMember({"mag-rag", "pure-ma", "pure-llm"}));
  query_cmd->add_option("--k", overrides.k, "Number of PT nodes to retrieve (default 3)");
  query_cmd->add_option("--budget", overrides.budget, "Knowledge budget in characters");
  query_cmd->add_option("--results-dir", overrides.results_dir, "Directory for result files");
  query_cmd->add_option("--prompts", overrides.prompts, "Prompt asset directory");

  magrag::cli::InspectArgs inspect;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print graph statistics, a node or a document chain");
  inspect_cmd->add_option("--graph", inspect.graph_path, "Graph file")->required();
  inspect_cmd->add_flag("--stats", inspect.stats, "Print statistics (default)");
  inspect_cmd->add_option("--node", inspect.node, "Print one node by id, e.g. doc#PT");
  inspect_cmd->add_option("--doc", inspect.doc, "Print a document's PT-SM-OF-OA chain");

  magrag::cli::EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Judge results and/or import scores, then write a report");
  eval_cmd->add_option("--results", eval.results_dir, "Directory of result files to judge");
  eval_cmd->add_option("--scores", eval.scores_csv, "Score CSV (method,Q1..Qn)");
  eval_cmd->add_option("--out", eval.report_path, "Report file")->capture_default_str();
  eval_cmd->add_option("--prompts", overrides.prompts, "Prompt asset directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    if (code != 0) std::cerr << "error[E_USAGE] " << e.what() << '\n';
    return code == 0 ? 0 : magrag::cli::exit_usage;
  }

  magrag::Config cfg;
  try {
    if (!config_path.empty()) {
      cfg = magrag::load_config(config_path);
    } else if (std::filesystem::exists(default_config_path)) {
      cfg = magrag::load_config(default_config_path);
    }
    magrag::apply_config(cfg, overrides.key_values());
  } catch (const magrag::Error& e) {
    return magrag::cli::report_error(std::cerr, e);
  }

  if (*build_cmd) return magrag::cli::cmd_build(build, cfg, std::cout, std::cerr);
  if (*query_cmd) {
    query.mode = *magrag::parse_mode(mode);
    return magrag::cli::cmd_query(query, cfg, std::cout, std::cerr);
  }
  if (*inspect_cmd) return magrag::cli::cmd_inspect(inspect, std::cout, std::cerr);
  if (*eval_cmd) return magrag::cli::cmd_eval(eval, cfg, std::cout, std::cerr);
  return magrag::cli::exit_usage;
}
