#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "magrag/cli.hpp"
#include "support.hpp"

using namespace magrag;
namespace fx = magrag::fixtures;
namespace fs = std::filesystem;

namespace {

const fs::path data_dir = MAGRAG_DATA_DIR;

// The shipped toy configuration with results redirected into dir.
Config toy_config(const fx::TempDir& dir) {
  auto cfg = load_config(data_dir / "toy.toml");
  cfg.results_dir = dir / "results";
  return cfg;
}

// A corpus with the first n toy documents.
fs::path toy_subset(const fx::TempDir& dir, std::size_t n) {
  auto out = dir / "corpus";
  fs::create_directories(out);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(data_dir / "toy_corpus")) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (std::size_t i = 0; i < n && i < files.size(); ++i) fs::copy_file(files[i], out / files[i].filename());
  return out;
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run build(const cli::BuildArgs& args, const Config& cfg) {
  std::ostringstream out, err;
  int code = cli::cmd_build(args, cfg, out, err);
  return {code, out.str(), err.str()};
}

Run query(const cli::QueryArgs& args, const Config& cfg) {
  std::ostringstream out, err;
  int code = cli::cmd_query(args, cfg, out, err);
  return {code, out.str(), err.str()};
}

Run inspect(const cli::InspectArgs& args) {
  std::ostringstream out, err;
  int code = cli::cmd_inspect(args, out, err);
  return {code, out.str(), err.str()};
}

Run eval(const cli::EvalArgs& args, const Config& cfg) {
  std::ostringstream out, err;
  int code = cli::cmd_eval(args, cfg, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST(Config, Defaults) {
  Config c;
  EXPECT_EQ(c.epsilon, 0.8);
  EXPECT_EQ(c.k, 3);
  EXPECT_EQ(c.knowledge_budget_chars, 24000u);
  EXPECT_EQ(c.max_document_chars, 60000u);
  EXPECT_FALSE(c.dd_same_layer_only);
  EXPECT_FALSE(c.dd_expansion);
  EXPECT_EQ(c.extraction_temperature, 0.0);
  EXPECT_EQ(c.terminology_temperature, 0.0);
  EXPECT_EQ(c.knowledge_temperature, 0.2);
  EXPECT_EQ(c.modeling_temperature, 0.2);
  EXPECT_EQ(c.judge_temperature, 0.0);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ParsesSectionsCommentsAndTypes) {
  auto kv = parse_config_text(
      "# comment\n[graph]\nepsilon = 0.65  # trailing\ndd_same_layer_only = true\n"
      "[chat]\nmodel = \"gpt-4o # not a comment\"\n");
  EXPECT_EQ(kv.at("graph.epsilon"), "0.65");
  EXPECT_EQ(kv.at("chat.model"), "gpt-4o # not a comment");
  Config c;
  apply_config(c, kv);
  EXPECT_EQ(c.epsilon, 0.65);
  EXPECT_TRUE(c.dd_same_layer_only);
  EXPECT_EQ(c.chat.remote.model_name, "gpt-4o # not a comment");
  EXPECT_EQ(c.effective_model_tag(), "scripted");
}

TEST(Config, EnvironmentExpansion) {
  setenv("MAGRAG_TEST_MODEL", "from-env", 1);
  auto kv = parse_config_text("[chat]\nmodel = \"${MAGRAG_TEST_MODEL}-x\"\n");
  EXPECT_EQ(kv.at("chat.model"), "from-env-x");
  EXPECT_THROW(parse_config_text("[chat]\nmodel = \"${UNCLOSED\"\n"), Error);
}

TEST(Config, LaterLayerWins) {
  Config c;
  apply_config(c, parse_config_text("[retrieval]\nk = 5\nknowledge_budget_chars = 100\n"));
  apply_config(c, {{"retrieval.k", "2"}});  // command-line override
  EXPECT_EQ(c.k, 2);
  EXPECT_EQ(c.knowledge_budget_chars, 100u);
}

TEST(Config, UnknownKeyAndBadValues) {
  Config c;
  EXPECT_THROW(apply_config(c, {{"graph.epsilom", "0.5"}}), Error);
  EXPECT_THROW(apply_config(c, {{"graph.epsilon", "high"}}), Error);
  EXPECT_THROW(apply_config(c, {{"retrieval.dd_expansion", "yes"}}), Error);
  EXPECT_THROW(parse_config_text("[graph\n"), Error);
  EXPECT_THROW(parse_config_text("just words\n"), Error);
  Config bad;
  bad.k = 0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Config, RelativePathsResolveAgainstConfigFile) {
  auto c = load_config(data_dir / "toy.toml");
  EXPECT_EQ(c.chat.script, data_dir / "toy_script.json");
  EXPECT_EQ(c.embedding.dimension, 16u);
  EXPECT_EQ(c.epsilon, 0.5);
}

TEST(Config, MissingFile) {
  try {
    load_config("/nonexistent/magrag.toml");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
  }
}

TEST(Prompts, ShippedAssetsEqualBuiltIns) {
  auto shipped = load_prompt_set(MAGRAG_PROMPT_DIR);
  auto builtin = default_prompt_set();
  for (auto name : agent_names) {
    EXPECT_EQ(shipped.get(name).system, builtin.get(name).system) << name;
    EXPECT_EQ(shipped.get(name).user_template, builtin.get(name).user_template) << name;
  }
}

TEST(Prompts, OverlayReplacesOnlyPresentFiles) {
  fx::TempDir dir;
  fx::write_file(dir / prompt_file_name("judge", false), "custom judge");
  auto p = load_prompt_set(dir.path());
  EXPECT_EQ(p.judge.system, "custom judge");
  EXPECT_EQ(p.modeling.system, default_prompt_set().modeling.system);
}

TEST(Cli, BuildThreeDocuments) {
  fx::TempDir dir;
  auto cfg = toy_config(dir);
  auto r = build({toy_subset(dir, 3), dir / "g.jsonl", false}, cfg);
  ASSERT_EQ(r.code, cli::exit_ok) << r.err;
  auto g = load_graph(dir / "g.jsonl");
  EXPECT_EQ(g.nodes().size(), 12u);
  auto s = graph_stats(g);
  EXPECT_EQ(s.sd_edges, 9u);
  EXPECT_EQ(g.epsilon(), 0.5);
  EXPECT_NE(r.out.find("SD: 9"), std::string::npos);
}

TEST(Cli, BuildMissingCorpusIsUsageError) {
  fx::TempDir dir;
  auto r = build({dir / "absent", dir / "g.jsonl", false}, toy_config(dir));
  EXPECT_EQ(r.code, cli::exit_usage);
  EXPECT_NE(r.err.find("error[E_USAGE]"), std::string::npos);
  EXPECT_NE(r.err.find("magrag build --corpus"), std::string::npos);
}

TEST(Cli, BuildRefusesToOverwriteWithoutForce) {
  fx::TempDir dir;
  auto cfg = toy_config(dir);
  auto corpus = toy_subset(dir, 2);
  fx::write_file(dir / "g.jsonl", "precious");
  auto r = build({corpus, dir / "g.jsonl", false}, cfg);
  EXPECT_EQ(r.code, cli::exit_failure);
  EXPECT_NE(r.err.find("E_OUTPUT_EXISTS"), std::string::npos);
  EXPECT_EQ(fx::read_file(dir / "g.jsonl"), "precious");
  EXPECT_EQ(build({corpus, dir / "g.jsonl", true}, cfg).code, cli::exit_ok);
  EXPECT_EQ(load_graph(dir / "g.jsonl").nodes().size(), 8u);
}

TEST(Cli, QueryPureLlmWritesOneStageTrace) {
  fx::TempDir dir;
  auto cfg = toy_config(dir);
  cli::QueryArgs a;
  a.question = "How do I estimate DOA?";
  a.mode = Mode::pure_llm;
  auto r = query(a, cfg);
  ASSERT_EQ(r.code, cli::exit_ok) << r.err;
  auto path = std::string(text::trim(r.out));
  auto result = parse_result(fx::read_file(path));
  EXPECT_EQ(result.trace.size(), 1u);
  EXPECT_EQ(result.mode, Mode::pure_llm);
  EXPECT_EQ(result.query_id, cli::default_query_id(a.question));
}

TEST(Cli, QueryMagRagHonoursK) {
  fx::TempDir dir;
  auto cfg = toy_config(dir);
  ASSERT_EQ(build({toy_subset(dir, 5), dir / "g.jsonl", false}, cfg).code, cli::exit_ok);
  apply_config(cfg, {{"retrieval.k", "2"}});
  cli::QueryArgs a;
  a.graph_path = dir / "g.jsonl";
  a.question = "Estimate the directions of two sources.";
  a.query_id = "doa-1";
  auto r = query(a, cfg);
  ASSERT_EQ(r.code, cli::exit_ok) << r.err;
  auto doc = fx::read_file(std::string(text::trim(r.out)));
  EXPECT_LE(count_rendered_chains(doc), 2u);
  EXPECT_GE(count_rendered_chains(doc), 1u);
  auto result = parse_result(doc);
  EXPECT_EQ(result.k, 2);
  EXPECT_EQ(result.trace.size(), 3u);
}

TEST(Cli, QueryMagRagWithoutGraphPointsAtBuild) {
  fx::TempDir dir;
  cli::QueryArgs a;
  a.graph_path = dir / "missing.jsonl";
  a.question = "q";
  auto r = query(a, toy_config(dir));
  EXPECT_EQ(r.code, cli::exit_failure);
  EXPECT_NE(r.err.find("E_MISSING_GRAPH"), std::string::npos);
  EXPECT_NE(r.err.find("magrag build"), std::string::npos);
}

TEST(Cli, QueryFromFileAndEmptyQuestion) {
  fx::TempDir dir;
  auto cfg = toy_config(dir);
  fx::write_file(dir / "q.txt", "  What is a beampattern?\n");
  cli::QueryArgs a;
  a.question_file = dir / "q.txt";
  a.mode = Mode::pure_ma;
  a.query_id = "bp";
  auto r = query(a, cfg);
  ASSERT_EQ(r.code, cli::exit_ok) << r.err;
  EXPECT_EQ(parse_result(fx::read_file(std::string(text::trim(r.out)))).query_text, "What is a beampattern?");

  cli::QueryArgs empty;
  empty.mode = Mode::pure_llm;
  EXPECT_EQ(query(empty, cfg).code, cli::exit_usage);
}

TEST(Cli, Inspect) {
  fx::TempDir dir;
  ASSERT_EQ(build({toy_subset(dir, 2), dir / "g.jsonl", false}, toy_config(dir)).code, cli::exit_ok);
  auto stats = inspect({dir / "g.jsonl", true, "", ""});
  EXPECT_EQ(stats.code, cli::exit_ok);
  EXPECT_NE(stats.out.find("documents: 2"), std::string::npos);

  auto g = load_graph(dir / "g.jsonl");
  auto doc = g.doc_ids().front();
  auto chain = inspect({dir / "g.jsonl", false, "", doc});
  EXPECT_EQ(chain.code, cli::exit_ok);
  EXPECT_LT(chain.out.find("### PT:"), chain.out.find("### OA:"));

  auto node = inspect({dir / "g.jsonl", false, doc + "#SM", ""});
  EXPECT_EQ(node.code, cli::exit_ok);
  EXPECT_NE(node.out.find("layer: SM"), std::string::npos);

  auto missing = inspect({dir / "g.jsonl", false, "nope#PT", ""});
  EXPECT_EQ(missing.code, cli::exit_failure);
  EXPECT_NE(missing.err.find("E_UNKNOWN_NODE"), std::string::npos);
}

TEST(Cli, EvalImportedScores) {
  fx::TempDir dir;
  cli::EvalArgs a;
  a.scores_csv = data_dir / "table1_scores.csv";
  a.report_path = dir / "report.md";
  auto r = eval(a, toy_config(dir));
  ASSERT_EQ(r.code, cli::exit_ok) << r.err;
  auto report = fx::read_file(dir / "report.md");
  EXPECT_NE(report.find("8 of 10"), std::string::npos);
}

TEST(Cli, EvalWithNothingToDoFails) {
  fx::TempDir dir;
  cli::EvalArgs a;
  a.results_dir = dir / "empty";
  a.report_path = dir / "report.md";
  auto r = eval(a, toy_config(dir));
  EXPECT_NE(r.code, cli::exit_ok);
  EXPECT_FALSE(fs::exists(dir / "report.md"));
}

TEST(Cli, EvalJudgesResultFiles) {
  fx::TempDir dir;
  auto cfg = toy_config(dir);
  for (auto mode : {Mode::pure_llm, Mode::pure_ma}) {
    cli::QueryArgs a;
    a.question = "Place sensors for best coverage.";
    a.query_id = "place";
    a.mode = mode;
    ASSERT_EQ(query(a, cfg).code, cli::exit_ok);
  }
  cli::EvalArgs e;
  e.results_dir = cfg.results_dir;
  e.report_path = dir / "report.md";
  auto r = eval(e, cfg);
  ASSERT_EQ(r.code, cli::exit_ok) << r.err;
  EXPECT_NE(r.out.find("judged 2 result(s)"), std::string::npos);
  auto report = fx::read_file(dir / "report.md");
  EXPECT_NE(report.find("| place | scriptedD | 24 | 16 | 25 | 9 | 8 | 82 |"), std::string::npos) << report;
  EXPECT_NE(report.find("| place | scriptedT |"), std::string::npos);
}

TEST(Cli, OfflineRunsMakeNoNetworkRequests) {
  auto before = remote_request_count();
  fx::TempDir dir;
  auto cfg = toy_config(dir);
  ASSERT_EQ(build({toy_subset(dir, 5), dir / "g.jsonl", false}, cfg).code, cli::exit_ok);
  cli::QueryArgs a;
  a.graph_path = dir / "g.jsonl";
  a.question = "Locate a source from time differences.";
  ASSERT_EQ(query(a, cfg).code, cli::exit_ok);
  cli::EvalArgs e;
  e.results_dir = cfg.results_dir;
  e.report_path = dir / "report.md";
  ASSERT_EQ(eval(e, cfg).code, cli::exit_ok);
  EXPECT_EQ(remote_request_count(), before);
}

TEST(Cli, ErrorCodesAreStable) {
  EXPECT_EQ(error_code_name(ErrorCode::missing_graph), "E_MISSING_GRAPH");
  EXPECT_EQ(error_code_name(ErrorCode::output_exists), "E_OUTPUT_EXISTS");
  EXPECT_EQ(error_code_name(ErrorCode::usage), "E_USAGE");
}
