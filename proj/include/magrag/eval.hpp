#pragma once

// Rubric scoring and the method-comparison statistics.
//
// Scores come either from an LLM judge (five "metric: value" lines) or from an
// imported CSV of totals. Method labels follow the "<base model><mode>"
// convention, where the mode suffix is D (pure LLM), G (MAG-RAG) or
// T (pure MA).

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "magrag/error.hpp"
#include "magrag/pipeline.hpp"
#include "magrag/prompts.hpp"
#include "magrag/providers.hpp"
#include "magrag/text.hpp"

namespace magrag {

enum class Metric { completeness, standardization, correctness, relevance, readability };

inline constexpr std::array<Metric, 5> all_metrics{Metric::completeness, Metric::standardization,
                                                   Metric::correctness, Metric::relevance, Metric::readability};

constexpr std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::completeness: return "completeness";
    case Metric::standardization: return "standardization";
    case Metric::correctness: return "correctness";
    case Metric::relevance: return "relevance";
    case Metric::readability: return "readability";
  }
  return "";
}

constexpr std::size_t metric_index(Metric m) { return static_cast<std::size_t>(m); }

struct Rubric {
  std::array<double, 5> weights{30, 20, 30, 10, 10};

  double weight(Metric m) const { return weights[metric_index(m)]; }
  double total_weight() const {
    double s = 0;
    for (double w : weights) s += w;
    return s;
  }
  void validate() const {
    for (double w : weights) require(w > 0, "rubric weights must be positive");
    require(total_weight() == 100.0, "rubric weights must sum to 100");
  }
};

enum class ScoreSource { judge, imported };

struct ScoreCard {
  std::string query_id;
  std::string method_label;
  std::array<double, 5> per_metric{};
  double total = 0.0;
  ScoreSource source = ScoreSource::judge;
  std::vector<std::string> warnings;

  double metric(Metric m) const { return per_metric[metric_index(m)]; }
};

inline double sum_metrics(const std::array<double, 5>& v) {
  double total = 0.0;
  for (double x : v) total += x;
  return total;
}

// Clamps each raw score to [0, weight] and records a warning per clamp.
inline ScoreCard make_score_card(std::string query_id, std::string method_label,
                                 const std::array<double, 5>& raw, const Rubric& rubric,
                                 ScoreSource source = ScoreSource::judge) {
  ScoreCard card;
  card.query_id = std::move(query_id);
  card.method_label = std::move(method_label);
  card.source = source;
  for (auto m : all_metrics) {
    auto i = metric_index(m);
    double w = rubric.weight(m);
    double v = raw[i];
    if (!std::isfinite(v)) {
      card.warnings.push_back(std::string(metric_name(m)) + " score is not finite; set to 0");
      v = 0.0;
    } else if (v > w) {
      std::ostringstream msg;
      msg << metric_name(m) << " score " << v << " exceeds weight " << w << "; clamped";
      card.warnings.push_back(msg.str());
      v = w;
    } else if (v < 0.0) {
      std::ostringstream msg;
      msg << metric_name(m) << " score " << v << " is negative; clamped to 0";
      card.warnings.push_back(msg.str());
      v = 0.0;
    }
    card.per_metric[i] = v;
  }
  card.total = sum_metrics(card.per_metric);
  return card;
}

// Reads the five "metric: value" lines. Throws MalformedJudgment naming the
// metrics that are absent.
inline std::array<double, 5> parse_judgment(std::string_view reply) {
  static const std::regex line_re(R"(^\s*[*_`#-]*\s*([A-Za-z]+)\s*[*_`]*\s*[:=]\s*[*_`]*\s*(-?[0-9]+(?:\.[0-9]+)?))");
  std::array<std::optional<double>, 5> found;
  for (auto line : text::split_lines(reply)) {
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(line.begin(), line.end(), m, line_re)) continue;
    auto key = text::to_lower(m[1].str());
    for (auto metric : all_metrics)
      if (key == metric_name(metric) && !found[metric_index(metric)])
        found[metric_index(metric)] = std::stod(m[2].str());
  }
  std::array<double, 5> out{};
  std::vector<std::string> missing;
  for (auto metric : all_metrics) {
    if (found[metric_index(metric)]) out[metric_index(metric)] = *found[metric_index(metric)];
    else missing.emplace_back(metric_name(metric));
  }
  if (!missing.empty())
    throw Error(ErrorCode::malformed_judgment, "judgment is missing: " + text::join(missing, ", "),
                std::string(reply));
  return out;
}

inline std::string method_label(const ModelingResult& r) { return r.model + mode_suffix(r.mode); }

inline ScoreCard judge(const ModelingResult& result, const Rubric& rubric, ChatProvider& chat,
                       const PromptSet& prompts, double temperature = 0.0) {
  require(!text::trim(result.text).empty(), "modeling result text is empty");
  rubric.validate();
  ChatRequest request;
  request.agent = std::string(agent::judge);
  request.system_prompt = prompts.judge.system;
  request.user_content =
      fill_template(prompts.judge.user_template, {{"query", result.query_text}, {"result", result.text}});
  request.temperature = temperature;
  request.max_output = 256;

  for (int attempt = 0;; ++attempt) {
    auto reply = chat.chat(request);
    try {
      return make_score_card(result.query_id, method_label(result), parse_judgment(reply), rubric);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::malformed_judgment || attempt >= 1) throw;
      request.user_content += "\nReply with exactly five lines of the form 'metric: integer'.\n";
    }
  }
}

// ---------------------------------------------------------------------------
// Score tables

struct ScoreTable {
  std::vector<std::string> methods;    // rows
  std::vector<std::string> questions;  // columns
  std::vector<std::vector<double>> cells;

  std::size_t row(std::string_view method) const {
    for (std::size_t i = 0; i < methods.size(); ++i)
      if (methods[i] == method) return i;
    throw Error(ErrorCode::precondition, "no method row '" + std::string(method) + "'");
  }
  std::size_t column(std::string_view question) const {
    for (std::size_t j = 0; j < questions.size(); ++j)
      if (questions[j] == question) return j;
    throw Error(ErrorCode::precondition, "no question column '" + std::string(question) + "'");
  }
  double at(std::string_view method, std::string_view question) const {
    return cells[row(method)][column(question)];
  }

  friend bool operator==(const ScoreTable&, const ScoreTable&) = default;
};

inline ScoreTable parse_scores(std::string_view csv) {
  ScoreTable table;
  std::size_t line_no = 0;
  bool header_seen = false;
  for (auto raw : text::split_lines(csv)) {
    ++line_no;
    if (text::trim(raw).empty()) continue;
    auto fields = text::split(raw, ',');
    for (auto& f : fields) f = std::string(text::trim(f));
    if (!header_seen) {
      header_seen = true;
      if (fields.size() < 2 || !text::iequals(fields[0], "method"))
        throw Error(ErrorCode::ragged_table, "score CSV header must be 'method,Q1,...'", {}, line_no);
      table.questions.assign(fields.begin() + 1, fields.end());
      std::set<std::string> uniq(table.questions.begin(), table.questions.end());
      if (uniq.size() != table.questions.size())
        throw Error(ErrorCode::ragged_table, "duplicate question column in score CSV", {}, line_no);
      continue;
    }
    const auto& method = fields[0];
    if (method.empty()) throw Error(ErrorCode::ragged_table, "score CSV row without a method label", {}, line_no);
    if (fields.size() != table.questions.size() + 1)
      throw Error(ErrorCode::ragged_table,
                  "row '" + method + "' has " + std::to_string(fields.size() - 1) + " cells, expected " +
                      std::to_string(table.questions.size()),
                  {}, line_no);
    if (std::find(table.methods.begin(), table.methods.end(), method) != table.methods.end())
      throw Error(ErrorCode::ragged_table, "duplicate method row '" + method + "'", {}, line_no);
    std::vector<double> row;
    for (std::size_t j = 1; j < fields.size(); ++j) {
      const auto& cell = fields[j];
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (cell.empty() || used != cell.size() || !std::isfinite(v))
        throw Error(ErrorCode::non_numeric_cell,
                    "non-numeric cell '" + cell + "' at row '" + method + "', column '" +
                        table.questions[j - 1] + "'",
                    {}, line_no);
      row.push_back(v);
    }
    table.methods.push_back(method);
    table.cells.push_back(std::move(row));
  }
  if (!header_seen) throw Error(ErrorCode::ragged_table, "score CSV is empty");
  return table;
}

inline ScoreTable import_scores(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::unreadable_file, "cannot open score CSV " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scores(buf.str());
}

inline std::string export_scores(const ScoreTable& table) {
  std::ostringstream out;
  out << std::setprecision(17) << "method";
  for (const auto& q : table.questions) out << ',' << q;
  out << '\n';
  for (std::size_t i = 0; i < table.methods.size(); ++i) {
    out << table.methods[i];
    for (double v : table.cells[i]) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

// Builds a table from judged cards. Missing (method, question) pairs make
// the table non-rectangular, reported as RaggedTable.
inline ScoreTable table_from_cards(const std::vector<ScoreCard>& cards) {
  std::map<std::string, std::map<std::string, double>> by_method;
  std::set<std::string> questions;
  for (const auto& c : cards) {
    if (!by_method[c.method_label].emplace(c.query_id, c.total).second)
      throw Error(ErrorCode::ragged_table, "two scores for (" + c.method_label + ", " + c.query_id + ")");
    questions.insert(c.query_id);
  }
  ScoreTable t;
  t.questions.assign(questions.begin(), questions.end());
  for (const auto& [method, row] : by_method) {
    if (row.size() != questions.size())
      throw Error(ErrorCode::ragged_table, "method '" + method + "' was not scored on every query");
    t.methods.push_back(method);
    std::vector<double> cells;
    for (const auto& q : t.questions) cells.push_back(row.at(q));
    t.cells.push_back(std::move(cells));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Statistics

struct QuestionWinners {
  std::string question;
  double best = 0.0;
  std::set<std::string> winners;
};

// Per column, every row attaining the maximum. Columns keep table order.
inline std::vector<QuestionWinners> winners_per_question(const ScoreTable& table) {
  require(!table.methods.empty() && !table.questions.empty(), "score table is empty");
  std::vector<QuestionWinners> out;
  for (std::size_t j = 0; j < table.questions.size(); ++j) {
    QuestionWinners w;
    w.question = table.questions[j];
    w.best = table.cells[0][j];
    for (std::size_t i = 1; i < table.methods.size(); ++i) w.best = std::max(w.best, table.cells[i][j]);
    for (std::size_t i = 0; i < table.methods.size(); ++i)
      if (table.cells[i][j] == w.best) w.winners.insert(table.methods[i]);
    out.push_back(std::move(w));
  }
  return out;
}

struct MethodGroup {
  std::string base_model;
  Mode mode = Mode::pure_llm;
};

using Grouping = std::map<std::string, MethodGroup>;

// Splits labels of the form <base><D|G|T>. Labels without a known suffix are
// left out.
inline Grouping grouping_from_labels(const std::vector<std::string>& labels) {
  Grouping g;
  for (const auto& label : labels) {
    if (label.size() < 2) continue;
    if (auto mode = mode_from_suffix(label.back())) g[label] = {label.substr(0, label.size() - 1), *mode};
  }
  return g;
}

// Number of questions on which at least one winner has the given mode.
inline std::size_t questions_won_by_mode(const std::vector<QuestionWinners>& winners, const Grouping& grouping,
                                         Mode mode) {
  std::size_t n = 0;
  for (const auto& w : winners)
    if (std::any_of(w.winners.begin(), w.winners.end(), [&](const std::string& label) {
          auto it = grouping.find(label);
          return it != grouping.end() && it->second.mode == mode;
        }))
      ++n;
  return n;
}

struct GainCounts {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t zero = 0;

  void add(double diff) {
    if (diff > 0) ++positive;
    else if (diff < 0) ++negative;
    else ++zero;
  }
  std::size_t total() const { return positive + negative + zero; }
  friend bool operator==(const GainCounts&, const GainCounts&) = default;
};

struct GainSummary {
  std::map<std::string, GainCounts> rag_vs_direct;  // G - D per base model
  std::map<std::string, GainCounts> ma_vs_direct;   // T - D per base model
  GainCounts rag_total;
  GainCounts ma_total;
};

inline GainSummary gain_frequencies(const ScoreTable& table, const Grouping& grouping) {
  std::map<std::string, std::map<Mode, std::string>> bases;
  for (const auto& [label, group] : grouping) {
    if (std::find(table.methods.begin(), table.methods.end(), label) == table.methods.end())
      throw Error(ErrorCode::incomplete_grouping, "grouped method '" + label + "' has no row in the table");
    if (!bases[group.base_model].emplace(group.mode, label).second)
      throw Error(ErrorCode::incomplete_grouping,
                  "base model '" + group.base_model + "' has two rows for mode " + std::string(mode_name(group.mode)));
  }
  if (bases.empty()) throw Error(ErrorCode::incomplete_grouping, "grouping names no methods");

  GainSummary s;
  for (const auto& [base, modes] : bases) {
    for (auto m : {Mode::pure_llm, Mode::mag_rag, Mode::pure_ma})
      if (!modes.contains(m))
        throw Error(ErrorCode::incomplete_grouping,
                    "base model '" + base + "' lacks a " + std::string(mode_name(m)) + " row");
    const auto& d = table.cells[table.row(modes.at(Mode::pure_llm))];
    const auto& g = table.cells[table.row(modes.at(Mode::mag_rag))];
    const auto& t = table.cells[table.row(modes.at(Mode::pure_ma))];
    auto& rag = s.rag_vs_direct[base];
    auto& ma = s.ma_vs_direct[base];
    for (std::size_t j = 0; j < table.questions.size(); ++j) {
      rag.add(g[j] - d[j]);
      ma.add(t[j] - d[j]);
      s.rag_total.add(g[j] - d[j]);
      s.ma_total.add(t[j] - d[j]);
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Report

namespace detail {
inline std::string num(double v) {
  std::ostringstream s;
  if (v == std::floor(v) && std::abs(v) < 1e15) s << static_cast<long long>(v);
  else s << std::fixed << std::setprecision(2) << v;
  return s.str();
}
}  // namespace detail

inline void write_table_statistics(std::ostream& out, const ScoreTable& table) {
  auto winners = winners_per_question(table);
  auto grouping = grouping_from_labels(table.methods);

  out << "### Winners per question\n\n| Question | Best | Winner(s) |\n|---|---|---|\n";
  for (const auto& w : winners)
    out << "| " << w.question << " | " << detail::num(w.best) << " | "
        << text::join(std::vector<std::string>(w.winners.begin(), w.winners.end()), ", ") << " |\n";
  out << '\n';

  out << "### Questions won (ties count for every tied method)\n\n| Mode | Questions won or tied |\n|---|---|\n";
  for (auto m : {Mode::mag_rag, Mode::pure_ma, Mode::pure_llm})
    out << "| " << mode_name(m) << " (" << mode_suffix(m) << ") | "
        << questions_won_by_mode(winners, grouping, m) << " of " << winners.size() << " |\n";
  out << '\n';

  try {
    auto gains = gain_frequencies(table, grouping);
    out << "### Score gains over pure LLM\n\n"
        << "| Base model | Comparison | Positive | Negative | No gain |\n|---|---|---|---|---|\n";
    auto row = [&](const std::string& base, std::string_view cmp, const GainCounts& c) {
      out << "| " << base << " | " << cmp << " | " << c.positive << " | " << c.negative << " | " << c.zero << " |\n";
    };
    for (const auto& [base, c] : gains.rag_vs_direct) row(base, "G vs D", c);
    for (const auto& [base, c] : gains.ma_vs_direct) row(base, "T vs D", c);
    row("all", "G vs D", gains.rag_total);
    row("all", "T vs D", gains.ma_total);
    GainCounts both = gains.rag_total;
    both.positive += gains.ma_total.positive;
    both.negative += gains.ma_total.negative;
    both.zero += gains.ma_total.zero;
    row("all", "G+T vs D", both);
    out << '\n';
  } catch (const Error& e) {
    if (e.code() != ErrorCode::incomplete_grouping) throw;
    out << "Gain statistics unavailable: " << e.what() << "\n\n";
  }
}

inline std::string render_report(const std::optional<ScoreTable>& imported, const std::vector<ScoreCard>& judged) {
  std::ostringstream out;
  out << "# Evaluation Report\n\n";

  if (imported) {
    out << "## Imported scores\n\n" << imported->methods.size() << " methods x " << imported->questions.size()
        << " questions.\n\n";
    write_table_statistics(out, *imported);
  }

  if (!judged.empty()) {
    out << "## Judged results\n\n| Query | Method | ";
    for (auto m : all_metrics) out << metric_name(m) << " | ";
    out << "Total |\n|---|---|";
    for (std::size_t i = 0; i <= all_metrics.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& c : judged) {
      out << "| " << c.query_id << " | " << c.method_label << " | ";
      for (auto m : all_metrics) out << detail::num(c.metric(m)) << " | ";
      out << detail::num(c.total) << " |\n";
    }
    out << '\n';

    for (const auto& c : judged)
      for (const auto& w : c.warnings) out << "> warning (" << c.query_id << ", " << c.method_label << "): " << w << '\n';

    std::map<std::string, std::pair<std::array<double, 5>, std::size_t>> sums;
    for (const auto& c : judged) {
      auto& [acc, n] = sums[c.method_label];
      for (std::size_t i = 0; i < 5; ++i) acc[i] += c.per_metric[i];
      ++n;
    }
    out << "\n### Per-metric means\n\n| Method | ";
    for (auto m : all_metrics) out << metric_name(m) << " | ";
    out << "\n|---|";
    for (std::size_t i = 0; i < all_metrics.size(); ++i) out << "---|";
    out << '\n';
    for (const auto& [method, entry] : sums) {
      out << "| " << method << " | ";
      for (double v : entry.first) out << detail::num(v / static_cast<double>(entry.second)) << " | ";
      out << '\n';
    }
    out << '\n';

    try {
      auto table = table_from_cards(judged);
      write_table_statistics(out, table);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ragged_table) throw;
      out << "Question-level statistics unavailable: " << e.what() << "\n\n";
    }
  }
  return out.str();
}

}  // namespace magrag
