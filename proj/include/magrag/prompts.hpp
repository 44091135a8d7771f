#pragma once

// Agent prompt templates.
//
// Each agent has a system prompt (its instructions) and a user template with
// {{placeholder}} slots filled at call time. The built-in defaults below are
// mirrored as text assets under prompts/ so they can be edited without a
// rebuild; load_prompt_set() overlays whatever files exist in a directory.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "magrag/error.hpp"
#include "magrag/text.hpp"

namespace magrag {

inline constexpr std::string_view prompt_set_version = "1";

struct AgentPrompt {
  std::string system;
  std::string user_template;
};

namespace agent {
inline constexpr std::string_view extraction = "extraction";
inline constexpr std::string_view terminology = "terminology";
inline constexpr std::string_view modeling = "modeling";
inline constexpr std::string_view knowledge_generation = "knowledge_generation";
inline constexpr std::string_view direct_answer = "direct_answer";
inline constexpr std::string_view judge = "judge";
}  // namespace agent

struct PromptSet {
  AgentPrompt extraction;
  AgentPrompt terminology;
  AgentPrompt modeling;
  AgentPrompt knowledge_generation;
  AgentPrompt direct_answer;
  AgentPrompt judge;

  AgentPrompt& get(std::string_view name) {
    if (name == agent::extraction) return extraction;
    if (name == agent::terminology) return terminology;
    if (name == agent::modeling) return modeling;
    if (name == agent::knowledge_generation) return knowledge_generation;
    if (name == agent::direct_answer) return direct_answer;
    if (name == agent::judge) return judge;
    throw Error(ErrorCode::config, "unknown agent prompt '" + std::string(name) + "'");
  }
  const AgentPrompt& get(std::string_view name) const { return const_cast<PromptSet*>(this)->get(name); }
};

inline constexpr std::string_view agent_names[] = {
    agent::extraction,    agent::terminology,   agent::modeling,
    agent::knowledge_generation, agent::direct_answer, agent::judge,
};

// Replaces every {{key}} with its value. Unknown placeholders are left as-is.
inline std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out(tmpl);
  for (const auto& [key, value] : values) out = text::replace_all(std::move(out), "{{" + key + "}}", value);
  return out;
}

inline PromptSet default_prompt_set() {
  PromptSet p;

  p.extraction.system = R"(You are the Extraction Agent of an optimization-modeling assistant for sensor array signal processing.
Read the source document and distill only the knowledge needed to reproduce its optimization modeling, following the way a human expert builds a model: identify the problem, state the system model, write the optimization problem, then name the solution algorithm.

Reply with exactly these five level-2 markdown headers, in any order, and nothing else at header level 2:
## Terminological Description
## Example Information
## System Model
## Optimization Formulation
## Optimization Algorithm

Directly under each header write one line of the form
Keywords: phrase one; phrase two; phrase three
listing 3 to 6 short technical key phrases for that section, then the section text.
Use standard terminology. Keep all mathematical symbols and define them. Do not invent content that the document does not support.
)";
  p.extraction.user_template = R"(Title: {{title}}

Document:
{{document}}
)";

  p.terminology.system = R"(You are the Terminology Agent of an optimization-modeling assistant for sensor array signal processing.
Rewrite the user's scene description as a precise problem statement in standard signal processing terminology.
Name the problem type, the array or sensor configuration, the signal and noise assumptions, the unknowns, and the processing goal.
Do not solve the problem. Reply with the problem statement only.
)";
  p.terminology.user_template = R"({{query}}
)";

  p.modeling.system = R"(You are the Optimization Modeling Agent of an optimization-modeling assistant for sensor array signal processing.
You receive a terminological problem description followed by reference knowledge. The reference knowledge contains worked modeling examples; use them where they apply and ignore what does not fit the problem.
Produce a complete modeling result with these parts: system model, optimization formulation (objective, variables, constraints), and a suggested optimization algorithm with its main steps.
Define every symbol. Prefer standard formulations.
)";
  p.modeling.user_template = R"(# Problem Description
{{description}}

# Reference Knowledge
{{knowledge}}

# Task
Write the complete optimization model and algorithm for the problem description above.
)";

  p.knowledge_generation.system = R"(You are the Knowledge Generation Agent of an optimization-modeling assistant for sensor array signal processing.
From your own knowledge, write reference material for the given problem: typical system models, common optimization formulations and the algorithms usually applied to them.
Do not write the final model for this specific problem.
)";
  p.knowledge_generation.user_template = R"({{description}}
)";

  p.direct_answer.system = R"(You are an expert in sensor array signal processing and optimization.
Given a problem description, produce a complete optimization model: the system model, the optimization formulation (objective, variables, constraints) and a suggested algorithm with its main steps.
)";
  p.direct_answer.user_template = R"({{query}}
)";

  p.judge.system = R"(You are a strict reviewer of optimization models for sensor array signal processing problems.
Score the modeling result against the problem using this rubric:
completeness (0-30): all parts present (system model, formulation, algorithm)
standardization (0-20): standard notation and conventional formulation
correctness (0-30): the model and algorithm are technically right
relevance (0-10): the answer addresses the stated problem
readability (0-10): clear structure and defined symbols

Reply with exactly five lines and nothing else:
completeness: <integer>
standardization: <integer>
correctness: <integer>
relevance: <integer>
readability: <integer>
)";
  p.judge.user_template = R"(# Problem
{{query}}

# Modeling Result
{{result}}
)";

  return p;
}

inline std::string prompt_file_name(std::string_view agent_name, bool user_part) {
  return std::string(agent_name) + (user_part ? ".user.md" : ".system.md");
}

// Overlays <agent>.system.md / <agent>.user.md files from dir onto the defaults.
inline PromptSet load_prompt_set(const std::filesystem::path& dir) {
  auto prompts = default_prompt_set();
  if (dir.empty()) return prompts;
  if (!std::filesystem::is_directory(dir))
    throw Error(ErrorCode::config, "prompt directory '" + dir.string() + "' does not exist");
  for (auto name : agent_names) {
    for (bool user_part : {false, true}) {
      auto path = dir / prompt_file_name(name, user_part);
      if (!std::filesystem::exists(path)) continue;
      std::ifstream in(path, std::ios::binary);
      if (!in) throw Error(ErrorCode::unreadable_file, "cannot read prompt file " + path.string());
      std::ostringstream buf;
      buf << in.rdbuf();
      auto& slot = prompts.get(name);
      (user_part ? slot.user_template : slot.system) = buf.str();
    }
  }
  return prompts;
}

}  // namespace magrag
