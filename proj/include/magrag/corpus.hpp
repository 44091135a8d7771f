#pragma once

// Source documents and the five-part knowledge the Extraction Agent distills
// from each of them.

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "magrag/error.hpp"
#include "magrag/layer.hpp"
#include "magrag/prompts.hpp"
#include "magrag/providers.hpp"
#include "magrag/text.hpp"

namespace magrag {

struct SourceDocument {
  std::string doc_id;
  std::string title;
  std::string body;
  std::filesystem::path origin_path;
  bool truncated = false;
};

enum class Section {
  terminological_description,
  example_information,
  system_model,
  optimization_formulation,
  optimization_algorithm,
};

inline constexpr std::array<Section, 5> all_sections{
    Section::terminological_description, Section::example_information, Section::system_model,
    Section::optimization_formulation, Section::optimization_algorithm};

// Bit-exact header names of the section wire format.
constexpr std::string_view section_header(Section s) {
  switch (s) {
    case Section::terminological_description: return "Terminological Description";
    case Section::example_information: return "Example Information";
    case Section::system_model: return "System Model";
    case Section::optimization_formulation: return "Optimization Formulation";
    case Section::optimization_algorithm: return "Optimization Algorithm";
  }
  return "";
}

constexpr std::size_t section_index(Section s) { return static_cast<std::size_t>(s); }

struct ExtractedKnowledge {
  std::string doc_id;
  std::string terminological_description;
  std::string example_information;
  std::string system_model;
  std::string optimization_formulation;
  std::string optimization_algorithm;
  // Exactly one entry per graph layer. PT carries the terminological and
  // example keywords, in that order.
  std::map<Layer, std::vector<std::string>> keywords_per_section;

  const std::string& section(Section s) const {
    switch (s) {
      case Section::terminological_description: return terminological_description;
      case Section::example_information: return example_information;
      case Section::system_model: return system_model;
      case Section::optimization_formulation: return optimization_formulation;
      case Section::optimization_algorithm: return optimization_algorithm;
    }
    return terminological_description;
  }
  std::string& section(Section s) {
    return const_cast<std::string&>(static_cast<const ExtractedKnowledge*>(this)->section(s));
  }

  friend bool operator==(const ExtractedKnowledge&, const ExtractedKnowledge&) = default;
};

struct ParsedSections {
  std::array<std::string, 5> bodies;
  std::array<std::vector<std::string>, 5> keywords;
};

// ---------------------------------------------------------------------------
// Section wire format

inline std::vector<std::string> parse_keyword_line(std::string_view value) {
  std::vector<std::string> out;
  for (auto& part : text::split(value, ';')) {
    auto t = text::trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

// Returns the header name if the line is a level-2 markdown header.
inline std::optional<std::string_view> level2_header(std::string_view line) {
  auto t = text::trim(line);
  if (t.size() < 3 || t.substr(0, 2) != "##" || (t[2] != ' ' && t[2] != '\t')) return std::nullopt;
  return text::trim(t.substr(3));
}

inline ParsedSections parse_sections(std::string_view completion) {
  require(!text::trim(completion).empty(), "cannot parse an empty completion");

  ParsedSections out;
  std::array<bool, 5> seen{};
  constexpr std::size_t none = all_sections.size();
  std::size_t current = none;  // section receiving lines
  bool awaiting_keywords = false;
  std::array<std::vector<std::string_view>, 5> lines;

  for (auto line : text::split_lines(completion)) {
    if (auto header = level2_header(line)) {
      current = none;
      for (auto s : all_sections) {
        if (text::iequals(*header, section_header(s)) && !seen[section_index(s)]) {
          current = section_index(s);
          seen[current] = true;
        }
      }
      awaiting_keywords = current != none;
      continue;
    }
    if (current == none) continue;  // preamble or an unknown/duplicate section
    if (awaiting_keywords) {
      auto t = text::trim(line);
      if (t.empty()) continue;
      awaiting_keywords = false;
      if (text::starts_with_ci(t, "keywords:")) {
        out.keywords[current] = parse_keyword_line(t.substr(9));
        continue;
      }
    }
    lines[current].push_back(line);
  }

  std::vector<std::string> missing;
  for (auto s : all_sections) {
    auto i = section_index(s);
    std::string body;
    for (std::size_t j = 0; j < lines[i].size(); ++j) {
      if (j) body += '\n';
      body += lines[i][j];
    }
    out.bodies[i] = std::string(text::trim(body));
    if (out.bodies[i].empty()) missing.emplace_back(section_header(s));
  }
  if (!missing.empty())
    throw Error(ErrorCode::malformed_completion,
                "completion is missing section(s): " + text::join(missing, ", "), std::string(completion));
  return out;
}

inline ExtractedKnowledge to_knowledge(std::string doc_id, const ParsedSections& parsed) {
  ExtractedKnowledge k;
  k.doc_id = std::move(doc_id);
  for (auto s : all_sections) k.section(s) = parsed.bodies[section_index(s)];

  auto pt = parsed.keywords[section_index(Section::terminological_description)];
  const auto& ei = parsed.keywords[section_index(Section::example_information)];
  pt.insert(pt.end(), ei.begin(), ei.end());
  k.keywords_per_section[Layer::pt] = std::move(pt);
  k.keywords_per_section[Layer::sm] = parsed.keywords[section_index(Section::system_model)];
  k.keywords_per_section[Layer::of] = parsed.keywords[section_index(Section::optimization_formulation)];
  k.keywords_per_section[Layer::oa] = parsed.keywords[section_index(Section::optimization_algorithm)];
  return k;
}

// Inverse of parse_sections for section bodies that are trimmed and contain
// no level-2 headers. PT keywords are written under the first header.
inline std::string render_sections(const ExtractedKnowledge& k) {
  std::ostringstream out;
  for (auto s : all_sections) {
    out << "## " << section_header(s) << '\n';
    const std::vector<std::string>* kw = nullptr;
    auto find = [&](Layer l) {
      auto it = k.keywords_per_section.find(l);
      return it == k.keywords_per_section.end() ? nullptr : &it->second;
    };
    switch (s) {
      case Section::terminological_description: kw = find(Layer::pt); break;
      case Section::system_model: kw = find(Layer::sm); break;
      case Section::optimization_formulation: kw = find(Layer::of); break;
      case Section::optimization_algorithm: kw = find(Layer::oa); break;
      case Section::example_information: break;
    }
    if (kw && !kw->empty()) out << "Keywords: " << text::join(*kw, "; ") << '\n';
    out << '\n' << k.section(s) << "\n\n";
  }
  return out.str();
}

// Node content of one layer. PT joins the terminological description with the
// example information; the other layers map one-to-one.
inline std::string layer_content(const ExtractedKnowledge& k, Layer layer) {
  switch (layer) {
    case Layer::pt:
      return k.terminological_description + "\n\nExample information:\n" + k.example_information;
    case Layer::sm: return k.system_model;
    case Layer::of: return k.optimization_formulation;
    case Layer::oa: return k.optimization_algorithm;
  }
  return {};
}

// The text that gets embedded for a node. Falls back to the node content
// when the agent supplied no keywords for that section.
inline std::string layer_keywords(const ExtractedKnowledge& k, Layer layer) {
  auto it = k.keywords_per_section.find(layer);
  if (it != k.keywords_per_section.end() && !it->second.empty()) return text::join(it->second, "; ");
  return layer_content(k, layer);
}

// ---------------------------------------------------------------------------
// Corpus loading

inline constexpr std::size_t default_max_document_chars = 60000;

namespace detail {

inline bool is_corpus_file(const std::filesystem::path& p) {
  auto ext = text::to_lower(p.extension().string());
  return ext == ".md" || ext == ".markdown" || ext == ".txt";
}

inline bool is_hidden(const std::filesystem::path& rel) {
  for (const auto& part : rel)
    if (auto s = part.string(); !s.empty() && s.front() == '.') return true;
  return false;
}

// Cuts at most max_chars bytes without splitting a UTF-8 sequence.
inline std::string utf8_prefix(std::string s, std::size_t max_chars) {
  if (s.size() <= max_chars) return s;
  std::size_t cut = max_chars;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  s.resize(cut);
  return s;
}

}  // namespace detail

inline std::vector<SourceDocument> load_corpus(const std::filesystem::path& directory,
                                               std::size_t max_document_chars = default_max_document_chars) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(directory))
    throw Error(ErrorCode::unreadable_file, "corpus directory '" + directory.string() + "' does not exist");

  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    auto rel = fs::relative(entry.path(), directory);
    if (detail::is_hidden(rel) || !detail::is_corpus_file(rel)) continue;
    files.push_back(rel);
  }
  if (files.empty())
    throw Error(ErrorCode::empty_corpus, "corpus directory '" + directory.string() + "' has no documents");
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });

  std::vector<SourceDocument> docs;
  std::set<std::string> ids;
  for (const auto& rel : files) {
    SourceDocument doc;
    doc.origin_path = directory / rel;
    auto id_path = rel;
    id_path.replace_extension();
    doc.doc_id = id_path.generic_string();
    if (!ids.insert(doc.doc_id).second)
      throw Error(ErrorCode::duplicate_document, "two corpus files map to document id '" + doc.doc_id + "'");

    std::ifstream in(doc.origin_path, std::ios::binary);
    std::ostringstream buf;
    if (!in || !(buf << in.rdbuf()))
      throw Error(ErrorCode::unreadable_file, "cannot read " + doc.origin_path.string());
    auto body = buf.str();
    if (text::trim(body).empty())
      throw Error(ErrorCode::unreadable_file, "document " + doc.origin_path.string() + " is empty");

    doc.title = rel.stem().string();
    for (auto line : text::split_lines(body)) {
      auto t = text::trim(line);
      if (t.size() > 2 && t.substr(0, 2) == "# ") {
        doc.title = std::string(text::trim(t.substr(2)));
        break;
      }
    }
    doc.truncated = body.size() > max_document_chars;
    doc.body = detail::utf8_prefix(std::move(body), max_document_chars);
    docs.push_back(std::move(doc));
  }
  return docs;
}

// ---------------------------------------------------------------------------
// Extraction Agent

struct ExtractionOptions {
  double temperature = 0.0;
  int max_output = 4096;
  int malformed_retries = 1;
};

inline ExtractedKnowledge extract_knowledge(const SourceDocument& doc, ChatProvider& chat,
                                            const PromptSet& prompts, const ExtractionOptions& options = {}) {
  require(!doc.doc_id.empty(), "document has no id");
  require(!text::trim(doc.body).empty(), "document '" + doc.doc_id + "' has an empty body");

  ChatRequest request;
  request.agent = std::string(agent::extraction);
  request.system_prompt = prompts.extraction.system;
  request.user_content =
      fill_template(prompts.extraction.user_template, {{"title", doc.title}, {"document", doc.body}});
  request.temperature = options.temperature;
  request.max_output = options.max_output;

  for (int attempt = 0;; ++attempt) {
    auto completion = chat.chat(request);
    try {
      return to_knowledge(doc.doc_id, parse_sections(completion));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::malformed_completion) throw;
      if (attempt >= options.malformed_retries)
        throw Error(ErrorCode::malformed_completion,
                    "extraction for '" + doc.doc_id + "' failed: " + e.what(), e.detail());
      request.user_content += "\n\nYour previous reply was rejected: " + std::string(e.what()) +
                              ". Reply again with all five level-2 headers exactly as instructed.\n";
    }
  }
}

}  // namespace magrag
