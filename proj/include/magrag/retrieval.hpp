#pragma once

// Knowledge search over the PT layer.
//
// Every PT node is scored by the cosine similarity between the query
// embedding and the node's keyword embedding. The top-k nodes (ties broken by
// doc_id) are expanded along their SD chain and the four layer contents are
// concatenated into the knowledge bundle handed to the Modeling Agent.

#include <algorithm>
#include <array>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "magrag/error.hpp"
#include "magrag/graph.hpp"
#include "magrag/providers.hpp"

namespace magrag {

inline constexpr int default_top_k = 3;
inline constexpr std::size_t default_knowledge_budget_chars = 24000;

struct RelevanceEntry {
  std::string node_id;
  std::string doc_id;
  double score = 0.0;
};

struct KnowledgeChain {
  std::string doc_id;
  double score = 0.0;
  std::array<std::string, 4> contents;  // PT, SM, OF, OA
  std::string text;                     // labeled concatenation

  friend bool operator==(const KnowledgeChain&, const KnowledgeChain&) = default;
};

struct KnowledgeBundle {
  std::vector<KnowledgeChain> chains;  // score descending
  std::size_t total_characters = 0;
  std::vector<std::string> notices;

  std::string render() const {
    std::string out;
    for (std::size_t i = 0; i < chains.size(); ++i) {
      if (i) out += "\n";
      out += chains[i].text;
    }
    return out;
  }

  friend bool operator==(const KnowledgeBundle&, const KnowledgeBundle&) = default;
};

struct RetrievalOptions {
  int k = default_top_k;
  std::size_t knowledge_budget_chars = default_knowledge_budget_chars;
  bool dd_expansion = false;  // reserved; DD edges are not used at query time
};

inline double score_node(const EmbeddingVector& query, const GraphNode& node) {
  if (node.layer != Layer::pt)
    throw Error(ErrorCode::wrong_layer, "node '" + node.node_id + "' is not on the PT layer");
  return cosine_similarity(query, node.keyword_embedding);
}

inline double query_relevance(std::string_view description, const GraphNode& node, EmbeddingProvider& embed) {
  require(!text::trim(description).empty(), "query description is empty");
  if (node.layer != Layer::pt)
    throw Error(ErrorCode::wrong_layer, "node '" + node.node_id + "' is not on the PT layer");
  return score_node(embed.embed(description), node);
}

// The relevance list L over all PT nodes, sorted by score descending and
// then doc_id ascending.
inline std::vector<RelevanceEntry> rank_pt_nodes(const KnowledgeGraph& graph, const EmbeddingVector& query) {
  std::vector<RelevanceEntry> ranked;
  for (const auto& node : graph.nodes())
    if (node.layer == Layer::pt) ranked.push_back({node.node_id, node.doc_id, score_node(query, node)});
  std::sort(ranked.begin(), ranked.end(), [](const RelevanceEntry& a, const RelevanceEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  return ranked;
}

// Contents of the PT-SM-OF-OA chain starting at a PT node, following SD
// edges regardless of their stored orientation.
inline std::array<std::string, 4> walk_sd_chain(const KnowledgeGraph& graph, std::string_view pt_node) {
  const GraphNode* current = &graph.node(pt_node);
  if (current->layer != Layer::pt)
    throw Error(ErrorCode::wrong_layer, "node '" + current->node_id + "' is not on the PT layer");

  std::array<std::string, 4> out;
  out[0] = current->content;
  for (std::size_t i = 1; i < all_layers.size(); ++i) {
    const GraphNode* next = nullptr;
    for (const auto* e : graph.incident_edges(current->node_id)) {
      if (e->kind != EdgeKind::sd) continue;
      const auto& other = graph.node(e->endpoint_a == current->node_id ? e->endpoint_b : e->endpoint_a);
      if (other.layer == all_layers[i] && other.doc_id == current->doc_id) {
        next = &other;
        break;
      }
    }
    if (!next)
      throw Error(ErrorCode::broken_chain, "document '" + current->doc_id + "' has no SD edge " +
                                               std::string(layer_code(all_layers[i - 1])) + "-" +
                                               std::string(layer_code(all_layers[i])));
    out[i] = next->content;
    current = next;
  }
  return out;
}

inline std::string format_score(double score) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(6) << score;
  return s.str();
}

// Labeled chain text. Each layer is introduced by a "### <CODE>: <title>"
// separator line.
inline std::string render_chain(std::string_view doc_id, double score, const std::array<std::string, 4>& contents) {
  std::ostringstream out;
  out << "<!-- chain doc_id=" << doc_id << " score=" << format_score(score) << " -->\n";
  for (std::size_t i = 0; i < all_layers.size(); ++i)
    out << "### " << layer_code(all_layers[i]) << ": " << layer_title(all_layers[i]) << '\n'
        << contents[i] << "\n\n";
  return out.str();
}

inline KnowledgeBundle retrieve_topk(const KnowledgeGraph& graph, const EmbeddingVector& query,
                                     const RetrievalOptions& options = {}) {
  require(options.k >= 1, "k must be >= 1");
  auto ranked = rank_pt_nodes(graph, query);
  if (ranked.empty()) throw Error(ErrorCode::empty_graph, "graph has no PT nodes");

  KnowledgeBundle bundle;
  if (options.dd_expansion) bundle.notices.push_back("dd_expansion is reserved and has no effect");

  auto take = std::min<std::size_t>(static_cast<std::size_t>(options.k), ranked.size());
  for (std::size_t i = 0; i < take; ++i) {
    KnowledgeChain chain;
    chain.doc_id = ranked[i].doc_id;
    chain.score = ranked[i].score;
    chain.contents = walk_sd_chain(graph, ranked[i].node_id);
    chain.text = render_chain(chain.doc_id, chain.score, chain.contents);
    bundle.total_characters += chain.text.size();
    bundle.chains.push_back(std::move(chain));
  }
  while (!bundle.chains.empty() && bundle.total_characters > options.knowledge_budget_chars) {
    const auto& dropped = bundle.chains.back();
    bundle.notices.push_back("dropped chain '" + dropped.doc_id + "' (score " + format_score(dropped.score) +
                             "): knowledge budget of " + std::to_string(options.knowledge_budget_chars) +
                             " characters exceeded");
    bundle.total_characters -= dropped.text.size();
    bundle.chains.pop_back();
  }
  return bundle;
}

inline KnowledgeBundle retrieve_topk(const KnowledgeGraph& graph, std::string_view description,
                                     EmbeddingProvider& embed, const RetrievalOptions& options = {}) {
  require(!text::trim(description).empty(), "query description is empty");
  return retrieve_topk(graph, embed.embed(description), options);
}

}  // namespace magrag
