#pragma once

// The four-layer knowledge graph.
//
// Every document contributes one node per layer (PT, SM, OF, OA), joined by
// three unit-weight "single document" (SD) edges along the chain
// PT-SM-OF-OA. Nodes of different documents are joined by "different
// documents" (DD) edges when the cosine similarity of their keyword
// embeddings is strictly greater than epsilon; the similarity is the weight.
// Edges are unoriented and stored with endpoint_a < endpoint_b.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "magrag/corpus.hpp"
#include "magrag/error.hpp"
#include "magrag/layer.hpp"
#include "magrag/providers.hpp"

namespace magrag {

inline constexpr int graph_schema_version = 1;
inline constexpr double default_epsilon = 0.8;

inline std::string make_node_id(std::string_view doc_id, Layer layer) {
  return std::string(doc_id) + "#" + std::string(layer_code(layer));
}

struct GraphNode {
  std::string node_id;
  std::string doc_id;
  Layer layer = Layer::pt;
  std::string content;
  std::string keywords;
  EmbeddingVector keyword_embedding;

  friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

enum class EdgeKind { sd, dd };

constexpr std::string_view edge_kind_code(EdgeKind k) { return k == EdgeKind::sd ? "SD" : "DD"; }

struct GraphEdge {
  EdgeKind kind = EdgeKind::sd;
  std::string endpoint_a;
  std::string endpoint_b;
  double weight = 1.0;

  friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
  friend auto operator<=>(const GraphEdge& x, const GraphEdge& y) {
    return std::tie(x.endpoint_a, x.endpoint_b) <=> std::tie(y.endpoint_a, y.endpoint_b);
  }
};

// s = a.b / (|a| |b|), clamped to [-1, 1] against rounding.
inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension())
    throw Error(ErrorCode::dimension_mismatch, "cosine similarity of vectors with dimensions " +
                                                   std::to_string(a.dimension()) + " and " +
                                                   std::to_string(b.dimension()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dimension(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::zero_vector, "cosine similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

class KnowledgeGraph {
 public:
  KnowledgeGraph(double epsilon, std::size_t embedding_dimension, bool dd_same_layer_only = false)
      : epsilon_(epsilon), dimension_(embedding_dimension), dd_same_layer_only_(dd_same_layer_only) {
    require(epsilon >= 0.0 && epsilon < 1.0, "epsilon must lie in [0, 1)");
    require(embedding_dimension > 0, "embedding dimension must be positive");
  }

  void add_node(GraphNode node) {
    require(!node.doc_id.empty(), "node has an empty doc_id");
    require(node.node_id == make_node_id(node.doc_id, node.layer),
            "node id '" + node.node_id + "' is not canonical");
    require(!text::trim(node.content).empty(), "node '" + node.node_id + "' has empty content");
    if (node.keyword_embedding.dimension() != dimension_)
      throw Error(ErrorCode::dimension_mismatch, "node '" + node.node_id + "' embedding has dimension " +
                                                     std::to_string(node.keyword_embedding.dimension()));
    if (index_.contains(node.node_id))
      throw Error(ErrorCode::duplicate_document, "duplicate node '" + node.node_id + "'");
    index_.emplace(node.node_id, nodes_.size());
    nodes_.push_back(std::move(node));
  }

  void add_edge(GraphEdge edge) {
    if (edge.endpoint_b < edge.endpoint_a) std::swap(edge.endpoint_a, edge.endpoint_b);
    require(edge.endpoint_a != edge.endpoint_b, "self-edge on '" + edge.endpoint_a + "'");
    const auto& a = node(edge.endpoint_a);
    const auto& b = node(edge.endpoint_b);
    if (edge.kind == EdgeKind::sd) {
      require(edge.weight == 1.0, "SD edge weight must be exactly 1.0");
      require(a.doc_id == b.doc_id, "SD edge joins different documents");
      auto d = static_cast<int>(layer_index(a.layer)) - static_cast<int>(layer_index(b.layer));
      require(d == 1 || d == -1, "SD edge joins non-adjacent layers");
    } else {
      require(a.doc_id != b.doc_id, "DD edge joins nodes of the same document");
      require(edge.weight > epsilon_ && edge.weight <= 1.0, "DD edge weight outside (epsilon, 1]");
      if (dd_same_layer_only_) require(a.layer == b.layer, "DD edge across layers with dd_same_layer_only");
    }
    require(edge_keys_.emplace(edge.endpoint_a, edge.endpoint_b).second,
            "duplicate edge " + edge.endpoint_a + " -- " + edge.endpoint_b);
    incident_[edge.endpoint_a].push_back(edges_.size());
    incident_[edge.endpoint_b].push_back(edges_.size());
    edges_.push_back(std::move(edge));
  }

  const std::vector<GraphNode>& nodes() const noexcept { return nodes_; }
  const std::vector<GraphEdge>& edges() const noexcept { return edges_; }
  double epsilon() const noexcept { return epsilon_; }
  std::size_t embedding_dimension() const noexcept { return dimension_; }
  bool dd_same_layer_only() const noexcept { return dd_same_layer_only_; }
  int schema_version() const noexcept { return graph_schema_version; }

  const GraphNode* find_node(std::string_view node_id) const {
    auto it = index_.find(std::string(node_id));
    return it == index_.end() ? nullptr : &nodes_[it->second];
  }

  const GraphNode& node(std::string_view node_id) const {
    if (auto* n = find_node(node_id)) return *n;
    throw Error(ErrorCode::unknown_node, "unknown node '" + std::string(node_id) + "'");
  }

  std::vector<const GraphEdge*> incident_edges(std::string_view node_id) const {
    std::vector<const GraphEdge*> out;
    if (auto it = incident_.find(std::string(node_id)); it != incident_.end())
      for (auto i : it->second) out.push_back(&edges_[i]);
    return out;
  }

  std::vector<std::string> doc_ids() const {
    std::set<std::string> ids;
    for (const auto& n : nodes_) ids.insert(n.doc_id);
    return {ids.begin(), ids.end()};
  }

 private:
  double epsilon_;
  std::size_t dimension_;
  bool dd_same_layer_only_;
  std::vector<GraphNode> nodes_;
  std::map<std::string, std::size_t> index_;
  std::vector<GraphEdge> edges_;
  std::set<std::pair<std::string, std::string>> edge_keys_;
  std::map<std::string, std::vector<std::size_t>> incident_;
};

// Structural problems of a graph; empty when all invariants hold.
inline std::vector<std::string> check_invariants(const KnowledgeGraph& g) {
  std::vector<std::string> problems;
  std::map<std::string, std::set<Layer>> layers;
  for (const auto& n : g.nodes()) layers[n.doc_id].insert(n.layer);
  for (const auto& [doc, ls] : layers)
    if (ls.size() != 4) problems.push_back("document '" + doc + "' does not have one node per layer");

  std::map<std::string, int> sd_count;
  for (const auto& e : g.edges())
    if (e.kind == EdgeKind::sd) ++sd_count[g.node(e.endpoint_a).doc_id];
  for (const auto& [doc, ls] : layers)
    if (sd_count[doc] != 3) problems.push_back("document '" + doc + "' does not have 3 SD edges");
  return problems;
}

// ---------------------------------------------------------------------------
// Construction

struct BuildOptions {
  double epsilon = default_epsilon;
  bool dd_same_layer_only = false;
};

inline void add_dd_edges(KnowledgeGraph& graph) {
  const auto& nodes = graph.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      if (nodes[i].doc_id == nodes[j].doc_id) continue;
      if (graph.dd_same_layer_only() && nodes[i].layer != nodes[j].layer) continue;
      double s = cosine_similarity(nodes[i].keyword_embedding, nodes[j].keyword_embedding);
      if (s > graph.epsilon()) graph.add_edge({EdgeKind::dd, nodes[i].node_id, nodes[j].node_id, s});
    }
  }
}

inline KnowledgeGraph build_graph(const std::vector<ExtractedKnowledge>& extracted, EmbeddingProvider& embed,
                                  const BuildOptions& options = {}) {
  require(!extracted.empty(), "cannot build a graph from zero documents");
  require(options.epsilon >= 0.0 && options.epsilon < 1.0, "epsilon must lie in [0, 1)");

  std::set<std::string> seen;
  for (const auto& k : extracted)
    if (!seen.insert(k.doc_id).second)
      throw Error(ErrorCode::duplicate_document, "document '" + k.doc_id + "' appears twice");

  KnowledgeGraph graph(options.epsilon, embed.dimension(), options.dd_same_layer_only);
  for (const auto& k : extracted) {
    for (auto layer : all_layers) {
      GraphNode node;
      node.node_id = make_node_id(k.doc_id, layer);
      node.doc_id = k.doc_id;
      node.layer = layer;
      node.content = layer_content(k, layer);
      node.keywords = layer_keywords(k, layer);
      try {
        node.keyword_embedding = embed.embed(node.keywords);
      } catch (const Error& e) {
        throw Error(ErrorCode::embedding_failure,
                    "embedding failed for node '" + node.node_id + "': " + e.what(), e.detail());
      }
      graph.add_node(std::move(node));
    }
    for (std::size_t i = 0; i + 1 < all_layers.size(); ++i)
      graph.add_edge({EdgeKind::sd, make_node_id(k.doc_id, all_layers[i]),
                      make_node_id(k.doc_id, all_layers[i + 1]), 1.0});
  }
  add_dd_edges(graph);
  return graph;
}

// ---------------------------------------------------------------------------
// Persistence
//
// Line-delimited JSON arrays, one record per line:
//   ["header", schema_version, epsilon, embedding_dimension, dd_same_layer_only]
//   ["node", node_id, doc_id, layer, content, keywords, [embedding...]]
//   ["edge", kind, endpoint_a, endpoint_b, weight]
//   ["end"]
// Doubles are written in shortest round-trip form.

inline void write_graph(const KnowledgeGraph& g, std::ostream& out) {
  using nlohmann::json;
  out << json::array({"header", g.schema_version(), g.epsilon(), g.embedding_dimension(),
                      g.dd_same_layer_only()})
             .dump()
      << '\n';
  for (const auto& n : g.nodes()) {
    json emb(std::vector<double>(n.keyword_embedding.values().begin(), n.keyword_embedding.values().end()));
    out << json::array({"node", n.node_id, n.doc_id, layer_code(n.layer), n.content, n.keywords, emb}).dump()
        << '\n';
  }
  for (const auto& e : g.edges())
    out << json::array({"edge", edge_kind_code(e.kind), e.endpoint_a, e.endpoint_b, e.weight}).dump() << '\n';
  out << json::array({"end"}).dump() << '\n';
}

inline void save_graph(const KnowledgeGraph& g, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::unreadable_file, "cannot open " + path.string() + " for writing");
  write_graph(g, out);
  out.flush();
  if (!out) throw Error(ErrorCode::unreadable_file, "failed writing " + path.string());
}

inline KnowledgeGraph read_graph(std::istream& in) {
  using nlohmann::json;
  std::string line;
  std::size_t line_no = 0;
  auto corrupt = [&](const std::string& why) {
    return Error(ErrorCode::corrupt_file, "graph file line " + std::to_string(line_no) + ": " + why, {}, line_no);
  };
  auto next_record = [&]() -> std::optional<json> {
    while (std::getline(in, line)) {
      ++line_no;
      if (text::trim(line).empty()) continue;
      try {
        auto j = json::parse(line);
        if (!j.is_array() || j.empty() || !j[0].is_string()) throw corrupt("record is not a tagged array");
        return j;
      } catch (const json::exception& e) {
        throw corrupt(std::string("unparseable record: ") + e.what());
      }
    }
    ++line_no;
    return std::nullopt;
  };

  auto header = next_record();
  if (!header || (*header)[0] != "header") throw corrupt("missing header record");
  std::optional<KnowledgeGraph> graph;
  try {
    auto version = header->at(1).get<int>();
    if (version != graph_schema_version)
      throw Error(ErrorCode::schema_version_mismatch,
                  "graph file has schema_version " + std::to_string(version) + ", expected " +
                      std::to_string(graph_schema_version));
    if (header->size() != 5) throw corrupt("header record has wrong arity");
    graph.emplace(header->at(2).get<double>(), header->at(3).get<std::size_t>(), header->at(4).get<bool>());
  } catch (const json::exception& e) {
    throw corrupt(std::string("bad header: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::precondition) throw corrupt(e.what());
    throw;
  }

  while (auto rec = next_record()) {
    const auto& r = *rec;
    try {
      auto tag = r[0].get<std::string>();
      if (tag == "end") {
        while (std::getline(in, line)) {
          ++line_no;
          if (!text::trim(line).empty()) throw corrupt("data after end record");
        }
        return std::move(*graph);
      }
      if (tag == "node") {
        if (r.size() != 7) throw corrupt("node record has wrong arity");
        auto layer = parse_layer(r[3].get<std::string>());
        if (!layer) throw corrupt("unknown layer '" + r[3].get<std::string>() + "'");
        graph->add_node({r[1].get<std::string>(), r[2].get<std::string>(), *layer, r[4].get<std::string>(),
                         r[5].get<std::string>(), EmbeddingVector(r[6].get<std::vector<double>>())});
      } else if (tag == "edge") {
        if (r.size() != 5) throw corrupt("edge record has wrong arity");
        auto kind = r[1].get<std::string>();
        if (kind != "SD" && kind != "DD") throw corrupt("unknown edge kind '" + kind + "'");
        graph->add_edge({kind == "SD" ? EdgeKind::sd : EdgeKind::dd, r[2].get<std::string>(),
                         r[3].get<std::string>(), r[4].get<double>()});
      } else {
        throw corrupt("unknown record tag '" + tag + "'");
      }
    } catch (const json::exception& e) {
      throw corrupt(std::string("bad field: ") + e.what());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::corrupt_file) throw;
      throw corrupt(e.what());
    }
  }
  throw corrupt("file is truncated (no end record)");
}

inline KnowledgeGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::unreadable_file, "cannot open graph file " + path.string());
  return read_graph(in);
}

// ---------------------------------------------------------------------------
// Statistics

struct GraphStats {
  std::size_t documents = 0;
  std::map<Layer, std::size_t> nodes_per_layer;
  std::size_t sd_edges = 0;
  std::size_t dd_edges = 0;
  // DD weights in ten bins of width 0.1 over [0, 1]; bin 9 is closed.
  std::array<std::size_t, 10> dd_weight_histogram{};
};

inline GraphStats graph_stats(const KnowledgeGraph& g) {
  GraphStats s;
  for (auto l : all_layers) s.nodes_per_layer[l] = 0;
  for (const auto& n : g.nodes()) ++s.nodes_per_layer[n.layer];
  s.documents = g.doc_ids().size();
  for (const auto& e : g.edges()) {
    if (e.kind == EdgeKind::sd) {
      ++s.sd_edges;
    } else {
      ++s.dd_edges;
      auto bin = static_cast<std::size_t>(std::clamp(e.weight, 0.0, 1.0) * 10.0);
      ++s.dd_weight_histogram[std::min<std::size_t>(bin, 9)];
    }
  }
  return s;
}

inline void print_stats(const GraphStats& s, std::ostream& out) {
  out << "documents: " << s.documents << '\n';
  for (auto l : all_layers) out << layer_code(l) << ": " << s.nodes_per_layer.at(l) << '\n';
  out << "SD: " << s.sd_edges << '\n' << "DD: " << s.dd_edges << '\n';
  out << "DD weight histogram:\n";
  for (std::size_t i = 0; i < s.dd_weight_histogram.size(); ++i)
    out << "  [" << i / 10.0 << ", " << (i + 1) / 10.0 << (i == 9 ? "]" : ")") << ": "
        << s.dd_weight_histogram[i] << '\n';
}

}  // namespace magrag
