#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "magrag/corpus.hpp"
#include "magrag/graph.hpp"
#include "magrag/providers.hpp"

namespace magrag::fixtures {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "magrag-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& body) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << body;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// A well-formed extraction completion whose section texts are tagged.
inline std::string five_section_completion(const std::string& tag) {
  return "## Terminological Description\nKeywords: " + tag + " problem; " + tag + " terms\n\n" + tag +
         " terminological text\n\n"
         "## Example Information\nKeywords: " + tag + " example\n\n" + tag + " example text\n\n"
         "## System Model\nKeywords: " + tag + " model\n\n" + tag + " system model text\n\n"
         "## Optimization Formulation\nKeywords: " + tag + " formulation\n\n" + tag + " formulation text\n\n"
         "## Optimization Algorithm\nKeywords: " + tag + " algorithm\n\n" + tag + " algorithm text\n";
}

inline ExtractedKnowledge make_knowledge(const std::string& doc_id) {
  return to_knowledge(doc_id, parse_sections(five_section_completion(doc_id)));
}

// Maps every text to the same vector.
class ConstantEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit ConstantEmbeddingProvider(std::vector<double> v) : EmbeddingProvider(v.size()), v_(std::move(v)) {}

 protected:
  std::vector<double> compute(std::string_view) override { return v_; }

 private:
  std::vector<double> v_;
};

// Embeds by exact lookup; throws for texts not in the table.
class StrictTableEmbedder final : public EmbeddingProvider {
 public:
  StrictTableEmbedder(std::size_t dim, std::map<std::string, std::vector<double>> table)
      : EmbeddingProvider(dim), table_(std::move(table)) {}

 protected:
  std::vector<double> compute(std::string_view text) override {
    auto it = table_.find(std::string(text));
    if (it == table_.end()) throw Error(ErrorCode::transport, "no vector for '" + std::string(text) + "'");
    return it->second;
  }

 private:
  std::map<std::string, std::vector<double>> table_;
};

// Independent cosine route: normalize each vector in long double, then dot.
inline double oracle_cosine(std::span<const double> a, std::span<const double> b) {
  long double na = 0, nb = 0;
  for (double x : a) na += static_cast<long double>(x) * x;
  for (double x : b) nb += static_cast<long double>(x) * x;
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  long double dot = 0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += (a[i] / na) * (b[i] / nb);
  return static_cast<double>(dot);
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t dim) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(dim);
  do {
    for (auto& x : v) x = u(rng);
  } while (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }));
  return v;
}

// A random graph of n_docs documents whose keyword embeddings are drawn from
// a small pool so that equal scores (ties) occur.
struct RandomGraphCase {
  std::vector<ExtractedKnowledge> docs;
  std::map<std::string, std::vector<double>> table;  // keyword text -> vector
};

inline RandomGraphCase random_graph_case(std::mt19937_64& rng, std::size_t n_docs, std::size_t dim,
                                         std::size_t pool_size) {
  RandomGraphCase c;
  std::vector<std::vector<double>> pool;
  for (std::size_t i = 0; i < pool_size; ++i) pool.push_back(random_vector(rng, dim));
  std::uniform_int_distribution<std::size_t> pick(0, pool_size - 1);
  for (std::size_t d = 0; d < n_docs; ++d) {
    auto k = make_knowledge("doc" + std::to_string(d));
    c.docs.push_back(k);
    for (auto layer : all_layers) c.table[layer_keywords(k, layer)] = pool[pick(rng)];
  }
  return c;
}

}  // namespace magrag::fixtures
