#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace magrag {

enum class ErrorCode {
  precondition,
  transport,
  empty_completion,
  dimension_mismatch,
  empty_corpus,
  unreadable_file,
  malformed_completion,
  duplicate_document,
  embedding_failure,
  zero_vector,
  schema_version_mismatch,
  corrupt_file,
  wrong_layer,
  empty_graph,
  broken_chain,
  stage_failure,
  malformed_judgment,
  ragged_table,
  non_numeric_cell,
  incomplete_grouping,
  unknown_node,
  config,
  usage,
  output_exists,
  missing_graph,
};

// Stable, greppable identifiers printed by the CLI.
constexpr std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::precondition: return "E_PRECONDITION";
    case ErrorCode::transport: return "E_TRANSPORT";
    case ErrorCode::empty_completion: return "E_EMPTY_COMPLETION";
    case ErrorCode::dimension_mismatch: return "E_DIMENSION_MISMATCH";
    case ErrorCode::empty_corpus: return "E_EMPTY_CORPUS";
    case ErrorCode::unreadable_file: return "E_UNREADABLE_FILE";
    case ErrorCode::malformed_completion: return "E_MALFORMED_COMPLETION";
    case ErrorCode::duplicate_document: return "E_DUPLICATE_DOCUMENT";
    case ErrorCode::embedding_failure: return "E_EMBEDDING_FAILURE";
    case ErrorCode::zero_vector: return "E_ZERO_VECTOR";
    case ErrorCode::schema_version_mismatch: return "E_SCHEMA_VERSION";
    case ErrorCode::corrupt_file: return "E_CORRUPT_FILE";
    case ErrorCode::wrong_layer: return "E_WRONG_LAYER";
    case ErrorCode::empty_graph: return "E_EMPTY_GRAPH";
    case ErrorCode::broken_chain: return "E_BROKEN_CHAIN";
    case ErrorCode::stage_failure: return "E_STAGE_FAILURE";
    case ErrorCode::malformed_judgment: return "E_MALFORMED_JUDGMENT";
    case ErrorCode::ragged_table: return "E_RAGGED_TABLE";
    case ErrorCode::non_numeric_cell: return "E_NON_NUMERIC_CELL";
    case ErrorCode::incomplete_grouping: return "E_INCOMPLETE_GROUPING";
    case ErrorCode::unknown_node: return "E_UNKNOWN_NODE";
    case ErrorCode::config: return "E_CONFIG";
    case ErrorCode::usage: return "E_USAGE";
    case ErrorCode::output_exists: return "E_OUTPUT_EXISTS";
    case ErrorCode::missing_graph: return "E_MISSING_GRAPH";
  }
  return "E_UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {},
        std::optional<std::size_t> line = std::nullopt)
      : std::runtime_error(message),
        code_(code),
        detail_(std::move(detail)),
        line_(line) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view code_name() const noexcept { return error_code_name(code_); }

  // Extra diagnostic payload, e.g. the raw completion that failed to parse.
  const std::string& detail() const noexcept { return detail_; }

  // 1-based line number for file-format errors.
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::string detail_;
  std::optional<std::size_t> line_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorCode::precondition, message);
}

}  // namespace magrag
