#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace magrag {

// The four graph layers, in chain order PT-SM-OF-OA.
enum class Layer { pt, sm, of, oa };

inline constexpr std::array<Layer, 4> all_layers{Layer::pt, Layer::sm, Layer::of, Layer::oa};

constexpr std::string_view layer_code(Layer layer) {
  switch (layer) {
    case Layer::pt: return "PT";
    case Layer::sm: return "SM";
    case Layer::of: return "OF";
    case Layer::oa: return "OA";
  }
  return "??";
}

constexpr std::string_view layer_title(Layer layer) {
  switch (layer) {
    case Layer::pt: return "Problem Type";
    case Layer::sm: return "System Model";
    case Layer::of: return "Optimization Formulation";
    case Layer::oa: return "Optimization Algorithm";
  }
  return "";
}

constexpr std::size_t layer_index(Layer layer) { return static_cast<std::size_t>(layer); }

inline std::optional<Layer> parse_layer(std::string_view code) {
  for (auto l : all_layers)
    if (layer_code(l) == code) return l;
  return std::nullopt;
}

}  // namespace magrag
