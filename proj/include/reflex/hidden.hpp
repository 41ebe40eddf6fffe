#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace reflex {

/// Residual-stream states laid out row-major as [layer][token][dim].
struct HiddenStates {
  std::size_t n_layers = 0;
  std::size_t n_tokens = 0;
  std::size_t dim = 0;
  std::vector<float> values;

  HiddenStates() = default;
  HiddenStates(std::size_t layers, std::size_t tokens, std::size_t d)
      : n_layers(layers), n_tokens(tokens), dim(d), values(layers * tokens * d, 0.0f) {}

  std::span<const float> at(std::size_t layer, std::size_t token) const {
    return {values.data() + (layer * n_tokens + token) * dim, dim};
  }
  std::span<float> at(std::size_t layer, std::size_t token) {
    return {values.data() + (layer * n_tokens + token) * dim, dim};
  }
  std::span<const float> layer(std::size_t l) const {
    return {values.data() + l * n_tokens * dim, n_tokens * dim};
  }

  bool all_finite() const;
  bool same_shape(const HiddenStates& other) const {
    return n_layers == other.n_layers && n_tokens == other.n_tokens && dim == other.dim;
  }
};

/// Bitwise comparison; distinguishes -0.0 from 0.0 and compares NaN payloads.
bool bit_identical(std::span<const float> a, std::span<const float> b);

}  // namespace reflex
