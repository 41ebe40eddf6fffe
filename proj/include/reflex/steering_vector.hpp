#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace reflex {

/// Where a steering direction came from. IV: pairs where fine-tuning fixed
/// the backbone. KV: pairs where fine-tuning broke a backbone-correct answer.
/// truth/base/sft: ablation policies.
enum class DirectionKind { IV, KV, truth, base, sft };

std::string_view to_string(DirectionKind kind);
std::optional<DirectionKind> direction_kind_from_string(std::string_view s);

/// Unit direction in one layer's hidden space plus the intensity used when
/// it is added to the residual stream.
struct SteeringVector {
  std::size_t layer = 0;
  std::vector<float> direction;
  double multiplier = 0.0;
  DirectionKind kind = DirectionKind::KV;
};

}  // namespace reflex
