#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace reflex {

// Unified three-way veracity scale. Ordered by increasing veracity.
enum class VerdictLabel : std::uint8_t { False = 0, Half = 1, True = 2 };

inline constexpr std::array<VerdictLabel, 3> kAllVerdicts = {
    VerdictLabel::False, VerdictLabel::Half, VerdictLabel::True};

inline constexpr int to_index(VerdictLabel v) { return static_cast<int>(v); }

/// Lowercase surface word used in generated targets ("false", "half", "true").
std::string_view label_word(VerdictLabel v);

/// Accepts 0, 1 or 2.
std::optional<VerdictLabel> verdict_from_index(long long value);

}  // namespace reflex
