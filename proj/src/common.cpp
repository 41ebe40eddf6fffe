#include <cmath>
#include <cstring>

#include "reflex/error.hpp"
#include "reflex/hidden.hpp"
#include "reflex/steering_vector.hpp"
#include "reflex/verdict.hpp"

namespace reflex {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::input: return "input";
    case ErrorKind::shape: return "shape";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::format: return "format";
    case ErrorKind::corruption: return "corruption";
    case ErrorKind::unsupported_format: return "unsupported-format";
    case ErrorKind::scheme: return "scheme";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::insufficient_signal: return "insufficient-signal";
    case ErrorKind::no_direction: return "no-direction";
    case ErrorKind::dependency: return "dependency";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

std::string_view label_word(VerdictLabel v) {
  switch (v) {
    case VerdictLabel::False: return "false";
    case VerdictLabel::Half: return "half";
    case VerdictLabel::True: return "true";
  }
  return "false";
}

std::optional<VerdictLabel> verdict_from_index(long long value) {
  if (value < 0 || value > 2) return std::nullopt;
  return static_cast<VerdictLabel>(value);
}

std::string_view to_string(DirectionKind kind) {
  switch (kind) {
    case DirectionKind::IV: return "IV";
    case DirectionKind::KV: return "KV";
    case DirectionKind::truth: return "truth";
    case DirectionKind::base: return "base";
    case DirectionKind::sft: return "sft";
  }
  return "KV";
}

std::optional<DirectionKind> direction_kind_from_string(std::string_view s) {
  for (auto k : {DirectionKind::IV, DirectionKind::KV, DirectionKind::truth, DirectionKind::base,
                 DirectionKind::sft}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

bool HiddenStates::all_finite() const {
  for (float v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool bit_identical(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

}  // namespace reflex
