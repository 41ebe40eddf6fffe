#pragma once

// Reference Ratcliff–Obershelp matcher: enumerates every (i, j) start and
// extends character by character, then recurses on both sides.

#include <cstddef>
#include <string_view>

namespace ro_oracle {

struct Match {
  std::size_t i = 0, j = 0, len = 0;
};

inline Match longest(std::string_view a, std::string_view b) {
  Match best;
  // a start with no room for a longer match cannot replace the best one
  for (std::size_t i = 0; i + best.len < a.size(); ++i) {
    for (std::size_t j = 0; j + best.len < b.size(); ++j) {
      std::size_t k = 0;
      while (i + k < a.size() && j + k < b.size() && a[i + k] == b[j + k]) ++k;
      if (k > best.len) best = {i, j, k};
    }
  }
  return best;
}

inline std::size_t matches(std::string_view a, std::string_view b) {
  const Match m = longest(a, b);
  if (m.len == 0) return 0;
  return m.len + matches(a.substr(0, m.i), b.substr(0, m.j)) +
         matches(a.substr(m.i + m.len), b.substr(m.j + m.len));
}

inline double ratio(std::string_view a, std::string_view b) {
  if (a.empty() && b.empty()) return 1.0;
  return 2.0 * static_cast<double>(matches(a, b)) / static_cast<double>(a.size() + b.size());
}

}  // namespace ro_oracle
