#include "reflex/pairs.hpp"

#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "reflex/error.hpp"

namespace reflex::pairs {

using activations::ActivationSet;
using activations::Source;
using nlohmann::json;

std::string_view to_string(Quadrant q) {
  switch (q) {
    case Quadrant::II: return "II";
    case Quadrant::IV: return "IV";
    case Quadrant::agree_correct: return "agree_correct";
    case Quadrant::agree_wrong: return "agree_wrong";
  }
  return "agree_correct";
}

std::optional<Quadrant> quadrant_from_string(std::string_view s) {
  for (auto q : {Quadrant::II, Quadrant::IV, Quadrant::agree_correct, Quadrant::agree_wrong}) {
    if (to_string(q) == s) return q;
  }
  return std::nullopt;
}

Quadrant classify_quadrant(VerdictLabel v_base, VerdictLabel v_sft, VerdictLabel v_gold) {
  const bool base_ok = v_base == v_gold;
  const bool sft_ok = v_sft == v_gold;
  if (!base_ok && sft_ok) return Quadrant::II;
  if (base_ok && !sft_ok) return Quadrant::IV;
  return base_ok ? Quadrant::agree_correct : Quadrant::agree_wrong;
}

namespace {

using Joined = std::vector<std::pair<const ActivationSet*, const ActivationSet*>>;

Joined join(std::span<const ActivationSet> first, std::span<const ActivationSet> second) {
  std::map<std::string_view, const ActivationSet*> by_id;
  for (const auto& s : second) {
    if (!by_id.emplace(s.sample_id, &s).second) {
      fail(ErrorKind::input, "duplicate sample id " + s.sample_id + " in second run");
    }
  }
  if (first.size() != second.size()) {
    fail(ErrorKind::input, "runs cover different samples (" + std::to_string(first.size()) +
                               " vs " + std::to_string(second.size()) + ")");
  }
  Joined out;
  for (const auto& a : first) {
    auto it = by_id.find(a.sample_id);
    if (it == by_id.end()) {
      fail(ErrorKind::input, "sample " + a.sample_id + " is missing from the second run");
    }
    if (a.gold != it->second->gold) {
      fail(ErrorKind::input, "sample " + a.sample_id + " has different gold labels across runs");
    }
    out.emplace_back(&a, it->second);
  }
  return out;
}

FeatureTag tag_of(const ActivationSet& s, std::size_t run) {
  return {s.sample_id, s.source, run, s.predicted, s.gold};
}

}  // namespace

QuadrantReport build_quadrants(std::span<const ActivationSet> first,
                               std::span<const ActivationSet> second) {
  QuadrantReport out;
  for (const auto& [a, b] : join(first, second)) {
    if (!a->predicted || !b->predicted) {
      out.parse_failures.push_back(a->sample_id);
      continue;
    }
    out.records.push_back({a->sample_id, *a->predicted, *b->predicted, a->gold,
                           classify_quadrant(*a->predicted, *b->predicted, a->gold)});
  }
  return out;
}

TransferMetrics compute_hr_isr(std::span<const QuadrantRecord> records) {
  if (records.empty()) fail(ErrorKind::input, "compute_hr_isr needs at least one record");
  TransferMetrics m;
  std::size_t agree_correct = 0, agree_wrong = 0;
  for (const auto& r : records) {
    switch (r.quadrant) {
      case Quadrant::II: ++m.inference_success_count; break;
      case Quadrant::IV: ++m.hallucinated_count; break;
      case Quadrant::agree_correct: ++agree_correct; break;
      case Quadrant::agree_wrong: ++agree_wrong; break;
    }
  }
  m.base_correct_count = m.hallucinated_count + agree_correct;
  m.base_error_count = m.inference_success_count + agree_wrong;
  if (m.base_correct_count > 0) {
    m.hr = static_cast<double>(m.hallucinated_count) / static_cast<double>(m.base_correct_count);
  }
  if (m.base_error_count > 0) {
    m.isr =
        static_cast<double>(m.inference_success_count) / static_cast<double>(m.base_error_count);
  }
  return m;
}

std::string_view to_string(DirectionPolicy p) {
  switch (p) {
    case DirectionPolicy::style_substance: return "style_substance";
    case DirectionPolicy::truth: return "truth";
    case DirectionPolicy::base: return "base";
    case DirectionPolicy::sft: return "sft";
  }
  return "style_substance";
}

std::optional<DirectionPolicy> direction_policy_from_string(std::string_view s) {
  for (auto p : {DirectionPolicy::style_substance, DirectionPolicy::truth, DirectionPolicy::base,
                 DirectionPolicy::sft}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

std::string_view to_string(PairingMode m) {
  switch (m) {
    case PairingMode::vertical: return "vertical";
    case PairingMode::horizontal: return "horizontal";
    case PairingMode::self: return "self";
  }
  return "vertical";
}

std::optional<PairingMode> pairing_mode_from_string(std::string_view s) {
  for (auto m : {PairingMode::vertical, PairingMode::horizontal, PairingMode::self}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

ContrastivePairSet select_pairs(std::span<const ActivationSet> first,
                                std::span<const ActivationSet> second, std::size_t layer,
                                DirectionPolicy policy, PairingMode mode,
                                activations::Pooling pooling) {
  auto expect_source = [](std::span<const ActivationSet> run, Source want, const char* which) {
    for (const auto& s : run) {
      if (s.source != want) {
        fail(ErrorKind::input, std::string(which) + " run must come from the " +
                                   std::string(activations::to_string(want)) + " model");
      }
    }
  };
  if (mode == PairingMode::vertical) {
    expect_source(first, Source::base, "first");
    expect_source(second, Source::sft, "second");
  } else if (mode == PairingMode::horizontal) {
    expect_source(first, Source::sft, "first");
    expect_source(second, Source::sft, "second");
  }

  ContrastivePairSet out;
  out.layer = layer;
  out.policy = policy;
  out.mode = mode;
  out.pooling = pooling;

  std::size_t dim = 0;
  auto feature = [&](const ActivationSet& s) {
    auto f = activations::pool_feature(s, layer, pooling);
    if (dim == 0) dim = f.size();
    if (f.size() != dim) fail(ErrorKind::shape, "runs have different hidden sizes");
    return f;
  };

  struct Side {
    const ActivationSet* set;
    std::size_t run;
  };
  std::vector<Side> correct, wrong;

  for (const auto& [a, b] : join(first, second)) {
    if (!a->predicted || !b->predicted) {
      ++out.parse_failures;
      continue;
    }
    const auto q = classify_quadrant(*a->predicted, *b->predicted, a->gold);
    ++out.quadrant_counts[static_cast<std::size_t>(q)];
    switch (policy) {
      case DirectionPolicy::style_substance:
        if (q == Quadrant::II) {
          out.pairs.push_back({feature(*b), feature(*a), tag_of(*b, 1), tag_of(*a, 0), q});
        } else if (q == Quadrant::IV) {
          out.pairs.push_back({feature(*a), feature(*b), tag_of(*a, 0), tag_of(*b, 1), q});
        }
        break;
      case DirectionPolicy::base:
        out.pairs.push_back({feature(*a), feature(*b), tag_of(*a, 0), tag_of(*b, 1), q});
        break;
      case DirectionPolicy::sft:
        out.pairs.push_back({feature(*b), feature(*a), tag_of(*b, 1), tag_of(*a, 0), q});
        break;
      case DirectionPolicy::truth:
        (a->correct() ? correct : wrong).push_back({a, 0});
        (b->correct() ? correct : wrong).push_back({b, 1});
        break;
    }
  }
  if (policy == DirectionPolicy::truth) {
    const std::size_t n = std::min(correct.size(), wrong.size());
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = correct[i];
      const auto& m = wrong[i];
      out.pairs.push_back({feature(*p.set), feature(*m.set), tag_of(*p.set, p.run),
                           tag_of(*m.set, m.run), std::nullopt});
    }
  }

  if (out.pairs.empty()) {
    const auto& c = out.quadrant_counts;
    fail(ErrorKind::insufficient_signal,
         "no contrastive pairs at layer " + std::to_string(layer) + " under " +
             std::string(to_string(policy)) + " (II=" + std::to_string(c[0]) +
             ", IV=" + std::to_string(c[1]) + ", agree_correct=" + std::to_string(c[2]) +
             ", agree_wrong=" + std::to_string(c[3]) +
             ", parse_failures=" + std::to_string(out.parse_failures) + ")");
  }
  return out;
}

ContrastivePairSet filter_quadrant(const ContrastivePairSet& set, Quadrant q) {
  ContrastivePairSet out = set;
  out.pairs.clear();
  for (const auto& p : set.pairs) {
    if (p.quadrant == q) out.pairs.push_back(p);
  }
  return out;
}

void write_quadrant_records(const std::filesystem::path& path,
                            std::span<const QuadrantRecord> records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot write " + path.string());
  for (const auto& r : records) {
    json j;
    j["sample_id"] = r.sample_id;
    j["v_base"] = to_index(r.v_base);
    j["v_sft"] = to_index(r.v_sft);
    j["v_gold"] = to_index(r.v_gold);
    j["quadrant"] = std::string(to_string(r.quadrant));
    os << j.dump() << '\n';
  }
  if (!os) fail(ErrorKind::io, "failed writing " + path.string());
}

std::vector<QuadrantRecord> read_quadrant_records(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open " + path.string());
  std::vector<QuadrantRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    try {
      const auto j = json::parse(line);
      QuadrantRecord r;
      r.sample_id = j.at("sample_id").get<std::string>();
      auto label = [&](const char* key) {
        auto v = verdict_from_index(j.at(key).get<long long>());
        if (!v) fail(ErrorKind::format, where + ": bad " + key);
        return *v;
      };
      r.v_base = label("v_base");
      r.v_sft = label("v_sft");
      r.v_gold = label("v_gold");
      auto q = quadrant_from_string(j.at("quadrant").get<std::string>());
      if (!q) fail(ErrorKind::format, where + ": bad quadrant");
      if (*q != classify_quadrant(r.v_base, r.v_sft, r.v_gold)) {
        fail(ErrorKind::format, where + ": quadrant disagrees with the verdicts");
      }
      r.quadrant = *q;
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      fail(ErrorKind::format, where + ": " + e.what());
    }
  }
  return out;
}

}  // namespace reflex::pairs
