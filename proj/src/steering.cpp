#include "reflex/steering.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "reflex/error.hpp"

namespace reflex::steering {

std::vector<EvalSample> make_eval_samples(std::span<const corpus::ClaimRecord> records,
                                          corpus::IoMode mode) {
  std::vector<EvalSample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.id, corpus::format_dialogue(r, mode), r.verdict});
  return out;
}

namespace {

std::array<TokenId, 3> label_ids(const Tokenizer& tokenizer) {
  std::array<TokenId, 3> ids{};
  for (auto v : kAllVerdicts) {
    const auto word = label_word(v);
    if (!tokenizer.contains(word)) {
      fail(ErrorKind::input, "tokenizer has no token for label '" + std::string(word) + "'");
    }
    ids[to_index(v)] = tokenizer.id(word);
  }
  return ids;
}

}  // namespace

VerdictSlot verdict_slot(const tinylm::ModelParams& params, const Tokenizer& tokenizer,
                         const EvalSample& sample, const SteeringVector* steering) {
  const auto labels = label_ids(tokenizer);
  const auto ids =
      tokenizer.encode(sample.dialogue.prompt_text + " " + std::string(corpus::kVerdictPrefix));
  std::optional<tinylm::Injection> inj;
  if (steering) {
    tinylm::check_steering(params.config(), *steering);
    inj = tinylm::make_injection(*steering);
  }
  const auto trace = tinylm::forward(params, ids, inj ? &*inj : nullptr);
  const auto row = trace.logits_row(ids.size() - 1);

  double mx = row[0];
  for (float v : row) mx = std::max(mx, static_cast<double>(v));
  double z = 0.0;
  for (float v : row) z += std::exp(static_cast<double>(v) - mx);

  VerdictSlot out;
  for (std::size_t k = 0; k < 3; ++k) {
    out.label_prob[k] = std::exp(static_cast<double>(row[labels[k]]) - mx) / z;
  }
  out.argmax_id = tinylm::argmax(row);
  out.argmax_is_gold = out.argmax_id == labels[to_index(sample.gold)];
  out.gold_prob = out.label_prob[to_index(sample.gold)];
  return out;
}

double probability_gap(const tinylm::ModelParams& params, const Tokenizer& tokenizer,
                       const SteeringVector& steering, std::span<const EvalSample> samples) {
  if (samples.empty()) fail(ErrorKind::input, "probability_gap needs at least one sample");
  double sum = 0.0;
  for (const auto& s : samples) {
    sum += verdict_slot(params, tokenizer, s, &steering).gold_prob -
           verdict_slot(params, tokenizer, s, nullptr).gold_prob;
  }
  return sum / static_cast<double>(samples.size());
}

std::string_view to_string(Objective o) { return o == Objective::gap ? "gap" : "accuracy"; }

std::optional<Objective> objective_from_string(std::string_view s) {
  if (s == "gap") return Objective::gap;
  if (s == "accuracy") return Objective::accuracy;
  return std::nullopt;
}

void SweepConfig::validate() const {
  if (multipliers.empty()) fail(ErrorKind::config, "sweep needs at least one multiplier");
  std::set<double> seen;
  for (double m : multipliers) {
    if (!std::isfinite(m)) fail(ErrorKind::config, "sweep multipliers must be finite");
    if (m == 0.0) {
      fail(ErrorKind::config, "0 is the unsteered baseline and may not appear in the sweep grid");
    }
    if (!seen.insert(m).second) fail(ErrorKind::config, "duplicate sweep multiplier");
  }
  std::set<std::size_t> ls(layers.begin(), layers.end());
  if (ls.size() != layers.size()) fail(ErrorKind::config, "duplicate sweep layer");
}

bool better_cell(const SweepCell& a, const SweepCell& b, Objective objective) {
  const double va = objective == Objective::gap ? a.gap : a.accuracy_delta;
  const double vb = objective == Objective::gap ? b.gap : b.accuracy_delta;
  if (va != vb) return va > vb;
  // Accuracy moves in whole samples, so break its ties on the gap first.
  if (objective == Objective::accuracy && a.gap != b.gap) return a.gap > b.gap;
  if (a.layer != b.layer) return a.layer < b.layer;
  if (std::abs(a.multiplier) != std::abs(b.multiplier)) {
    return std::abs(a.multiplier) < std::abs(b.multiplier);
  }
  return a.multiplier > b.multiplier;
}

Baseline measure_baseline(const tinylm::ModelParams& params, const Tokenizer& tokenizer,
                          std::span<const EvalSample> samples) {
  if (samples.empty()) fail(ErrorKind::input, "validation set is empty");
  Baseline b;
  std::size_t hits = 0;
  for (const auto& s : samples) {
    const auto slot = verdict_slot(params, tokenizer, s, nullptr);
    b.gold_prob.push_back(slot.gold_prob);
    hits += slot.argmax_is_gold;
  }
  b.accuracy = static_cast<double>(hits) / static_cast<double>(samples.size());
  return b;
}

KindSweep sweep_kind(const tinylm::ModelParams& params, const Tokenizer& tokenizer,
                     DirectionKind kind, const probe::ProbeStore& probes,
                     const SweepConfig& config, std::span<const EvalSample> samples,
                     const Baseline& baseline) {
  config.validate();
  if (samples.empty()) fail(ErrorKind::input, "validation set is empty");
  if (baseline.gold_prob.size() != samples.size()) {
    fail(ErrorKind::input, "baseline does not match the validation set");
  }
  const std::size_t n_layers = params.config().n_layers;
  std::vector<std::size_t> layers = config.layers;
  if (layers.empty()) {
    for (std::size_t l = 0; l < n_layers; ++l) layers.push_back(l);
  }

  KindSweep out;
  out.kind = kind;
  out.multipliers = config.multipliers;
  const double n = static_cast<double>(samples.size());
  for (std::size_t layer : layers) {
    if (layer >= n_layers) {
      fail(ErrorKind::config, "sweep layer " + std::to_string(layer) + " is out of range");
    }
    const auto* rec = probe::find_probe(probes, kind, layer);
    if (!rec) {
      out.warnings.push_back(std::string(to_string(kind)) + " layer " + std::to_string(layer) +
                             ": no probe, skipped");
      continue;
    }
    SteeringVector unit;
    try {
      unit = probe::to_steering(rec->probe, 1.0, kind);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::degenerate) throw;
      out.warnings.push_back(std::string(to_string(kind)) + " layer " + std::to_string(layer) +
                             ": " + e.what() + ", skipped");
      continue;
    }
    std::vector<SweepCell> row;
    for (double alpha : config.multipliers) {
      auto s = unit;
      s.multiplier = alpha;
      double gap = 0.0;
      std::size_t hits = 0;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto slot = verdict_slot(params, tokenizer, samples[i], &s);
        gap += slot.gold_prob - baseline.gold_prob[i];
        hits += slot.argmax_is_gold;
      }
      SweepCell cell{layer, alpha, gap / n, static_cast<double>(hits) / n - baseline.accuracy};
      if (!out.best || better_cell(cell, *out.best, config.select_on)) {
        out.best = cell;
        out.best_vector = s;
      }
      row.push_back(cell);
    }
    out.layers.push_back(layer);
    out.cells.push_back(std::move(row));
  }
  return out;
}

const KindSweep* SweepResult::find(DirectionKind kind) const {
  for (const auto& k : per_kind) {
    if (k.kind == kind) return &k;
  }
  return nullptr;
}

SweepResult sweep(const tinylm::ModelParams& params, const Tokenizer& tokenizer,
                  std::span<const DirectionKind> kinds, const probe::ProbeStore& probes,
                  const SweepConfig& config, std::span<const EvalSample> samples) {
  config.validate();
  SweepResult out;
  out.baseline = measure_baseline(params, tokenizer, samples);
  for (auto kind : kinds) {
    out.per_kind.push_back(sweep_kind(params, tokenizer, kind, probes, config, samples,
                                      out.baseline));
  }
  return out;
}

std::string layer_curve_csv(const SweepResult& result, Objective objective) {
  std::string out = "kind,layer,best_multiplier,best_gap,best_accuracy_delta\n";
  char line[160];
  for (const auto& k : result.per_kind) {
    for (std::size_t li = 0; li < k.layers.size(); ++li) {
      const SweepCell* best = nullptr;
      for (const auto& c : k.cells[li]) {
        if (!best || better_cell(c, *best, objective)) best = &c;
      }
      std::snprintf(line, sizeof line, "%s,%zu,%.6g,%.6f,%.6f\n",
                    std::string(to_string(k.kind)).c_str(), k.layers[li], best->multiplier,
                    best->gap, best->accuracy_delta);
      out += line;
    }
  }
  return out;
}

SteeredDecodePlan select_direction(const KindSweep* iv, const KindSweep* kv, Objective objective) {
  auto value = [&](const KindSweep* k) -> std::optional<double> {
    if (!k || !k->available()) return std::nullopt;
    return objective == Objective::gap ? k->best->gap : k->best->accuracy_delta;
  };
  SteeredDecodePlan plan;
  plan.selection.objective = objective;
  plan.selection.iv_value = value(iv);
  plan.selection.kv_value = value(kv);
  const auto& vi = plan.selection.iv_value;
  const auto& vk = plan.selection.kv_value;
  if (!vi && !vk) fail(ErrorKind::no_direction, "neither IV nor KV produced a usable sweep cell");
  if (!vi) {
    plan.chosen = *kv->best_vector;
    plan.selection.note = "IV unavailable; KV chosen";
  } else if (!vk) {
    plan.chosen = *iv->best_vector;
    plan.selection.note = "KV unavailable; IV chosen";
  } else if (*vi > *vk) {
    plan.chosen = *iv->best_vector;
    plan.fallback = *kv->best_vector;
    plan.selection.note = "IV has the larger best value";
  } else {
    plan.chosen = *kv->best_vector;
    plan.fallback = *iv->best_vector;
    plan.selection.note = *vi == *vk ? "tie; KV preferred" : "KV has the larger best value";
  }
  return plan;
}

Metrics score(std::span<const VerdictLabel> gold,
              std::span<const std::optional<VerdictLabel>> predicted) {
  if (gold.size() != predicted.size()) fail(ErrorKind::input, "gold and predictions differ in length");
  if (gold.empty()) fail(ErrorKind::input, "cannot score an empty evaluation");
  Metrics m;
  m.n = gold.size();
  std::array<std::size_t, 3> tp{}, fp{}, fn{};
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto g = to_index(gold[i]);
    ++m.per_label[g].support;
    if (!predicted[i]) {
      ++m.parse_failures;
      ++fn[g];
      continue;
    }
    const auto p = to_index(*predicted[i]);
    if (p == g) {
      ++tp[g];
      ++hits;
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  double f1_sum = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    auto& s = m.per_label[k];
    s.precision = ratio(tp[k], tp[k] + fp[k]);
    s.recall = ratio(tp[k], tp[k] + fn[k]);
    s.f1 = s.precision + s.recall > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    f1_sum += s.f1;
  }
  m.macro_f1 = f1_sum / 3.0;
  m.accuracy = ratio(hits, m.n);
  return m;
}

EvalResult steered_eval(const tinylm::ModelParams& params, const Tokenizer& tokenizer,
                        const SteeringVector* steering, std::span<const EvalSample> samples,
                        std::size_t max_new) {
  if (samples.empty()) fail(ErrorKind::input, "steered_eval needs at least one sample");
  if (steering) tinylm::check_steering(params.config(), *steering);
  const std::size_t max_len = params.config().max_seq_len;
  EvalResult out;
  std::vector<VerdictLabel> gold;
  std::vector<std::optional<VerdictLabel>> pred;
  for (const auto& s : samples) {
    const auto prompt = tokenizer.encode(s.dialogue.prompt_text);
    if (prompt.size() >= max_len) {
      fail(ErrorKind::input, "prompt of sample " + s.id + " does not fit max_seq_len");
    }
    tinylm::DecodeOptions d;
    d.max_new = std::min(max_new, max_len - prompt.size());
    d.eos_id = tokenizer.eos_id();
    d.steering = steering;
    auto generated = tinylm::greedy_decode(params, prompt, d);
    if (!generated.empty() && generated.back() == tokenizer.eos_id()) generated.pop_back();
    Prediction p{s.id, s.gold, std::nullopt, tokenizer.decode(generated)};
    p.predicted = corpus::parse_verdict(p.text);
    gold.push_back(p.gold);
    pred.push_back(p.predicted);
    out.predictions.push_back(std::move(p));
  }
  out.metrics = score(gold, pred);
  return out;
}

}  // namespace reflex::steering
