#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reflex/corpus.hpp"
#include "reflex/probe.hpp"
#include "reflex/steering_vector.hpp"
#include "reflex/tinylm.hpp"
#include "reflex/tokenizer.hpp"

namespace reflex::steering {

/// A prompt with its gold verdict.
struct EvalSample {
  std::string id;
  corpus::DialogueSample dialogue;
  VerdictLabel gold = VerdictLabel::False;
};

std::vector<EvalSample> make_eval_samples(std::span<const corpus::ClaimRecord> records,
                                          corpus::IoMode mode);

/// Model state at the verdict slot: the prompt followed by the forced
/// "Verdict:" prefix, where the label word is decoded next.
struct VerdictSlot {
  std::array<double, 3> label_prob{};  // softmax mass on false / half / true
  std::size_t argmax_id = 0;           // over the whole vocabulary
  bool argmax_is_gold = false;
  double gold_prob = 0.0;
};

VerdictSlot verdict_slot(const tinylm::ModelParams& params, const Tokenizer& tokenizer,
                         const EvalSample& sample, const SteeringVector* steering);

/// Mean over samples of steered minus unsteered gold-label probability at
/// the verdict slot. Throws Error(input) on an empty sample list.
double probability_gap(const tinylm::ModelParams& params, const Tokenizer& tokenizer,
                       const SteeringVector& steering, std::span<const EvalSample> samples);

enum class Objective { gap, accuracy };

std::string_view to_string(Objective o);
std::optional<Objective> objective_from_string(std::string_view s);

struct SweepConfig {
  std::vector<std::size_t> layers;  // empty: every layer
  std::vector<double> multipliers = {-2.0, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0};
  Objective select_on = Objective::gap;

  /// Throws Error(config) on an empty grid, a zero multiplier or duplicates.
  void validate() const;
};

struct SweepCell {
  std::size_t layer = 0;
  double multiplier = 0.0;
  double gap = 0.0;             // mean delta P
  double accuracy_delta = 0.0;  // verdict-slot accuracy, steered minus unsteered
};

/// Whether a beats b: larger objective, then lower layer, then smaller
/// |multiplier|, then positive multiplier.
bool better_cell(const SweepCell& a, const SweepCell& b, Objective objective);

struct KindSweep {
  DirectionKind kind = DirectionKind::KV;
  std::vector<std::size_t> layers;  // layers that were actually swept
  std::vector<double> multipliers;
  std::vector<std::vector<SweepCell>> cells;  // [layer][multiplier]
  std::optional<SweepCell> best;
  std::optional<SteeringVector> best_vector;
  std::vector<std::string> warnings;

  bool available() const { return best.has_value(); }
};

struct Baseline {
  std::vector<double> gold_prob;  // per sample
  double accuracy = 0.0;          // verdict-slot accuracy
};

Baseline measure_baseline(const tinylm::ModelParams& params, const Tokenizer& tokenizer,
                          std::span<const EvalSample> samples);

/// Fills the gap matrix for one direction kind. Layers without a probe in
/// the store, or whose probe is degenerate, are skipped with a warning.
KindSweep sweep_kind(const tinylm::ModelParams& params, const Tokenizer& tokenizer,
                     DirectionKind kind, const probe::ProbeStore& probes,
                     const SweepConfig& config, std::span<const EvalSample> samples,
                     const Baseline& baseline);

struct SweepResult {
  Baseline baseline;
  std::vector<KindSweep> per_kind;

  const KindSweep* find(DirectionKind kind) const;
};

SweepResult sweep(const tinylm::ModelParams& params, const Tokenizer& tokenizer,
                  std::span<const DirectionKind> kinds, const probe::ProbeStore& probes,
                  const SweepConfig& config, std::span<const EvalSample> samples);

/// Best layer and value for every layer of one kind, for plotting.
std::string layer_curve_csv(const SweepResult& result, Objective objective);

struct SelectionRecord {
  std::optional<double> iv_value;
  std::optional<double> kv_value;
  Objective objective = Objective::gap;
  std::string note;
};

struct SteeredDecodePlan {
  SteeringVector chosen;
  std::optional<SteeringVector> fallback;
  SelectionRecord selection;
};

/// Larger best value wins; ties go to KV. Throws Error(no_direction) when
/// neither sweep produced a cell.
SteeredDecodePlan select_direction(const KindSweep* iv, const KindSweep* kv, Objective objective);

// ---------------------------------------------------------------------------
// Evaluation

struct LabelScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct Metrics {
  std::size_t n = 0;
  std::size_t parse_failures = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::array<LabelScores, 3> per_label{};
};

/// Macro-averaged precision/recall/F1 over the three labels. A missing
/// prediction counts against the gold label's recall only.
Metrics score(std::span<const VerdictLabel> gold,
              std::span<const std::optional<VerdictLabel>> predicted);

struct Prediction {
  std::string id;
  VerdictLabel gold = VerdictLabel::False;
  std::optional<VerdictLabel> predicted;
  std::string text;
};

struct EvalResult {
  Metrics metrics;
  std::vector<Prediction> predictions;
};

/// Greedy-decodes every sample with the steering vector active at all
/// positions (nullptr: unsteered) and scores the parsed verdicts.
EvalResult steered_eval(const tinylm::ModelParams& params, const Tokenizer& tokenizer,
                        const SteeringVector* steering, std::span<const EvalSample> samples,
                        std::size_t max_new = 40);

}  // namespace reflex::steering
