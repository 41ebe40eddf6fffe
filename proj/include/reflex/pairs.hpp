#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reflex/activations.hpp"
#include "reflex/verdict.hpp"

namespace reflex::pairs {

/// II: fine-tuning fixed a backbone error. IV: fine-tuning broke a
/// backbone-correct answer.
enum class Quadrant { II, IV, agree_correct, agree_wrong };

std::string_view to_string(Quadrant q);
std::optional<Quadrant> quadrant_from_string(std::string_view s);

Quadrant classify_quadrant(VerdictLabel v_base, VerdictLabel v_sft, VerdictLabel v_gold);

struct QuadrantRecord {
  std::string sample_id;
  VerdictLabel v_base = VerdictLabel::False;
  VerdictLabel v_sft = VerdictLabel::False;
  VerdictLabel v_gold = VerdictLabel::False;
  Quadrant quadrant = Quadrant::agree_correct;

  bool operator==(const QuadrantRecord&) const = default;
};

struct QuadrantReport {
  std::vector<QuadrantRecord> records;
  /// Sample ids where either run failed to yield a verdict; excluded above.
  std::vector<std::string> parse_failures;
};

/// Joins two runs by sample id. `first` plays the backbone role and `second`
/// the fine-tuned role. Throws Error(input) when the id sets differ.
QuadrantReport build_quadrants(std::span<const activations::ActivationSet> first,
                               std::span<const activations::ActivationSet> second);

struct TransferMetrics {
  std::size_t hallucinated_count = 0;       // |IV|
  std::size_t inference_success_count = 0;  // |II|
  std::size_t base_correct_count = 0;       // |IV| + |agree_correct|
  std::size_t base_error_count = 0;         // |II| + |agree_wrong|
  std::optional<double> hr;                 // nullopt when base_correct_count == 0
  std::optional<double> isr;                // nullopt when base_error_count == 0
};

/// Throws Error(input) on an empty list.
TransferMetrics compute_hr_isr(std::span<const QuadrantRecord> records);

// ---------------------------------------------------------------------------
// Contrastive pairs

enum class DirectionPolicy { style_substance, truth, base, sft };
enum class PairingMode { vertical, horizontal, self };

std::string_view to_string(DirectionPolicy p);
std::optional<DirectionPolicy> direction_policy_from_string(std::string_view s);
std::string_view to_string(PairingMode m);
std::optional<PairingMode> pairing_mode_from_string(std::string_view s);

/// Where a pooled feature came from.
struct FeatureTag {
  std::string sample_id;
  activations::Source source = activations::Source::base;
  std::size_t run = 0;  // 0: first collection, 1: second
  std::optional<VerdictLabel> predicted;
  VerdictLabel gold = VerdictLabel::False;

  bool correct() const { return predicted && *predicted == gold; }
};

struct ContrastivePair {
  std::vector<float> positive;  // z = 1
  std::vector<float> negative;  // z = 0
  FeatureTag positive_tag;
  FeatureTag negative_tag;
  std::optional<Quadrant> quadrant;
};

struct ContrastivePairSet {
  std::vector<ContrastivePair> pairs;
  std::size_t layer = 0;
  DirectionPolicy policy = DirectionPolicy::style_substance;
  PairingMode mode = PairingMode::vertical;
  activations::Pooling pooling = activations::Pooling::last_prompt_token;
  std::array<std::size_t, 4> quadrant_counts{};  // indexed by Quadrant
  std::size_t parse_failures = 0;

  std::size_t dim() const { return pairs.empty() ? 0 : pairs.front().positive.size(); }
};

/// Builds pairs for one layer.
///   style_substance: on each II/IV sample the correct side is positive.
///   truth: correct-run features are positives, incorrect-run features are
///          negatives, zipped in sample order up to the shorter list.
///   base / sft: that run's feature is positive on every shared sample.
/// vertical expects (base, sft) sources, horizontal (sft, sft); self pairs a
/// collection with itself. Samples with a parse failure on either side are
/// skipped. Throws Error(insufficient_signal) when no pair results.
ContrastivePairSet select_pairs(std::span<const activations::ActivationSet> first,
                                std::span<const activations::ActivationSet> second,
                                std::size_t layer, DirectionPolicy policy, PairingMode mode,
                                activations::Pooling pooling);

/// Pairs of the given quadrant only (IV for the knowledge vector, II for the
/// inference vector).
ContrastivePairSet filter_quadrant(const ContrastivePairSet& set, Quadrant q);

// ---------------------------------------------------------------------------
// Report files

void write_quadrant_records(const std::filesystem::path& path,
                            std::span<const QuadrantRecord> records);
std::vector<QuadrantRecord> read_quadrant_records(const std::filesystem::path& path);

}  // namespace reflex::pairs
