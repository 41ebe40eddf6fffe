#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <span>
#include <vector>

#include "reflex/pairs.hpp"
#include "reflex/steering_vector.hpp"

namespace reflex::probe {

struct ProbeOptions {
  double regularization = 0.01;  // L2 on the weights, not the bias
  std::size_t iterations = 500;
  double learning_rate = 0.1;
  /// Train on per-dimension standardized features, then fold the scaling
  /// back into the weights and bias.
  bool standardize = false;
  /// Recorded with the probe; zero-initialized full-batch descent is
  /// deterministic on its own.
  std::uint64_t seed = 0;
};

/// Logistic probe p(z = 1 | h) = sigmoid(w . h + b) on raw features.
struct ProbeModel {
  std::size_t layer = 0;
  std::vector<double> weights;
  double bias = 0.0;
  double train_accuracy = 0.0;
  std::size_t n_pairs = 0;
  ProbeOptions options;

  double weight_norm() const;
};

/// Trains on rows of `features` labeled by `labels` (1 or 0). Throws
/// Error(input) on mismatched sizes or fewer than two rows per label,
/// Error(degenerate) when every row is identical and Error(numeric) when
/// the loss stops being finite.
ProbeModel train_logistic(std::span<const std::vector<float>> features,
                          std::span<const int> labels, std::size_t layer,
                          const ProbeOptions& options);

/// Positives labeled 1, negatives 0. Needs at least two pairs.
ProbeModel train_probe(const pairs::ContrastivePairSet& pairs, const ProbeOptions& options);

double probe_logit(const ProbeModel& probe, std::span<const float> feature);

/// Fraction of pairs whose positive scores strictly above its negative.
double pair_accuracy(const ProbeModel& probe, std::span<const pairs::ContrastivePair> pairs);

/// direction = w / |w|; the bias is dropped. Throws Error(degenerate) on a
/// zero weight vector.
SteeringVector to_steering(const ProbeModel& probe, double multiplier, DirectionKind kind);

/// logit(h + multiplier * direction) - logit(h).
double probe_logit_shift(const ProbeModel& probe, std::span<const float> feature,
                         const SteeringVector& steering);

struct PairSplit {
  std::vector<pairs::ContrastivePair> train;
  std::vector<pairs::ContrastivePair> heldout;
};

/// Seeded shuffle, then the first ceil(fraction * n) pairs are held out.
PairSplit split_pairs(std::span<const pairs::ContrastivePair> all, double heldout_fraction,
                      std::uint64_t seed);

// ---------------------------------------------------------------------------
// probes.json

struct ProbeRecord {
  DirectionKind kind = DirectionKind::KV;
  ProbeModel probe;
  std::optional<double> heldout_accuracy;  // pairwise ordering on held-out pairs
  std::size_t heldout_pairs = 0;
};

struct ProbeStore {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<ProbeRecord> probes;
  std::vector<SteeringVector> steering;
  std::vector<std::string> warnings;
};

void write_probe_store(const std::filesystem::path& path, const ProbeStore& store);
ProbeStore read_probe_store(const std::filesystem::path& path);

/// Probe for (kind, layer), or nullptr.
const ProbeRecord* find_probe(const ProbeStore& store, DirectionKind kind, std::size_t layer);

}  // namespace reflex::probe
