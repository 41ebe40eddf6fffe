#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "reflex/activations.hpp"
#include "reflex/corpus.hpp"
#include "reflex/pairs.hpp"
#include "reflex/probe.hpp"
#include "reflex/refine.hpp"
#include "reflex/steering.hpp"
#include "reflex/tinylm.hpp"

// Stage orchestration shared by the CLI and the acceptance suite. Every stage
// reads its inputs from and writes its artifacts to one output directory.
namespace reflex::pipeline {

using nlohmann::json;

namespace artifact {
inline constexpr std::string_view config = "config.json";
inline constexpr std::string_view corpus = "corpus.ndjson";
inline constexpr std::string_view corpus_summary = "corpus.summary.json";
inline constexpr std::string_view base_ckpt = "base.ckpt";
inline constexpr std::string_view sft_ckpt = "sft.ckpt";
inline constexpr std::string_view train_summary = "train.summary.json";
inline constexpr std::string_view predictions = "predictions.ndjson";
inline constexpr std::string_view infer_summary = "infer.summary.json";
inline constexpr std::string_view dumps = "dumps";
inline constexpr std::string_view dump_summary = "dumps.summary.json";
inline constexpr std::string_view quadrants = "quadrants.ndjson";
inline constexpr std::string_view quadrant_summary = "quadrants.summary.json";
inline constexpr std::string_view probes = "probes.json";
inline constexpr std::string_view sweep = "sweep.json";
inline constexpr std::string_view layer_curve = "layer_curve.csv";
inline constexpr std::string_view steered_metrics = "steered_metrics.json";
inline constexpr std::string_view refine = "refine.ndjson";
inline constexpr std::string_view refine_summary = "refine.summary.json";
inline constexpr std::string_view html = "html";
inline constexpr std::string_view eval = "eval.json";
inline constexpr std::string_view report = "report.json";
}  // namespace artifact

struct CorpusSection {
  std::optional<std::string> path;  // load instead of generating
  corpus::CorpusSpec spec;          // spec.seed is derived from the run seed
  bool drop_without_evidence = false;
};

/// Shift planted into the fine-tuned model after training: magnitude times
/// the unit True-minus-False class-mean direction of its verdict-slot states
/// is subtracted from layers.{layer}.mlp.b2.
struct DriftSection {
  bool enabled = true;
  std::optional<std::size_t> layer;  // unset: drawn from the run seed
  double magnitude = 1.5;
};

struct PairingSection {
  pairs::PairingMode mode = pairs::PairingMode::vertical;
  pairs::DirectionPolicy policy = pairs::DirectionPolicy::style_substance;
  activations::Pooling pooling = activations::Pooling::last_prompt_token;
  corpus::Split split = corpus::Split::train;
  /// io mode of the first sft run in horizontal mode.
  corpus::IoMode horizontal_io = corpus::IoMode::claim_to_verdict;
};

struct ProbeSection {
  probe::ProbeOptions options;
  double heldout_fraction = 0.3;
};

struct SweepSection {
  steering::SweepConfig config;
  corpus::Split split = corpus::Split::eval;
};

struct SteerSection {
  std::vector<corpus::Split> splits = {corpus::Split::eval, corpus::Split::test};
};

struct RefineSection {
  refine::DensityConfig density;
  double ro_threshold = 0.8;
  std::size_t min_pattern_frequency = 3;
  corpus::Split split = corpus::Split::test;
  std::size_t html_samples = 5;
};

struct RunConfig {
  std::uint64_t seed = 0;
  CorpusSection corpus;
  tinylm::ModelConfig model;  // vocab_size and seed are filled in by train
  tinylm::TrainOptions base_training;
  tinylm::TrainOptions sft_training;
  corpus::IoMode base_io = corpus::IoMode::claim_to_verdict;
  corpus::IoMode sft_io = corpus::IoMode::claim_to_verdict_explanation;
  bool restyle_base = true;  // train the backbone on style-shuffled claims
  DriftSection drift;
  PairingSection pairing;
  ProbeSection probe;
  SweepSection sweep;
  SteerSection steer;
  RefineSection refine;
  std::size_t max_new = 40;

  /// The toy run used by run-all when no config is given.
  static RunConfig defaults();

  /// Missing keys keep their defaults; unknown keys and bad values throw
  /// Error(config).
  static RunConfig from_json(const json& j);
  json to_json() const;

  void validate() const;

  /// FNV-1a of the canonical JSON form, as 16 hex digits.
  std::string hash() const;

  /// Seed for one stage, derived from the run seed and the stage name.
  std::uint64_t stage_seed(std::string_view stage) const;
};

/// Applies "a.b.c=value" overrides to a config document. The value is
/// parsed as JSON when possible, else taken as a string.
void apply_override(json& doc, std::string_view assignment);

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

struct Context {
  RunConfig config;
  std::filesystem::path out;
};

/// Each stage returns its one-line JSON summary. Missing inputs raise
/// DependencyError naming the stage that produces them.
json gen_corpus(const Context& ctx);
json train(const Context& ctx);
json infer(const Context& ctx);
json dump_acts(const Context& ctx);
json pair(const Context& ctx);
json train_probes(const Context& ctx);
json sweep(const Context& ctx);
json steer(const Context& ctx);
json refine_stage(const Context& ctx);
json eval(const Context& ctx);
json report(const Context& ctx);

/// Every stage in order; returns the per-stage summaries.
std::vector<json> run_all(const Context& ctx);

/// Names in run-all order.
const std::vector<std::string>& stage_names();

json run_stage(std::string_view name, const Context& ctx);

// Helpers shared with the acceptance suite.
json metrics_json(const steering::Metrics& m);
std::vector<corpus::ClaimRecord> load_corpus_artifact(const std::filesystem::path& out);

}  // namespace reflex::pipeline
