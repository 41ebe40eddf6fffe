#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reflex/corpus.hpp"
#include "reflex/hidden.hpp"
#include "reflex/tinylm.hpp"
#include "reflex/tokenizer.hpp"
#include "reflex/verdict.hpp"

namespace reflex::activations {

enum class Source { base, sft };

std::string_view to_string(Source source);
std::optional<Source> source_from_string(std::string_view s);

enum class Pooling { last_prompt_token, mean_answer_tokens };

std::string_view to_string(Pooling pooling);
std::optional<Pooling> pooling_from_string(std::string_view s);

/// Hidden states of one (sample, model) run over prompt + generated tokens.
struct ActivationSet {
  std::string sample_id;
  VerdictLabel gold = VerdictLabel::False;
  std::optional<VerdictLabel> predicted;  // nullopt: verdict did not parse
  Source source = Source::base;
  HiddenStates hidden;
  /// Last prompt token.
  std::size_t probe_feature_position = 0;
  /// First generated token; equals hidden.n_tokens when nothing was generated.
  std::size_t answer_start = 0;
  std::string generated_text;

  bool correct() const { return predicted && *predicted == gold; }
};

struct CaptureOptions {
  std::size_t max_new = 40;
};

/// Greedy-decodes the prompt, re-runs the model over prompt + generation
/// (without the trailing <eos>) and records every layer.
ActivationSet capture(const tinylm::ModelParams& params, const Tokenizer& tokenizer,
                      std::string sample_id, const corpus::DialogueSample& sample,
                      VerdictLabel gold, Source source, const CaptureOptions& options = {});

/// Probe input for one layer. mean_answer_tokens throws Error(input) when
/// nothing was generated.
std::vector<float> pool_feature(const ActivationSet& set, std::size_t layer, Pooling pooling);

// ---------------------------------------------------------------------------
// Dump directory: manifest.json, index.ndjson, activations.bin

inline constexpr std::string_view kDumpDtype = "f32-le";

struct DumpManifest {
  std::string model_id;
  std::size_t n_layers = 0;
  std::size_t hidden_dim = 0;
  std::string dtype{kDumpDtype};
  std::size_t record_count = 0;
  std::string created_by = "internal";  // or "external"

  bool operator==(const DumpManifest&) const = default;
};

/// Throws Error(format) when shapes differ across sets and Error(input) on an
/// empty collection.
DumpManifest write_dump(const std::filesystem::path& dir, std::span<const ActivationSet> sets,
                        const std::string& model_id, const std::string& created_by = "internal");

struct Dump {
  DumpManifest manifest;
  std::vector<ActivationSet> sets;
};

Dump read_dump(const std::filesystem::path& dir);

}  // namespace reflex::activations
