#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reflex/hidden.hpp"
#include "reflex/steering_vector.hpp"
#include "reflex/tinylm.hpp"
#include "reflex/tokenizer.hpp"

namespace reflex::refine {

/// Half-open token range [start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  bool operator==(const Span&) const = default;
};

struct AlignmentTrace {
  std::vector<std::string> tokens;
  std::vector<double> scores;  // cosine against the steering direction
  std::size_t layer = 0;
  std::vector<Span> sentence_spans;
  std::size_t zero_norm_tokens = 0;  // scored 0
};

/// Sentences split after "." "!" "?"; a trailing unterminated run is its own span.
std::vector<Span> sentence_spans(std::span<const std::string> tokens);

/// Cosine of hidden[steering.layer][first_token + i] against the direction,
/// for each of `tokens`. Throws Error(shape) on a dimension or count mismatch.
AlignmentTrace alignment_scores(const HiddenStates& hidden, std::size_t first_token,
                                std::vector<std::string> tokens, const SteeringVector& steering);

/// Scores the tokens of trace from `first_token` on, with words from the tokenizer.
AlignmentTrace alignment_scores(const tinylm::ForwardTrace& trace, const Tokenizer& tokenizer,
                                std::size_t first_token, const SteeringVector& steering);

/// Builds a trace from precomputed scores, e.g. for replaying a refinement.
AlignmentTrace make_trace(std::vector<std::string> tokens, std::vector<double> scores,
                          std::size_t layer = 0);

/// 2M / (|a| + |b|) over recursive longest-match decomposition; ties go to
/// the earliest match in a, then in b. Two empty strings score 1.
double ro_similarity(std::string_view a, std::string_view b);

/// Matched character count M of the decomposition above.
std::size_t ro_matches(std::string_view a, std::string_view b);

struct DensityConfig {
  double score_threshold = 0.0;    // <= 0
  double density_threshold = 0.6;  // in (0, 1]

  /// Throws Error(config) when out of range.
  void validate() const;
};

/// Sentences whose fraction of tokens scoring below score_threshold is at
/// least density_threshold.
std::vector<Span> detect_negative_spans(const AlignmentTrace& trace, const DensityConfig& config);

/// Joined token text of a span.
std::string span_text(const AlignmentTrace& trace, Span span);

/// Span texts occurring at least min_frequency times, in order of first
/// appearance.
std::vector<std::string> build_pattern_bank(std::span<const std::string> flagged_texts,
                                            std::size_t min_frequency = 3);

struct FlaggedSpan {
  Span span;
  double mean_score = 0.0;
  std::optional<std::string> matched_pattern;
  double best_ratio = 0.0;  // best RO ratio against the bank, 0 when empty
  bool removed = false;
};

struct SuppressionReport {
  std::vector<FlaggedSpan> flagged;
  std::size_t removed_token_count = 0;
  std::string input_text;
  std::string output_text;
  AlignmentTrace output;  // kept tokens with their scores
  std::vector<std::string> warnings;
};

/// True for the sentence that carries "verdict :".
bool is_verdict_span(const AlignmentTrace& trace, Span span);

/// Removes each flagged span whose text matches a bank entry at
/// ro_threshold or above, or every flagged span when the bank is empty.
/// Parts of a span that overlap the verdict sentence are clipped off with a
/// warning. Throws Error(input) on out-of-range or overlapping spans and
/// Error(config) when ro_threshold is outside (0, 1].
SuppressionReport suppress(const AlignmentTrace& trace, std::span<const Span> flagged,
                           std::span<const std::string> pattern_bank, double ro_threshold);

/// Per-token colour: red for positive scores, blue for negative, white at 0.
std::string token_style(double score);

/// Standalone HTML page with one <span> per token and its score as the title.
std::string alignment_html(const AlignmentTrace& trace);

/// Throws Error(io) when the file cannot be written.
void render_alignment_html(const AlignmentTrace& trace, const std::filesystem::path& path);

}  // namespace reflex::refine
