#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reflex/verdict.hpp"

namespace reflex::corpus {

enum class Split { train, eval, test };

std::string_view to_string(Split split);
std::optional<Split> split_from_string(std::string_view s);

/// The four input/output configurations: claim with or without evidence in,
/// verdict with or without explanation out.
enum class IoMode {
  claim_to_verdict,
  claim_to_verdict_explanation,
  claim_evidence_to_verdict,
  claim_evidence_to_verdict_explanation,
};

/// "c->v", "c->v;exp", "c;evi->v", "c;evi->v;exp".
std::string_view to_string(IoMode mode);
std::optional<IoMode> io_mode_from_string(std::string_view s);
bool uses_evidence(IoMode mode);
bool wants_explanation(IoMode mode);

struct ClaimRecord {
  std::string id;
  std::string claim;
  std::optional<std::vector<std::string>> evidence;
  VerdictLabel verdict = VerdictLabel::False;
  std::string explanation;
  Split split = Split::train;

  bool operator==(const ClaimRecord&) const = default;
};

struct DialogueSample {
  std::string prompt_text;
  std::string target_text;
  IoMode io_mode = IoMode::claim_to_verdict;
};

// ---------------------------------------------------------------------------
// Label unification

enum class LabelScheme { rawfc, liar6, averitec };

std::optional<LabelScheme> label_scheme_from_string(std::string_view s);

/// Maps a dataset-native label onto the three-way scale. Returns nullopt when
/// the scheme drops the label (AveriTec "Conflicting Evidence/Cherrypicking").
/// Throws Error(scheme) for labels outside the scheme.
std::optional<VerdictLabel> unify_labels(std::string_view raw_label, LabelScheme scheme);

// ---------------------------------------------------------------------------
// Dialogue formatting and verdict parsing

/// Text the assistant turn starts with; the verdict word follows it.
inline constexpr std::string_view kVerdictPrefix = "Verdict:";

DialogueSample format_dialogue(const ClaimRecord& record, IoMode mode);

/// Finds "Verdict: <label>" case-insensitively. nullopt when no verdict line
/// is present or when several verdict lines disagree.
std::optional<VerdictLabel> parse_verdict(std::string_view text);

// ---------------------------------------------------------------------------
// Synthetic corpus

/// Closed world of subject/predicate facts. Each atom either holds or not.
struct FactAtom {
  std::string subject;
  std::string predicate;
  bool holds = false;
};

class FactWorld {
 public:
  static FactWorld build(std::size_t n_subjects, std::size_t n_predicates, std::uint64_t seed);

  const std::vector<FactAtom>& atoms() const { return atoms_; }
  std::optional<bool> holds(std::string_view subject, std::string_view predicate) const;

  /// Re-derives the verdict of a generated claim from the atoms it mentions.
  std::optional<VerdictLabel> recompute_verdict(std::string_view claim) const;

 private:
  std::vector<FactAtom> atoms_;
};

/// Verdict as a function of atom truth: none hold -> False, one -> Half,
/// both -> True.
VerdictLabel verdict_from_truths(int n_true, int n_atoms);

struct StyleKnobs {
  /// Probability that the opener phrase is drawn from a label-specific subset.
  double label_correlation = 0.0;
  /// Probability of planting one boilerplate sentence in an explanation.
  double boilerplate_rate = 0.0;
};

struct CorpusSpec {
  std::size_t n_train = 240;
  std::size_t n_eval = 60;
  std::size_t n_test = 60;
  std::array<double, 3> label_balance = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  std::size_t n_subjects = 6;
  std::size_t n_predicates = 4;
  bool with_evidence = true;
  StyleKnobs style;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-label counts for n samples under the given proportions, using
/// largest-remainder rounding (ties to the lower label).
std::array<std::size_t, 3> label_counts(std::size_t n, const std::array<double, 3>& balance);

std::vector<ClaimRecord> generate_corpus(const CorpusSpec& spec);

/// World used by generate_corpus for this spec.
FactWorld world_for(const CorpusSpec& spec);

/// Boilerplate sentences the generator may plant in explanations.
std::span<const std::string_view> boilerplate_sentences();

/// Redraws the style phrasing of every claim with a fresh seed, leaving the
/// fact atoms and verdicts untouched.
std::vector<ClaimRecord> restyle(std::span<const ClaimRecord> records, std::uint64_t seed);

std::vector<ClaimRecord> select_split(std::span<const ClaimRecord> records, Split split);

/// Every text the toy tokenizer must cover for these records (prompts and
/// targets in all io modes).
std::vector<std::string> vocabulary_texts(std::span<const ClaimRecord> records);

// ---------------------------------------------------------------------------
// NDJSON corpus files

void write_corpus(const std::filesystem::path& path, std::span<const ClaimRecord> records);

struct LoadOptions {
  /// Mirrors the LIAR-RAW filter: records without evidence are dropped and counted.
  bool drop_without_evidence = false;
};

struct LoadResult {
  std::vector<ClaimRecord> records;
  std::size_t dropped_without_evidence = 0;
};

LoadResult read_corpus(const std::filesystem::path& path, const LoadOptions& options = {});

}  // namespace reflex::corpus
