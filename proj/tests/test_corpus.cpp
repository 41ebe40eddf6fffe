#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "reflex/corpus.hpp"
#include "reflex/error.hpp"
#include "reflex/tokenizer.hpp"

using namespace reflex;
using namespace reflex::corpus;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an exception");
  return ErrorKind::io;
}

std::array<std::size_t, 3> tally(std::span<const ClaimRecord> records) {
  std::array<std::size_t, 3> c{};
  for (const auto& r : records) ++c[to_index(r.verdict)];
  return c;
}

constexpr IoMode kModes[] = {IoMode::claim_to_verdict, IoMode::claim_to_verdict_explanation,
                             IoMode::claim_evidence_to_verdict,
                             IoMode::claim_evidence_to_verdict_explanation};

}  // namespace

TEST_CASE("label unification") {
  CHECK(unify_labels("pants-fire", LabelScheme::liar6) == VerdictLabel::False);
  CHECK(unify_labels("barely-true", LabelScheme::liar6) == VerdictLabel::False);
  CHECK(unify_labels("false", LabelScheme::liar6) == VerdictLabel::False);
  CHECK(unify_labels("half-true", LabelScheme::liar6) == VerdictLabel::Half);
  CHECK(unify_labels("mostly-true", LabelScheme::liar6) == VerdictLabel::True);
  CHECK(unify_labels("true", LabelScheme::liar6) == VerdictLabel::True);
  CHECK(unify_labels("half", LabelScheme::rawfc) == VerdictLabel::Half);
  CHECK(unify_labels("true", LabelScheme::rawfc) == VerdictLabel::True);
  CHECK(unify_labels("false", LabelScheme::rawfc) == VerdictLabel::False);
  CHECK(unify_labels("Supported", LabelScheme::averitec) == VerdictLabel::True);
  CHECK(unify_labels("Refuted", LabelScheme::averitec) == VerdictLabel::False);
  CHECK(unify_labels("Not Enough Evidence", LabelScheme::averitec) == VerdictLabel::Half);
  CHECK_FALSE(unify_labels("Conflicting Evidence/Cherrypicking", LabelScheme::averitec));
  CHECK(kind_of([] { unify_labels("pants-fire", LabelScheme::rawfc); }) == ErrorKind::scheme);
  CHECK(kind_of([] { unify_labels("mostly-false", LabelScheme::liar6); }) == ErrorKind::scheme);
  CHECK(kind_of([] { unify_labels("supported", LabelScheme::averitec); }) == ErrorKind::scheme);
}

TEST_CASE("verdict parsing") {
  CHECK(parse_verdict("Verdict: TRUE. Explanation: the river flooded.") == VerdictLabel::True);
  CHECK(parse_verdict("Verdict: half-true, because reasons") == VerdictLabel::Half);
  CHECK(parse_verdict("verdict : false .") == VerdictLabel::False);
  CHECK(parse_verdict("Verdict: Not Enough Evidence") == VerdictLabel::Half);
  CHECK_FALSE(parse_verdict("no verdict here"));
  CHECK_FALSE(parse_verdict(""));
  CHECK_FALSE(parse_verdict("Verdict: maybe"));
  CHECK_FALSE(parse_verdict("Verdict: trueish"));
  CHECK_FALSE(parse_verdict("Verdict: true. Verdict: false."));
  CHECK(parse_verdict("Verdict: true. Verdict: true.") == VerdictLabel::True);
}

TEST_CASE("format_dialogue contracts") {
  const auto records = generate_corpus(CorpusSpec{});
  for (const auto& r : records) {
    for (IoMode m : kModes) {
      const auto d = format_dialogue(r, m);
      CHECK(d.io_mode == m);
      CHECK(d.target_text.starts_with(kVerdictPrefix));
      CHECK(parse_verdict(d.target_text) == r.verdict);
      CHECK((d.target_text.find("Explanation:") != std::string::npos) == wants_explanation(m));
      CHECK((d.prompt_text.find("Evidence:") != std::string::npos) == uses_evidence(m));
      CHECK(d.prompt_text.find(r.claim) != std::string::npos);
      CHECK(d.prompt_text.find("fact-checking assistant") != std::string::npos);
    }
  }
  auto bare = records.front();
  bare.evidence.reset();
  CHECK(kind_of([&] { format_dialogue(bare, IoMode::claim_evidence_to_verdict); }) ==
        ErrorKind::input);
  CHECK_NOTHROW(format_dialogue(bare, IoMode::claim_to_verdict));
}

TEST_CASE("io mode names round trip") {
  for (IoMode m : kModes) CHECK(io_mode_from_string(to_string(m)) == m);
  CHECK_FALSE(io_mode_from_string("c->exp"));
}

TEST_CASE("label balance") {
  CorpusSpec spec;
  spec.n_train = 300;
  const auto train = select_split(generate_corpus(spec), Split::train);
  REQUIRE(train.size() == 300);
  for (auto c : tally(train)) CHECK(c >= 99);
  for (auto c : tally(train)) CHECK(c <= 101);
}

TEST_CASE("label proportions of a 514/537/561 split") {
  const std::array<double, 3> p = {514.0 / 1612, 537.0 / 1612, 561.0 / 1612};
  const auto counts = label_counts(1612, p);
  CHECK(counts[0] == 514);
  CHECK(counts[1] == 537);
  CHECK(counts[2] == 561);

  CorpusSpec spec;
  spec.n_train = 1612;
  spec.label_balance = p;
  const auto c = tally(select_split(generate_corpus(spec), Split::train));
  const std::array<long, 3> want = {514, 537, 561};
  for (int i = 0; i < 3; ++i) CHECK(std::abs(static_cast<long>(c[i]) - want[i]) <= 1);
}

TEST_CASE("label_counts with largest remainder") {
  CHECK(label_counts(10, {1.0 / 3, 1.0 / 3, 1.0 / 3}) == std::array<std::size_t, 3>{4, 3, 3});
  CHECK(label_counts(2, {0.5, 0.0, 0.5}) == std::array<std::size_t, 3>{1, 0, 1});
}

TEST_CASE("invalid corpus specs") {
  CorpusSpec spec;
  spec.label_balance = {0.5, 0.5, 0.5};
  CHECK(kind_of([&] { generate_corpus(spec); }) == ErrorKind::config);
  spec = CorpusSpec{};
  spec.n_eval = 0;
  CHECK(kind_of([&] { generate_corpus(spec); }) == ErrorKind::config);
  spec = CorpusSpec{};
  spec.style.boilerplate_rate = 1.5;
  CHECK(kind_of([&] { generate_corpus(spec); }) == ErrorKind::config);
}

TEST_CASE("generation is deterministic, disjoint and recomputable") {
  CorpusSpec spec;
  spec.style.label_correlation = 0.7;
  spec.style.boilerplate_rate = 0.5;
  const auto a = generate_corpus(spec);
  CHECK(a == generate_corpus(spec));
  spec.seed = 1;
  CHECK_FALSE(a == generate_corpus(spec));
  spec.seed = 0;

  std::set<std::string> ids;
  for (const auto& r : a) ids.insert(r.id);
  CHECK(ids.size() == a.size());
  CHECK(select_split(a, Split::train).size() == spec.n_train);
  CHECK(select_split(a, Split::eval).size() == spec.n_eval);
  CHECK(select_split(a, Split::test).size() == spec.n_test);

  const auto world = world_for(spec);
  std::size_t holding = 0;
  for (const auto& atom : world.atoms()) holding += atom.holds;
  CHECK(holding * 2 == world.atoms().size());
  for (const auto& r : a) CHECK(world.recompute_verdict(r.claim) == r.verdict);

  // Restyling changes surface phrasing only.
  const auto b = restyle(a, 17);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    changed += a[i].claim != b[i].claim;
    CHECK(world.recompute_verdict(b[i].claim) == a[i].verdict);
  }
  CHECK(changed > a.size() / 2);
}

TEST_CASE("verdict_from_truths") {
  CHECK(verdict_from_truths(0, 2) == VerdictLabel::False);
  CHECK(verdict_from_truths(1, 2) == VerdictLabel::Half);
  CHECK(verdict_from_truths(2, 2) == VerdictLabel::True);
}

TEST_CASE("tokenizer covers the generated corpus") {
  const auto records = generate_corpus(CorpusSpec{});
  const auto texts = vocabulary_texts(records);
  const auto tok = Tokenizer::build(texts);
  CHECK(tok.word(0) == "<pad>");
  CHECK(tok.word(1) == "<eos>");
  for (const auto& t : texts) {
    for (auto id : tok.encode(t)) CHECK(id != tok.unk_id());
  }
  const auto d = format_dialogue(records[0], IoMode::claim_to_verdict);
  const auto ids = tok.encode(d.target_text);
  CHECK(parse_verdict(tok.decode(ids)) == records[0].verdict);
  CHECK(tok.encode("zebra")[0] == tok.unk_id());
  CHECK(Tokenizer::split("Verdict: TRUE.") == std::vector<std::string>{"verdict", ":", "true", "."});
}

TEST_CASE("corpus NDJSON round trip and evidence filter") {
  const auto dir = std::filesystem::temp_directory_path() / "reflex_corpus_test";
  std::filesystem::create_directories(dir);
  auto records = generate_corpus(CorpusSpec{});
  records[3].evidence.reset();
  records[7].evidence.reset();
  write_corpus(dir / "c.ndjson", records);
  const auto all = read_corpus(dir / "c.ndjson");
  CHECK(all.records == records);
  CHECK(all.dropped_without_evidence == 0);
  const auto filtered = read_corpus(dir / "c.ndjson", {.drop_without_evidence = true});
  CHECK(filtered.records.size() == records.size() - 2);
  CHECK(filtered.dropped_without_evidence == 2);

  {
    std::ofstream os(dir / "dup.ndjson");
    os << "{\"id\":\"a\",\"claim\":\"c\",\"evidence\":null,\"verdict\":0,\"explanation\":\"\","
          "\"split\":\"train\"}\n";
    os << "{\"id\":\"a\",\"claim\":\"c\",\"evidence\":null,\"verdict\":1,\"explanation\":\"\","
          "\"split\":\"eval\"}\n";
  }
  CHECK(kind_of([&] { read_corpus(dir / "dup.ndjson"); }) == ErrorKind::format);
  {
    std::ofstream os(dir / "bad.ndjson");
    os << "{\"id\":\"a\",\"claim\":\"c\",\"evidence\":null,\"verdict\":7,\"explanation\":\"\","
          "\"split\":\"train\"}\n";
  }
  CHECK(kind_of([&] { read_corpus(dir / "bad.ndjson"); }) == ErrorKind::format);
  CHECK(kind_of([&] { read_corpus(dir / "missing.ndjson"); }) == ErrorKind::io);
  std::filesystem::remove_all(dir);
}
