#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "reflex/error.hpp"
#include "reflex/pairs.hpp"

using namespace reflex;
using namespace reflex::pairs;
using activations::ActivationSet;
using activations::Pooling;
using activations::Source;

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

constexpr auto F = VerdictLabel::False;
constexpr auto H = VerdictLabel::Half;
constexpr auto T = VerdictLabel::True;

// Two layers, three tokens, dim 2. Layer-1 last-prompt feature is (tag, -tag).
ActivationSet run(std::string id, Source src, VerdictLabel gold, std::optional<VerdictLabel> pred,
                  float tag) {
  ActivationSet s;
  s.sample_id = std::move(id);
  s.source = src;
  s.gold = gold;
  s.predicted = pred;
  s.hidden = HiddenStates(2, 3, 2);
  s.probe_feature_position = 1;
  s.answer_start = 2;
  auto f = s.hidden.at(1, 1);
  f[0] = tag;
  f[1] = -tag;
  return s;
}

std::vector<QuadrantRecord> from_counts(std::size_t hc, std::size_t agree_correct,
                                        std::size_t isc, std::size_t agree_wrong) {
  std::vector<QuadrantRecord> out;
  auto add = [&](std::size_t n, VerdictLabel b, VerdictLabel s, VerdictLabel g) {
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back({std::to_string(out.size()), b, s, g, classify_quadrant(b, s, g)});
    }
  };
  add(hc, T, F, T);
  add(agree_correct, T, T, T);
  add(isc, F, T, T);
  add(agree_wrong, F, H, T);
  return out;
}

}  // namespace

TEST_CASE("classify_quadrant") {
  CHECK(classify_quadrant(F, T, T) == Quadrant::II);
  CHECK(classify_quadrant(T, F, T) == Quadrant::IV);
  CHECK(classify_quadrant(T, T, T) == Quadrant::agree_correct);
  CHECK(classify_quadrant(F, H, T) == Quadrant::agree_wrong);
  CHECK(classify_quadrant(F, F, T) == Quadrant::agree_wrong);

  // every triple lands in exactly one cell, II/IV are the one-correct disagreements
  for (auto b : kAllVerdicts)
    for (auto s : kAllVerdicts)
      for (auto g : kAllVerdicts) {
        const auto q = classify_quadrant(b, s, g);
        const bool one_correct = (b == g) != (s == g);
        CHECK(one_correct == (q == Quadrant::II || q == Quadrant::IV));
      }
}

TEST_CASE("hr and isr from reference counts") {
  {
    auto m = compute_hr_isr(from_counts(88, 712 - 88, 231, 900 - 231));
    CHECK(m.base_correct_count == 712);
    CHECK(m.base_error_count == 900);
    CHECK(m.base_correct_count + m.base_error_count == 1612);
    REQUIRE(m.hr);
    REQUIRE(m.isr);
    CHECK(std::abs(*m.hr - 0.1236) <= 1e-4);
    CHECK(std::abs(*m.isr - 0.2567) <= 1e-4);
  }
  {
    auto m = compute_hr_isr(from_counts(1427, 2120 - 1427, 2437, 4048 - 2437));
    CHECK(m.base_correct_count + m.base_error_count == 6168);
    CHECK(std::abs(*m.hr - 0.6731) <= 2e-4);
    CHECK(std::abs(*m.isr - 0.6020) <= 2e-4);
    CHECK(*m.hr * m.base_correct_count == doctest::Approx(m.hallucinated_count));
  }
}

TEST_CASE("hr and isr edge cases") {
  auto all_ok = from_counts(0, 5, 0, 0);
  auto m = compute_hr_isr(all_ok);
  REQUIRE(m.hr);
  CHECK(*m.hr == 0.0);
  CHECK_FALSE(m.isr);

  auto m2 = compute_hr_isr(from_counts(0, 0, 3, 1));
  CHECK_FALSE(m2.hr);
  CHECK(*m2.isr == 0.75);

  CHECK(kind_of([] { compute_hr_isr({}); }) == ErrorKind::input);

  // duplicating every record changes nothing
  auto recs = from_counts(7, 11, 3, 13);
  auto twice = recs;
  twice.insert(twice.end(), recs.begin(), recs.end());
  auto a = compute_hr_isr(recs);
  auto b = compute_hr_isr(twice);
  CHECK(*a.hr == *b.hr);
  CHECK(*a.isr == *b.isr);
}

TEST_CASE("build_quadrants joins by id and drops parse failures") {
  std::vector<ActivationSet> base = {run("a", Source::base, T, F, 1), run("b", Source::base, T, T, 2),
                                     run("c", Source::base, F, std::nullopt, 3)};
  std::vector<ActivationSet> sft = {run("c", Source::sft, F, F, 4), run("b", Source::sft, T, F, 5),
                                    run("a", Source::sft, T, T, 6)};
  auto rep = build_quadrants(base, sft);
  REQUIRE(rep.records.size() == 2);
  CHECK(rep.records[0].sample_id == "a");
  CHECK(rep.records[0].quadrant == Quadrant::II);
  CHECK(rep.records[1].quadrant == Quadrant::IV);
  REQUIRE(rep.parse_failures.size() == 1);
  CHECK(rep.parse_failures[0] == "c");

  sft.pop_back();
  CHECK(kind_of([&] { build_quadrants(base, sft); }) == ErrorKind::input);
  sft.push_back(run("z", Source::sft, T, T, 0));
  CHECK(kind_of([&] { build_quadrants(base, sft); }) == ErrorKind::input);
}

TEST_CASE("style_substance puts the correct side positive") {
  std::vector<ActivationSet> base = {run("ii", Source::base, T, F, 1),
                                     run("iv", Source::base, T, T, 2),
                                     run("ok", Source::base, T, T, 3)};
  std::vector<ActivationSet> sft = {run("ii", Source::sft, T, T, 10),
                                    run("iv", Source::sft, T, H, 20),
                                    run("ok", Source::sft, T, T, 30)};
  auto set = select_pairs(base, sft, 1, DirectionPolicy::style_substance, PairingMode::vertical,
                          Pooling::last_prompt_token);
  REQUIRE(set.pairs.size() == 2);
  CHECK(set.dim() == 2);
  const auto& ii = set.pairs[0];
  CHECK(ii.quadrant == Quadrant::II);
  CHECK(ii.positive_tag.source == Source::sft);
  CHECK(ii.positive[0] == 10.0f);
  CHECK(ii.negative[0] == 1.0f);
  const auto& iv = set.pairs[1];
  CHECK(iv.positive_tag.source == Source::base);
  CHECK(iv.positive[0] == 2.0f);
  for (const auto& p : set.pairs) {
    CHECK(p.positive_tag.correct());
    CHECK_FALSE(p.negative_tag.correct());
  }
  CHECK(set.quadrant_counts[static_cast<std::size_t>(Quadrant::agree_correct)] == 1);

  auto kv = filter_quadrant(set, Quadrant::IV);
  REQUIRE(kv.pairs.size() == 1);
  CHECK(kv.pairs[0].positive[0] == 2.0f);
}

TEST_CASE("agreeing runs give insufficient signal") {
  std::vector<ActivationSet> base = {run("a", Source::base, T, T, 1),
                                     run("b", Source::base, F, H, 2)};
  std::vector<ActivationSet> sft = {run("a", Source::sft, T, T, 1),
                                    run("b", Source::sft, F, H, 2)};
  try {
    select_pairs(base, sft, 1, DirectionPolicy::style_substance, PairingMode::vertical,
                 Pooling::last_prompt_token);
    FAIL("expected insufficient signal");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::insufficient_signal);
    CHECK(std::string(e.what()).find("agree_correct=1") != std::string::npos);
    CHECK(std::string(e.what()).find("agree_wrong=1") != std::string::npos);
  }
}

TEST_CASE("base and sft policies pair every shared sample") {
  std::vector<ActivationSet> base, sft;
  for (int i = 0; i < 5; ++i) {
    base.push_back(run("s" + std::to_string(i), Source::base, T, i % 2 ? T : F, float(i)));
    sft.push_back(run("s" + std::to_string(i), Source::sft, T, T, float(10 + i)));
  }
  auto b = select_pairs(base, sft, 1, DirectionPolicy::base, PairingMode::vertical,
                        Pooling::last_prompt_token);
  CHECK(b.pairs.size() == 5);
  for (const auto& p : b.pairs) CHECK(p.positive_tag.source == Source::base);
  auto s = select_pairs(base, sft, 1, DirectionPolicy::sft, PairingMode::vertical,
                        Pooling::last_prompt_token);
  CHECK(s.pairs.size() == 5);
  for (const auto& p : s.pairs) CHECK(p.positive_tag.source == Source::sft);

  base[0].predicted.reset();
  auto b2 = select_pairs(base, sft, 1, DirectionPolicy::base, PairingMode::vertical,
                         Pooling::last_prompt_token);
  CHECK(b2.pairs.size() == 4);
  CHECK(b2.parse_failures == 1);
}

TEST_CASE("truth policy zips correct and incorrect features") {
  std::vector<ActivationSet> base = {run("a", Source::base, T, F, 1),
                                     run("b", Source::base, T, T, 2),
                                     run("c", Source::base, F, T, 3)};
  std::vector<ActivationSet> sft = {run("a", Source::sft, T, F, 4), run("b", Source::sft, T, T, 5),
                                    run("c", Source::sft, F, F, 6)};
  auto set = select_pairs(base, sft, 1, DirectionPolicy::truth, PairingMode::vertical,
                          Pooling::last_prompt_token);
  // correct: b/base, b/sft, c/sft; wrong: a/base, a/sft, c/base
  REQUIRE(set.pairs.size() == 3);
  CHECK(set.pairs[0].positive[0] == 2.0f);
  CHECK(set.pairs[0].negative[0] == 1.0f);
  CHECK(set.pairs[2].positive[0] == 6.0f);
  CHECK(set.pairs[2].negative[0] == 3.0f);
  for (const auto& p : set.pairs) {
    CHECK(p.positive_tag.correct());
    CHECK_FALSE(p.negative_tag.correct());
    CHECK_FALSE(p.quadrant);
  }
}

TEST_CASE("pairing mode checks run sources") {
  std::vector<ActivationSet> sft1 = {run("a", Source::sft, T, F, 1)};
  std::vector<ActivationSet> sft2 = {run("a", Source::sft, T, T, 2)};
  CHECK(kind_of([&] {
          select_pairs(sft1, sft2, 1, DirectionPolicy::truth, PairingMode::vertical,
                       Pooling::last_prompt_token);
        }) == ErrorKind::input);
  auto h = select_pairs(sft1, sft2, 1, DirectionPolicy::truth, PairingMode::horizontal,
                        Pooling::last_prompt_token);
  CHECK(h.pairs.size() == 1);
  CHECK(h.pairs[0].positive_tag.run == 1);
}

TEST_CASE("quadrant records round trip and validate") {
  auto dir = std::filesystem::temp_directory_path() / "reflex_test_pairs";
  std::filesystem::create_directories(dir);
  auto recs = from_counts(2, 1, 1, 3);
  write_quadrant_records(dir / "q.ndjson", recs);
  CHECK(read_quadrant_records(dir / "q.ndjson") == recs);

  std::ofstream(dir / "bad.ndjson")
      << R"({"quadrant":"II","sample_id":"x","v_base":2,"v_gold":2,"v_sft":0})" << '\n';
  CHECK(kind_of([&] { read_quadrant_records(dir / "bad.ndjson"); }) == ErrorKind::format);
  std::filesystem::remove_all(dir);
}
