#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "reflex/error.hpp"
#include "reflex/steering.hpp"

using namespace reflex;
using namespace reflex::steering;

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

struct Fixture {
  Tokenizer tok;
  tinylm::ModelParams params;
  std::vector<EvalSample> samples;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    std::vector<std::string> texts = {
        "<user> claim : the river flooded . the mayor resigned . <assistant>",
        "verdict : true . verdict : half . verdict : false . because"};
    Fixture out{Tokenizer::build(texts), {}, {}};
    tinylm::ModelConfig c;
    c.vocab_size = out.tok.size();
    c.n_layers = 3;
    c.hidden_dim = 16;
    c.max_seq_len = 40;
    c.seed = 5;
    out.params = tinylm::init_model(c);
    const char* claims[] = {"the river flooded .", "the mayor resigned .", "the river resigned .",
                            "the mayor flooded ."};
    for (int i = 0; i < 6; ++i) {
      EvalSample s;
      s.id = "e" + std::to_string(i);
      s.dialogue.prompt_text = std::string("<user> claim : ") + claims[i % 4] + " <assistant>";
      s.gold = kAllVerdicts[i % 3];
      out.samples.push_back(s);
    }
    return out;
  }();
  return f;
}

SteeringVector random_vector(std::size_t layer, double alpha, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<float> nd;
  SteeringVector s;
  s.layer = layer;
  s.multiplier = alpha;
  s.direction.resize(16);
  double n = 0;
  for (auto& v : s.direction) {
    v = nd(gen);
    n += double(v) * v;
  }
  for (auto& v : s.direction) v = static_cast<float>(v / std::sqrt(n));
  return s;
}

probe::ProbeStore store_for(std::initializer_list<std::size_t> layers, DirectionKind kind) {
  probe::ProbeStore st;
  for (auto l : layers) {
    probe::ProbeRecord r;
    r.kind = kind;
    r.probe.layer = l;
    const auto s = random_vector(l, 1.0, 100 + l);
    r.probe.weights.assign(s.direction.begin(), s.direction.end());
    st.probes.push_back(r);
  }
  return st;
}

}  // namespace

TEST_CASE("verdict slot probabilities match a direct softmax") {
  const auto& f = fixture();
  const auto& s = f.samples[1];
  const auto slot = verdict_slot(f.params, f.tok, s, nullptr);

  const auto ids = f.tok.encode(s.dialogue.prompt_text + " verdict :");
  const auto trace = tinylm::forward(f.params, ids);
  const auto row = trace.logits_row(ids.size() - 1);
  double z = 0.0;
  for (float v : row) z += std::exp(double(v));
  for (auto v : kAllVerdicts) {
    const double p = std::exp(double(row[f.tok.id(label_word(v))])) / z;
    CHECK(slot.label_prob[to_index(v)] == doctest::Approx(p).epsilon(1e-9));
  }
  CHECK(slot.gold_prob == slot.label_prob[to_index(s.gold)]);
  CHECK(slot.argmax_id == tinylm::argmax(row));
}

TEST_CASE("zero multiplier gives a zero gap") {
  const auto& f = fixture();
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(probability_gap(f.params, f.tok, random_vector(l, 0.0, l), f.samples) == 0.0);
  }
}

TEST_CASE("gaps are bounded") {
  const auto& f = fixture();
  for (int k = 0; k < 6; ++k) {
    const double g = probability_gap(f.params, f.tok, random_vector(k % 3, (k - 3) * 4.0, k),
                                     f.samples);
    CHECK(g >= -1.0);
    CHECK(g <= 1.0);
  }
  CHECK(kind_of([&] {
          probability_gap(f.params, f.tok, random_vector(0, 1.0, 0), {});
        }) == ErrorKind::input);
}

TEST_CASE("sweep config validation") {
  SweepConfig c;
  CHECK_NOTHROW(c.validate());
  c.multipliers = {0.5, 0.0};
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::config);
  c.multipliers = {};
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::config);
  c.multipliers = {1.0, 1.0};
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::config);
  c.multipliers = {1.0};
  c.layers = {1, 1};
  CHECK(kind_of([&] { c.validate(); }) == ErrorKind::config);
}

TEST_CASE("better_cell tie-break order") {
  SweepCell a{2, 1.0, 0.1, 0.0};
  SweepCell b{5, 1.0, 0.1, 0.0};
  CHECK(better_cell(a, b, Objective::gap));
  CHECK_FALSE(better_cell(b, a, Objective::gap));
  SweepCell c{2, -0.5, 0.1, 0.0};
  CHECK(better_cell(c, a, Objective::gap));
  SweepCell d{2, 0.5, 0.1, 0.0};
  CHECK(better_cell(d, c, Objective::gap));
  SweepCell e{7, 2.0, 0.2, 0.0};
  CHECK(better_cell(e, d, Objective::gap));
  // accuracy objective breaks its own ties on the gap
  SweepCell g{4, 1.0, 0.3, 0.1};
  SweepCell h{1, 1.0, 0.2, 0.1};
  CHECK(better_cell(g, h, Objective::accuracy));
}

TEST_CASE("singleton grid selects its only cell") {
  const auto& f = fixture();
  SweepConfig c;
  c.layers = {1};
  c.multipliers = {1.5};
  auto st = store_for({0, 1, 2}, DirectionKind::KV);
  const DirectionKind kinds[] = {DirectionKind::KV};
  auto r = sweep(f.params, f.tok, kinds, st, c, f.samples);
  const auto* kv = r.find(DirectionKind::KV);
  REQUIRE(kv);
  REQUIRE(kv->best);
  CHECK(kv->best->layer == 1);
  CHECK(kv->best->multiplier == 1.5);
  CHECK(kv->best_vector->multiplier == 1.5);
  CHECK(kv->best->gap == doctest::Approx(probability_gap(f.params, f.tok, *kv->best_vector,
                                                         f.samples)));
}

TEST_CASE("sweep best is invariant to enumeration order") {
  const auto& f = fixture();
  auto st = store_for({0, 1, 2}, DirectionKind::IV);
  const DirectionKind kinds[] = {DirectionKind::IV};
  SweepConfig c;
  auto a = sweep(f.params, f.tok, kinds, st, c, f.samples);
  std::reverse(c.multipliers.begin(), c.multipliers.end());
  c.layers = {2, 0, 1};
  auto b = sweep(f.params, f.tok, kinds, st, c, f.samples);
  const auto& ba = *a.per_kind[0].best;
  const auto& bb = *b.per_kind[0].best;
  CHECK(ba.layer == bb.layer);
  CHECK(ba.multiplier == bb.multiplier);
  CHECK(ba.gap == bb.gap);

  // best really is the maximum over the matrix
  for (const auto& row : a.per_kind[0].cells)
    for (const auto& cell : row) CHECK(cell.gap <= ba.gap);
  CHECK(a.per_kind[0].cells.size() == 3);
  CHECK(a.per_kind[0].cells[0].size() == 8);
}

TEST_CASE("sweep skips missing and degenerate layers") {
  const auto& f = fixture();
  auto st = store_for({0, 2}, DirectionKind::KV);
  st.probes[1].probe.weights.assign(16, 0.0);
  const DirectionKind kinds[] = {DirectionKind::KV, DirectionKind::IV};
  SweepConfig c;
  c.multipliers = {1.0};
  auto r = sweep(f.params, f.tok, kinds, st, c, f.samples);
  const auto* kv = r.find(DirectionKind::KV);
  CHECK(kv->layers == std::vector<std::size_t>{0});
  CHECK(kv->warnings.size() == 2);
  const auto* iv = r.find(DirectionKind::IV);
  CHECK_FALSE(iv->available());
  CHECK(iv->warnings.size() == 3);

  c.layers = {7};
  CHECK(kind_of([&] { sweep(f.params, f.tok, kinds, st, c, f.samples); }) == ErrorKind::config);

  const auto csv = layer_curve_csv(r, Objective::gap);
  CHECK(csv.rfind("kind,layer,best_multiplier,best_gap,best_accuracy_delta\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("select_direction") {
  KindSweep iv, kv;
  iv.kind = DirectionKind::IV;
  kv.kind = DirectionKind::KV;
  iv.best = SweepCell{1, 1.0, 0.04, 0.0};
  iv.best_vector = random_vector(1, 1.0, 1);
  iv.best_vector->kind = DirectionKind::IV;
  kv.best = SweepCell{2, 1.0, 0.01, 0.0};
  kv.best_vector = random_vector(2, 1.0, 2);
  kv.best_vector->kind = DirectionKind::KV;

  auto p = select_direction(&iv, &kv, Objective::gap);
  CHECK(p.chosen.kind == DirectionKind::IV);
  REQUIRE(p.fallback);
  CHECK(p.fallback->kind == DirectionKind::KV);
  CHECK(*p.selection.iv_value == 0.04);
  CHECK(*p.selection.kv_value == 0.01);

  kv.best->gap = 0.04;
  CHECK(select_direction(&iv, &kv, Objective::gap).chosen.kind == DirectionKind::KV);

  KindSweep empty;
  empty.kind = DirectionKind::IV;
  auto q = select_direction(&empty, &kv, Objective::gap);
  CHECK(q.chosen.kind == DirectionKind::KV);
  CHECK_FALSE(q.fallback);
  CHECK_FALSE(q.selection.iv_value);
  CHECK(q.selection.note.find("IV unavailable") != std::string::npos);

  CHECK(kind_of([&] { select_direction(&empty, nullptr, Objective::gap); }) ==
        ErrorKind::no_direction);
}

TEST_CASE("macro f1") {
  std::vector<VerdictLabel> gold;
  for (int i = 0; i < 9; ++i) gold.push_back(kAllVerdicts[i % 3]);

  std::vector<std::optional<VerdictLabel>> perfect(gold.begin(), gold.end());
  auto m = score(gold, perfect);
  CHECK(m.macro_f1 == 1.0);
  CHECK(m.accuracy == 1.0);

  std::vector<std::optional<VerdictLabel>> collapsed(9, VerdictLabel::True);
  auto c = score(gold, collapsed);
  CHECK(c.macro_f1 == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(c.per_label[to_index(VerdictLabel::True)].precision == doctest::Approx(1.0 / 3.0));
  CHECK(c.per_label[to_index(VerdictLabel::True)].recall == 1.0);

  // a missing verdict costs the gold label's recall only
  auto partial = perfect;
  partial[0].reset();
  auto pm = score(gold, partial);
  CHECK(pm.parse_failures == 1);
  const auto g0 = to_index(gold[0]);
  CHECK(pm.per_label[g0].precision == 1.0);
  CHECK(pm.per_label[g0].recall == doctest::Approx(2.0 / 3.0));
  CHECK(pm.per_label[(g0 + 1) % 3].f1 == 1.0);
  CHECK(pm.accuracy == doctest::Approx(8.0 / 9.0));

  CHECK(kind_of([&] { score(gold, std::span(perfect).first(3)); }) == ErrorKind::input);
}

TEST_CASE("zero-multiplier steered evaluation matches unsteered") {
  const auto& f = fixture();
  auto plain = steered_eval(f.params, f.tok, nullptr, f.samples, 8);
  auto zero = random_vector(1, 0.0, 3);
  auto same = steered_eval(f.params, f.tok, &zero, f.samples, 8);
  REQUIRE(plain.predictions.size() == same.predictions.size());
  for (std::size_t i = 0; i < plain.predictions.size(); ++i) {
    CHECK(plain.predictions[i].text == same.predictions[i].text);
    CHECK(plain.predictions[i].predicted == same.predictions[i].predicted);
  }
  CHECK(plain.metrics.macro_f1 == same.metrics.macro_f1);
  CHECK(plain.metrics.accuracy == same.metrics.accuracy);

  auto big = random_vector(0, 50.0, 4);
  auto moved = steered_eval(f.params, f.tok, &big, f.samples, 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < plain.predictions.size(); ++i) {
    any_diff |= plain.predictions[i].text != moved.predictions[i].text;
  }
  CHECK(any_diff);

  auto wrong = random_vector(0, 1.0, 5);
  wrong.direction.resize(4);
  CHECK(kind_of([&] { steered_eval(f.params, f.tok, &wrong, f.samples, 8); }) == ErrorKind::shape);
}
