// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "reflex/error.hpp"
#include "reflex/pipeline.hpp"
#include "../src/binary_io.hpp"
#include "ro_oracle.hpp"

using namespace reflex;
namespace fs = std::filesystem;
using pipeline::json;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

json read_json(const fs::path& p) { return json::parse(detail::read_text(p)); }

const fs::path kRoot = REFLEX_ACCEPTANCE_DIR;

// ---------------------------------------------------------------------------
// A1

Outcome a1() {
  struct Row {
    std::size_t hc, isc, base_correct, base_error, total;
    double hr, isr, tol;
  };
  const Row rows[] = {{88, 231, 712, 900, 1612, 0.1236, 0.2567, 1e-4},
                      {1427, 2437, 2120, 4048, 6168, 0.6731, 0.6020, 2e-4}};
  Outcome o{true, ""};
  for (const auto& r : rows) {
    std::vector<pairs::QuadrantRecord> recs;
    const auto T = VerdictLabel::True, F = VerdictLabel::False, H = VerdictLabel::Half;
    auto add = [&](std::size_t n, VerdictLabel b, VerdictLabel s, VerdictLabel g) {
      for (std::size_t i = 0; i < n; ++i) {
        recs.push_back({std::to_string(recs.size()), b, s, g, pairs::classify_quadrant(b, s, g)});
      }
    };
    add(r.hc, T, F, T);
    add(r.base_correct - r.hc, T, T, T);
    add(r.isc, F, T, T);
    add(r.base_error - r.isc, H, F, T);
    const auto m = pairs::compute_hr_isr(recs);
    const bool ok = m.hr && m.isr && std::fabs(*m.hr - r.hr) <= r.tol &&
                    std::fabs(*m.isr - r.isr) <= r.tol && recs.size() == r.total &&
                    m.base_correct_count + m.base_error_count == r.total;
    o.pass = o.pass && ok;
    o.detail += fmt("HR=%.4f ISR=%.4f total=%zu; ", m.hr.value_or(-1), m.isr.value_or(-1),
                    recs.size());
  }
  return o;
}

// ---------------------------------------------------------------------------
// A2

Outcome a2(const fs::path& run) {
  const auto ck = tinylm::load_checkpoint(run / "sft.ckpt");
  const auto tok = Tokenizer::from_words(ck.vocabulary);
  const auto& params = ck.params;
  const auto cfg = pipeline::RunConfig::defaults();
  auto recs = pipeline::load_corpus_artifact(run);
  std::mt19937_64 rng(2024);
  std::shuffle(recs.begin(), recs.end(), rng);
  recs.resize(50);
  const auto samples = steering::make_eval_samples(recs, cfg.sft_io);

  std::normal_distribution<float> nd;
  std::size_t mismatches = 0, checks = 0;
  std::vector<std::vector<TokenId>> plain_tokens;
  std::vector<tinylm::ForwardTrace> plain_traces;
  for (const auto& s : samples) {
    const auto prompt = tok.encode(s.dialogue.prompt_text);
    tinylm::DecodeOptions o;
    o.max_new = cfg.max_new;
    o.eos_id = tok.eos_id();
    auto gen = tinylm::greedy_decode(params, prompt, o);
    std::vector<TokenId> seq = prompt;
    seq.insert(seq.end(), gen.begin(), gen.end());
    plain_traces.push_back(tinylm::forward(params, seq));
    plain_tokens.push_back(std::move(gen));
  }
  const auto plain_metrics = steering::steered_eval(params, tok, nullptr, samples, cfg.max_new);

  for (std::size_t l = 0; l < params.config().n_layers; ++l) {
    SteeringVector v;
    v.layer = l;
    v.multiplier = 0.0;
    v.direction.resize(params.config().hidden_dim);
    double n = 0;
    for (auto& x : v.direction) {
      x = nd(rng);
      n += double(x) * x;
    }
    for (auto& x : v.direction) x = static_cast<float>(x / std::sqrt(n));
    const auto inj = tinylm::make_injection(v);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto prompt = tok.encode(samples[i].dialogue.prompt_text);
      tinylm::DecodeOptions o;
      o.max_new = cfg.max_new;
      o.eos_id = tok.eos_id();
      o.steering = &v;
      const auto gen = tinylm::greedy_decode(params, prompt, o);
      ++checks;
      if (gen != plain_tokens[i]) {
        ++mismatches;
        continue;
      }
      const auto trace = tinylm::forward(params, plain_traces[i].token_ids, &inj);
      if (!bit_identical(trace.logits, plain_traces[i].logits) ||
          !bit_identical(trace.hidden.values, plain_traces[i].hidden.values)) {
        ++mismatches;
      }
    }
    const auto m = steering::steered_eval(params, tok, &v, samples, cfg.max_new);
    const bool same_metrics = m.metrics.accuracy == plain_metrics.metrics.accuracy &&
                              m.metrics.macro_f1 == plain_metrics.metrics.macro_f1 &&
                              pipeline::metrics_json(m.metrics).dump() ==
                                  pipeline::metrics_json(plain_metrics.metrics).dump();
    mismatches += !same_metrics;
  }
  return {mismatches == 0,
          fmt("%zu prompts x %zu layers, %zu mismatches", samples.size(),
              params.config().n_layers, mismatches)};
}

// ---------------------------------------------------------------------------
// A3

Outcome a3(const fs::path& run, double run_seconds) {
  const auto q = read_json(run / "quadrants.summary.json");
  const auto probes = read_json(run / "probes.json");
  const auto steer = read_json(run / "steered_metrics.json");
  const auto ev = read_json(run / "eval.json");
  const auto train = read_json(run / "train.summary.json");

  const auto n_pairs = q["counts"]["II"].get<std::size_t>() + q["counts"]["IV"].get<std::size_t>();
  double best_heldout = 0.0;
  std::size_t best_heldout_layer = 0;
  for (const auto& p : probes["probes"]) {
    if (p["heldout_accuracy"].is_null() || p["heldout_pairs"].get<std::size_t>() == 0) continue;
    const double a = p["heldout_accuracy"].get<double>();
    if (a > best_heldout) {
      best_heldout = a;
      best_heldout_layer = p["layer"].get<std::size_t>();
    }
  }
  const double disagree = ev["splits"]["eval"]["disagreement_rate"].get<double>();
  const auto& e = steer["splits"]["eval"];
  const double before = e["unsteered"]["accuracy"].get<double>();
  const double after = e["steered"]["accuracy"].get<double>();
  const auto chosen = steer["chosen"];
  const auto planted = train["drift"]["layer"].get<std::size_t>();

  const bool ok = disagree >= 0.15 && n_pairs >= 20 && best_heldout >= 0.95 &&
                  after - before >= 0.05 - 1e-12 && run_seconds < 600.0;
  return {ok, fmt("disagreement=%.3f pairs=%zu heldout=%.3f@L%zu eval acc %.3f -> %.3f "
                  "(%s L%zu a=%g; planted L%zu) run=%.0fs",
                  disagree, n_pairs, best_heldout, best_heldout_layer, before, after,
                  chosen["kind"].get<std::string>().c_str(), chosen["layer"].get<std::size_t>(),
                  chosen["multiplier"].get<double>(), planted, run_seconds)};
}

// ---------------------------------------------------------------------------
// A4

Outcome a4() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<std::size_t> dims(2, 64);
  std::uniform_real_distribution<double> alphas(-3.0, 3.0);
  double worst_rel = 0.0, worst_norm = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    probe::ProbeModel p;
    const std::size_t d = dims(rng);
    p.weights.resize(d);
    for (auto& w : p.weights) w = nd(rng) * std::exp(nd(rng));
    p.bias = nd(rng);
    std::vector<float> x(d);
    for (auto& v : x) v = static_cast<float>(nd(rng));
    double a = alphas(rng);
    if (a == 0.0) a = 1.0;
    const auto s = probe::to_steering(p, a, DirectionKind::KV);
    double n = 0;
    for (float v : s.direction) n += double(v) * v;
    worst_norm = std::max(worst_norm, std::fabs(std::sqrt(n) - 1.0));
    double wn = 0;
    for (double w : p.weights) wn += w * w;
    const double expect = a * std::sqrt(wn);
    const double got = probe::probe_logit_shift(p, x, s);
    worst_rel = std::max(worst_rel, std::fabs(got - expect) / std::fabs(expect));
  }
  return {worst_rel <= 1e-5 && worst_norm <= 1e-6,
          fmt("max rel err %.2e, max |norm-1| %.2e over 100 triples", worst_rel, worst_norm)};
}

// ---------------------------------------------------------------------------
// A5

Outcome a5() {
  const auto t0 = Clock::now();
  // every string over {a,b,c} of length <= 8, ordered by length then base-3 value
  std::vector<std::string> all;
  std::vector<std::size_t> offset(10, 0);
  for (std::size_t len = 0; len <= 8; ++len) {
    offset[len] = all.size();
    std::size_t count = 1;
    for (std::size_t i = 0; i < len; ++i) count *= 3;
    for (std::size_t v = 0; v < count; ++v) {
      std::string s(len, 'a');
      std::size_t x = v;
      for (std::size_t i = len; i-- > 0;) {
        s[i] = static_cast<char>('a' + x % 3);
        x /= 3;
      }
      all.push_back(std::move(s));
    }
  }
  offset[9] = all.size();
  auto id = [&](std::string_view s) {
    std::size_t v = 0;
    for (char c : s) v = v * 3 + static_cast<std::size_t>(c - 'a');
    return offset[s.size()] + v;
  };
  const std::size_t n = all.size();
  // oracle match counts; both sides of a match are strictly shorter in a, so
  // filling rows in id order only reads finished rows
  std::vector<std::uint8_t> memo(n * n, 0);
  std::size_t mismatches = 0;
  for (std::size_t ia = 0; ia < n; ++ia) {
    const std::string_view a = all[ia];
    for (std::size_t ib = 0; ib < n; ++ib) {
      const std::string_view b = all[ib];
      const auto m = ro_oracle::longest(a, b);
      std::size_t total = 0;
      if (m.len > 0) {
        total = m.len + memo[id(a.substr(0, m.i)) * n + id(b.substr(0, m.j))] +
                memo[id(a.substr(m.i + m.len)) * n + id(b.substr(m.j + m.len))];
      }
      memo[ia * n + ib] = static_cast<std::uint8_t>(total);
      const double expect =
          a.empty() && b.empty() ? 1.0 : 2.0 * double(total) / double(a.size() + b.size());
      // equal ratios over the same length imply equal match counts
      if (refine::ro_similarity(a, b) != expect) ++mismatches;
    }
  }
  const bool fixed = refine::ro_similarity("abcd", "bcde") == 0.75 &&
                     refine::ro_similarity("abcabc", "abcabc") == 1.0 &&
                     refine::ro_similarity("abc", "") == 0.0 &&
                     refine::ro_similarity("", "abc") == 0.0;
  const double secs = seconds_since(t0);
  return {mismatches == 0 && fixed && secs < 120.0,
          fmt("%zu pairs, %zu mismatches, fixed cases %s, %.1fs", n * n, mismatches,
              fixed ? "ok" : "wrong", secs)};
}

// ---------------------------------------------------------------------------
// A6

Outcome a6() {
  tinylm::ModelConfig c;
  c.vocab_size = 23;
  c.n_layers = 2;
  c.hidden_dim = 16;
  c.n_heads = 4;
  c.max_seq_len = 24;
  c.seed = 3;
  tinylm::TrainingExample ex;
  ex.ids = {3, 7, 9, 11, 4, 5, 6, 12, 13, 1};
  ex.prompt_len = 5;
  const double grad = tinylm::gradient_check(tinylm::init_model(c), ex, 1e-4, 256, 1);

  // memorization: a handful of corpus dialogues
  corpus::CorpusSpec spec;
  spec.n_train = 6;
  spec.n_eval = 1;
  spec.n_test = 1;
  spec.seed = 5;
  const auto recs = corpus::select_split(corpus::generate_corpus(spec), corpus::Split::train);
  const auto tok = Tokenizer::build(corpus::vocabulary_texts(recs));
  std::vector<tinylm::TrainingExample> data;
  for (const auto& r : recs) {
    data.push_back(tinylm::make_example(
        tok, corpus::format_dialogue(r, corpus::IoMode::claim_to_verdict), 96));
  }
  tinylm::ModelConfig m;
  m.vocab_size = tok.size();
  m.n_layers = 2;
  m.hidden_dim = 32;
  m.seed = 1;
  tinylm::TrainOptions o;
  o.epochs = 200;
  o.batch_size = data.size();
  o.learning_rate = 1e-2;
  tinylm::TrainReport rep;
  const auto trained = tinylm::train_lm(tinylm::init_model(m), data, o, &rep);
  double loss = 0;
  for (const auto& d : data) loss += tinylm::example_loss(trained, d);
  loss /= double(data.size());
  return {grad < 1e-3 && rep.steps <= 200 && loss < 0.1,
          fmt("max grad rel err %.2e; memorization loss %.4f after %zu steps", grad, loss,
              rep.steps)};
}

// ---------------------------------------------------------------------------
// A7

pairs::Quadrant truth_table(VerdictLabel b, VerdictLabel s, VerdictLabel g) {
  static const pairs::Quadrant table[2][2] = {
      // [base correct][sft correct]
      {pairs::Quadrant::agree_wrong, pairs::Quadrant::II},
      {pairs::Quadrant::IV, pairs::Quadrant::agree_correct}};
  return table[b == g][s == g];
}

Outcome a7() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> lab(0, 2);
  std::uniform_int_distribution<int> maybe(0, 9);
  auto label = [&] { return kAllVerdicts[lab(rng)]; };
  std::size_t wrong = 0;
  std::vector<activations::ActivationSet> first, second;
  for (int i = 0; i < 1000; ++i) {
    const auto b = label(), s = label(), g = label();
    wrong += pairs::classify_quadrant(b, s, g) != truth_table(b, s, g);
    // one base run and one sft run per triple; features carry a source marker
    for (auto src : {activations::Source::base, activations::Source::sft}) {
      activations::ActivationSet a;
      a.sample_id = "s" + std::to_string(i);
      a.source = src;
      a.gold = g;
      a.predicted = src == activations::Source::base ? b : s;
      if (maybe(rng) == 0) a.predicted.reset();
      a.hidden = HiddenStates(1, 2, 3);
      a.probe_feature_position = 0;
      a.answer_start = 1;
      auto f = a.hidden.at(0, 0);
      f[0] = static_cast<float>(i);
      f[1] = src == activations::Source::base ? 0.0f : 1.0f;
      f[2] = a.correct() ? 1.0f : 0.0f;
      (src == activations::Source::base ? first : second).push_back(std::move(a));
    }
  }
  const auto set = pairs::select_pairs(first, second, 0, pairs::DirectionPolicy::style_substance,
                                       pairs::PairingMode::vertical,
                                       activations::Pooling::last_prompt_token);
  std::size_t bad_provenance = 0;
  for (const auto& p : set.pairs) {
    const auto& pos = p.positive_tag;
    const auto& neg = p.negative_tag;
    const auto i = static_cast<std::size_t>(p.positive[0]);
    const auto& origin = pos.source == activations::Source::base ? first[i] : second[i];
    const bool ok = pos.correct() && !neg.correct() && origin.sample_id == pos.sample_id &&
                    origin.correct() && p.positive[2] == 1.0f && p.negative[2] == 0.0f &&
                    (p.positive[1] == 0.0f) == (pos.source == activations::Source::base) &&
                    pos.run == (pos.source == activations::Source::base ? 0u : 1u);
    bad_provenance += !ok;
  }
  return {wrong == 0 && bad_provenance == 0 && !set.pairs.empty(),
          fmt("1000 triples, %zu truth-table mismatches; %zu pairs, %zu bad provenance", wrong,
              set.pairs.size(), bad_provenance)};
}

// ---------------------------------------------------------------------------
// A8

struct Synthetic {
  refine::AlignmentTrace trace;
  std::vector<refine::Span> injected;
  refine::Span verdict;
  VerdictLabel label = VerdictLabel::False;
};

std::vector<Synthetic> synthetic_traces() {
  corpus::CorpusSpec spec;
  spec.n_train = 100;
  spec.n_eval = 1;
  spec.n_test = 1;
  spec.seed = 17;
  const auto recs = corpus::select_split(corpus::generate_corpus(spec), corpus::Split::train);
  const auto bp = corpus::boilerplate_sentences();
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> pos(0.05, 0.9), neg(-0.9, -0.05), any(-1.0, 1.0);
  std::uniform_int_distribution<int> coin(0, 1), pick(0, int(bp.size()) - 1);

  std::vector<Synthetic> out;
  for (const auto& r : recs) {
    Synthetic s;
    s.label = r.verdict;
    std::vector<std::string> toks;
    std::vector<double> scores;
    auto push = [&](const std::vector<std::string>& words, auto&& score) {
      const refine::Span sp{toks.size(), toks.size() + words.size()};
      for (const auto& w : words) {
        toks.push_back(w);
        scores.push_back(score());
      }
      return sp;
    };
    // verdict line scores negative on half the samples
    const bool neg_verdict = coin(rng);
    s.verdict = push(Tokenizer::split("Verdict: " + std::string(label_word(r.verdict)) + "."),
                     [&] { return neg_verdict ? neg(rng) : pos(rng); });
    const auto expl = Tokenizer::split("Explanation: " + r.explanation);
    std::vector<std::vector<std::string>> sentences;
    std::vector<std::string> cur;
    for (const auto& w : expl) {
      cur.push_back(w);
      if (is_sentence_end(w)) {
        sentences.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) sentences.push_back(std::move(cur));
    // one or two boilerplate sentences, some with a dropped word
    const int n_bp = 1 + coin(rng);
    std::uniform_int_distribution<std::size_t> where(0, sentences.size());
    std::vector<std::pair<std::size_t, std::vector<std::string>>> inserts;
    for (int k = 0; k < n_bp; ++k) {
      auto words = Tokenizer::split(bp[pick(rng)]);
      if (coin(rng) && words.size() > 4) words.erase(words.begin() + 2);
      inserts.emplace_back(where(rng), std::move(words));
    }
    std::stable_sort(inserts.begin(), inserts.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::size_t next = 0;
    for (std::size_t i = 0; i <= sentences.size(); ++i) {
      while (next < inserts.size() && inserts[next].first == i) {
        s.injected.push_back(push(inserts[next].second, [&] { return neg(rng); }));
        ++next;
      }
      if (i < sentences.size()) {
        // substance: mostly aligned, an occasional negative token
        push(sentences[i], [&] { return coin(rng) || coin(rng) ? pos(rng) : any(rng); });
      }
    }
    s.trace = refine::make_trace(std::move(toks), std::move(scores));
    out.push_back(std::move(s));
  }
  return out;
}

Outcome a8() {
  const auto traces = synthetic_traces();
  const refine::DensityConfig dc;
  std::vector<std::vector<refine::Span>> flagged;
  std::vector<std::string> texts;
  for (const auto& s : traces) {
    flagged.push_back(refine::detect_negative_spans(s.trace, dc));
    for (const auto& sp : flagged.back()) texts.push_back(refine::span_text(s.trace, sp));
  }
  const auto bank = refine::build_pattern_bank(texts, 3);

  std::size_t injected = 0, removed = 0, verdict_lost = 0, not_idempotent = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& s = traces[i];
    const auto rep = refine::suppress(s.trace, flagged[i], bank, 0.8);
    // token-level removal mask from the flagged spans
    std::vector<bool> gone(s.trace.tokens.size(), false);
    for (const auto& f : rep.flagged) {
      if (!f.removed) continue;
      for (auto t = f.span.start; t < f.span.end; ++t) gone[t] = true;
    }
    for (const auto& sp : s.injected) {
      ++injected;
      bool all = true;
      for (auto t = sp.start; t < sp.end; ++t) all = all && gone[t];
      removed += all;
    }
    bool verdict_kept = true;
    for (auto t = s.verdict.start; t < s.verdict.end; ++t) verdict_kept = verdict_kept && !gone[t];
    verdict_kept = verdict_kept && corpus::parse_verdict(rep.output_text) == s.label;
    verdict_lost += !verdict_kept;

    const auto again_spans = refine::detect_negative_spans(rep.output, dc);
    const auto again = refine::suppress(rep.output, again_spans, bank, 0.8);
    not_idempotent += again.output_text != rep.output_text || again.removed_token_count != 0;
  }
  const double rate = double(removed) / double(injected);
  return {rate >= 0.95 && verdict_lost == 0 && not_idempotent == 0,
          fmt("%zu/%zu injected spans removed (%.1f%%), %zu verdict lines removed, "
              "%zu non-idempotent, bank size %zu",
              removed, injected, 100.0 * rate, verdict_lost, not_idempotent, bank.size())};
}

// ---------------------------------------------------------------------------
// A9

std::vector<fs::path> files_under(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome a9(const fs::path& a, const fs::path& b) {
  const auto fa = files_under(a);
  const auto fb = files_under(b);
  if (fa != fb) return {false, fmt("file lists differ (%zu vs %zu)", fa.size(), fb.size())};
  std::size_t differ = 0;
  std::string first;
  for (const auto& f : fa) {
    if (detail::read_text(a / f) != detail::read_text(b / f)) {
      if (first.empty()) first = f.string();
      ++differ;
    }
  }
  return {differ == 0 && !fa.empty(),
          fmt("%zu files compared, %zu differ%s%s", fa.size(), differ, first.empty() ? "" : ": ",
              first.c_str())};
}

// ---------------------------------------------------------------------------

double run_all(const fs::path& out) {
  fs::remove_all(out);
  const auto t0 = Clock::now();
  pipeline::run_all({pipeline::RunConfig::defaults(), out});
  return seconds_since(t0);
}

}  // namespace

// Optional arguments select criteria by name, e.g. "acceptance A5 A8".
int main(int argc, char** argv) {
  const std::vector<std::string> only(argv + 1, argv + argc);
  auto selected = [&](const std::string& name) {
    return only.empty() || std::find(only.begin(), only.end(), name) != only.end();
  };
  int failures = 0;
  auto report = [&](const char* name, const std::function<Outcome()>& fn) {
    if (!selected(name)) return;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s  %s  [%.1fs]\n", name, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  };

  const fs::path run_a = kRoot / "run_a";
  const fs::path run_b = kRoot / "run_b";
  double secs_a = -1.0;
  std::string run_error;
  try {
    if (selected("A2") || selected("A3") || selected("A9")) secs_a = run_all(run_a);
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  auto needs_run = [&](auto fn) {
    return [&, fn]() -> Outcome {
      if (!run_error.empty()) return {false, "run-all failed: " + run_error};
      return fn();
    };
  };

  report("A1", a1);
  report("A2", needs_run([&] { return a2(run_a); }));
  report("A3", needs_run([&] { return a3(run_a, secs_a); }));
  report("A4", a4);
  report("A5", a5);
  report("A6", a6);
  report("A7", a7);
  report("A8", a8);
  report("A9", needs_run([&] {
           run_all(run_b);
           return a9(run_a, run_b);
         }));
  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
