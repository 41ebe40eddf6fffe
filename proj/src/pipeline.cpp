#include "reflex/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>

#include "binary_io.hpp"
#include "reflex/error.hpp"

namespace reflex::pipeline {

namespace fs = std::filesystem;
using corpus::ClaimRecord;
using corpus::IoMode;
using corpus::Split;

// ---------------------------------------------------------------------------
// Config

namespace {

template <class E>
std::string name_of(E e) {
  return std::string(to_string(e));
}

template <class E>
E parse_enum(const json& j, const char* key, std::optional<E> (*from)(std::string_view)) {
  if (!j.is_string()) fail(ErrorKind::config, std::string(key) + " must be a string");
  auto v = from(j.get<std::string>());
  if (!v) fail(ErrorKind::config, "unknown value '" + j.get<std::string>() + "' for " + key);
  return *v;
}

json train_json(const tinylm::TrainOptions& o) {
  return {{"epochs", o.epochs},         {"learning_rate", o.learning_rate},
          {"batch_size", o.batch_size}, {"beta1", o.beta1},
          {"beta2", o.beta2},           {"adam_eps", o.adam_eps},
          {"grad_clip", o.grad_clip},   {"weight_decay", o.weight_decay}};
}

tinylm::TrainOptions train_from(const json& j) {
  tinylm::TrainOptions o;
  o.epochs = j.at("epochs").get<std::size_t>();
  o.learning_rate = j.at("learning_rate").get<double>();
  o.batch_size = j.at("batch_size").get<std::size_t>();
  o.beta1 = j.at("beta1").get<double>();
  o.beta2 = j.at("beta2").get<double>();
  o.adam_eps = j.at("adam_eps").get<double>();
  o.grad_clip = j.at("grad_clip").get<double>();
  o.weight_decay = j.at("weight_decay").get<double>();
  return o;
}

// Overlays user keys onto the defaults; keys absent from the defaults are
// rejected so typos do not pass silently.
void merge(json& base, const json& user, const std::string& where) {
  if (!user.is_object()) fail(ErrorKind::config, where + " must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const auto key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) fail(ErrorKind::config, "unknown config key " + key);
    auto& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object()) {
      merge(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.corpus.spec.n_train = 480;
  c.corpus.spec.n_eval = 60;
  c.corpus.spec.n_test = 60;
  c.corpus.spec.n_subjects = 4;
  c.corpus.spec.n_predicates = 3;
  c.model.n_layers = 4;
  c.model.hidden_dim = 32;
  c.model.n_heads = 4;
  c.model.max_seq_len = 96;
  c.base_training.epochs = 15;
  c.base_training.learning_rate = 3e-3;
  c.base_training.weight_decay = 2.0;
  c.sft_training.epochs = 3;
  c.sft_training.learning_rate = 1e-3;
  c.sft_training.weight_decay = 0.0;
  return c;
}

json RunConfig::to_json() const {
  const auto& s = corpus.spec;
  json splits = json::array();
  for (auto sp : steer.splits) splits.push_back(name_of(sp));
  return {
      {"seed", seed},
      {"corpus",
       {{"path", corpus.path ? json(*corpus.path) : json(nullptr)},
        {"drop_without_evidence", corpus.drop_without_evidence},
        {"n_train", s.n_train},
        {"n_eval", s.n_eval},
        {"n_test", s.n_test},
        {"label_balance", s.label_balance},
        {"n_subjects", s.n_subjects},
        {"n_predicates", s.n_predicates},
        {"with_evidence", s.with_evidence},
        {"label_correlation", s.style.label_correlation},
        {"boilerplate_rate", s.style.boilerplate_rate}}},
      {"model",
       {{"n_layers", model.n_layers},
        {"hidden_dim", model.hidden_dim},
        {"n_heads", model.n_heads},
        {"max_seq_len", model.max_seq_len}}},
      {"base_training", train_json(base_training)},
      {"sft_training", train_json(sft_training)},
      {"base_io", name_of(base_io)},
      {"sft_io", name_of(sft_io)},
      {"restyle_base", restyle_base},
      {"drift",
       {{"enabled", drift.enabled},
        {"layer", drift.layer ? json(*drift.layer) : json(nullptr)},
        {"magnitude", drift.magnitude}}},
      {"pairing",
       {{"mode", name_of(pairing.mode)},
        {"policy", name_of(pairing.policy)},
        {"pooling", name_of(pairing.pooling)},
        {"split", name_of(pairing.split)},
        {"horizontal_io", name_of(pairing.horizontal_io)}}},
      {"probe",
       {{"regularization", probe.options.regularization},
        {"iterations", probe.options.iterations},
        {"learning_rate", probe.options.learning_rate},
        {"standardize", probe.options.standardize},
        {"heldout_fraction", probe.heldout_fraction}}},
      {"sweep",
       {{"layers", sweep.config.layers},
        {"multipliers", sweep.config.multipliers},
        {"select_on", name_of(sweep.config.select_on)},
        {"split", name_of(sweep.split)}}},
      {"steer", {{"splits", splits}}},
      {"refine",
       {{"score_threshold", refine.density.score_threshold},
        {"density_threshold", refine.density.density_threshold},
        {"ro_threshold", refine.ro_threshold},
        {"min_pattern_frequency", refine.min_pattern_frequency},
        {"split", name_of(refine.split)},
        {"html_samples", refine.html_samples}}},
      {"max_new", max_new},
  };
}

RunConfig RunConfig::from_json(const json& user) {
  json j = defaults().to_json();
  merge(j, user, "");
  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto& jc = j.at("corpus");
    if (!jc.at("path").is_null()) c.corpus.path = jc.at("path").get<std::string>();
    c.corpus.drop_without_evidence = jc.at("drop_without_evidence").get<bool>();
    auto& s = c.corpus.spec;
    s.n_train = jc.at("n_train").get<std::size_t>();
    s.n_eval = jc.at("n_eval").get<std::size_t>();
    s.n_test = jc.at("n_test").get<std::size_t>();
    s.label_balance = jc.at("label_balance").get<std::array<double, 3>>();
    s.n_subjects = jc.at("n_subjects").get<std::size_t>();
    s.n_predicates = jc.at("n_predicates").get<std::size_t>();
    s.with_evidence = jc.at("with_evidence").get<bool>();
    s.style.label_correlation = jc.at("label_correlation").get<double>();
    s.style.boilerplate_rate = jc.at("boilerplate_rate").get<double>();

    const auto& jm = j.at("model");
    c.model.n_layers = jm.at("n_layers").get<std::size_t>();
    c.model.hidden_dim = jm.at("hidden_dim").get<std::size_t>();
    c.model.n_heads = jm.at("n_heads").get<std::size_t>();
    c.model.max_seq_len = jm.at("max_seq_len").get<std::size_t>();
    c.base_training = train_from(j.at("base_training"));
    c.sft_training = train_from(j.at("sft_training"));
    c.base_io = parse_enum<IoMode>(j.at("base_io"), "base_io", corpus::io_mode_from_string);
    c.sft_io = parse_enum<IoMode>(j.at("sft_io"), "sft_io", corpus::io_mode_from_string);
    c.restyle_base = j.at("restyle_base").get<bool>();

    const auto& jd = j.at("drift");
    c.drift.enabled = jd.at("enabled").get<bool>();
    if (!jd.at("layer").is_null()) c.drift.layer = jd.at("layer").get<std::size_t>();
    c.drift.magnitude = jd.at("magnitude").get<double>();

    const auto& jp = j.at("pairing");
    c.pairing.mode = parse_enum<pairs::PairingMode>(jp.at("mode"), "pairing.mode",
                                                    pairs::pairing_mode_from_string);
    c.pairing.policy = parse_enum<pairs::DirectionPolicy>(jp.at("policy"), "pairing.policy",
                                                          pairs::direction_policy_from_string);
    c.pairing.pooling = parse_enum<activations::Pooling>(jp.at("pooling"), "pairing.pooling",
                                                         activations::pooling_from_string);
    c.pairing.split = parse_enum<Split>(jp.at("split"), "pairing.split", corpus::split_from_string);
    c.pairing.horizontal_io = parse_enum<IoMode>(jp.at("horizontal_io"), "pairing.horizontal_io",
                                                 corpus::io_mode_from_string);

    const auto& jpr = j.at("probe");
    c.probe.options.regularization = jpr.at("regularization").get<double>();
    c.probe.options.iterations = jpr.at("iterations").get<std::size_t>();
    c.probe.options.learning_rate = jpr.at("learning_rate").get<double>();
    c.probe.options.standardize = jpr.at("standardize").get<bool>();
    c.probe.heldout_fraction = jpr.at("heldout_fraction").get<double>();

    const auto& js = j.at("sweep");
    c.sweep.config.layers = js.at("layers").get<std::vector<std::size_t>>();
    c.sweep.config.multipliers = js.at("multipliers").get<std::vector<double>>();
    c.sweep.config.select_on = parse_enum<steering::Objective>(
        js.at("select_on"), "sweep.select_on", steering::objective_from_string);
    c.sweep.split = parse_enum<Split>(js.at("split"), "sweep.split", corpus::split_from_string);

    c.steer.splits.clear();
    for (const auto& sp : j.at("steer").at("splits")) {
      c.steer.splits.push_back(parse_enum<Split>(sp, "steer.splits", corpus::split_from_string));
    }

    const auto& jr = j.at("refine");
    c.refine.density.score_threshold = jr.at("score_threshold").get<double>();
    c.refine.density.density_threshold = jr.at("density_threshold").get<double>();
    c.refine.ro_threshold = jr.at("ro_threshold").get<double>();
    c.refine.min_pattern_frequency = jr.at("min_pattern_frequency").get<std::size_t>();
    c.refine.split = parse_enum<Split>(jr.at("split"), "refine.split", corpus::split_from_string);
    c.refine.html_samples = jr.at("html_samples").get<std::size_t>();
    c.max_new = j.at("max_new").get<std::size_t>();
  } catch (const json::exception& e) {
    fail(ErrorKind::config, std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (!corpus.path) corpus.spec.validate();
  auto m = model;
  m.vocab_size = 1;
  m.validate();
  for (const auto* t : {&base_training, &sft_training}) {
    if (t->epochs == 0 || t->batch_size == 0 || !(t->learning_rate > 0.0)) {
      fail(ErrorKind::config, "training needs epochs, batch_size and learning_rate > 0");
    }
  }
  if (drift.layer && *drift.layer >= model.n_layers) {
    fail(ErrorKind::config, "drift.layer is out of range");
  }
  if (!std::isfinite(drift.magnitude)) fail(ErrorKind::config, "drift.magnitude must be finite");
  if (!(probe.heldout_fraction >= 0.0 && probe.heldout_fraction < 1.0)) {
    fail(ErrorKind::config, "probe.heldout_fraction must lie in [0, 1)");
  }
  if (!(probe.options.learning_rate > 0.0) || !(probe.options.regularization >= 0.0)) {
    fail(ErrorKind::config, "probe needs learning_rate > 0 and regularization >= 0");
  }
  sweep.config.validate();
  for (auto l : sweep.config.layers) {
    if (l >= model.n_layers) fail(ErrorKind::config, "sweep layer out of range");
  }
  if (steer.splits.empty()) fail(ErrorKind::config, "steer.splits is empty");
  refine.density.validate();
  if (!(refine.ro_threshold > 0.0 && refine.ro_threshold <= 1.0)) {
    fail(ErrorKind::config, "refine.ro_threshold must lie in (0, 1]");
  }
  if (refine.min_pattern_frequency == 0) {
    fail(ErrorKind::config, "refine.min_pattern_frequency must be positive");
  }
  if (max_new == 0) fail(ErrorKind::config, "max_new must be positive");
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(to_json().dump())));
  return buf;
}

std::uint64_t RunConfig::stage_seed(std::string_view stage) const {
  return splitmix64(seed ^ fnv1a(stage));
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    fail(ErrorKind::config, "override must look like key.path=value: " + std::string(assignment));
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) fail(ErrorKind::config, "empty key segment in " + key);
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

RunConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    if (!fs::exists(path)) fail(ErrorKind::config, "config file " + path.string() + " not found");
    try {
      doc = json::parse(detail::read_text(path));
    } catch (const json::exception& e) {
      fail(ErrorKind::config, "config " + path.string() + " is not valid JSON: " + e.what());
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return RunConfig::from_json(doc);
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace {

fs::path at(const Context& ctx, std::string_view name) { return ctx.out / fs::path(name); }

const fs::path& require(const fs::path& p, const char* producer) {
  if (!fs::exists(p)) {
    throw DependencyError(producer, "missing " + p.filename().string() + "; run '" +
                                        producer + "' first");
  }
  return p;
}

json provenance(const Context& ctx) {
  return {{"config_hash", ctx.config.hash()}, {"seed", ctx.config.seed}};
}

void write_json(const fs::path& p, const json& j) { detail::write_text(p, j.dump(2) + "\n"); }

json read_json(const fs::path& p) {
  try {
    return json::parse(detail::read_text(p));
  } catch (const json::exception& e) {
    fail(ErrorKind::format, p.string() + ": " + e.what());
  }
}

void write_config(const Context& ctx) {
  fs::create_directories(ctx.out);
  write_json(at(ctx, artifact::config), ctx.config.to_json());
}

json summary(const Context& ctx, std::string_view stage) {
  json s = provenance(ctx);
  s["stage"] = std::string(stage);
  s["status"] = "ok";
  return s;
}

struct Models {
  Tokenizer tok;
  tinylm::ModelParams base;
  tinylm::ModelParams sft;
};

Models load_models(const Context& ctx) {
  auto b = tinylm::load_checkpoint(require(at(ctx, artifact::base_ckpt), "train"));
  auto s = tinylm::load_checkpoint(require(at(ctx, artifact::sft_ckpt), "train"));
  if (b.vocabulary != s.vocabulary) {
    fail(ErrorKind::format, "base and sft checkpoints use different vocabularies");
  }
  return {Tokenizer::from_words(b.vocabulary), std::move(b.params), std::move(s.params)};
}

std::vector<ClaimRecord> split_records(const Context& ctx, Split split) {
  auto out = corpus::select_split(load_corpus_artifact(ctx.out), split);
  if (out.empty()) {
    fail(ErrorKind::input, "corpus has no " + name_of(split) + " records");
  }
  return out;
}

std::vector<corpus::DialogueSample> format_all(std::span<const ClaimRecord> records, IoMode mode) {
  std::vector<corpus::DialogueSample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(corpus::format_dialogue(r, mode));
  return out;
}

double slot_accuracy(const tinylm::ModelParams& p, const Tokenizer& tok,
                     std::span<const ClaimRecord> records, IoMode mode) {
  return steering::measure_baseline(p, tok, steering::make_eval_samples(records, mode)).accuracy;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json verdict_json(const std::optional<VerdictLabel>& v) {
  return v ? json(to_index(*v)) : json(nullptr);
}

json cell_json(const steering::SweepCell& c) {
  return {{"layer", c.layer},
          {"multiplier", c.multiplier},
          {"gap", c.gap},
          {"accuracy_delta", c.accuracy_delta}};
}

json vector_json(const SteeringVector& s) {
  return {{"kind", name_of(s.kind)}, {"layer", s.layer}, {"multiplier", s.multiplier}};
}

// Runs that get paired, by pairing mode.
struct RunSpec {
  std::string name;
  activations::Source source;
  IoMode io;
};

std::pair<RunSpec, RunSpec> run_specs(const RunConfig& c) {
  using activations::Source;
  switch (c.pairing.mode) {
    case pairs::PairingMode::vertical:
      return {{"first", Source::base, c.base_io}, {"second", Source::sft, c.sft_io}};
    case pairs::PairingMode::horizontal:
      return {{"first", Source::sft, c.pairing.horizontal_io}, {"second", Source::sft, c.sft_io}};
    case pairs::PairingMode::self:
      return {{"first", Source::sft, c.sft_io}, {"second", Source::sft, c.sft_io}};
  }
  return {};
}

std::vector<DirectionKind> kinds_for(pairs::DirectionPolicy p) {
  switch (p) {
    case pairs::DirectionPolicy::style_substance: return {DirectionKind::IV, DirectionKind::KV};
    case pairs::DirectionPolicy::truth: return {DirectionKind::truth};
    case pairs::DirectionPolicy::base: return {DirectionKind::base};
    case pairs::DirectionPolicy::sft: return {DirectionKind::sft};
  }
  return {};
}

}  // namespace

json metrics_json(const steering::Metrics& m) {
  json per = json::object();
  for (auto v : kAllVerdicts) {
    const auto& s = m.per_label[to_index(v)];
    per[std::string(label_word(v))] = {{"precision", s.precision},
                                       {"recall", s.recall},
                                       {"f1", s.f1},
                                       {"support", s.support}};
  }
  return {{"n", m.n},
          {"parse_failures", m.parse_failures},
          {"accuracy", m.accuracy},
          {"macro_f1", m.macro_f1},
          {"per_label", per}};
}

std::vector<ClaimRecord> load_corpus_artifact(const fs::path& out) {
  return corpus::read_corpus(require(out / fs::path(artifact::corpus), "gen-corpus")).records;
}

// ---------------------------------------------------------------------------
// Stages

json gen_corpus(const Context& ctx) {
  write_config(ctx);
  const auto& c = ctx.config;
  std::vector<ClaimRecord> records;
  std::size_t dropped = 0;
  if (c.corpus.path) {
    if (!fs::exists(*c.corpus.path)) {
      fail(ErrorKind::config, "corpus.path " + *c.corpus.path + " does not exist");
    }
    auto r = corpus::read_corpus(*c.corpus.path, {c.corpus.drop_without_evidence});
    records = std::move(r.records);
    dropped = r.dropped_without_evidence;
  } else {
    auto spec = c.corpus.spec;
    spec.seed = c.stage_seed("corpus");
    records = corpus::generate_corpus(spec);
  }
  corpus::write_corpus(at(ctx, artifact::corpus), records);

  json counts = json::object();
  for (auto sp : {Split::train, Split::eval, Split::test}) {
    std::array<std::size_t, 3> by_label{};
    std::size_t n = 0;
    for (const auto& r : records) {
      if (r.split != sp) continue;
      ++n;
      ++by_label[to_index(r.verdict)];
    }
    counts[name_of(sp)] = {{"n", n},
                           {"false", by_label[0]},
                           {"half", by_label[1]},
                           {"true", by_label[2]}};
  }
  json s = summary(ctx, "gen-corpus");
  s["records"] = records.size();
  s["dropped_without_evidence"] = dropped;
  s["splits"] = counts;
  write_json(at(ctx, artifact::corpus_summary), s);
  s["artifacts"] = {artifact::corpus, artifact::corpus_summary};
  return s;
}

json train(const Context& ctx) {
  write_config(ctx);
  const auto& c = ctx.config;
  const auto records = load_corpus_artifact(ctx.out);
  const auto tok = Tokenizer::build(corpus::vocabulary_texts(records));
  const auto train_recs = corpus::select_split(records, Split::train);
  if (train_recs.empty()) fail(ErrorKind::input, "corpus has no train records");
  const auto eval_recs = corpus::select_split(records, Split::eval);

  auto mc = c.model;
  mc.vocab_size = tok.size();
  mc.seed = c.stage_seed("init");

  const auto base_recs =
      c.restyle_base ? corpus::restyle(train_recs, c.stage_seed("restyle")) : train_recs;
  auto ob = c.base_training;
  ob.shuffle_seed = c.stage_seed("base");
  tinylm::TrainReport rb;
  const auto base =
      tinylm::train_lm(tinylm::init_model(mc), tok, format_all(base_recs, c.base_io), ob, &rb);

  auto os = c.sft_training;
  os.shuffle_seed = c.stage_seed("sft");
  tinylm::TrainReport rs;
  auto sft = tinylm::train_lm(base, tok, format_all(train_recs, c.sft_io), os, &rs);

  json drift = {{"enabled", c.drift.enabled}};
  std::vector<std::string> warnings = rb.warnings;
  warnings.insert(warnings.end(), rs.warnings.begin(), rs.warnings.end());
  if (c.drift.enabled) {
    const std::size_t k = c.drift.layer ? *c.drift.layer : c.stage_seed("drift") % mc.n_layers;
    // True-minus-False class-mean direction of the verdict-slot state at layer k.
    std::vector<double> mt(mc.hidden_dim, 0.0), mf(mc.hidden_dim, 0.0);
    std::size_t nt = 0, nf = 0;
    for (const auto& r : train_recs) {
      if (r.verdict == VerdictLabel::Half) continue;
      const auto d = corpus::format_dialogue(r, c.sft_io);
      const auto ids =
          tok.encode(d.prompt_text + " " + std::string(corpus::kVerdictPrefix));
      const auto t = tinylm::forward(sft, ids);
      const auto h = t.hidden.at(k, ids.size() - 1);
      auto& acc = r.verdict == VerdictLabel::True ? mt : mf;
      (r.verdict == VerdictLabel::True ? nt : nf) += 1;
      for (std::size_t i = 0; i < h.size(); ++i) acc[i] += h[i];
    }
    if (nt == 0 || nf == 0) {
      fail(ErrorKind::insufficient_signal, "drift needs True and False train records");
    }
    std::vector<double> u(mc.hidden_dim);
    double norm = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] = mt[i] / double(nt) - mf[i] / double(nf);
      norm += u[i] * u[i];
    }
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) fail(ErrorKind::degenerate, "class means coincide; cannot plant drift");
    auto& b2 = sft.get("layers." + std::to_string(k) + ".mlp.b2").data;
    for (std::size_t i = 0; i < u.size(); ++i) {
      b2[i] = static_cast<float>(b2[i] - c.drift.magnitude * u[i] / norm);
    }
    drift["layer"] = k;
    drift["magnitude"] = c.drift.magnitude;
    drift["class_gap_norm"] = norm;
  }

  tinylm::save_checkpoint(base, tok.words(), at(ctx, artifact::base_ckpt));
  tinylm::save_checkpoint(sft, tok.words(), at(ctx, artifact::sft_ckpt));

  auto loss_json = [](const tinylm::TrainReport& r) {
    return json{{"steps", r.steps},
                {"first_loss", r.step_losses.empty() ? json(nullptr) : json(r.step_losses.front())},
                {"last_loss", r.step_losses.empty() ? json(nullptr) : json(r.step_losses.back())}};
  };
  json s = summary(ctx, "train");
  s["vocab_size"] = tok.size();
  s["parameters"] = base.parameter_count();
  s["base"] = loss_json(rb);
  s["sft"] = loss_json(rs);
  s["drift"] = drift;
  if (!eval_recs.empty()) {
    s["eval_slot_accuracy"] = {{"base", slot_accuracy(base, tok, eval_recs, c.base_io)},
                               {"sft", slot_accuracy(sft, tok, eval_recs, c.sft_io)}};
  }
  s["warnings"] = warnings;
  write_json(at(ctx, artifact::train_summary), s);
  s["artifacts"] = {artifact::base_ckpt, artifact::sft_ckpt, artifact::train_summary};
  return s;
}

json infer(const Context& ctx) {
  write_config(ctx);
  const auto& c = ctx.config;
  const auto m = load_models(ctx);
  const auto records = load_corpus_artifact(ctx.out);
  std::ofstream os(at(ctx, artifact::predictions), std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot write " + at(ctx, artifact::predictions).string());
  json per_split = json::object();
  for (auto sp : {Split::eval, Split::test}) {
    const auto recs = corpus::select_split(records, sp);
    if (recs.empty()) continue;
    json entry = json::object();
    for (auto [name, params, io] : {std::tuple{"base", &m.base, c.base_io},
                                    std::tuple{"sft", &m.sft, c.sft_io}}) {
      const auto samples = steering::make_eval_samples(recs, io);
      const auto r = steering::steered_eval(*params, m.tok, nullptr, samples, c.max_new);
      for (const auto& p : r.predictions) {
        const json line = {{"sample_id", p.id},      {"split", name_of(sp)},
                           {"source", name},         {"io_mode", name_of(io)},
                           {"gold", to_index(p.gold)}, {"predicted", verdict_json(p.predicted)},
                           {"text", p.text}};
        os << line.dump() << '\n';
      }
      entry[name] = {{"accuracy", r.metrics.accuracy},
                     {"macro_f1", r.metrics.macro_f1},
                     {"parse_failures", r.metrics.parse_failures}};
    }
    per_split[name_of(sp)] = entry;
  }
  if (!os) fail(ErrorKind::io, "failed writing predictions");
  os.close();
  json s = summary(ctx, "infer");
  s["splits"] = per_split;
  write_json(at(ctx, artifact::infer_summary), s);
  s["artifacts"] = {artifact::predictions, artifact::infer_summary};
  return s;
}

json dump_acts(const Context& ctx) {
  write_config(ctx);
  const auto& c = ctx.config;
  const auto m = load_models(ctx);
  const auto recs = split_records(ctx, c.pairing.split);
  const auto [first, second] = run_specs(c);
  json runs = json::array();
  for (const auto& spec : {first, second}) {
    const auto& params = spec.source == activations::Source::base ? m.base : m.sft;
    std::vector<activations::ActivationSet> sets;
    sets.reserve(recs.size());
    std::size_t failures = 0;
    for (const auto& r : recs) {
      sets.push_back(activations::capture(params, m.tok, r.id, corpus::format_dialogue(r, spec.io),
                                          r.verdict, spec.source, {c.max_new}));
      failures += !sets.back().predicted;
    }
    const auto model_id = name_of(spec.source) + ":" + name_of(spec.io);
    const auto dir = ctx.out / fs::path(artifact::dumps) / spec.name;
    fs::remove_all(dir);
    const auto manifest = activations::write_dump(dir, sets, model_id);
    runs.push_back({{"run", spec.name},
                    {"model_id", model_id},
                    {"records", manifest.record_count},
                    {"n_layers", manifest.n_layers},
                    {"hidden_dim", manifest.hidden_dim},
                    {"parse_failures", failures}});
  }
  json s = summary(ctx, "dump-acts");
  s["split"] = name_of(c.pairing.split);
  s["runs"] = runs;
  write_json(at(ctx, artifact::dump_summary), s);
  s["artifacts"] = {artifact::dumps, artifact::dump_summary};
  return s;
}

namespace {

std::pair<activations::Dump, activations::Dump> load_dumps(const Context& ctx) {
  const auto root = ctx.out / fs::path(artifact::dumps);
  auto a = activations::read_dump(require(root / "first", "dump-acts"));
  auto b = activations::read_dump(require(root / "second", "dump-acts"));
  return {std::move(a), std::move(b)};
}

}  // namespace

json pair(const Context& ctx) {
  write_config(ctx);
  const auto [first, second] = load_dumps(ctx);
  const auto rep = pairs::build_quadrants(first.sets, second.sets);
  pairs::write_quadrant_records(at(ctx, artifact::quadrants), rep.records);

  json counts = json::object();
  for (auto q : {pairs::Quadrant::II, pairs::Quadrant::IV, pairs::Quadrant::agree_correct,
                 pairs::Quadrant::agree_wrong}) {
    counts[name_of(q)] = std::count_if(rep.records.begin(), rep.records.end(),
                                       [&](const auto& r) { return r.quadrant == q; });
  }
  json s = summary(ctx, "pair");
  s["runs"] = {first.manifest.model_id, second.manifest.model_id};
  s["counts"] = counts;
  s["parse_failures"] = rep.parse_failures.size();
  s["parse_failure_ids"] = rep.parse_failures;
  if (rep.records.empty()) {
    s["hr"] = nullptr;
    s["isr"] = nullptr;
  } else {
    const auto t = pairs::compute_hr_isr(rep.records);
    s["hr"] = opt(t.hr);
    s["isr"] = opt(t.isr);
    s["hallucinated_count"] = t.hallucinated_count;
    s["inference_success_count"] = t.inference_success_count;
    s["base_correct_count"] = t.base_correct_count;
    s["base_error_count"] = t.base_error_count;
  }
  write_json(at(ctx, artifact::quadrant_summary), s);
  s["artifacts"] = {artifact::quadrants, artifact::quadrant_summary};
  return s;
}

json train_probes(const Context& ctx) {
  write_config(ctx);
  const auto& c = ctx.config;
  const auto [first, second] = load_dumps(ctx);
  const std::size_t n_layers = first.manifest.n_layers;
  const auto kinds = kinds_for(c.pairing.policy);

  probe::ProbeStore store;
  store.config_hash = c.hash();
  store.seed = c.seed;
  auto opts = c.probe.options;
  opts.seed = c.stage_seed("probe");
  json layers = json::array();
  for (std::size_t l = 0; l < n_layers; ++l) {
    pairs::ContrastivePairSet set;
    try {
      set = pairs::select_pairs(first.sets, second.sets, l, c.pairing.policy, c.pairing.mode,
                                c.pairing.pooling);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::insufficient_signal) throw;
      store.warnings.push_back("layer " + std::to_string(l) + ": " + e.what());
      continue;
    }
    for (auto kind : kinds) {
      auto subset = set;
      if (kind == DirectionKind::IV) subset = pairs::filter_quadrant(set, pairs::Quadrant::II);
      if (kind == DirectionKind::KV) subset = pairs::filter_quadrant(set, pairs::Quadrant::IV);
      const auto tag = name_of(kind) + " layer " + std::to_string(l);
      if (subset.pairs.size() < 2) {
        store.warnings.push_back(tag + ": " + std::to_string(subset.pairs.size()) +
                                 " pairs, no probe");
        continue;
      }
      auto split = probe::split_pairs(subset.pairs, c.probe.heldout_fraction, opts.seed);
      if (split.train.size() < 2) {
        store.warnings.push_back(tag + ": too few pairs to hold any out");
        split.train = subset.pairs;
        split.heldout.clear();
      }
      auto train_set = subset;
      train_set.pairs = split.train;
      probe::ProbeRecord rec;
      rec.kind = kind;
      try {
        rec.probe = probe::train_probe(train_set, opts);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::degenerate) throw;
        store.warnings.push_back(tag + ": " + e.what());
        continue;
      }
      if (!split.heldout.empty()) rec.heldout_accuracy = probe::pair_accuracy(rec.probe, split.heldout);
      rec.heldout_pairs = split.heldout.size();
      if (rec.probe.weight_norm() > 0.0) {
        store.steering.push_back(probe::to_steering(rec.probe, 1.0, kind));
      } else {
        store.warnings.push_back(tag + ": zero weight vector");
      }
      layers.push_back({{"kind", name_of(kind)},
                        {"layer", l},
                        {"pairs", subset.pairs.size()},
                        {"train_accuracy", rec.probe.train_accuracy},
                        {"heldout_accuracy", opt(rec.heldout_accuracy)}});
      store.probes.push_back(std::move(rec));
    }
  }
  probe::write_probe_store(at(ctx, artifact::probes), store);
  json s = summary(ctx, "probe");
  s["probes"] = layers;
  s["warnings"] = store.warnings;
  s["artifacts"] = {artifact::probes};
  return s;
}

json sweep(const Context& ctx) {
  write_config(ctx);
  const auto& c = ctx.config;
  const auto store = probe::read_probe_store(require(at(ctx, artifact::probes), "probe"));
  const auto m = load_models(ctx);
  const auto samples =
      steering::make_eval_samples(split_records(ctx, c.sweep.split), c.sft_io);

  std::vector<DirectionKind> kinds;
  for (auto k : kinds_for(c.pairing.policy)) kinds.push_back(k);
  const auto result = steering::sweep(m.sft, m.tok, kinds, store, c.sweep.config, samples);

  json per_kind = json::array();
  for (const auto& k : result.per_kind) {
    json gaps = json::array(), acc = json::array();
    for (const auto& row : k.cells) {
      json g = json::array(), a = json::array();
      for (const auto& cell : row) {
        g.push_back(cell.gap);
        a.push_back(cell.accuracy_delta);
      }
      gaps.push_back(g);
      acc.push_back(a);
    }
    per_kind.push_back({{"kind", name_of(k.kind)},
                        {"layers", k.layers},
                        {"gaps", gaps},
                        {"accuracy_deltas", acc},
                        {"best", k.best ? cell_json(*k.best) : json(nullptr)},
                        {"warnings", k.warnings}});
  }

  json selection;
  const auto obj = c.sweep.config.select_on;
  if (c.pairing.policy == pairs::DirectionPolicy::style_substance) {
    const auto plan = steering::select_direction(result.find(DirectionKind::IV),
                                                 result.find(DirectionKind::KV), obj);
    selection = {{"chosen", vector_json(plan.chosen)},
                 {"fallback", plan.fallback ? vector_json(*plan.fallback) : json(nullptr)},
                 {"iv_value", opt(plan.selection.iv_value)},
                 {"kv_value", opt(plan.selection.kv_value)},
                 {"objective", name_of(obj)},
                 {"note", plan.selection.note}};
  } else {
    const auto& only = result.per_kind.front();
    if (!only.available()) {
      fail(ErrorKind::no_direction, name_of(only.kind) + " sweep produced no usable cell");
    }
    selection = {{"chosen", vector_json(*only.best_vector)},
                 {"fallback", nullptr},
                 {"objective", name_of(obj)},
                 {"note", "single direction kind under policy " + name_of(c.pairing.policy)}};
  }

  json baseline = {{"accuracy", result.baseline.accuracy}, {"gold_prob", result.baseline.gold_prob}};
  json s = summary(ctx, "sweep");
  s["split"] = name_of(c.sweep.split);
  s["samples"] = samples.size();
  s["multipliers"] = c.sweep.config.multipliers;
  s["select_on"] = name_of(obj);
  s["baseline"] = baseline;
  s["kinds"] = per_kind;
  s["selection"] = selection;
  write_json(at(ctx, artifact::sweep), s);
  detail::write_text(at(ctx, artifact::layer_curve), steering::layer_curve_csv(result, obj));

  json line = summary(ctx, "sweep");
  json bests = json::object();
  for (const auto& k : result.per_kind) {
    bests[name_of(k.kind)] = k.best ? cell_json(*k.best) : json(nullptr);
  }
  line["best"] = bests;
  line["selection"] = selection;
  line["artifacts"] = {artifact::sweep, artifact::layer_curve};
  return line;
}

namespace {

struct Plan {
  SteeringVector chosen;
  json selection;
};

Plan load_plan(const Context& ctx) {
  const auto store = probe::read_probe_store(require(at(ctx, artifact::probes), "probe"));
  const auto sw = read_json(require(at(ctx, artifact::sweep), "sweep"));
  Plan p;
  try {
    p.selection = sw.at("selection");
    const auto& ch = p.selection.at("chosen");
    const auto kind = direction_kind_from_string(ch.at("kind").get<std::string>());
    if (!kind) fail(ErrorKind::format, "sweep.json names an unknown direction kind");
    const auto layer = ch.at("layer").get<std::size_t>();
    const auto* rec = probe::find_probe(store, *kind, layer);
    if (!rec) {
      fail(ErrorKind::format, "probes.json has no " + name_of(*kind) + " probe at layer " +
                                  std::to_string(layer));
    }
    p.chosen = probe::to_steering(rec->probe, ch.at("multiplier").get<double>(), *kind);
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("bad sweep.json: ") + e.what());
  }
  return p;
}

}  // namespace

json steer(const Context& ctx) {
  write_config(ctx);
  const auto& c = ctx.config;
  const auto plan = load_plan(ctx);
  const auto m = load_models(ctx);
  const auto records = load_corpus_artifact(ctx.out);

  json splits = json::object();
  json line_splits = json::object();
  for (auto sp : c.steer.splits) {
    const auto recs = corpus::select_split(records, sp);
    if (recs.empty()) fail(ErrorKind::input, "corpus has no " + name_of(sp) + " records");
    const auto samples = steering::make_eval_samples(recs, c.sft_io);
    const auto before = steering::steered_eval(m.sft, m.tok, nullptr, samples, c.max_new);
    const auto after = steering::steered_eval(m.sft, m.tok, &plan.chosen, samples, c.max_new);
    json preds = json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      preds.push_back({{"sample_id", samples[i].id},
                       {"gold", to_index(samples[i].gold)},
                       {"unsteered", verdict_json(before.predictions[i].predicted)},
                       {"steered", verdict_json(after.predictions[i].predicted)}});
    }
    const double gain = after.metrics.accuracy - before.metrics.accuracy;
    splits[name_of(sp)] = {{"unsteered", metrics_json(before.metrics)},
                           {"steered", metrics_json(after.metrics)},
                           {"accuracy_gain", gain},
                           {"macro_f1_gain", after.metrics.macro_f1 - before.metrics.macro_f1},
                           {"predictions", preds}};
    line_splits[name_of(sp)] = {{"unsteered_accuracy", before.metrics.accuracy},
                                {"steered_accuracy", after.metrics.accuracy},
                                {"unsteered_macro_f1", before.metrics.macro_f1},
                                {"steered_macro_f1", after.metrics.macro_f1}};
  }
  json s = summary(ctx, "steer");
  s["chosen"] = vector_json(plan.chosen);
  s["selection"] = plan.selection;
  s["splits"] = splits;
  write_json(at(ctx, artifact::steered_metrics), s);

  json line = summary(ctx, "steer");
  line["chosen"] = vector_json(plan.chosen);
  line["splits"] = line_splits;
  line["artifacts"] = {artifact::steered_metrics};
  return line;
}

json refine_stage(const Context& ctx) {
  write_config(ctx);
  const auto& c = ctx.config;
  const auto plan = load_plan(ctx);
  const auto m = load_models(ctx);
  const auto recs = split_records(ctx, c.refine.split);
  const auto inj = tinylm::make_injection(plan.chosen);

  struct Item {
    std::string id;
    refine::AlignmentTrace trace;
    std::vector<refine::Span> spans;
  };
  std::vector<Item> items;
  std::vector<std::string> flagged_texts;
  std::size_t zero_norm = 0;
  for (const auto& r : recs) {
    const auto d = corpus::format_dialogue(r, c.sft_io);
    const auto prompt = m.tok.encode(d.prompt_text);
    tinylm::DecodeOptions o;
    o.max_new = std::min(c.max_new, m.sft.config().max_seq_len - std::min(prompt.size(), m.sft.config().max_seq_len));
    o.eos_id = m.tok.eos_id();
    o.steering = &plan.chosen;
    auto gen = tinylm::greedy_decode(m.sft, prompt, o);
    if (!gen.empty() && gen.back() == m.tok.eos_id()) gen.pop_back();
    std::vector<TokenId> seq = prompt;
    seq.insert(seq.end(), gen.begin(), gen.end());
    const auto trace = tinylm::forward(m.sft, seq, &inj);
    Item it{r.id, refine::alignment_scores(trace, m.tok, prompt.size(), plan.chosen), {}};
    zero_norm += it.trace.zero_norm_tokens;
    it.spans = refine::detect_negative_spans(it.trace, c.refine.density);
    for (const auto& sp : it.spans) flagged_texts.push_back(refine::span_text(it.trace, sp));
    items.push_back(std::move(it));
  }
  const auto bank = refine::build_pattern_bank(flagged_texts, c.refine.min_pattern_frequency);

  const auto html_dir = ctx.out / fs::path(artifact::html);
  fs::remove_all(html_dir);
  if (c.refine.html_samples > 0) fs::create_directories(html_dir);
  std::ofstream os(at(ctx, artifact::refine), std::ios::binary);
  if (!os) fail(ErrorKind::io, "cannot write " + at(ctx, artifact::refine).string());
  std::size_t n_flagged = 0, n_removed = 0, tokens_removed = 0, tokens_total = 0;
  std::size_t verdict_changes = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    const auto rep = refine::suppress(it.trace, it.spans, bank, c.refine.ro_threshold);
    json spans = json::array();
    for (const auto& f : rep.flagged) {
      spans.push_back({{"start", f.span.start},
                       {"end", f.span.end},
                       {"mean_score", f.mean_score},
                       {"best_ratio", f.best_ratio},
                       {"matched_pattern", f.matched_pattern ? json(*f.matched_pattern) : json(nullptr)},
                       {"removed", f.removed}});
      ++n_flagged;
      n_removed += f.removed;
    }
    tokens_removed += rep.removed_token_count;
    tokens_total += it.trace.tokens.size();
    const auto vb = corpus::parse_verdict(rep.input_text);
    const auto va = corpus::parse_verdict(rep.output_text);
    verdict_changes += vb != va;
    const json line = {{"sample_id", it.id},
                       {"layer", it.trace.layer},
                       {"flagged", spans},
                       {"removed_token_count", rep.removed_token_count},
                       {"before", rep.input_text},
                       {"after", rep.output_text},
                       {"warnings", rep.warnings}};
    os << line.dump() << '\n';
    if (i < c.refine.html_samples) {
      refine::render_alignment_html(it.trace, html_dir / (it.id + ".html"));
    }
  }
  if (!os) fail(ErrorKind::io, "failed writing refine report");
  os.close();

  json s = summary(ctx, "refine");
  s["split"] = name_of(c.refine.split);
  s["samples"] = items.size();
  s["layer"] = plan.chosen.layer;
  s["pattern_bank"] = bank;
  s["flagged_spans"] = n_flagged;
  s["removed_spans"] = n_removed;
  s["removed_tokens"] = tokens_removed;
  s["total_tokens"] = tokens_total;
  s["zero_norm_tokens"] = zero_norm;
  s["verdict_changes"] = verdict_changes;
  write_json(at(ctx, artifact::refine_summary), s);
  s["artifacts"] = {artifact::refine, artifact::refine_summary, artifact::html};
  return s;
}

json eval(const Context& ctx) {
  write_config(ctx);
  const auto path = require(at(ctx, artifact::predictions), "infer");
  struct Run {
    std::vector<std::string> ids;
    std::vector<VerdictLabel> gold;
    std::vector<std::optional<VerdictLabel>> pred;
  };
  std::map<std::string, std::map<std::string, Run>> runs;  // split -> source
  std::ifstream is(path, std::ios::binary);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      auto& r = runs[j.at("split").get<std::string>()][j.at("source").get<std::string>()];
      r.ids.push_back(j.at("sample_id").get<std::string>());
      const auto g = verdict_from_index(j.at("gold").get<long long>());
      if (!g) fail(ErrorKind::format, "predictions line " + std::to_string(lineno) + ": bad gold");
      r.gold.push_back(*g);
      const auto& p = j.at("predicted");
      r.pred.push_back(p.is_null() ? std::nullopt : verdict_from_index(p.get<long long>()));
    } catch (const json::exception& e) {
      fail(ErrorKind::format, "predictions line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  json splits = json::object();
  for (const auto& [split, by_source] : runs) {
    json entry = json::object();
    for (const auto& [source, r] : by_source) {
      entry[source] = metrics_json(steering::score(r.gold, r.pred));
    }
    const auto b = by_source.find("base");
    const auto f = by_source.find("sft");
    if (b != by_source.end() && f != by_source.end() && b->second.ids == f->second.ids) {
      std::size_t differ = 0;
      std::vector<pairs::QuadrantRecord> quads;
      for (std::size_t i = 0; i < b->second.ids.size(); ++i) {
        const auto& pb = b->second.pred[i];
        const auto& ps = f->second.pred[i];
        differ += pb != ps;
        if (pb && ps) {
          const auto g = b->second.gold[i];
          quads.push_back({b->second.ids[i], *pb, *ps, g, pairs::classify_quadrant(*pb, *ps, g)});
        }
      }
      entry["disagreement_rate"] = double(differ) / double(b->second.ids.size());
      if (!quads.empty()) {
        const auto t = pairs::compute_hr_isr(quads);
        entry["hr"] = opt(t.hr);
        entry["isr"] = opt(t.isr);
      }
    }
    splits[split] = entry;
  }
  json s = summary(ctx, "eval");
  s["splits"] = splits;
  write_json(at(ctx, artifact::eval), s);
  s["artifacts"] = {artifact::eval};
  return s;
}

json report(const Context& ctx) {
  write_config(ctx);
  const auto q = read_json(require(at(ctx, artifact::quadrant_summary), "pair"));
  const auto sw = read_json(require(at(ctx, artifact::sweep), "sweep"));
  const auto st = read_json(require(at(ctx, artifact::steered_metrics), "steer"));
  const auto rf = read_json(require(at(ctx, artifact::refine_summary), "refine"));
  const auto ev = read_json(require(at(ctx, artifact::eval), "eval"));
  const auto hash = ctx.config.hash();
  for (const auto* j : {&q, &sw, &st, &rf, &ev}) {
    if (j->value("config_hash", std::string()) != hash) {
      fail(ErrorKind::format, "stage artifacts were produced under a different config");
    }
  }

  json r = provenance(ctx);
  try {
    r["transfer"] = {{"counts", q.at("counts")},
                     {"hr", q.at("hr")},
                     {"isr", q.at("isr")},
                     {"parse_failures", q.at("parse_failures")}};
    json best = json::object();
    for (const auto& k : sw.at("kinds")) best[k.at("kind").get<std::string>()] = k.at("best");
    r["sweep"] = {{"best", best},
                  {"selection", sw.at("selection")},
                  {"baseline_accuracy", sw.at("baseline").at("accuracy")}};
    json steering = json::object();
    for (const auto& [split, e] : st.at("splits").items()) {
      steering[split] = {{"unsteered_macro_f1", e.at("unsteered").at("macro_f1")},
                         {"steered_macro_f1", e.at("steered").at("macro_f1")},
                         {"unsteered_accuracy", e.at("unsteered").at("accuracy")},
                         {"steered_accuracy", e.at("steered").at("accuracy")},
                         {"accuracy_gain", e.at("accuracy_gain")}};
    }
    r["steering"] = {{"chosen", st.at("chosen")}, {"splits", steering}};
    r["refine"] = {{"samples", rf.at("samples")},
                   {"flagged_spans", rf.at("flagged_spans")},
                   {"removed_spans", rf.at("removed_spans")},
                   {"removed_tokens", rf.at("removed_tokens")},
                   {"total_tokens", rf.at("total_tokens")},
                   {"pattern_bank_size", rf.at("pattern_bank").size()},
                   {"verdict_changes", rf.at("verdict_changes")}};
    r["eval"] = ev.at("splits");
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("stage artifact is missing a field: ") + e.what());
  }
  write_json(at(ctx, artifact::report), r);
  json s = summary(ctx, "report");
  s["artifacts"] = {artifact::report};
  return s;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"gen-corpus", "train", "infer", "dump-acts",
                                                 "pair",       "probe", "sweep", "steer",
                                                 "refine",     "eval",  "report"};
  return names;
}

json run_stage(std::string_view name, const Context& ctx) {
  static const std::map<std::string, std::function<json(const Context&)>, std::less<>> table = {
      {"gen-corpus", gen_corpus}, {"train", train},          {"infer", infer},
      {"dump-acts", dump_acts},   {"pair", pair},            {"probe", train_probes},
      {"sweep", sweep},           {"steer", steer},          {"refine", refine_stage},
      {"eval", eval},             {"report", report}};
  const auto it = table.find(name);
  if (it == table.end()) fail(ErrorKind::config, "unknown stage " + std::string(name));
  return it->second(ctx);
}

std::vector<json> run_all(const Context& ctx) {
  std::vector<json> out;
  for (const auto& n : stage_names()) out.push_back(run_stage(n, ctx));
  return out;
}

}  // namespace reflex::pipeline
