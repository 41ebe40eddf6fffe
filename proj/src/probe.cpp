#include "reflex/probe.hpp"

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "reflex/error.hpp"
#include "reflex/rng.hpp"

namespace reflex::probe {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

double ProbeModel::weight_norm() const {
  double s = 0.0;
  for (double w : weights) s += w * w;
  return std::sqrt(s);
}

ProbeModel train_logistic(std::span<const std::vector<float>> features,
                          std::span<const int> labels, std::size_t layer,
                          const ProbeOptions& options) {
  const std::size_t n = features.size();
  if (n != labels.size()) fail(ErrorKind::input, "features and labels differ in length");
  if (n < 2) fail(ErrorKind::input, "probe training needs at least two examples");
  if (!(options.regularization >= 0.0) || !(options.learning_rate > 0.0)) {
    fail(ErrorKind::config, "probe needs regularization >= 0 and learning_rate > 0");
  }
  const std::size_t d = features[0].size();
  if (d == 0) fail(ErrorKind::shape, "probe features are empty");
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != d) fail(ErrorKind::shape, "probe features differ in dimension");
    if (labels[i] != 0 && labels[i] != 1) fail(ErrorKind::input, "probe labels must be 0 or 1");
    for (float v : features[i]) {
      if (!std::isfinite(v)) fail(ErrorKind::numeric, "probe feature is not finite");
    }
  }
  bool all_same = true;
  for (std::size_t i = 1; i < n && all_same; ++i) all_same = features[i] == features[0];
  if (all_same) fail(ErrorKind::degenerate, "all probe features are identical");

  // Optional standardization: x' = (x - mu) / sd.
  std::vector<double> mu(d, 0.0), sd(d, 1.0);
  if (options.standardize) {
    for (const auto& f : features) {
      for (std::size_t j = 0; j < d; ++j) mu[j] += f[j];
    }
    for (auto& m : mu) m /= static_cast<double>(n);
    std::vector<double> var(d, 0.0);
    for (const auto& f : features) {
      for (std::size_t j = 0; j < d; ++j) var[j] += (f[j] - mu[j]) * (f[j] - mu[j]);
    }
    for (std::size_t j = 0; j < d; ++j) {
      const double s = std::sqrt(var[j] / static_cast<double>(n));
      sd[j] = s > 0.0 ? s : 1.0;
    }
  }
  std::vector<double> x(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x[i * d + j] = (features[i][j] - mu[j]) / sd[j];
  }

  std::vector<double> w(d, 0.0), grad(d);
  double b = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double gb = 0.0, loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = &x[i * d];
      double z = b;
      for (std::size_t j = 0; j < d; ++j) z += w[j] * xi[j];
      loss += labels[i] ? softplus(-z) : softplus(z);
      const double r = sigmoid(z) - labels[i];
      for (std::size_t j = 0; j < d; ++j) grad[j] += r * xi[j];
      gb += r;
    }
    if (!std::isfinite(loss)) {
      fail(ErrorKind::numeric, "probe loss became non-finite at iteration " + std::to_string(it));
    }
    for (std::size_t j = 0; j < d; ++j) {
      w[j] -= options.learning_rate * (grad[j] * inv_n + options.regularization * w[j]);
    }
    b -= options.learning_rate * gb * inv_n;
  }

  ProbeModel p;
  p.layer = layer;
  p.options = options;
  p.n_pairs = n / 2;
  p.weights.resize(d);
  p.bias = b;
  for (std::size_t j = 0; j < d; ++j) {
    p.weights[j] = w[j] / sd[j];
    p.bias -= w[j] * mu[j] / sd[j];
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = probe_logit(p, features[i]);
    hits += (z > 0.0) == (labels[i] == 1);
  }
  p.train_accuracy = static_cast<double>(hits) / static_cast<double>(n);
  for (double v : p.weights) {
    if (!std::isfinite(v)) fail(ErrorKind::numeric, "probe weights are not finite");
  }
  return p;
}

ProbeModel train_probe(const pairs::ContrastivePairSet& set, const ProbeOptions& options) {
  if (set.pairs.size() < 2) {
    fail(ErrorKind::insufficient_signal, "probe at layer " + std::to_string(set.layer) +
                                             " needs at least two pairs, got " +
                                             std::to_string(set.pairs.size()));
  }
  std::vector<std::vector<float>> features;
  std::vector<int> labels;
  for (const auto& p : set.pairs) {
    features.push_back(p.positive);
    labels.push_back(1);
    features.push_back(p.negative);
    labels.push_back(0);
  }
  auto probe = train_logistic(features, labels, set.layer, options);
  probe.n_pairs = set.pairs.size();
  return probe;
}

double probe_logit(const ProbeModel& probe, std::span<const float> feature) {
  if (feature.size() != probe.weights.size()) {
    fail(ErrorKind::shape, "feature has dimension " + std::to_string(feature.size()) +
                               ", probe expects " + std::to_string(probe.weights.size()));
  }
  double z = probe.bias;
  for (std::size_t j = 0; j < feature.size(); ++j) z += probe.weights[j] * feature[j];
  return z;
}

double pair_accuracy(const ProbeModel& probe, std::span<const pairs::ContrastivePair> pairs) {
  if (pairs.empty()) fail(ErrorKind::input, "pair_accuracy needs at least one pair");
  std::size_t hits = 0;
  for (const auto& p : pairs) hits += probe_logit(probe, p.positive) > probe_logit(probe, p.negative);
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

SteeringVector to_steering(const ProbeModel& probe, double multiplier, DirectionKind kind) {
  const double norm = probe.weight_norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    fail(ErrorKind::degenerate, "probe at layer " + std::to_string(probe.layer) +
                                    " has a zero weight vector");
  }
  SteeringVector s;
  s.layer = probe.layer;
  s.kind = kind;
  s.multiplier = multiplier;
  s.direction.resize(probe.weights.size());
  for (std::size_t j = 0; j < s.direction.size(); ++j) {
    s.direction[j] = static_cast<float>(probe.weights[j] / norm);
  }
  return s;
}

double probe_logit_shift(const ProbeModel& probe, std::span<const float> feature,
                         const SteeringVector& steering) {
  if (steering.direction.size() != feature.size() || feature.size() != probe.weights.size()) {
    fail(ErrorKind::shape, "probe, feature and steering vector dimensions differ");
  }
  // Steered feature kept in double so the subtraction below sees no float
  // rounding of h + alpha * s.
  double steered = probe.bias;
  for (std::size_t j = 0; j < feature.size(); ++j) {
    const double h = static_cast<double>(feature[j]) +
                     steering.multiplier * static_cast<double>(steering.direction[j]);
    steered += probe.weights[j] * h;
  }
  return steered - probe_logit(probe, feature);
}

PairSplit split_pairs(std::span<const pairs::ContrastivePair> all, double heldout_fraction,
                      std::uint64_t seed) {
  if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0)) {
    fail(ErrorKind::config, "heldout_fraction must lie in [0, 1)");
  }
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(order));
  const auto n_held =
      static_cast<std::size_t>(std::ceil(heldout_fraction * static_cast<double>(all.size())));
  PairSplit out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_held ? out.heldout : out.train).push_back(all[order[i]]);
  }
  return out;
}

using nlohmann::json;

void write_probe_store(const std::filesystem::path& path, const ProbeStore& store) {
  json j;
  j["config_hash"] = store.config_hash;
  j["seed"] = store.seed;
  json probes = json::array();
  for (const auto& r : store.probes) {
    const auto& p = r.probe;
    probes.push_back({{"kind", std::string(to_string(r.kind))},
                      {"layer", p.layer},
                      {"weights", p.weights},
                      {"bias", p.bias},
                      {"train_accuracy", p.train_accuracy},
                      {"heldout_accuracy", r.heldout_accuracy ? json(*r.heldout_accuracy)
                                                              : json(nullptr)},
                      {"heldout_pairs", r.heldout_pairs},
                      {"n_pairs", p.n_pairs},
                      {"hyperparameters",
                       {{"regularization", p.options.regularization},
                        {"iterations", p.options.iterations},
                        {"learning_rate", p.options.learning_rate},
                        {"standardize", p.options.standardize},
                        {"seed", p.options.seed}}}});
  }
  j["probes"] = std::move(probes);
  json steering = json::array();
  for (const auto& s : store.steering) {
    steering.push_back({{"kind", std::string(to_string(s.kind))},
                        {"layer", s.layer},
                        {"direction", s.direction},
                        {"multiplier", s.multiplier}});
  }
  j["steering"] = std::move(steering);
  j["warnings"] = store.warnings;
  detail::write_text(path, j.dump(2) + "\n");
}

ProbeStore read_probe_store(const std::filesystem::path& path) {
  ProbeStore out;
  try {
    const auto j = json::parse(detail::read_text(path));
    out.config_hash = j.at("config_hash").get<std::string>();
    out.seed = j.at("seed").get<std::uint64_t>();
    auto kind_of = [&](const json& e) {
      auto k = direction_kind_from_string(e.at("kind").get<std::string>());
      if (!k) fail(ErrorKind::format, path.string() + ": unknown direction kind");
      return *k;
    };
    for (const auto& e : j.at("probes")) {
      ProbeRecord r;
      r.kind = kind_of(e);
      r.probe.layer = e.at("layer").get<std::size_t>();
      r.probe.weights = e.at("weights").get<std::vector<double>>();
      r.probe.bias = e.at("bias").get<double>();
      r.probe.train_accuracy = e.at("train_accuracy").get<double>();
      r.probe.n_pairs = e.at("n_pairs").get<std::size_t>();
      if (!e.at("heldout_accuracy").is_null()) {
        r.heldout_accuracy = e.at("heldout_accuracy").get<double>();
      }
      r.heldout_pairs = e.at("heldout_pairs").get<std::size_t>();
      const auto& h = e.at("hyperparameters");
      r.probe.options.regularization = h.at("regularization").get<double>();
      r.probe.options.iterations = h.at("iterations").get<std::size_t>();
      r.probe.options.learning_rate = h.at("learning_rate").get<double>();
      r.probe.options.standardize = h.at("standardize").get<bool>();
      r.probe.options.seed = h.at("seed").get<std::uint64_t>();
      out.probes.push_back(std::move(r));
    }
    for (const auto& e : j.at("steering")) {
      SteeringVector s;
      s.kind = kind_of(e);
      s.layer = e.at("layer").get<std::size_t>();
      s.direction = e.at("direction").get<std::vector<float>>();
      s.multiplier = e.at("multiplier").get<double>();
      out.steering.push_back(std::move(s));
    }
    out.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::format, "bad probe store " + path.string() + ": " + e.what());
  }
  return out;
}

const ProbeRecord* find_probe(const ProbeStore& store, DirectionKind kind, std::size_t layer) {
  for (const auto& r : store.probes) {
    if (r.kind == kind && r.probe.layer == layer) return &r;
  }
  return nullptr;
}

}  // namespace reflex::probe
