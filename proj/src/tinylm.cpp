#include "reflex/tinylm.hpp"

#include <cmath>
#include <cstring>

#include "reflex/error.hpp"
#include "reflex/rng.hpp"
#include "tinylm_kernel.hpp"

namespace reflex::tinylm {

using namespace detail;

void ModelConfig::validate() const {
  if (vocab_size < 1 || n_layers < 1 || hidden_dim < 1 || n_heads < 1 || max_seq_len < 1) {
    fail(ErrorKind::config, "model dimensions must all be >= 1");
  }
  if (hidden_dim % n_heads != 0) {
    fail(ErrorKind::config, "hidden_dim " + std::to_string(hidden_dim) +
                                " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (max_seq_len < 2) fail(ErrorKind::config, "max_seq_len must be >= 2");
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> parameter_layout(
    const ModelConfig& c) {
  const std::size_t D = c.hidden_dim;
  const std::size_t F = c.ffn_dim();
  std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
  out.push_back({"tok_emb", {c.vocab_size, D}});
  out.push_back({"pos_emb", {c.max_seq_len, D}});
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    out.push_back({p + "ln1.g", {D}});
    out.push_back({p + "ln1.b", {D}});
    out.push_back({p + "attn.wq", {D, D}});
    out.push_back({p + "attn.wk", {D, D}});
    out.push_back({p + "attn.wv", {D, D}});
    out.push_back({p + "attn.wo", {D, D}});
    out.push_back({p + "attn.bo", {D}});
    out.push_back({p + "ln2.g", {D}});
    out.push_back({p + "ln2.b", {D}});
    out.push_back({p + "mlp.w1", {D, F}});
    out.push_back({p + "mlp.b1", {F}});
    out.push_back({p + "mlp.w2", {F, D}});
    out.push_back({p + "mlp.b2", {D}});
  }
  out.push_back({"final.ln.g", {D}});
  out.push_back({"final.ln.b", {D}});
  out.push_back({"unembed.w", {D, c.vocab_size}});
  out.push_back({"unembed.b", {c.vocab_size}});
  return out;
}

ModelParams::ModelParams(ModelConfig config, std::vector<Tensor> tensors)
    : config_(config), tensors_(std::move(tensors)) {
  config_.validate();
  const auto layout = parameter_layout(config_);
  if (layout.size() != tensors_.size()) {
    fail(ErrorKind::shape, "expected " + std::to_string(layout.size()) + " tensors, got " +
                               std::to_string(tensors_.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& [name, shape] = layout[i];
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    if (tensors_[i].name != name || tensors_[i].shape != shape || tensors_[i].data.size() != n) {
      fail(ErrorKind::shape, "tensor " + std::to_string(i) + " does not match layout entry " + name);
    }
  }
}

Tensor& ModelParams::get(std::string_view name) {
  for (auto& t : tensors_) {
    if (t.name == name) return t;
  }
  fail(ErrorKind::input, "no tensor named " + std::string(name));
}

const Tensor& ModelParams::get(std::string_view name) const {
  return const_cast<ModelParams*>(this)->get(name);
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.data.size();
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors_) {
    for (float v : t.data) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

bool ModelParams::bit_equal(const ModelParams& other) const {
  if (!(config_ == other.config_) || tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = other.tensors_[i];
    if (a.name != b.name || a.shape != b.shape || !bit_identical(a.data, b.data)) return false;
  }
  return true;
}

ModelParams init_model(const ModelConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const double residual_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(config.n_layers));
  std::vector<Tensor> tensors;
  for (auto& [name, shape] : parameter_layout(config)) {
    Tensor t{name, shape, {}};
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    t.data.assign(n, 0.0f);

    auto ends_with = [&](std::string_view suffix) {
      return name.size() >= suffix.size() &&
             name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    // Uniform(-a, a) has standard deviation a / sqrt(3).
    auto fill_std = [&](double std) {
      const double a = std * std::sqrt(3.0);
      for (auto& v : t.data) v = static_cast<float>(rng.uniform(-a, a));
    };
    if (ends_with(".g")) {
      std::fill(t.data.begin(), t.data.end(), 1.0f);
    } else if (name == "tok_emb") {
      fill_std(0.5);
    } else if (name == "pos_emb") {
      fill_std(0.1);
    } else if (name == "unembed.w") {
      fill_std(0.02);
    } else if (shape.size() == 2) {
      double std = 1.0 / std::sqrt(static_cast<double>(shape[0]));
      if (ends_with("attn.wo") || ends_with("mlp.w2")) std *= residual_scale;
      fill_std(std);
    }
    tensors.push_back(std::move(t));
  }
  return ModelParams(config, std::move(tensors));
}

namespace {

void check_ids(const ModelConfig& c, std::span<const TokenId> ids) {
  if (ids.empty()) fail(ErrorKind::input, "cannot run the model on an empty token sequence");
  if (ids.size() > c.max_seq_len) {
    fail(ErrorKind::input, "sequence of " + std::to_string(ids.size()) +
                               " tokens exceeds max_seq_len " + std::to_string(c.max_seq_len));
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= c.vocab_size) {
      fail(ErrorKind::input, "token id " + std::to_string(ids[i]) + " at position " +
                                 std::to_string(i) + " is outside the vocabulary");
    }
  }
}

std::vector<const float*> weight_pointers(const ModelParams& p) {
  std::vector<const float*> w;
  for (const auto& t : p.tensors()) w.push_back(t.data.data());
  return w;
}

}  // namespace

void check_steering(const ModelConfig& config, const SteeringVector& steering) {
  if (steering.layer >= config.n_layers) {
    fail(ErrorKind::shape, "steering layer " + std::to_string(steering.layer) +
                               " out of range for a " + std::to_string(config.n_layers) +
                               "-layer model");
  }
  if (steering.direction.size() != config.hidden_dim) {
    fail(ErrorKind::shape, "steering dimension " + std::to_string(steering.direction.size()) +
                               " does not match hidden_dim " + std::to_string(config.hidden_dim));
  }
}

Injection make_injection(const SteeringVector& steering, std::size_t from_position) {
  return Injection{steering.layer, steering.direction, static_cast<float>(steering.multiplier),
                   from_position};
}

ForwardTrace forward(const ModelParams& params, std::span<const TokenId> token_ids,
                     const Injection* injection) {
  const auto& cfg = params.config();
  check_ids(cfg, token_ids);
  InjectionT<float> inj;
  if (injection) {
    if (injection->layer >= cfg.n_layers || injection->direction.size() != cfg.hidden_dim) {
      fail(ErrorKind::shape, "injection does not fit the model");
    }
    inj = {injection->layer, injection->direction.data(), injection->multiplier,
           injection->from_position};
  }
  const auto w = weight_pointers(params);
  Cache<float> cache;
  run_forward<float>(cfg, w, token_ids, injection ? &inj : nullptr, cache);

  ForwardTrace trace;
  trace.token_ids.assign(token_ids.begin(), token_ids.end());
  trace.vocab_size = cfg.vocab_size;
  trace.hidden = HiddenStates(cfg.n_layers, token_ids.size(), cfg.hidden_dim);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    std::memcpy(trace.hidden.values.data() + l * token_ids.size() * cfg.hidden_dim,
                cache.layers[l].y.data(), cache.layers[l].y.size() * sizeof(float));
  }
  trace.logits = std::move(cache.logits);
  return trace;
}

std::size_t argmax(std::span<const float> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

std::vector<TokenId> greedy_decode(const ModelParams& params, std::span<const TokenId> prompt_ids,
                                   const DecodeOptions& options) {
  const auto& cfg = params.config();
  check_ids(cfg, prompt_ids);
  std::optional<Injection> inj;
  if (options.steering) {
    check_steering(cfg, *options.steering);
    inj = make_injection(*options.steering,
                         options.steer_generated_only ? prompt_ids.size() : 0);
  }
  std::vector<TokenId> seq(prompt_ids.begin(), prompt_ids.end());
  std::vector<TokenId> out;
  while (out.size() < options.max_new && seq.size() < cfg.max_seq_len) {
    const auto trace = forward(params, seq, inj ? &*inj : nullptr);
    const auto next = static_cast<TokenId>(argmax(trace.logits_row(seq.size() - 1)));
    out.push_back(next);
    seq.push_back(next);
    if (options.eos_id && next == *options.eos_id) break;
  }
  return out;
}

}  // namespace reflex::tinylm
