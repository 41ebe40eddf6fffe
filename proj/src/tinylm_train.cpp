#include <algorithm>
#include <cmath>
#include <numeric>

#include "reflex/error.hpp"
#include "reflex/rng.hpp"
#include "reflex/tinylm.hpp"
#include "tinylm_kernel.hpp"

namespace reflex::tinylm {

using namespace detail;

namespace {

void check_example(const ModelConfig& cfg, const TrainingExample& ex, std::size_t index) {
  const auto where = "training example " + std::to_string(index);
  if (ex.prompt_len < 1 || ex.ids.size() <= ex.prompt_len) {
    fail(ErrorKind::input, where + " needs a nonempty prompt and at least one target token");
  }
  if (ex.ids.size() > cfg.max_seq_len) {
    fail(ErrorKind::input, where + " exceeds max_seq_len");
  }
  for (TokenId id : ex.ids) {
    if (id >= cfg.vocab_size) fail(ErrorKind::input, where + " has an out-of-vocabulary id");
  }
}

template <class S>
struct Buffers {
  std::vector<std::vector<S>> data;

  std::vector<const S*> cptrs() const {
    std::vector<const S*> p;
    for (const auto& d : data) p.push_back(d.data());
    return p;
  }
  std::vector<S*> ptrs() {
    std::vector<S*> p;
    for (auto& d : data) p.push_back(d.data());
    return p;
  }
  void zero() {
    for (auto& d : data) std::fill(d.begin(), d.end(), S(0));
  }
};

template <class S>
Buffers<S> zeros_like(const ModelParams& p) {
  Buffers<S> b;
  for (const auto& t : p.tensors()) b.data.emplace_back(t.data.size(), S(0));
  return b;
}

}  // namespace

TrainingExample make_example(const Tokenizer& tokenizer, const corpus::DialogueSample& sample,
                             std::size_t max_seq_len, std::vector<std::string>* warnings) {
  TrainingExample ex;
  ex.ids = tokenizer.encode(sample.prompt_text);
  auto target = tokenizer.encode(sample.target_text);
  target.push_back(tokenizer.eos_id());
  ex.prompt_len = ex.ids.size();
  const std::size_t full = ex.ids.size() + target.size();
  if (full > max_seq_len) {
    if (warnings) {
      warnings->push_back("sample of " + std::to_string(full) + " tokens truncated to " +
                          std::to_string(max_seq_len));
    }
    if (ex.prompt_len >= max_seq_len) {
      // Keep the prompt tail and a single target token.
      ex.ids.erase(ex.ids.begin(), ex.ids.begin() + static_cast<std::ptrdiff_t>(
                                                        ex.prompt_len - (max_seq_len - 1)));
      ex.prompt_len = ex.ids.size();
    }
    target.resize(max_seq_len - ex.prompt_len);
  }
  ex.ids.insert(ex.ids.end(), target.begin(), target.end());
  return ex;
}

ModelParams train_lm(const ModelParams& params, std::span<const TrainingExample> dataset,
                     const TrainOptions& options, TrainReport* report) {
  const auto& cfg = params.config();
  if (dataset.empty()) fail(ErrorKind::input, "training dataset is empty");
  if (options.batch_size < 1) fail(ErrorKind::config, "batch_size must be >= 1");
  if (!(options.learning_rate >= 0.0)) fail(ErrorKind::config, "learning_rate must be >= 0");
  if (!(options.weight_decay >= 0.0)) fail(ErrorKind::config, "weight_decay must be >= 0");
  for (std::size_t i = 0; i < dataset.size(); ++i) check_example(cfg, dataset[i], i);

  ModelParams out = params;
  auto grads = zeros_like<float>(out);
  auto m = zeros_like<float>(out);
  auto v = zeros_like<float>(out);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(options.shuffle_seed);
  Cache<float> cache;
  std::vector<float> dlogits;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::size_t n_tokens = 0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = dataset[order[i]];
        n_tokens += ex.ids.size() - ex.prompt_len;
      }
      const float scale = 1.0f / static_cast<float>(n_tokens);

      grads.zero();
      const auto w = [&] {
        std::vector<const float*> p;
        for (const auto& t : out.tensors()) p.push_back(t.data.data());
        return p;
      }();
      const auto g = grads.ptrs();
      double loss_sum = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = dataset[order[i]];
        run_forward<float>(cfg, w, ex.ids, nullptr, cache);
        loss_sum += masked_cross_entropy<float>(cache, cfg.vocab_size, ex.ids, ex.prompt_len,
                                                scale, &dlogits);
        run_backward<float>(cfg, w, g, ex.ids, cache, dlogits);
      }
      const double loss = loss_sum / static_cast<double>(n_tokens);
      if (!std::isfinite(loss)) {
        throw DivergenceError(step, "training loss became non-finite at step " +
                                        std::to_string(step));
      }
      if (report) report->step_losses.push_back(loss);

      double norm2 = 0.0;
      for (const auto& gt : grads.data) {
        for (float x : gt) norm2 += static_cast<double>(x) * x;
      }
      const double norm = std::sqrt(norm2);
      if (!std::isfinite(norm)) {
        throw DivergenceError(step, "gradient became non-finite at step " + std::to_string(step));
      }
      const double clip =
          options.grad_clip > 0.0 && norm > options.grad_clip ? options.grad_clip / norm : 1.0;

      const double t = static_cast<double>(step + 1);
      const double lr_t = options.learning_rate * std::sqrt(1.0 - std::pow(options.beta2, t)) /
                          (1.0 - std::pow(options.beta1, t));
      for (std::size_t k = 0; k < out.tensors().size(); ++k) {
        auto& p = out.tensors()[k].data;
        const double decay = out.tensors()[k].shape.size() == 2
                                 ? 1.0 - options.learning_rate * options.weight_decay
                                 : 1.0;
        auto& gm = m.data[k];
        auto& gv = v.data[k];
        const auto& gk = grads.data[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double gi = static_cast<double>(gk[i]) * clip;
          const double mi = options.beta1 * gm[i] + (1.0 - options.beta1) * gi;
          const double vi = options.beta2 * gv[i] + (1.0 - options.beta2) * gi * gi;
          gm[i] = static_cast<float>(mi);
          gv[i] = static_cast<float>(vi);
          p[i] = static_cast<float>(p[i] * decay - lr_t * mi / (std::sqrt(vi) + options.adam_eps));
        }
      }
      ++step;
    }
  }
  if (report) report->steps += step;
  return out;
}

ModelParams train_lm(const ModelParams& params, const Tokenizer& tokenizer,
                     std::span<const corpus::DialogueSample> dataset, const TrainOptions& options,
                     TrainReport* report) {
  if (dataset.empty()) fail(ErrorKind::input, "training dataset is empty");
  std::vector<std::string> warnings;
  std::vector<TrainingExample> examples;
  examples.reserve(dataset.size());
  for (const auto& s : dataset) {
    examples.push_back(make_example(tokenizer, s, params.config().max_seq_len, &warnings));
  }
  if (report) {
    report->warnings.insert(report->warnings.end(), warnings.begin(), warnings.end());
  }
  return train_lm(params, examples, options, report);
}

double example_loss(const ModelParams& params, const TrainingExample& example) {
  const auto& cfg = params.config();
  check_example(cfg, example, 0);
  std::vector<const float*> w;
  for (const auto& t : params.tensors()) w.push_back(t.data.data());
  Cache<float> cache;
  run_forward<float>(cfg, w, example.ids, nullptr, cache);
  const double sum = masked_cross_entropy<float>(cache, cfg.vocab_size, example.ids,
                                                 example.prompt_len, 1.0f, nullptr);
  return sum / static_cast<double>(example.ids.size() - example.prompt_len);
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max(std::abs(numeric), std::abs(analytic));
  return denom == 0.0 ? 0.0 : std::abs(numeric - analytic) / denom;
}

double gradient_check(const ModelParams& params, const TrainingExample& example, double epsilon,
                      std::size_t n_probes, std::uint64_t seed) {
  if (!(epsilon > 0.0) || epsilon > 1e-2) {
    fail(ErrorKind::input, "gradient_check epsilon must lie in (0, 1e-2]");
  }
  const auto& cfg = params.config();
  check_example(cfg, example, 0);

  Buffers<double> w;
  for (const auto& t : params.tensors()) w.data.emplace_back(t.data.begin(), t.data.end());
  auto g = zeros_like<double>(params);
  const std::size_t n_tokens = example.ids.size() - example.prompt_len;
  const double inv = 1.0 / static_cast<double>(n_tokens);

  Cache<double> cache;
  std::vector<double> dlogits;
  auto loss_at = [&] {
    const auto wp = w.cptrs();
    run_forward<double>(cfg, wp, example.ids, nullptr, cache);
    return masked_cross_entropy<double>(cache, cfg.vocab_size, example.ids, example.prompt_len,
                                        1.0, nullptr) *
           inv;
  };

  {
    const auto wp = w.cptrs();
    run_forward<double>(cfg, wp, example.ids, nullptr, cache);
    masked_cross_entropy<double>(cache, cfg.vocab_size, example.ids, example.prompt_len, inv,
                                 &dlogits);
    const auto gp = g.ptrs();
    run_backward<double>(cfg, wp, gp, example.ids, cache, dlogits);
  }

  std::vector<std::size_t> sizes;
  for (const auto& d : w.data) sizes.push_back(d.size());
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});

  Rng rng(seed);
  double worst = 0.0;
  for (std::size_t probe = 0; probe < n_probes; ++probe) {
    std::size_t flat = rng.below(total);
    std::size_t k = 0;
    while (flat >= sizes[k]) flat -= sizes[k++];
    double& p = w.data[k][flat];
    const double saved = p;
    p = saved + epsilon;
    const double up = loss_at();
    p = saved - epsilon;
    const double down = loss_at();
    p = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    worst = std::max(worst, relative_error(g.data[k][flat], numeric));
  }
  return worst;
}

}  // namespace reflex::tinylm
