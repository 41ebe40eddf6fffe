#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reflex/corpus.hpp"
#include "reflex/hidden.hpp"
#include "reflex/steering_vector.hpp"
#include "reflex/tokenizer.hpp"

// Pre-norm decoder-only transformer small enough to train on a laptop CPU in
// seconds. Serves as both the backbone and the fine-tuned variant.
namespace reflex::tinylm {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t n_layers = 2;
  std::size_t hidden_dim = 32;
  std::size_t n_heads = 4;
  std::size_t max_seq_len = 96;
  std::uint64_t seed = 0;

  /// Throws Error(config) on zero dimensions, hidden_dim % n_heads != 0 or
  /// max_seq_len < 2.
  void validate() const;
  std::size_t ffn_dim() const { return 4 * hidden_dim; }
  std::size_t head_dim() const { return hidden_dim / n_heads; }

  bool operator==(const ModelConfig&) const = default;
};

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

/// Flat parameter store. Tensor order is fixed: token and position
/// embeddings, then per layer ln1.{g,b}, attn.{wq,wk,wv,wo,bo}, ln2.{g,b},
/// mlp.{w1,b1,w2,b2}, then final.ln.{g,b} and unembed.{w,b}. Matrices are
/// stored [in][out].
class ModelParams {
 public:
  ModelParams() = default;
  ModelParams(ModelConfig config, std::vector<Tensor> tensors);

  const ModelConfig& config() const { return config_; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  Tensor& get(std::string_view name);
  const Tensor& get(std::string_view name) const;

  std::size_t parameter_count() const;
  bool all_finite() const;

  /// Bitwise equality of configs and all tensor contents.
  bool bit_equal(const ModelParams& other) const;

 private:
  ModelConfig config_;
  std::vector<Tensor> tensors_;
};

/// Names and shapes of every tensor for a config, in storage order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> parameter_layout(
    const ModelConfig& config);

ModelParams init_model(const ModelConfig& config);

/// Adds multiplier * direction to the residual stream leaving `layer`, at
/// every position >= from_position.
struct Injection {
  std::size_t layer = 0;
  std::span<const float> direction;
  float multiplier = 0.0f;
  std::size_t from_position = 0;
};

struct ForwardTrace {
  std::vector<TokenId> token_ids;
  HiddenStates hidden;  // post-block residual stream per layer
  std::vector<float> logits;  // [token][vocab]
  std::size_t vocab_size = 0;

  std::span<const float> logits_row(std::size_t t) const {
    return {logits.data() + t * vocab_size, vocab_size};
  }
};

/// Runs the model on token_ids. hidden[l] holds the output of block l after
/// any injection at that layer.
ForwardTrace forward(const ModelParams& params, std::span<const TokenId> token_ids,
                     const Injection* injection = nullptr);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const float> row);

// ---------------------------------------------------------------------------
// Training

/// Tokenized prompt/target pair. Loss is taken over positions >= prompt_len.
struct TrainingExample {
  std::vector<TokenId> ids;
  std::size_t prompt_len = 0;
};

/// Tokenizes prompt and target (target followed by <eos>). Sequences longer
/// than max_seq_len are truncated from the end of the target and a warning is
/// appended to `warnings` when given.
TrainingExample make_example(const Tokenizer& tokenizer, const corpus::DialogueSample& sample,
                             std::size_t max_seq_len, std::vector<std::string>* warnings = nullptr);

struct TrainOptions {
  std::size_t epochs = 1;
  double learning_rate = 1e-2;
  std::size_t batch_size = 8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 1.0;
  /// Decoupled (AdamW) decay on matrices and embeddings; keeps the residual
  /// stream at a scale where unit steering vectors matter.
  double weight_decay = 0.0;
  /// Seeds the per-epoch sample order.
  std::uint64_t shuffle_seed = 0;
};

struct TrainReport {
  std::vector<double> step_losses;  // mean per-token loss of each batch, pre-update
  std::vector<std::string> warnings;
  std::size_t steps = 0;
};

/// Adam on the masked next-token cross-entropy of the target segment.
/// Throws DivergenceError with the step index on a non-finite loss.
ModelParams train_lm(const ModelParams& params, std::span<const TrainingExample> dataset,
                     const TrainOptions& options, TrainReport* report = nullptr);

ModelParams train_lm(const ModelParams& params, const Tokenizer& tokenizer,
                     std::span<const corpus::DialogueSample> dataset, const TrainOptions& options,
                     TrainReport* report = nullptr);

/// Mean per-token cross-entropy of the target segment (float path).
double example_loss(const ModelParams& params, const TrainingExample& example);

/// |a - n| / max(|a|, |n|), with 0/0 defined as 0.
double relative_error(double analytic, double numeric);

/// Compares the analytic gradient with central finite differences (in double
/// precision) on `n_probes` randomly chosen parameters and returns the
/// largest relative_error.
double gradient_check(const ModelParams& params, const TrainingExample& example, double epsilon,
                      std::size_t n_probes = 64, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Decoding

struct DecodeOptions {
  std::size_t max_new = 32;
  std::optional<TokenId> eos_id;
  const SteeringVector* steering = nullptr;
  /// Restrict the injection to generated positions.
  bool steer_generated_only = false;
};

/// Greedy (temperature zero) decoding. Returns only the generated ids; the
/// end-of-sequence id, when hit, is included as the last element.
std::vector<TokenId> greedy_decode(const ModelParams& params, std::span<const TokenId> prompt_ids,
                                   const DecodeOptions& options);

/// Throws Error(shape) when the vector does not fit the model.
void check_steering(const ModelConfig& config, const SteeringVector& steering);

Injection make_injection(const SteeringVector& steering, std::size_t from_position = 0);

// ---------------------------------------------------------------------------
// Checkpoints: <dir>/manifest.json + <dir>/params.bin

void save_checkpoint(const ModelParams& params, const std::vector<std::string>& vocabulary,
                     const std::filesystem::path& dir);

struct Checkpoint {
  ModelParams params;
  std::vector<std::string> vocabulary;
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace reflex::tinylm
