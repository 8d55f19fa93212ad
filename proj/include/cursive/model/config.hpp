#pragma once

#include <cstdint>
#include <optional>

#include <nlohmann/json.hpp>

namespace cursive {

struct ModelConfig {
  int n_blocks = 5;
  int n_heads_self = 4;
  int n_heads_cross = 4;
  int d_model = 64;
  /// Width of the ASCII embeddings that the cross-attention keys and values
  /// are projected from.
  int d_context = 64;
  int max_stroke_context = 1050;
  int max_ascii_context = 64;
  int stroke_vocab = 523;
  int ascii_vocab = 72;
  int mlp_ratio = 4;
  /// Bidirectional self-attention blocks applied to the ASCII embeddings
  /// before they feed cross-attention. Zero uses the raw embeddings.
  int context_layers = 0;
  double ln_eps = 1e-5;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double lr0 = 1e-2;
  int lr_step_every = 33'000;
  double lr_decay = 0.5;
  std::int64_t total_steps = 125'000;
  double weight_decay = 1e-4;
  int batch_size = 32;
  std::uint64_t seed = 1337;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  /// Global gradient-norm clip; 0 disables clipping.
  double grad_clip = 1.0;
  std::int64_t eval_every = 500;
  int eval_sequences = 256;
  std::int64_t checkpoint_every = 5'000;
  /// Stop as soon as a training batch reaches this loss.
  std::optional<double> target_loss;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Step-decay schedule: lr0 * lr_decay^floor(step / lr_step_every).
double lr_at(std::int64_t step, const TrainConfig& tc);

}  // namespace cursive
