#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cursive/model/config.hpp"

namespace cursive {

/// One named weight tensor inside the flat parameter vector.
struct TensorSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  /// Weight decay applies to matrices and embeddings, never to biases or
  /// layer-norm parameters.
  bool decay = false;
  /// Standard deviation of the normal initializer; 0 means constant init.
  double init_std = 0.0;
  double init_value = 0.0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

struct LinearSlot {
  std::size_t w = 0;
  std::size_t b = 0;
  int in = 0;
  int out = 0;
};

struct NormSlot {
  std::size_t w = 0;
  std::size_t b = 0;
  int dim = 0;
};

struct SelfAttentionSlots {
  LinearSlot qkv;
  LinearSlot out;
};

struct CrossAttentionSlots {
  LinearSlot q;
  LinearSlot kv;
  LinearSlot out;
};

struct MlpSlots {
  LinearSlot fc;
  LinearSlot proj;
};

struct EncoderBlockSlots {
  NormSlot ln1;
  SelfAttentionSlots attn;
  NormSlot ln2;
  MlpSlots mlp;
};

struct DecoderBlockSlots {
  NormSlot ln1;
  SelfAttentionSlots attn;
  NormSlot ln2;
  CrossAttentionSlots cross;
  NormSlot ln3;
  MlpSlots mlp;
};

/// Offsets of every tensor of a model in its flat parameter vector.
struct ParameterLayout {
  std::vector<TensorSpec> tensors;
  std::size_t wte = 0;
  std::size_t wpe = 0;
  std::size_t ascii_wte = 0;
  std::size_t ascii_wpe = 0;
  std::vector<EncoderBlockSlots> encoder;
  NormSlot ln_context;
  std::vector<DecoderBlockSlots> blocks;
  NormSlot ln_f;
  std::size_t total = 0;

  explicit ParameterLayout(const ModelConfig& mc);
  const TensorSpec& find(const std::string& name) const;
};

/// Number of trainable scalars. The output projection shares the stroke
/// embedding matrix and is not counted twice.
std::size_t param_count(const ModelConfig& mc);

}  // namespace cursive
