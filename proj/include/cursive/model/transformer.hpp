#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "cursive/model/config.hpp"
#include "cursive/model/layout.hpp"
#include "cursive/tokenizer.hpp"

namespace cursive {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// Flat parameter or gradient storage. The fixed 64-byte alignment keeps
/// vectorized reductions independent of where the buffer lands on the heap,
/// which bitwise reproducibility relies on.
template <typename T>
using ParamVector = std::vector<T, Eigen::aligned_allocator<T>>;

struct LossSum {
  double total = 0.0;
  std::size_t count = 0;
  double mean() const noexcept { return count > 0 ? total / static_cast<double>(count) : 0.0; }
};

/// Mean next-token cross-entropy over positions whose target is not `pad_id`.
/// Throws std::invalid_argument when every target is padding.
template <typename T>
double cross_entropy(const RowMatrix<T>& logits, std::span<const TokenId> targets, TokenId pad_id);

/// Post-softmax attention weights of one forward pass, stored as
/// [layer][head][query][key].
struct AttentionMaps {
  int layers = 0;
  int heads_self = 0;
  int heads_cross = 0;
  int queries = 0;
  int ascii_length = 0;
  std::vector<double> self;
  std::vector<double> cross;

  double self_at(int l, int h, int i, int j) const {
    return self[((static_cast<std::size_t>(l) * heads_self + h) * queries + i) * queries + j];
  }
  double cross_at(int l, int h, int i, int s) const {
    return cross[((static_cast<std::size_t>(l) * heads_cross + h) * queries + i) * ascii_length + s];
  }
};

/// Decoder-only transformer over stroke tokens. Every block runs causal
/// self-attention, cross-attention from stroke positions to the ASCII
/// context, and a GELU MLP, each behind a pre-norm residual connection. The
/// output projection reuses the stroke embedding matrix.
template <typename T>
class Transformer {
 public:
  explicit Transformer(const ModelConfig& mc);

  const ModelConfig& config() const noexcept { return mc_; }
  const ParameterLayout& layout() const noexcept { return layout_; }
  ParamVector<T>& params() noexcept { return params_; }
  const ParamVector<T>& params() const noexcept { return params_; }

  /// Normal(0, 0.02) weights (residual output projections scaled down by
  /// sqrt(2 * n_blocks)), zero biases, unit layer-norm gains.
  void init(std::uint64_t seed);

  /// Logits [T, stroke_vocab]. ASCII positions holding id 0 (PAD) are masked
  /// out as keys.
  RowMatrix<T> forward(std::span<const TokenId> stroke_ids, std::span<const int> ascii_ids) const;

  /// Summed cross-entropy of `targets` (positions equal to `ignore_id` are
  /// skipped). When `grad` is non-null, adds `grad_scale` times the gradient
  /// of the summed loss into it.
  LossSum loss_and_grad(std::span<const TokenId> stroke_ids, std::span<const int> ascii_ids,
                        std::span<const TokenId> targets, TokenId ignore_id, T grad_scale, T* grad) const;

  AttentionMaps attention(std::span<const TokenId> stroke_ids, std::span<const int> ascii_ids) const;

  /// Incremental decoder with cached keys and values.
  class Decoder {
   public:
    Decoder(const Transformer& model, std::span<const int> ascii_ids);
    /// Feeds the next token and returns the logits for the token after it.
    RowVector<T> step(TokenId token);
    int position() const noexcept { return pos_; }

   private:
    const Transformer* model_;
    std::vector<RowMatrix<T>> self_k_;
    std::vector<RowMatrix<T>> self_v_;
    std::vector<RowMatrix<T>> cross_k_;
    std::vector<RowMatrix<T>> cross_v_;
    std::vector<char> key_valid_;
    int pos_ = 0;
  };

 private:
  struct Pass;
  void run(Pass& pass) const;
  void check_inputs(std::span<const TokenId> stroke_ids, std::span<const int> ascii_ids) const;
  RowMatrix<T> context(std::span<const int> ascii_ids, Pass* pass) const;

  ModelConfig mc_;
  ParameterLayout layout_;
  ParamVector<T> params_;
};

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace cursive
