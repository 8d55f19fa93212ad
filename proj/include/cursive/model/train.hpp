#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cursive/dataset.hpp"
#include "cursive/model/checkpoint.hpp"
#include "cursive/model/transformer.hpp"

namespace cursive {

/// Model input and target for one stored stream: the input is END (acting as
/// start-of-sequence) followed by the stream without its last token, and the
/// target is the stream itself.
struct TrainingExample {
  TokenStream input;
  TokenStream target;
  std::vector<int> ascii;
};

TrainingExample make_example(const TrainingSequence& seq, const TokenizerConfig& tok);

struct StepLog {
  std::int64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> test_loss;
};

/// AdamW with decoupled weight decay on the tensors flagged for decay.
class AdamW {
 public:
  explicit AdamW(std::size_t n) : m_(n, 0.0f), v_(n, 0.0f) {}

  /// `t` is the 1-based update count used for bias correction.
  void update(ParamVector<float>& params, const ParamVector<float>& grad, const ParameterLayout& layout,
              const TrainConfig& tc, double lr, std::int64_t t);

  std::vector<float>& m() noexcept { return m_; }
  std::vector<float>& v() noexcept { return v_; }
  const std::vector<float>& m() const noexcept { return m_; }
  const std::vector<float>& v() const noexcept { return v_; }

 private:
  std::vector<float> m_;
  std::vector<float> v_;
};

/// Single-precision training loop. Batch contents depend only on (seed,
/// step); per-sequence gradients are reduced in batch order, so results do
/// not depend on the thread count.
class Trainer {
 public:
  Trainer(const ModelConfig& mc, const TrainConfig& tc, const TokenizerConfig& tok,
          const std::vector<TrainingSequence>& train, const std::vector<TrainingSequence>& test, unsigned threads = 1);

  /// Continues from a checkpoint's weights, moments and step.
  void restore(const Checkpoint& ckpt);

  /// One optimizer step on the batch for the current step number.
  StepLog step();

  /// Mean token loss over the first `limit` sequences of `examples`.
  double evaluate(const std::vector<TrainingExample>& examples, std::size_t limit) const;
  double test_loss() const;

  /// Indices of the training batch used at `step`.
  std::vector<std::size_t> batch_indices(std::int64_t step) const;

  Checkpoint checkpoint(const std::string& config_hash = {}) const;
  const Transformer<float>& model() const noexcept { return model_; }
  Transformer<float>& model() noexcept { return model_; }
  std::int64_t steps_done() const noexcept { return step_; }
  const TrainConfig& train_config() const noexcept { return tc_; }
  const std::vector<TrainingExample>& train_examples() const noexcept { return train_; }

 private:
  ModelConfig mc_;
  TrainConfig tc_;
  TokenizerConfig tok_;
  Transformer<float> model_;
  AdamW opt_;
  std::vector<TrainingExample> train_;
  std::vector<TrainingExample> test_;
  unsigned threads_;
  std::int64_t step_ = 0;
  std::vector<ParamVector<float>> seq_grads_;
};

struct TrainOptions {
  /// Receives checkpoints (`checkpoint_<step>.ckpt`, `last.ckpt`) and
  /// `loss.csv`. Empty disables file output.
  std::string out_dir;
  std::string config_hash;
  unsigned threads = 1;
  std::optional<Checkpoint> resume;
  std::function<void(const StepLog&)> on_step;
};

struct TrainResult {
  Checkpoint final_state;
  std::vector<StepLog> log;
  bool reached_target = false;
};

/// Runs until `total_steps` or until a batch loss falls below `target_loss`.
TrainResult train(const Corpus& corpus, const ModelConfig& mc, const TrainConfig& tc, const TrainOptions& options);

/// Writes `step,lr,train_loss,test_loss`; test_loss is empty on steps
/// without evaluation.
std::string loss_csv(const std::vector<StepLog>& log);

struct GradCheckEntry {
  std::string tensor;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> tensors;
  std::size_t checked = 0;
  std::size_t total = 0;
  double max_rel_error = 0.0;
  double loss = 0.0;
  /// Largest absolute analytic gradient.
  double max_abs_grad = 0.0;
  double coverage() const noexcept { return total > 0 ? static_cast<double>(checked) / static_cast<double>(total) : 0.0; }
};

/// Small model used for finite-difference checks: width 8, one block, two
/// heads each, 13 stroke tokens (4 directions, 3 radii).
ModelConfig tiny_model_config();

/// Compares double-precision analytic gradients with central differences
/// of step `h` for every parameter. The relative error of an entry is
/// |analytic - numeric| / max(|analytic|, |numeric|, abs_floor); the floor
/// keeps entries whose true gradient is zero from dividing rounding noise by
/// zero.
GradCheckReport grad_check(const ModelConfig& mc, double h = 1e-5, std::uint64_t seed = 7, int stroke_length = 6,
                           int ascii_length = 4, double abs_floor = 1e-6);

}  // namespace cursive
