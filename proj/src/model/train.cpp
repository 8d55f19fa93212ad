#include "cursive/model/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <unordered_set>

#include "cursive/error.hpp"
#include "cursive/rng.hpp"

namespace cursive {
namespace {

constexpr std::uint64_t kBatchStream = 0xba7c4e5u;

std::vector<TrainingExample> make_examples(const std::vector<TrainingSequence>& seqs, const TokenizerConfig& tok,
                                           const ModelConfig& mc) {
  std::vector<TrainingExample> out;
  out.reserve(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    auto ex = make_example(seqs[i], tok);
    if (ex.input.size() > static_cast<std::size_t>(mc.max_stroke_context)) {
      throw std::invalid_argument("train: sequence " + std::to_string(i) + " has " + std::to_string(ex.input.size()) +
                                  " tokens, more than the context of " + std::to_string(mc.max_stroke_context));
    }
    if (ex.ascii.size() > static_cast<std::size_t>(mc.max_ascii_context)) {
      throw std::invalid_argument("train: text of sequence " + std::to_string(i) + " exceeds the ASCII context");
    }
    out.push_back(std::move(ex));
  }
  return out;
}

template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) fn(i);
    });
  }
}

}  // namespace

TrainingExample make_example(const TrainingSequence& seq, const TokenizerConfig& tok) {
  if (seq.stream.empty()) throw std::invalid_argument("make_example: empty stream");
  TrainingExample ex;
  ex.input.reserve(seq.stream.size());
  ex.input.push_back(tok.end_id());
  ex.input.insert(ex.input.end(), seq.stream.begin(), seq.stream.end() - 1);
  ex.target = seq.stream;
  ex.ascii = seq.ascii_ids;
  return ex;
}

void AdamW::update(ParamVector<float>& params, const ParamVector<float>& grad, const ParameterLayout& layout,
                   const TrainConfig& tc, double lr, std::int64_t t) {
  const double b1 = tc.beta1;
  const double b2 = tc.beta2;
  const float c1 = static_cast<float>(1.0 - std::pow(b1, static_cast<double>(t)));
  const float c2 = static_cast<float>(1.0 - std::pow(b2, static_cast<double>(t)));
  const float flr = static_cast<float>(lr);
  const float eps = static_cast<float>(tc.adam_eps);
  const float fb1 = static_cast<float>(b1);
  const float fb2 = static_cast<float>(b2);
  for (const auto& spec : layout.tensors) {
    const float shrink = spec.decay ? static_cast<float>(1.0 - lr * tc.weight_decay) : 1.0f;
    for (std::size_t i = spec.offset; i < spec.offset + spec.size(); ++i) {
      const float g = grad[i];
      m_[i] = fb1 * m_[i] + (1.0f - fb1) * g;
      v_[i] = fb2 * v_[i] + (1.0f - fb2) * g * g;
      const float mhat = m_[i] / c1;
      const float vhat = v_[i] / c2;
      params[i] = params[i] * shrink - flr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

Trainer::Trainer(const ModelConfig& mc, const TrainConfig& tc, const TokenizerConfig& tok,
                 const std::vector<TrainingSequence>& train, const std::vector<TrainingSequence>& test, unsigned threads)
    : mc_(mc), tc_(tc), tok_(tok), model_(mc), opt_(model_.params().size()), threads_(std::max(1u, threads)) {
  tc_.validate();
  tok_.validate();
  if (tok_.vocab_size() != mc_.stroke_vocab) {
    throw std::invalid_argument("train: tokenizer vocabulary " + std::to_string(tok_.vocab_size()) +
                                " does not match the model's " + std::to_string(mc_.stroke_vocab));
  }
  if (train.empty()) throw std::invalid_argument("train: empty training corpus");
  train_ = make_examples(train, tok_, mc_);
  test_ = make_examples(test, tok_, mc_);
  model_.init(tc_.seed);
}

void Trainer::restore(const Checkpoint& ckpt) {
  if (!(ckpt.model == mc_)) throw std::invalid_argument("resume: checkpoint model config differs");
  if (ckpt.params.size() != model_.params().size()) throw std::invalid_argument("resume: parameter count differs");
  model_.params().assign(ckpt.params.begin(), ckpt.params.end());
  if (ckpt.has_optimizer()) {
    opt_.m() = ckpt.adam_m;
    opt_.v() = ckpt.adam_v;
  }
  step_ = ckpt.step;
}

std::vector<std::size_t> Trainer::batch_indices(std::int64_t step) const {
  const std::size_t n = train_.size();
  const auto b = static_cast<std::size_t>(tc_.batch_size);
  Rng rng = Rng::substream(tc_.seed ^ kBatchStream, static_cast<std::uint64_t>(step));
  std::vector<std::size_t> out;
  out.reserve(b);
  if (b >= n) {
    // Every sequence, in a shuffled order, then extra draws with replacement.
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(all[i - 1], all[rng.below(i)]);
    out = all;
    while (out.size() < b) out.push_back(rng.below(n));
  } else {
    std::unordered_set<std::size_t> seen;
    while (out.size() < b) {
      const auto i = static_cast<std::size_t>(rng.below(n));
      if (seen.insert(i).second) out.push_back(i);
    }
  }
  return out;
}

StepLog Trainer::step() {
  const auto batch = batch_indices(step_);
  const std::size_t p = model_.params().size();
  if (seq_grads_.size() < batch.size()) seq_grads_.resize(batch.size());
  std::vector<LossSum> losses(batch.size());
  parallel_for(batch.size(), threads_, [&](std::size_t k) {
    auto& g = seq_grads_[k];
    g.assign(p, 0.0f);
    const auto& ex = train_[batch[k]];
    losses[k] = model_.loss_and_grad(ex.input, ex.ascii, ex.target, tok_.pad_id(), 1.0f, g.data());
  });

  double total = 0.0;
  std::size_t count = 0;
  ParamVector<float> grad(p, 0.0f);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    total += losses[k].total;
    count += losses[k].count;
    const auto& g = seq_grads_[k];
    for (std::size_t i = 0; i < p; ++i) grad[i] += g[i];
  }
  if (count == 0) throw std::runtime_error("train: batch has no target tokens");
  const float inv = 1.0f / static_cast<float>(count);
  double norm2 = 0.0;
  for (auto& g : grad) {
    g *= inv;
    norm2 += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(norm2);
  if (tc_.grad_clip > 0.0 && norm > tc_.grad_clip) {
    const auto s = static_cast<float>(tc_.grad_clip / norm);
    for (auto& g : grad) g *= s;
  }

  StepLog log;
  log.step = step_;
  log.lr = lr_at(step_, tc_);
  log.train_loss = total / static_cast<double>(count);
  opt_.update(model_.params(), grad, model_.layout(), tc_, log.lr, step_ + 1);
  ++step_;
  return log;
}

double Trainer::evaluate(const std::vector<TrainingExample>& examples, std::size_t limit) const {
  const std::size_t n = std::min(limit, examples.size());
  if (n == 0) throw std::invalid_argument("evaluate: no sequences");
  std::vector<LossSum> losses(n);
  parallel_for(n, threads_, [&](std::size_t k) {
    const auto& ex = examples[k];
    losses[k] = model_.loss_and_grad(ex.input, ex.ascii, ex.target, tok_.pad_id(), 0.0f, nullptr);
  });
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& l : losses) {
    total += l.total;
    count += l.count;
  }
  return total / static_cast<double>(count);
}

double Trainer::test_loss() const { return evaluate(test_, static_cast<std::size_t>(tc_.eval_sequences)); }

Checkpoint Trainer::checkpoint(const std::string& config_hash) const {
  Checkpoint c;
  c.model = mc_;
  c.train = tc_;
  c.tokenizer = tok_;
  c.config_hash = config_hash;
  c.step = step_;
  c.params.assign(model_.params().begin(), model_.params().end());
  c.adam_m = opt_.m();
  c.adam_v = opt_.v();
  return c;
}

std::string loss_csv(const std::vector<StepLog>& log) {
  std::ostringstream out;
  out << "step,lr,train_loss,test_loss\n" << std::setprecision(9);
  for (const auto& s : log) {
    out << s.step << ',' << s.lr << ',' << s.train_loss << ',';
    if (s.test_loss) out << *s.test_loss;
    out << '\n';
  }
  return out.str();
}

TrainResult train(const Corpus& corpus, const ModelConfig& mc, const TrainConfig& tc, const TrainOptions& options) {
  Trainer trainer(mc, tc, corpus.tokenizer, corpus.train, corpus.test, options.threads);
  if (options.resume) trainer.restore(*options.resume);
  namespace fs = std::filesystem;
  const bool files = !options.out_dir.empty();
  std::ofstream csv;
  if (files) {
    fs::create_directories(options.out_dir);
    const auto path = fs::path(options.out_dir) / "loss.csv";
    const bool append = options.resume.has_value() && fs::exists(path);
    csv.open(path, append ? std::ios::app : std::ios::trunc);
    if (!csv) throw ArtifactError("cannot write " + path.string());
    if (!append) csv << "step,lr,train_loss,test_loss\n";
    csv << std::setprecision(9);
  }
  auto save = [&](const std::string& name) {
    if (files) save_checkpoint((fs::path(options.out_dir) / name).string(), trainer.checkpoint(options.config_hash));
  };

  TrainResult result;
  const bool can_eval = !corpus.test.empty() && tc.eval_sequences > 0;
  while (trainer.steps_done() < tc.total_steps) {
    StepLog log = trainer.step();
    const std::int64_t done = trainer.steps_done();
    const bool reached = tc.target_loss && log.train_loss < *tc.target_loss;
    const bool last = done == tc.total_steps || reached;
    if (can_eval && tc.eval_every > 0 && (done % tc.eval_every == 0 || last)) log.test_loss = trainer.test_loss();
    if (files) {
      csv << log.step << ',' << log.lr << ',' << log.train_loss << ',';
      if (log.test_loss) csv << *log.test_loss;
      csv << '\n';
      if (tc.checkpoint_every > 0 && done % tc.checkpoint_every == 0) {
        csv.flush();
        save("checkpoint_" + std::to_string(done) + ".ckpt");
      }
    }
    if (options.on_step) options.on_step(log);
    result.log.push_back(log);
    if (reached) {
      result.reached_target = true;
      break;
    }
  }
  if (files) csv.flush();
  save("last.ckpt");
  result.final_state = trainer.checkpoint(options.config_hash);
  return result;
}

ModelConfig tiny_model_config() {
  ModelConfig mc;
  mc.n_blocks = 1;
  mc.n_heads_self = 2;
  mc.n_heads_cross = 2;
  mc.d_model = 8;
  mc.d_context = 8;
  mc.max_stroke_context = 8;
  mc.max_ascii_context = 4;
  mc.stroke_vocab = TokenizerConfig{4, 3, 1.0}.vocab_size();
  mc.ascii_vocab = 72;
  mc.mlp_ratio = 4;
  return mc;
}

GradCheckReport grad_check(const ModelConfig& mc, double h, std::uint64_t seed, int stroke_length, int ascii_length,
                           double abs_floor) {
  Transformer<double> model(mc);
  Rng rng(seed);
  // Broad random weights so every path carries a non-trivial gradient.
  for (auto& p : model.params()) p = 0.3 * rng.normal();
  std::vector<TokenId> input(static_cast<std::size_t>(stroke_length));
  std::vector<TokenId> target(input.size());
  for (auto& t : input) t = static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(mc.stroke_vocab)));
  for (auto& t : target) t = static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(mc.stroke_vocab)));
  std::vector<int> ascii(static_cast<std::size_t>(ascii_length));
  for (auto& a : ascii) a = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(mc.ascii_vocab - 1)));
  if (ascii.size() > 1) ascii.back() = 0;
  const TokenId ignore = -1;

  ParamVector<double> grad(model.params().size(), 0.0);
  GradCheckReport report;
  // Mean loss, as in training.
  const double inv = 1.0 / static_cast<double>(target.size());
  report.loss = model.loss_and_grad(input, ascii, target, ignore, inv, grad.data()).mean();
  auto loss_at = [&] { return model.loss_and_grad(input, ascii, target, ignore, 0.0, nullptr).mean(); };

  for (const auto& spec : model.layout().tensors) {
    GradCheckEntry entry;
    entry.tensor = spec.name;
    for (std::size_t i = spec.offset; i < spec.offset + spec.size(); ++i) {
      double& p = model.params()[i];
      const double saved = p;
      p = saved + h;
      const double up = loss_at();
      p = saved - h;
      const double down = loss_at();
      p = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double abs_err = std::abs(grad[i] - numeric);
      const double rel = abs_err / std::max({std::abs(grad[i]), std::abs(numeric), abs_floor});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, rel);
      report.max_abs_grad = std::max(report.max_abs_grad, std::abs(grad[i]));
      ++entry.checked;
    }
    report.checked += entry.checked;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.tensors.push_back(entry);
  }
  report.total = model.params().size();
  return report;
}

}  // namespace cursive
