#include "cursive/model/config.hpp"

#include <cmath>
#include <stdexcept>

namespace cursive {

void ModelConfig::validate() const {
  if (n_blocks < 1) throw std::invalid_argument("model: n_blocks must be >= 1");
  if (n_heads_self < 1 || n_heads_cross < 1) throw std::invalid_argument("model: head counts must be >= 1");
  if (d_model < 1 || d_context < 1) throw std::invalid_argument("model: widths must be >= 1");
  if (d_model % n_heads_self != 0 || d_model % n_heads_cross != 0) {
    throw std::invalid_argument("model: d_model must be divisible by both head counts");
  }
  if (context_layers > 0 && d_context % n_heads_cross != 0) {
    throw std::invalid_argument("model: d_context must be divisible by n_heads_cross when context_layers > 0");
  }
  if (max_stroke_context < 1 || max_ascii_context < 1) throw std::invalid_argument("model: contexts must be >= 1");
  if (stroke_vocab < 4 || ascii_vocab < 2) throw std::invalid_argument("model: vocabulary too small");
  if (mlp_ratio < 1) throw std::invalid_argument("model: mlp_ratio must be >= 1");
  if (context_layers < 0) throw std::invalid_argument("model: context_layers must be >= 0");
  if (!(ln_eps > 0.0)) throw std::invalid_argument("model: ln_eps must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"n_blocks", n_blocks},
          {"n_heads_self", n_heads_self},
          {"n_heads_cross", n_heads_cross},
          {"d_model", d_model},
          {"d_context", d_context},
          {"max_stroke_context", max_stroke_context},
          {"max_ascii_context", max_ascii_context},
          {"stroke_vocab", stroke_vocab},
          {"ascii_vocab", ascii_vocab},
          {"mlp_ratio", mlp_ratio},
          {"context_layers", context_layers},
          {"activation", "gelu"},
          {"ln_eps", ln_eps}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.n_heads_self = j.value("n_heads_self", c.n_heads_self);
  c.n_heads_cross = j.value("n_heads_cross", c.n_heads_cross);
  c.d_model = j.value("d_model", c.d_model);
  c.d_context = j.value("d_context", c.d_context);
  c.max_stroke_context = j.value("max_stroke_context", c.max_stroke_context);
  c.max_ascii_context = j.value("max_ascii_context", c.max_ascii_context);
  c.stroke_vocab = j.value("stroke_vocab", c.stroke_vocab);
  c.ascii_vocab = j.value("ascii_vocab", c.ascii_vocab);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.context_layers = j.value("context_layers", c.context_layers);
  c.ln_eps = j.value("ln_eps", c.ln_eps);
  if (j.value("activation", std::string("gelu")) != "gelu") throw std::invalid_argument("model: only gelu is supported");
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0)) throw std::invalid_argument("train: lr0 must be positive");
  if (lr_step_every < 1) throw std::invalid_argument("train: lr_step_every must be >= 1");
  if (!(lr_decay > 0.0 && lr_decay < 1.0)) throw std::invalid_argument("train: lr_decay must lie in (0, 1)");
  if (total_steps < 1) throw std::invalid_argument("train: total_steps must be >= 1");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("train: weight_decay must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("train: betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw std::invalid_argument("train: adam_eps must be positive");
  if (!(grad_clip >= 0.0)) throw std::invalid_argument("train: grad_clip must be non-negative");
  if (eval_every < 0 || checkpoint_every < 0 || eval_sequences < 0) throw std::invalid_argument("train: intervals must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j{{"lr0", lr0},
                   {"lr_step_every", lr_step_every},
                   {"lr_decay", lr_decay},
                   {"total_steps", total_steps},
                   {"weight_decay", weight_decay},
                   {"batch_size", batch_size},
                   {"seed", seed},
                   {"beta1", beta1},
                   {"beta2", beta2},
                   {"adam_eps", adam_eps},
                   {"grad_clip", grad_clip},
                   {"eval_every", eval_every},
                   {"eval_sequences", eval_sequences},
                   {"checkpoint_every", checkpoint_every}};
  j["target_loss"] = target_loss ? nlohmann::json(*target_loss) : nlohmann::json();
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr0 = j.value("lr0", c.lr0);
  c.lr_step_every = j.value("lr_step_every", c.lr_step_every);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.eval_sequences = j.value("eval_sequences", c.eval_sequences);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  if (j.contains("target_loss") && !j.at("target_loss").is_null()) c.target_loss = j.at("target_loss").get<double>();
  c.validate();
  return c;
}

double lr_at(std::int64_t step, const TrainConfig& tc) {
  if (step < 0) throw std::invalid_argument("lr_at: negative step");
  return tc.lr0 * std::pow(tc.lr_decay, static_cast<double>(step / tc.lr_step_every));
}

}  // namespace cursive
