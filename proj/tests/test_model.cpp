#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cursive/model/checkpoint.hpp"
#include "cursive/model/train.hpp"
#include "cursive/model/transformer.hpp"
#include "cursive/rng.hpp"
#include "doctest.h"

using namespace cursive;

namespace {

std::vector<TokenId> random_ids(Rng& rng, std::size_t n, int vocab) {
  std::vector<TokenId> out(n);
  for (auto& t : out) t = static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(vocab)));
  return out;
}

std::vector<int> random_ascii(Rng& rng, std::size_t n) {
  std::vector<int> out(n);
  for (auto& a : out) a = 1 + static_cast<int>(rng.below(71));
  return out;
}

ModelConfig small_config() {
  ModelConfig mc;
  mc.n_blocks = 2;
  mc.d_model = 16;
  mc.d_context = 16;
  mc.n_heads_self = 4;
  mc.n_heads_cross = 2;
  mc.max_stroke_context = 40;
  mc.max_ascii_context = 12;
  mc.stroke_vocab = TokenizerConfig{8, 5, 1.0}.vocab_size();
  return mc;
}

}  // namespace

TEST_CASE("lr schedule") {
  const TrainConfig tc;
  CHECK(lr_at(0, tc) == 1e-2);
  CHECK(lr_at(32999, tc) == 1e-2);
  CHECK(lr_at(33000, tc) == 5e-3);
  CHECK(lr_at(66000, tc) == 2.5e-3);
  CHECK(lr_at(99000, tc) == 1.25e-3);
  CHECK(lr_at(124999, tc) == 1.25e-3);
  int drops = 0;
  for (std::int64_t s = 1; s < tc.total_steps; ++s) {
    const double a = lr_at(s - 1, tc);
    const double b = lr_at(s, tc);
    CHECK(b <= a);
    drops += b < a;
  }
  CHECK(drops == (tc.total_steps - 1) / 33000);
}

TEST_CASE("parameter count of the reference config") {
  const ModelConfig mc;
  const ParameterLayout layout(mc);
  CHECK(layout.find("wte").size() == 523 * 64);
  CHECK(param_count(mc) == 443264);
  const double rel = std::abs(double(param_count(mc)) - 442496.0) / 442496.0;
  CHECK(rel < 0.05);
  std::size_t sum = 0;
  for (const auto& t : layout.tensors) sum += t.size();
  CHECK(sum == layout.total);

  ModelConfig wide = mc;
  wide.d_model = 128;
  wide.d_context = 128;
  CHECK(param_count(wide) > param_count(mc));
  ModelConfig enc = mc;
  enc.context_layers = 1;
  CHECK(param_count(enc) > param_count(mc));
}

TEST_CASE("config validation and JSON") {
  ModelConfig bad;
  bad.n_heads_self = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  const ModelConfig mc = small_config();
  CHECK(ModelConfig::from_json(mc.to_json()) == mc);
  TrainConfig tc;
  tc.target_loss = 0.1;
  CHECK(TrainConfig::from_json(tc.to_json()) == tc);
  tc.lr_decay = 1.5;
  CHECK_THROWS(tc.validate());
}

TEST_CASE("cross entropy") {
  RowMatrix<double> uniform = RowMatrix<double>::Zero(3, 523);
  const std::vector<TokenId> targets{4, 9, 500};
  CHECK(cross_entropy(uniform, targets, 520) == doctest::Approx(std::log(523.0)).epsilon(1e-12));
  RowMatrix<double> sharp = RowMatrix<double>::Zero(3, 523);
  for (int t = 0; t < 3; ++t) sharp(t, targets[static_cast<std::size_t>(t)]) = 100.0;
  CHECK(cross_entropy(sharp, targets, 520) < 1e-30);

  RowMatrix<double> padded = RowMatrix<double>::Zero(5, 523);
  Rng rng(1);
  for (Eigen::Index i = 0; i < padded.size(); ++i) padded.data()[i] = rng.normal();
  const std::vector<TokenId> short_t{4, 9, 500};
  const std::vector<TokenId> long_t{4, 9, 500, 520, 520};
  const RowMatrix<double> top = padded.topRows(3);
  CHECK(cross_entropy(padded, long_t, 520) == doctest::Approx(cross_entropy(top, short_t, 520)).epsilon(1e-15));
  CHECK_THROWS_AS(cross_entropy(padded, std::vector<TokenId>(5, 520), 520), std::invalid_argument);
}

TEST_CASE("initial loss is close to the uniform entropy") {
  const ModelConfig mc;
  Transformer<float> model(mc);
  model.init(1337);
  Rng rng(2);
  const auto input = random_ids(rng, 200, mc.stroke_vocab);
  const auto target = random_ids(rng, 200, mc.stroke_vocab);
  const auto ascii = random_ascii(rng, 20);
  const auto loss = model.loss_and_grad(input, ascii, target, -1, 0.0f, nullptr);
  CHECK(std::abs(loss.mean() - std::log(523.0)) < 0.3);
}

TEST_CASE("forward shape and causality") {
  const ModelConfig mc = small_config();
  Transformer<double> model(mc);
  model.init(3);
  Rng rng(4);
  auto ids = random_ids(rng, 20, mc.stroke_vocab);
  const auto ascii = random_ascii(rng, 6);
  const auto logits = model.forward(ids, ascii);
  CHECK(logits.rows() == 20);
  CHECK(logits.cols() == mc.stroke_vocab);
  for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
    auto changed = ids;
    changed[t + 1] = (changed[t + 1] + 1) % mc.stroke_vocab;
    const auto other = model.forward(changed, ascii);
    for (Eigen::Index r = 0; r <= static_cast<Eigen::Index>(t); ++r) CHECK((other.row(r).array() == logits.row(r).array()).all());
  }
}

TEST_CASE("reference output shape") {
  Transformer<float> model{ModelConfig{}};
  model.init(1);
  const std::vector<TokenId> ids{521, 110, 221};
  const std::vector<int> ascii{5, 6, 7};
  const auto logits = model.forward(ids, ascii);
  CHECK(logits.rows() == 3);
  CHECK(logits.cols() == 523);
}

TEST_CASE("ASCII padding positions do not affect the logits") {
  ModelConfig mc = small_config();
  for (int layers : {0, 1}) {
    mc.context_layers = layers;
    Transformer<double> model(mc);
    model.init(5);
    Rng rng(6);
    const auto ids = random_ids(rng, 15, mc.stroke_vocab);
    std::vector<int> ascii = random_ascii(rng, 5);
    ascii.resize(10, 0);
    const auto base = model.forward(ids, ascii);
    std::vector<int> shorter(ascii.begin(), ascii.begin() + 7);
    CHECK((model.forward(ids, shorter) - base).cwiseAbs().maxCoeff() < 1e-12);
    // The pad embedding itself is irrelevant.
    auto& p = model.params();
    const auto& wte = model.layout().find("ascii_wte");
    for (int k = 0; k < wte.cols; ++k) p[wte.offset + static_cast<std::size_t>(k)] += 3.0;
    CHECK((model.forward(ids, ascii) - base).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("attention rows are normalized and causal") {
  const ModelConfig mc = small_config();
  Transformer<float> model(mc);
  model.init(7);
  Rng rng(8);
  const auto ids = random_ids(rng, 12, mc.stroke_vocab);
  auto ascii = random_ascii(rng, 5);
  ascii.push_back(0);
  const auto maps = model.attention(ids, ascii);
  CHECK(maps.self.size() == std::size_t(2 * 4 * 12 * 12));
  CHECK(maps.cross.size() == std::size_t(2 * 2 * 12 * 6));
  for (int l = 0; l < 2; ++l) {
    for (int h = 0; h < 4; ++h) {
      for (int i = 0; i < 12; ++i) {
        double sum = 0;
        for (int j = 0; j < 12; ++j) {
          sum += maps.self_at(l, h, i, j);
          if (j > i) CHECK(maps.self_at(l, h, i, j) == 0.0);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-6);
      }
    }
    for (int h = 0; h < 2; ++h) {
      for (int i = 0; i < 12; ++i) {
        double sum = 0;
        for (int s = 0; s < 6; ++s) sum += maps.cross_at(l, h, i, s);
        CHECK(std::abs(sum - 1.0) <= 1e-6);
        CHECK(maps.cross_at(l, h, i, 5) == 0.0);
      }
    }
  }
}

TEST_CASE("incremental decoder matches the full forward pass") {
  ModelConfig mc = small_config();
  mc.context_layers = 1;
  Transformer<double> model(mc);
  model.init(9);
  Rng rng(10);
  const auto ids = random_ids(rng, 25, mc.stroke_vocab);
  const auto ascii = random_ascii(rng, 8);
  const auto full = model.forward(ids, ascii);
  Transformer<double>::Decoder dec(model, ascii);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const auto row = dec.step(ids[t]);
    CHECK((row - full.row(static_cast<Eigen::Index>(t))).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK(dec.position() == 25);
}

TEST_CASE("input validation") {
  const ModelConfig mc = small_config();
  Transformer<float> model(mc);
  const std::vector<int> ascii{1};
  CHECK_THROWS_AS(model.forward(std::vector<TokenId>{}, ascii), std::invalid_argument);
  CHECK_THROWS_AS(model.forward(std::vector<TokenId>(41, 0), ascii), std::invalid_argument);
  CHECK_THROWS_AS(model.forward(std::vector<TokenId>{mc.stroke_vocab}, ascii), std::invalid_argument);
  CHECK_THROWS_AS(model.forward(std::vector<TokenId>{0}, std::vector<int>(13, 1)), std::invalid_argument);
  CHECK_THROWS_AS(model.forward(std::vector<TokenId>{0}, std::vector<int>{72}), std::invalid_argument);
}

TEST_CASE("gradient check on the tiny config") {
  for (int layers : {0, 1}) {
    ModelConfig mc = tiny_model_config();
    mc.context_layers = layers;
    const auto report = grad_check(mc);
    CHECK(report.coverage() == 1.0);
    CHECK(report.tensors.size() == ParameterLayout(mc).tensors.size());
    for (const auto& t : report.tensors) CHECK_MESSAGE(t.max_rel_error < 1e-4, t.tensor << " " << t.max_rel_error);
    CHECK(report.max_rel_error < 1e-4);
  }
}

TEST_CASE("a zero-loss point has zero gradients") {
  const ModelConfig mc = tiny_model_config();
  Transformer<double> model(mc);
  // All weights zero except a large final-norm bias along the END embedding.
  const TokenizerConfig tok{4, 3, 1.0};
  const auto& layout = model.layout();
  auto& p = model.params();
  const auto end = static_cast<std::size_t>(tok.end_id());
  p[layout.wte + end * 8] = 1.0;
  p[layout.ln_f.b] = 60.0;
  const std::vector<TokenId> input{tok.end_id()};
  const std::vector<TokenId> target{tok.end_id()};
  const std::vector<int> ascii{3, 4};
  ParamVector<double> grad(p.size(), 0.0);
  const auto loss = model.loss_and_grad(input, ascii, target, -1, 1.0, grad.data());
  CHECK(loss.total < 1e-20);
  for (double g : grad) CHECK(std::abs(g) <= 1e-10);
}

TEST_CASE("checkpoint round trip") {
  const ModelConfig mc = small_config();
  Checkpoint c;
  c.model = mc;
  c.tokenizer = {8, 5, 0.75};
  c.config_hash = "cafe";
  c.step = 17;
  Rng rng(11);
  for (std::size_t i = 0; i < param_count(mc); ++i) {
    c.params.push_back(static_cast<float>(rng.normal()));
    c.adam_m.push_back(static_cast<float>(rng.normal()));
    c.adam_v.push_back(static_cast<float>(rng.uniform()));
  }
  const auto bytes = serialize_checkpoint(c);
  const auto back = deserialize_checkpoint(bytes);
  CHECK(back.model == c.model);
  CHECK(back.tokenizer == c.tokenizer);
  CHECK(back.step == 17);
  CHECK(back.config_hash == "cafe");
  CHECK(back.params == c.params);
  CHECK(back.adam_m == c.adam_m);
  CHECK(back.adam_v == c.adam_v);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK_THROWS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 1)));
  CHECK_THROWS(deserialize_checkpoint("garbage"));
}

namespace {

std::vector<TrainingSequence> toy_sequences(const TokenizerConfig& tok, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainingSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    TrainingSequence s;
    s.text = "ab c";
    s.ascii_ids = {2, 3, 1, 4};
    const auto len = 3 + rng.below(6);
    for (std::size_t k = 0; k < len; ++k) {
      s.stream.push_back(static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(tok.theta_bins))));
      s.stream.push_back(tok.theta_bins + static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(2 * tok.r_bins))));
      if (k % 3 == 2) s.stream.push_back(tok.word_id());
    }
    s.stream.push_back(tok.end_id());
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("training is deterministic, thread-count independent and resumable") {
  const ModelConfig mc = small_config();
  const TokenizerConfig tok{8, 5, 1.0};
  const auto data = toy_sequences(tok, 12, 3);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.total_steps = 12;
  tc.lr0 = 3e-3;

  auto run = [&](unsigned threads, std::int64_t steps) {
    Trainer t(mc, tc, tok, data, data, threads);
    std::vector<double> losses;
    for (std::int64_t s = 0; s < steps; ++s) losses.push_back(t.step().train_loss);
    return std::make_pair(losses, t.checkpoint());
  };
  const auto [a, ca] = run(1, 12);
  const auto [b, cb] = run(1, 12);
  const auto [c, cc] = run(3, 12);
  CHECK(a == b);
  CHECK(a == c);
  CHECK(ca.params == cc.params);
  CHECK(a.back() < a.front());

  const auto [first, half] = run(1, 6);
  const auto reloaded = deserialize_checkpoint(serialize_checkpoint(half));
  Trainer resumed(mc, tc, tok, data, data, 1);
  resumed.restore(reloaded);
  std::vector<double> rest;
  for (int s = 0; s < 6; ++s) rest.push_back(resumed.step().train_loss);
  CHECK(std::vector<double>(a.begin() + 6, a.end()) == rest);
  CHECK(resumed.checkpoint().params == ca.params);
}

TEST_CASE("training rejects mismatched vocabularies and oversized sequences") {
  const ModelConfig mc = small_config();
  const TokenizerConfig tok{8, 5, 1.0};
  auto data = toy_sequences(tok, 2, 4);
  CHECK_THROWS_AS(Trainer(mc, TrainConfig{}, TokenizerConfig{9, 5, 1.0}, data, data), std::invalid_argument);
  data[1].stream.insert(data[1].stream.begin(), 60, tok.word_id());
  CHECK_THROWS_AS(Trainer(mc, TrainConfig{}, tok, data, data), std::invalid_argument);
  CHECK_THROWS_AS(Trainer(mc, TrainConfig{}, tok, {}, data), std::invalid_argument);
}

TEST_CASE("batches cover small corpora and are seeded by step") {
  const ModelConfig mc = small_config();
  const TokenizerConfig tok{8, 5, 1.0};
  const auto data = toy_sequences(tok, 10, 5);
  TrainConfig tc;
  tc.batch_size = 10;
  const Trainer t(mc, tc, tok, data, data);
  auto b = t.batch_indices(3);
  std::sort(b.begin(), b.end());
  std::vector<std::size_t> all(10);
  std::iota(all.begin(), all.end(), 0);
  CHECK(b == all);
  CHECK(t.batch_indices(3) == t.batch_indices(3));
}

TEST_CASE("loss CSV layout") {
  std::vector<StepLog> log{{0, 0.01, 6.25, std::nullopt}, {1, 0.01, 6.0, 6.1}};
  CHECK(loss_csv(log) == "step,lr,train_loss,test_loss\n0,0.01,6.25,\n1,0.01,6,6.1\n");
}
