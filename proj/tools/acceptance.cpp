#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "cursive/attention_plot.hpp"
#include "cursive/dataset.hpp"
#include "cursive/model/layout.hpp"
#include "cursive/model/train.hpp"
#include "cursive/sampler.hpp"
#include "cursive/synth.hpp"
#include "cursive/wordbank.hpp"

namespace fs = std::filesystem;
using namespace cursive;

namespace {

constexpr std::uint64_t kSeed = 1337;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Shared state: the overfit run provides the trained checkpoint.
struct Context {
  std::string out_dir;
  unsigned threads = 1;
  std::optional<LoadedModel> trained;
};

Outcome vocabulary() {
  const int v = vocab_size(TokenizerConfig{220, 150, 1.0});
  return {v == 523, fmt("vocab_size(220,150) = %d", v)};
}

Outcome tokenizer_round_trip() {
  const auto t0 = Clock::now();
  const TokenizerConfig cfg{220, 150, 1.0};
  const StrokeTokenizer tok(cfg);
  Rng rng(kSeed);
  double max_dtheta = 0.0;
  double max_dr = 0.0;
  std::size_t pen_mismatch = 0;
  std::size_t offsets = 0;
  for (int s = 0; s < 10'000; ++s) {
    const std::size_t n = 1 + rng.below(100);
    std::vector<PolarOffset> seq(n);
    for (auto& o : seq) {
      o.theta = (2.0 * rng.uniform() - 1.0) * std::numbers::pi;
      o.r = rng.uniform() * cfg.r_max;
      o.pen = rng.below(2) == 1;
    }
    const std::vector<std::size_t> breaks{n};
    const auto decoded = tok.decode(tok.encode(seq, breaks));
    if (decoded.offsets.size() != n) return {false, fmt("sequence %d decoded to %zu offsets", s, decoded.offsets.size())};
    for (std::size_t i = 0; i < n; ++i) {
      const double dtheta = std::abs(std::remainder(decoded.offsets[i].theta - seq[i].theta, 2.0 * std::numbers::pi));
      max_dtheta = std::max(max_dtheta, dtheta);
      max_dr = std::max(max_dr, std::abs(decoded.offsets[i].r - seq[i].r));
      pen_mismatch += decoded.offsets[i].pen != seq[i].pen;
    }
    offsets += n;
  }
  const double secs = seconds_since(t0);
  const double theta_bound = std::numbers::pi / cfg.theta_bins;
  const double r_bound = cfg.r_max / (2.0 * cfg.r_bins);
  const bool pass = max_dtheta <= theta_bound && max_dr <= r_bound && pen_mismatch == 0 && secs < 10.0;
  return {pass, fmt("%zu offsets: max|dtheta| %.3g (bound %.3g), max|dr| %.3g (bound %.3g), pen mismatches %zu, %.2fs",
                    offsets, max_dtheta, theta_bound, max_dr, r_bound, pen_mismatch, secs)};
}

Outcome parameter_count() {
  const std::size_t n = param_count(ModelConfig{});
  const double target = 442'496.0;
  const double rel = std::abs(static_cast<double>(n) - target) / target;
  return {rel < 0.05, fmt("param_count %zu vs 442496 (%+.3f%%, reconciliation in docs/parameter_count.md)", n,
                          100.0 * (static_cast<double>(n) - target) / target)};
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  const auto base = grad_check(tiny_model_config());
  ModelConfig with_context = tiny_model_config();
  with_context.context_layers = 1;
  const auto ctx = grad_check(with_context);
  const double secs = seconds_since(t0);
  const double err = std::max(base.max_rel_error, ctx.max_rel_error);
  const bool pass = err < 1e-4 && base.coverage() == 1.0 && ctx.coverage() == 1.0 && secs < 60.0;
  return {pass, fmt("max relative error %.3g over %zu + %zu parameters (double precision), %.2fs", err, base.checked,
                    ctx.checked, secs)};
}

Outcome lr_schedule() {
  const TrainConfig tc;
  const std::int64_t steps[] = {0, 33'000, 66'000, 99'000};
  const double want[] = {1e-2, 5e-3, 2.5e-3, 1.25e-3};
  std::string got;
  bool pass = true;
  for (int i = 0; i < 4; ++i) {
    const double lr = lr_at(steps[i], tc);
    pass = pass && lr == want[i];
    got += fmt("%s%g", i ? " / " : "", lr);
  }
  return {pass, "lr at 0/33000/66000/99000 = " + got};
}

std::vector<SampleRecord> synthetic_records(std::size_t n, std::uint64_t seed) {
  const auto words = generate_bank(seed, WordBankConfig::defaults(), n);
  return render_words(words, GlyphSet::builtin(), SynthConfig{}, mix64(seed ^ 0x5e17));
}

Outcome word_bank() {
  const auto cfg = WordBankConfig::defaults();
  const auto bank = generate_bank(kSeed, cfg, 10'000);
  std::size_t violations = 0;
  std::map<char, double> counts;
  double n = 0;
  for (const auto& w : bank) {
    violations += !validate_word(w).empty();
    for (char c : w) {
      counts[c] += 1;
      n += 1;
    }
  }
  double total_weight = 0;
  for (char c : cfg.alphabet) total_weight += cfg.weight(c);
  double worst_z = 0;
  char worst = ' ';
  std::size_t outside = 0;
  for (char c : cfg.alphabet) {
    const double p = cfg.weight(c) / total_weight;
    const double z = std::abs(counts[c] - n * p) / std::sqrt(n * p * (1 - p));
    outside += z > 3.0;
    if (z > worst_z) {
      worst_z = z;
      worst = c;
    }
  }
  return {violations == 0 && outside == 0,
          fmt("10000 words: %zu rule violations; %zu of %zu characters beyond 3 sigma (largest |z| %.2f for '%c')",
              violations, outside, cfg.alphabet.size(), worst_z, worst)};
}

Outcome augmentation() {
  const auto records = synthetic_records(400, kSeed);
  const AugmentationRanges ranges;
  Rng rng(mix64(kSeed ^ 0xa06));
  double lo = 1.0;
  double hi = 0.0;
  std::size_t endpoint_failures = 0;
  std::size_t identity_failures = 0;
  for (int s = 0; s < 1000; ++s) {
    // Four words side by side, as in corpus assembly.
    StrokeSequence seq;
    double cursor = 0.0;
    for (int w = 0; w < 4; ++w) {
      const auto& rec = records[rng.below(records.size())];
      const double shift = w == 0 ? 0.0 : cursor + 0.3;
      for (const auto& p : rec.points) {
        seq.push_back({p.x + shift, p.y, p.pen});
        cursor = std::max(cursor, p.x + shift);
      }
    }
    identity_failures += apply_affine(seq, AffineParams{}) != seq;
    const auto params = draw_augmentation(rng, ranges, seq.size());
    const auto sheared = apply_affine(seq, {params.shear_x, params.scale_x, params.scale_y});
    const auto out = augment(seq, params);
    Rng drop_rng(params.seed);
    const auto kept = downsample_indices(sheared, params.drop_fraction, drop_rng);
    const double removed = 1.0 - static_cast<double>(out.size()) / static_cast<double>(seq.size());
    lo = std::min(lo, removed);
    hi = std::max(hi, removed);
    const std::set<std::size_t> kept_set(kept.begin(), kept.end());
    for (const auto& run : pen_runs(sheared)) {
      for (std::size_t idx : {run.first, run.last}) {
        const auto it = std::find(kept.begin(), kept.end(), idx);
        if (!kept_set.count(idx) || out[static_cast<std::size_t>(it - kept.begin())] != sheared[idx]) {
          ++endpoint_failures;
        }
      }
    }
  }
  const bool pass = lo >= 0.55 && hi <= 0.75 && endpoint_failures == 0 && identity_failures == 0;
  return {pass, fmt("1000 sequences: removal fraction in [%.4f, %.4f]; %zu endpoint changes; %zu identity mismatches", lo,
                    hi, endpoint_failures, identity_failures)};
}

Outcome corpus_build(const Context& ctx) {
  const auto t0 = Clock::now();
  const auto records = synthetic_records(3'500, kSeed);
  CorpusOptions opt;
  opt.seed = kSeed;
  const TokenizerConfig tok;
  std::size_t bad_words = 0;
  std::size_t too_long = 0;
  std::size_t seen[2] = {0, 0};
  const auto sink = [&](Split split, std::size_t, const TrainingSequence& s) {
    ++seen[split == Split::train ? 0 : 1];
    bad_words += std::count(s.stream.begin(), s.stream.end(), tok.word_id()) != 4;
    too_long += s.stream.size() > 1050;
  };
  opt.threads = 1;
  const auto serial = build_corpus(records, opt, sink);
  const double serial_secs = seconds_since(t0);
  const std::size_t serial_seen[2] = {seen[0], seen[1]};
  seen[0] = seen[1] = 0;
  opt.threads = std::max(4u, ctx.threads);
  const auto t1 = Clock::now();
  const auto parallel = build_corpus(records, opt, sink);
  const double parallel_secs = seconds_since(t1);
  const auto& c = serial.at("counts");
  const std::size_t train_pool = c.at("train_pool");
  const std::size_t test_pool = c.at("test_pool");
  const std::size_t train = c.at("train");
  const std::size_t test = c.at("test");
  const bool identical = serial.dump() == parallel.dump();
  const bool pass = train_pool == 3'325 && test_pool == 175 && train == 745'000 && test == 5'000 &&
                    serial_seen[0] == 745'000 && serial_seen[1] == 5'000 && seen[0] == 745'000 && seen[1] == 5'000 &&
                    bad_words == 0 && too_long == 0 && identical;
  return {pass, fmt("split %zu/%zu, sequences %zu/%zu, %zu without 4 WORD tokens, %zu over 1050 tokens, "
                    "manifests %s (serial %.1fs, %u threads %.1fs)",
                    train_pool, test_pool, train, test, bad_words, too_long, identical ? "identical" : "differ",
                    serial_secs, opt.threads, parallel_secs)};
}

Outcome optimization(Context& ctx) {
  const auto t0 = Clock::now();
  // Ten 4-word sequences assembled from synthetic words with the corpus pipeline.
  CorpusOptions opt;
  opt.seed = kSeed;
  opt.dataset.train_sequences = 10;
  opt.dataset.test_sequences = 10;
  std::vector<TrainingSequence> train;
  std::vector<TrainingSequence> test;
  const auto manifest = build_corpus(synthetic_records(200, kSeed), opt, [&](Split s, std::size_t, const TrainingSequence& seq) {
    (s == Split::train ? train : test).push_back(seq);
  });
  const TokenizerConfig tok = tokenizer_from_manifest(manifest);
  TrainConfig tc;
  tc.batch_size = 10;
  tc.total_steps = 2'000;
  tc.target_loss = 0.1;
  Trainer trainer(ModelConfig{}, tc, tok, train, test, ctx.threads);
  const double initial = trainer.evaluate(trainer.train_examples(), 10);
  std::int64_t steps = 0;
  double last = initial;
  while (steps < tc.total_steps) {
    const auto log = trainer.step();
    ++steps;
    last = log.train_loss;
    if (steps % 100 == 0) std::fprintf(stderr, "  overfit step %lld loss %.4f (%.0fs)\n", static_cast<long long>(steps), last, seconds_since(t0));
    if (last < tc.target_loss) break;
  }
  const double final_loss = trainer.evaluate(trainer.train_examples(), 10);
  const double secs = seconds_since(t0);
  const double ln_v = std::log(523.0);
  if (!ctx.out_dir.empty()) {
    fs::create_directories(ctx.out_dir);
    save_checkpoint((fs::path(ctx.out_dir) / "overfit.ckpt").string(), trainer.checkpoint("acceptance-overfit"));
  }
  ctx.trained.emplace(trainer.model(), tok, "acceptance-overfit");
  const bool pass = std::abs(initial - ln_v) <= 0.3 && final_loss < 0.1 && steps <= 2'000;
  return {pass, fmt("initial loss %.4f (ln 523 = %.4f); train loss %.4f after %lld steps, %.0fs", initial, ln_v,
                    final_loss, static_cast<long long>(steps), secs)};
}

std::vector<std::string> grammar_texts() {
  const auto bank = generate_bank(mix64(kSeed ^ 0x7e47), WordBankConfig::defaults(), 4'000);
  std::vector<std::string> texts;
  Rng rng(kSeed);
  std::size_t next = 0;
  while (texts.size() < 1'000) {
    const std::size_t words = 1 + rng.below(4);
    std::string t;
    for (std::size_t w = 0; w < words; ++w) t += (w ? " " : "") + bank[next++ % bank.size()];
    if (t.size() <= 64) texts.push_back(t);
  }
  return texts;
}

Outcome grammar_safety(const Context& ctx) {
  if (!ctx.trained) return {false, "no trained checkpoint (optimization criterion did not run)"};
  const auto t0 = Clock::now();
  Transformer<float> untrained_model{ModelConfig{}};
  untrained_model.init(kSeed);
  const LoadedModel untrained(std::move(untrained_model), ctx.trained->tokenizer);
  const auto texts = grammar_texts();
  std::size_t invalid = 0;
  std::size_t decode_failures = 0;
  std::size_t truncated = 0;
  std::size_t tokens = 0;
  for (const LoadedModel* lm : {&untrained, &*ctx.trained}) {
    const Sampler sampler(*lm);
    const StrokeTokenizer codec(lm->tokenizer);
    for (std::uint64_t s = 0; s < 10'000; ++s) {
      SamplingConfig sc;
      sc.seed = s;
      sc.max_tokens = 64 + static_cast<int>(s % 193);
      const auto res = sampler.sample(texts[s % texts.size()], sc);
      tokens += res.tokens.size();
      truncated += res.truncated;
      invalid += find_grammar_violation(res.tokens, lm->tokenizer).has_value();
      try {
        codec.decode(res.tokens);
      } catch (const std::exception&) {
        ++decode_failures;
      }
    }
  }
  return {invalid == 0 && decode_failures == 0,
          fmt("2 x 10000 streams (%zu tokens, %zu hit the budget): %zu grammar violations, %zu decode failures, %.0fs",
              tokens, truncated, invalid, decode_failures, seconds_since(t0))};
}

Outcome attention(const Context& ctx) {
  if (!ctx.trained) return {false, "no trained checkpoint (optimization criterion did not run)"};
  const Sampler sampler(*ctx.trained);
  SamplingConfig sc;
  sc.seed = kSeed;
  sc.max_tokens = 300;
  const auto page = generate_page(sampler, "the quick brown fox", sc);
  const auto [ids, ascii] = page_inputs(page);
  const auto maps = extract_attention(ctx.trained->model, ids, ascii);
  const int T = static_cast<int>(ids.size());
  const int S = static_cast<int>(ascii.size());
  const bool shapes = maps.layers == 5 && maps.heads_self == 4 && maps.heads_cross == 4 && maps.queries == T &&
                      maps.ascii_length == S && maps.self.size() == 5u * 4 * T * T && maps.cross.size() == 5u * 4 * T * S;
  double worst_row = 0.0;
  double upper_max = 0.0;
  for (int l = 0; l < maps.layers; ++l) {
    for (int h = 0; h < maps.heads_self; ++h) {
      for (int i = 0; i < T; ++i) {
        double row = 0.0;
        for (int j = 0; j < T; ++j) {
          row += maps.self_at(l, h, i, j);
          if (j > i) upper_max = std::max(upper_max, std::abs(maps.self_at(l, h, i, j)));
        }
        worst_row = std::max(worst_row, std::abs(row - 1.0));
      }
    }
    for (int h = 0; h < maps.heads_cross; ++h) {
      for (int i = 0; i < T; ++i) {
        double row = 0.0;
        for (int s = 0; s < S; ++s) row += maps.cross_at(l, h, i, s);
        worst_row = std::max(worst_row, std::abs(row - 1.0));
      }
    }
  }
  const std::string dir = (fs::path(ctx.out_dir.empty() ? fs::temp_directory_path().string() : ctx.out_dir) / "attention").string();
  fs::remove_all(dir);
  const auto files = plot_attention(maps, page.text, dir);
  std::size_t on_disk = 0;
  for (const auto& e : fs::directory_iterator(dir)) on_disk += e.path().extension() == ".png";
  const bool pass = shapes && worst_row <= 1e-6 && upper_max == 0.0 && files.size() == 40 && on_disk == 40;
  return {pass, fmt("self [%d,%d,%d,%d], cross [%d,%d,%d,%d]; max |row sum - 1| %.2g; max upper-triangle %.2g; %zu plots",
                    maps.layers, maps.heads_self, T, T, maps.layers, maps.heads_cross, T, S, worst_row, upper_max,
                    on_disk)};
}

Outcome temperature(const Context& ctx) {
  if (!ctx.trained) return {false, "no trained checkpoint (optimization criterion did not run)"};
  const Sampler sampler(*ctx.trained);
  const auto texts = grammar_texts();
  std::vector<double> means;
  for (double tau : {0.5, 1.0, 2.0}) {
    double sum = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      SamplingConfig sc;
      sc.seed = s;
      sc.temperature = tau;
      sc.max_tokens = 200;
      sum += sampler.sample(texts[s], sc).mean_entropy();
    }
    means.push_back(sum / 100.0);
  }
  const bool pass = means[0] <= means[1] && means[1] <= means[2];
  return {pass, fmt("mean entropy (nats) at tau 0.5 / 1.0 / 2.0: %.4f / %.4f / %.4f", means[0], means[1], means[2])};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks; one PASS/FAIL line per criterion"};
  Context ctx;
  std::vector<std::string> only;
  ctx.threads = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--out", ctx.out_dir, "Directory for the trained checkpoint and attention plots");
  app.add_option("--threads", ctx.threads, "Worker threads for training and the parallel corpus build");
  app.add_option("--only", only, "Run only the named criteria");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"vocabulary", vocabulary},
      {"tokenizer_round_trip", tokenizer_round_trip},
      {"parameter_count", parameter_count},
      {"gradient_check", gradient_check},
      {"lr_schedule", lr_schedule},
      {"word_bank", word_bank},
      {"augmentation", augmentation},
      {"corpus_build", [&] { return corpus_build(ctx); }},
      {"optimization", [&] { return optimization(ctx); }},
      {"grammar_safety", [&] { return grammar_safety(ctx); }},
      {"attention", [&] { return attention(ctx); }},
      {"temperature", [&] { return temperature(ctx); }},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
