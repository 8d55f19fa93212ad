#include "cursive/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "cursive/error.hpp"
#include "cursive/hash.hpp"
#include "cursive/token_io.hpp"

namespace cursive {
namespace {

constexpr double kRoundingGuard = 1e-9;

nlohmann::json interval_json(const Interval& i) { return {i.lo, i.hi}; }

Interval interval_from(const nlohmann::json& j, const Interval& fallback) {
  if (j.is_null()) return fallback;
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

}  // namespace

std::vector<std::size_t> downsample_indices(std::span<const StrokePoint> seq, double drop_fraction, Rng& rng) {
  std::vector<std::size_t> interior;
  for (const auto& run : pen_runs(seq)) {
    for (std::size_t i = run.first + 1; i < run.last; ++i) interior.push_back(i);
  }
  const double wanted = std::floor(std::max(0.0, drop_fraction) * static_cast<double>(seq.size()) + kRoundingGuard);
  const auto target = std::min(interior.size(), static_cast<std::size_t>(wanted));

  // Partial Fisher-Yates: the first `target` slots become the removed set.
  for (std::size_t i = 0; i < target; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(interior.size() - i));
    std::swap(interior[i], interior[j]);
  }
  std::vector<bool> removed(seq.size(), false);
  for (std::size_t i = 0; i < target; ++i) removed[interior[i]] = true;

  std::vector<std::size_t> kept;
  kept.reserve(seq.size() - target);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (!removed[i]) kept.push_back(i);
  }
  return kept;
}

StrokeSequence downsample(std::span<const StrokePoint> seq, double drop_fraction, std::uint64_t seed) {
  Rng rng(seed);
  StrokeSequence out;
  for (std::size_t i : downsample_indices(seq, drop_fraction, rng)) out.push_back(seq[i]);
  return out;
}

StrokeSequence augment(std::span<const StrokePoint> seq, const AugmentationParams& params) {
  const auto sheared = apply_affine(seq, {params.shear_x, params.scale_x, params.scale_y});
  return downsample(sheared, params.drop_fraction, params.seed);
}

AugmentationParams draw_augmentation(Rng& rng, const AugmentationRanges& ranges, std::size_t point_count) {
  AugmentationParams p;
  p.shear_x = rng.uniform(ranges.shear_x.lo, ranges.shear_x.hi);
  p.scale_x = rng.uniform(ranges.scale.lo, ranges.scale.hi);
  p.scale_y = rng.uniform(ranges.scale.lo, ranges.scale.hi);
  const double m = static_cast<double>(point_count);
  const double lo_count = std::ceil(ranges.drop_fraction.lo * m - kRoundingGuard);
  const double hi_count = std::floor(ranges.drop_fraction.hi * m + kRoundingGuard);
  if (point_count > 0 && lo_count <= hi_count) {
    const auto k = static_cast<std::uint64_t>(lo_count) + rng.below(static_cast<std::uint64_t>(hi_count - lo_count) + 1);
    p.drop_fraction = static_cast<double>(k) / m;
  } else {
    p.drop_fraction = rng.uniform(ranges.drop_fraction.lo, ranges.drop_fraction.hi);
  }
  p.seed = rng.next();
  return p;
}

void DatasetConfig::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("dataset: train_fraction must lie in (0, 1)");
  if (words_per_sequence < 1) throw std::invalid_argument("dataset: words_per_sequence must be >= 1");
  if (max_context < 2 || max_ascii_context < 1) throw std::invalid_argument("dataset: context limits too small");
  if (!(gap_factor >= 0.0)) throw std::invalid_argument("dataset: gap_factor must be non-negative");
  const auto& a = augmentation;
  if (a.shear_x.lo > a.shear_x.hi || a.scale.lo > a.scale.hi || a.drop_fraction.lo > a.drop_fraction.hi) {
    throw std::invalid_argument("dataset: augmentation ranges must be ordered");
  }
  if (!(a.scale.lo > 0.0)) throw std::invalid_argument("dataset: scales must be positive");
  if (a.drop_fraction.lo < 0.0 || a.drop_fraction.hi >= 1.0) throw std::invalid_argument("dataset: drop fraction outside [0, 1)");
  if (!(r_max_percentile > 0.0 && r_max_percentile <= 100.0)) throw std::invalid_argument("dataset: bad r_max_percentile");
  if (max_redraws < 1) throw std::invalid_argument("dataset: max_redraws must be >= 1");
}

nlohmann::json DatasetConfig::to_json() const {
  return {{"train_fraction", train_fraction},
          {"words_per_sequence", words_per_sequence},
          {"train_sequences", train_sequences},
          {"test_sequences", test_sequences},
          {"max_context", max_context},
          {"max_ascii_context", max_ascii_context},
          {"gap_factor", gap_factor},
          {"shear_x", interval_json(augmentation.shear_x)},
          {"scale", interval_json(augmentation.scale)},
          {"drop_fraction", interval_json(augmentation.drop_fraction)},
          {"r_max_percentile", r_max_percentile},
          {"pilot_sequences", pilot_sequences},
          {"max_redraws", max_redraws}};
}

DatasetConfig DatasetConfig::from_json(const nlohmann::json& j) { return from_json(j, DatasetConfig{}); }

DatasetConfig DatasetConfig::from_json(const nlohmann::json& j, const DatasetConfig& base) {
  DatasetConfig c = base;
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.words_per_sequence = j.value("words_per_sequence", c.words_per_sequence);
  c.train_sequences = j.value("train_sequences", c.train_sequences);
  c.test_sequences = j.value("test_sequences", c.test_sequences);
  c.max_context = j.value("max_context", c.max_context);
  c.max_ascii_context = j.value("max_ascii_context", c.max_ascii_context);
  c.gap_factor = j.value("gap_factor", c.gap_factor);
  c.augmentation.shear_x = interval_from(j.value("shear_x", nlohmann::json()), c.augmentation.shear_x);
  c.augmentation.scale = interval_from(j.value("scale", nlohmann::json()), c.augmentation.scale);
  c.augmentation.drop_fraction = interval_from(j.value("drop_fraction", nlohmann::json()), c.augmentation.drop_fraction);
  c.r_max_percentile = j.value("r_max_percentile", c.r_max_percentile);
  c.pilot_sequences = j.value("pilot_sequences", c.pilot_sequences);
  c.max_redraws = j.value("max_redraws", c.max_redraws);
  c.validate();
  return c;
}

std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> split(const std::vector<SampleRecord>& samples,
                                                                      double train_fraction, std::uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("split: no samples");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("split: train_fraction must lie in (0, 1)");
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(samples.size())));
  std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? out.first : out.second).push_back(samples[order[i]]);
  }
  return out;
}

double median_char_width(const std::vector<SampleRecord>& records) {
  std::vector<double> widths;
  for (const auto& r : records) {
    if (r.points.empty()) continue;
    widths.push_back(bounding_box(r.points).width() / static_cast<double>(std::max<std::size_t>(1, r.word.size())));
  }
  if (widths.empty()) return 0.0;
  const auto mid = widths.begin() + static_cast<std::ptrdiff_t>(widths.size() / 2);
  std::nth_element(widths.begin(), mid, widths.end());
  return *mid;
}

SequenceAssembler::SequenceAssembler(std::vector<SampleRecord> pool, DatasetConfig cfg, double word_gap)
    : pool_(std::move(pool)), cfg_(std::move(cfg)), gap_(word_gap) {
  cfg_.validate();
  if (pool_.empty()) throw std::invalid_argument("assemble_sequences: empty pool");
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    auto& rec = pool_[i];
    if (rec.points.empty()) throw std::invalid_argument("assemble_sequences: record " + std::to_string(i) + " has no points");
    // A lone word needs two tokens per point plus WORD and END.
    if (2 * rec.points.size() + 2 > static_cast<std::size_t>(cfg_.max_context)) {
      throw std::invalid_argument("assemble_sequences: sample " + std::to_string(i) + " (\"" + rec.word +
                                  "\") alone exceeds the context of " + std::to_string(cfg_.max_context) + " tokens");
    }
    const double min_x = bounding_box(rec.points).min_x;
    for (auto& pt : rec.points) pt.x -= min_x;
    rec.points.front().pen = false;
  }
}

SequenceGeometry SequenceAssembler::draw_geometry(Rng& rng) const {
  SequenceGeometry geo;
  std::vector<std::size_t> owner;
  double cursor = 0.0;
  for (int w = 0; w < cfg_.words_per_sequence; ++w) {
    const auto& rec = pool_[rng.below(pool_.size())];
    if (w > 0) geo.text.push_back(' ');
    geo.text += rec.word;
    const double shift = w == 0 ? 0.0 : cursor + gap_;
    double right = shift;
    for (const auto& pt : rec.points) {
      geo.points.push_back({pt.x + shift, pt.y, pt.pen});
      owner.push_back(static_cast<std::size_t>(w));
      right = std::max(right, pt.x + shift);
    }
    cursor = right;
  }
  geo.augmentation = draw_augmentation(rng, cfg_.augmentation, geo.points.size());
  const auto& a = geo.augmentation;
  const auto sheared = apply_affine(geo.points, {a.shear_x, a.scale_x, a.scale_y});
  Rng drop_rng(a.seed);
  const auto kept = downsample_indices(sheared, a.drop_fraction, drop_rng);

  geo.points.clear();
  geo.word_ends.assign(static_cast<std::size_t>(cfg_.words_per_sequence), 0);
  for (std::size_t i : kept) {
    geo.points.push_back(sheared[i]);
    geo.word_ends[owner[i]] = geo.points.size();
  }
  return geo;
}

TrainingSequence tokenize_geometry(const SequenceGeometry& geometry, const StrokeTokenizer& tokenizer,
                                   const AsciiTokenizer& ascii) {
  TrainingSequence seq;
  seq.text = geometry.text;
  seq.ascii_ids = ascii.encode(geometry.text);
  const auto polar = to_polar(coords_to_offsets(geometry.points));
  seq.stream = tokenizer.encode(polar, geometry.word_ends);
  return seq;
}

TrainingSequence SequenceAssembler::assemble_one(std::uint64_t seed, std::size_t index,
                                                 const StrokeTokenizer& tokenizer) const {
  Rng rng = Rng::substream(seed, index);
  for (int attempt = 0; attempt < cfg_.max_redraws; ++attempt) {
    const auto geo = draw_geometry(rng);
    const std::size_t n_tokens = 2 * geo.points.size() + geo.word_ends.size() + 1;
    if (n_tokens > static_cast<std::size_t>(cfg_.max_context)) continue;
    if (geo.text.size() > static_cast<std::size_t>(cfg_.max_ascii_context)) continue;
    return tokenize_geometry(geo, tokenizer, ascii_);
  }
  throw std::runtime_error("assemble_sequences: no sequence within the context limits after " +
                           std::to_string(cfg_.max_redraws) + " draws");
}

std::vector<TrainingSequence> SequenceAssembler::assemble(std::size_t count, std::uint64_t seed,
                                                          const StrokeTokenizer& tokenizer) const {
  std::vector<TrainingSequence> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(assemble_one(seed, i, tokenizer));
  return out;
}

double radius_percentile(std::vector<double> radii, double percentile) {
  if (radii.empty()) throw std::invalid_argument("radius_percentile: no radii");
  std::sort(radii.begin(), radii.end());
  const double rank = std::ceil(percentile / 100.0 * static_cast<double>(radii.size()) - kRoundingGuard);
  const auto idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(radii.size()))) - 1;
  return radii[idx];
}

namespace {

/// Runs `count` assemblies in waves of per-thread chunks and hands results to
/// `consume` in index order.
void run_split(const SequenceAssembler& assembler, std::size_t count, std::uint64_t seed,
               const StrokeTokenizer& tokenizer, unsigned threads,
               const std::function<void(std::size_t, const TrainingSequence&)>& consume) {
  constexpr std::size_t kChunk = 1024;
  threads = std::max(1u, threads);
  std::vector<std::vector<TrainingSequence>> slots(threads);
  for (std::size_t wave = 0; wave < count; wave += kChunk * threads) {
    auto work = [&](unsigned t) {
      const std::size_t begin = wave + t * kChunk;
      const std::size_t end = std::min(count, begin + kChunk);
      slots[t].clear();
      for (std::size_t i = begin; i < end; ++i) slots[t].push_back(assembler.assemble_one(seed, i, tokenizer));
    };
    if (threads == 1) {
      work(0);
    } else {
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    }
    std::size_t index = wave;
    for (const auto& slot : slots) {
      for (const auto& seq : slot) consume(index++, seq);
    }
  }
}

void hash_sequence(Fnv1a& h, const TrainingSequence& seq) {
  h.update(seq.text);
  h.update("\n");
  std::string packed;
  append_u16le(packed, seq.stream);
  h.update(packed);
}

}  // namespace

nlohmann::json build_corpus(const std::vector<SampleRecord>& records, const CorpusOptions& options,
                            const CorpusSink& sink) {
  const auto& cfg = options.dataset;
  cfg.validate();
  auto [train_pool, test_pool] = split(records, cfg.train_fraction, mix64(options.seed ^ 1));
  const std::uint64_t train_seed = mix64(options.seed ^ 2);
  const std::uint64_t test_seed = mix64(options.seed ^ 3);

  const double gap = cfg.gap_factor * median_char_width(records);
  const std::size_t n_train_pool = train_pool.size();
  const std::size_t n_test_pool = test_pool.size();
  std::optional<SequenceAssembler> train_asm;
  std::optional<SequenceAssembler> test_asm;
  if (cfg.train_sequences > 0) train_asm.emplace(std::move(train_pool), cfg, gap);
  if (cfg.test_sequences > 0) test_asm.emplace(std::move(test_pool), cfg, gap);

  TokenizerConfig tok = options.tokenizer;
  std::string r_max_source = "configured";
  if (options.r_max) {
    tok.r_max = *options.r_max;
  } else {
    const bool use_train = train_asm.has_value();
    const SequenceAssembler* pilot = use_train ? &*train_asm : (test_asm ? &*test_asm : nullptr);
    if (pilot != nullptr) {
      const std::uint64_t pilot_seed = use_train ? train_seed : test_seed;
      const std::size_t n = std::min(cfg.pilot_sequences, use_train ? cfg.train_sequences : cfg.test_sequences);
      std::vector<double> radii;
      for (std::size_t i = 0; i < std::max<std::size_t>(n, 1); ++i) {
        Rng rng = Rng::substream(pilot_seed, i);
        for (const auto& o : coords_to_offsets(pilot->draw_geometry(rng).points)) radii.push_back(std::hypot(o.dx, o.dy));
      }
      tok.r_max = radius_percentile(std::move(radii), cfg.r_max_percentile);
      std::ostringstream src;
      src << "percentile " << cfg.r_max_percentile << " of " << std::max<std::size_t>(n, 1) << " pilot sequences";
      r_max_source = src.str();
    }
  }
  const StrokeTokenizer tokenizer(tok);

  Fnv1a train_digest;
  Fnv1a test_digest;
  std::size_t max_len = 0;
  if (train_asm) {
    run_split(*train_asm, cfg.train_sequences, train_seed, tokenizer, options.threads,
              [&](std::size_t i, const TrainingSequence& s) {
                hash_sequence(train_digest, s);
                max_len = std::max(max_len, s.stream.size());
                if (sink) sink(Split::train, i, s);
              });
  }
  if (test_asm) {
    run_split(*test_asm, cfg.test_sequences, test_seed, tokenizer, options.threads,
              [&](std::size_t i, const TrainingSequence& s) {
                hash_sequence(test_digest, s);
                max_len = std::max(max_len, s.stream.size());
                if (sink) sink(Split::test, i, s);
              });
  }

  Fnv1a pool_digest;
  pool_digest.update(export_json(records));

  return {{"format", "cursive-corpus"},
          {"version", 1},
          {"seed", options.seed},
          {"config_hash", options.config_hash},
          {"data_hash", options.data_hash},
          {"dataset", cfg.to_json()},
          {"tokenizer", TokenFileHeader{kTokenFormatVersion, tok, options.config_hash}.to_json()},
          {"r_max_source", r_max_source},
          {"word_gap", gap},
          {"counts",
           {{"records", records.size()},
            {"train_pool", n_train_pool},
            {"test_pool", n_test_pool},
            {"train", cfg.train_sequences},
            {"test", cfg.test_sequences},
            {"max_stream_length", max_len}}},
          {"digests", {{"records", pool_digest.hex()}, {"train", train_digest.hex()}, {"test", test_digest.hex()}}}};
}

TokenizerConfig tokenizer_from_manifest(const nlohmann::json& manifest) {
  return TokenFileHeader::from_json(manifest.at("tokenizer")).tokenizer;
}

nlohmann::json write_corpus(const std::string& dir, const std::vector<SampleRecord>& records,
                            const CorpusOptions& options) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);
  std::ofstream train_tok(root / "train.tok.part", std::ios::binary);
  std::ofstream test_tok(root / "test.tok.part", std::ios::binary);
  std::ofstream train_txt(root / "train.txt", std::ios::binary);
  std::ofstream test_txt(root / "test.txt", std::ios::binary);
  if (!train_tok || !test_tok || !train_txt || !test_txt) throw ArtifactError("cannot write corpus files in " + dir);
  std::string buf;
  auto manifest = build_corpus(records, options, [&](Split split, std::size_t, const TrainingSequence& s) {
    buf.clear();
    append_u16le(buf, s.stream);
    auto& tok = split == Split::train ? train_tok : test_tok;
    auto& txt = split == Split::train ? train_txt : test_txt;
    tok.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    txt << s.text << '\n';
  });
  train_tok.close();
  test_tok.close();

  // Prefix each payload with the header line now that r_max is resolved.
  const std::string header = manifest.at("tokenizer").dump() + "\n";
  for (const char* name : {"train", "test"}) {
    const fs::path part = root / (std::string(name) + ".tok.part");
    std::ofstream out(root / (std::string(name) + ".tok"), std::ios::binary);
    out << header;
    std::ifstream in(part, std::ios::binary);
    out << in.rdbuf();
    in.close();
    fs::remove(part);
  }
  std::ofstream(root / "manifest.json") << manifest.dump(2) << '\n';
  return manifest;
}

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ArtifactError("cannot read " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<TrainingSequence> read_split(const std::filesystem::path& root, const std::string& name,
                                         const TokenizerConfig& tok) {
  const auto file = read_token_packed(slurp(root / (name + ".tok")));
  if (!(file.header.tokenizer == tok)) throw SchemaError("$.header", name + ".tok header disagrees with manifest");
  std::ifstream texts(root / (name + ".txt"));
  if (!texts) throw ArtifactError("cannot read " + (root / (name + ".txt")).string());
  const AsciiTokenizer ascii;
  std::vector<TrainingSequence> out;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < file.ids.size(); ++i) {
    if (file.ids[i] != tok.end_id()) continue;
    TrainingSequence seq;
    seq.stream.assign(file.ids.begin() + static_cast<std::ptrdiff_t>(begin), file.ids.begin() + static_cast<std::ptrdiff_t>(i) + 1);
    validate_grammar(seq.stream, tok);
    if (!std::getline(texts, seq.text)) throw SchemaError("$", name + ".txt has fewer lines than sequences");
    seq.ascii_ids = ascii.encode(seq.text);
    out.push_back(std::move(seq));
    begin = i + 1;
  }
  if (begin != file.ids.size()) throw SchemaError("$.ids", name + ".tok ends inside a sequence");
  return out;
}

}  // namespace

Corpus load_corpus(const std::string& dir) {
  const std::filesystem::path root(dir);
  Corpus corpus;
  try {
    corpus.manifest = nlohmann::json::parse(slurp(root / "manifest.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("$", std::string("manifest.json: ") + e.what());
  }
  if (corpus.manifest.value("format", "") != "cursive-corpus") throw SchemaError("$.format", "not a corpus manifest");
  corpus.tokenizer = tokenizer_from_manifest(corpus.manifest);
  corpus.train = read_split(root, "train", corpus.tokenizer);
  corpus.test = read_split(root, "test", corpus.tokenizer);
  const auto& counts = corpus.manifest.at("counts");
  if (corpus.train.size() != counts.at("train").get<std::size_t>() ||
      corpus.test.size() != counts.at("test").get<std::size_t>()) {
    throw SchemaError("$.counts", "sequence counts disagree with manifest");
  }
  return corpus;
}

}  // namespace cursive
