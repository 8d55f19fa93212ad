#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cursive/ascii.hpp"
#include "cursive/record.hpp"
#include "cursive/rng.hpp"
#include "cursive/stroke.hpp"
#include "cursive/tokenizer.hpp"

namespace cursive {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const noexcept { return v >= lo && v <= hi; }
};

struct AugmentationRanges {
  Interval shear_x{-0.3, 0.3};
  Interval scale{0.9, 1.1};
  Interval drop_fraction{0.55, 0.75};
};

struct AugmentationParams {
  double shear_x = 0.0;
  double scale_x = 1.0;
  double scale_y = 1.0;
  double drop_fraction = 0.0;
  std::uint64_t seed = 0;
};

/// Removes floor(drop_fraction * M) points chosen uniformly among those
/// strictly inside a pen run, or every such point when there are fewer.
/// Pen-run endpoints are never removed. Returns the surviving indices in order.
std::vector<std::size_t> downsample_indices(std::span<const StrokePoint> seq, double drop_fraction, Rng& rng);
StrokeSequence downsample(std::span<const StrokePoint> seq, double drop_fraction, std::uint64_t seed);

/// Shear and scale, then downsample.
StrokeSequence augment(std::span<const StrokePoint> seq, const AugmentationParams& params);

/// Draws parameters for a sequence of `point_count` points. The drop fraction
/// is an exact multiple of 1 / point_count inside the configured range when
/// one exists.
AugmentationParams draw_augmentation(Rng& rng, const AugmentationRanges& ranges, std::size_t point_count);

struct DatasetConfig {
  double train_fraction = 0.95;
  int words_per_sequence = 4;
  std::size_t train_sequences = 745'000;
  std::size_t test_sequences = 5'000;
  int max_context = 1050;
  int max_ascii_context = 64;
  /// Inter-word travel, as a multiple of the corpus median character width.
  double gap_factor = 1.0;
  AugmentationRanges augmentation;
  /// Percentile of pilot-sequence radii used when r_max is not configured.
  double r_max_percentile = 99.9;
  std::size_t pilot_sequences = 2'000;
  int max_redraws = 1'000;

  void validate() const;
  nlohmann::json to_json() const;
  static DatasetConfig from_json(const nlohmann::json& j);
  static DatasetConfig from_json(const nlohmann::json& j, const DatasetConfig& base);
};

/// Deterministic shuffle, then the first round(train_fraction * N) records
/// go to training.
std::pair<std::vector<SampleRecord>, std::vector<SampleRecord>> split(const std::vector<SampleRecord>& samples,
                                                                      double train_fraction, std::uint64_t seed);

struct TrainingSequence {
  std::string text;
  TokenStream stream;
  std::vector<int> ascii_ids;

  friend bool operator==(const TrainingSequence&, const TrainingSequence&) = default;
};

/// Augmented multi-word pen trajectory before tokenization.
struct SequenceGeometry {
  StrokeSequence points;
  /// Point count at the end of each word.
  std::vector<std::size_t> word_ends;
  std::string text;
  AugmentationParams augmentation;
};

double median_char_width(const std::vector<SampleRecord>& records);

/// Builds training sequences from a pool of single-word records.
class SequenceAssembler {
 public:
  SequenceAssembler(std::vector<SampleRecord> pool, DatasetConfig cfg, double word_gap);

  const DatasetConfig& config() const noexcept { return cfg_; }
  double word_gap() const noexcept { return gap_; }

  /// One draw of `words_per_sequence` records (with replacement), joined left
  /// to right and augmented as a whole.
  SequenceGeometry draw_geometry(Rng& rng) const;

  /// Sequence `index` of the run seeded with `seed`; draws are repeated until
  /// the tokens and the text fit the context limits.
  TrainingSequence assemble_one(std::uint64_t seed, std::size_t index, const StrokeTokenizer& tokenizer) const;

  std::vector<TrainingSequence> assemble(std::size_t count, std::uint64_t seed, const StrokeTokenizer& tokenizer) const;

 private:
  std::vector<SampleRecord> pool_;
  DatasetConfig cfg_;
  double gap_;
  AsciiTokenizer ascii_;
};

TrainingSequence tokenize_geometry(const SequenceGeometry& geometry, const StrokeTokenizer& tokenizer,
                                   const AsciiTokenizer& ascii);

/// Nearest-rank percentile of offset radii.
double radius_percentile(std::vector<double> radii, double percentile);

struct CorpusOptions {
  DatasetConfig dataset;
  TokenizerConfig tokenizer;
  /// When empty, r_max is estimated from pilot sequences.
  std::optional<double> r_max;
  std::uint64_t seed = 1337;
  std::string config_hash;
  /// Fingerprint of the settings that determine the corpus contents; training
  /// refuses a corpus whose value differs from its own.
  std::string data_hash;
  unsigned threads = 1;
};

enum class Split { train, test };

/// Receives sequences in index order, one split after the other.
using CorpusSink = std::function<void(Split, std::size_t, const TrainingSequence&)>;

/// Splits, resolves r_max, assembles both splits and returns the manifest.
/// The manifest (counts, digests, resolved tokenizer) is identical for any
/// thread count.
nlohmann::json build_corpus(const std::vector<SampleRecord>& records, const CorpusOptions& options,
                            const CorpusSink& sink = {});

struct Corpus {
  nlohmann::json manifest;
  TokenizerConfig tokenizer;
  std::vector<TrainingSequence> train;
  std::vector<TrainingSequence> test;
};

/// Writes manifest.json, {train,test}.tok (packed) and {train,test}.txt.
nlohmann::json write_corpus(const std::string& dir, const std::vector<SampleRecord>& records,
                            const CorpusOptions& options);
Corpus load_corpus(const std::string& dir);

TokenizerConfig tokenizer_from_manifest(const nlohmann::json& manifest);

}  // namespace cursive
