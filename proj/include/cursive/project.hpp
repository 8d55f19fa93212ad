#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "cursive/dataset.hpp"
#include "cursive/model/config.hpp"
#include "cursive/synth.hpp"
#include "cursive/tokenizer.hpp"
#include "cursive/wordbank.hpp"

namespace cursive {

struct ProjectPaths {
  std::string records = "records.json";
  std::string corpus = "corpus";
  std::string checkpoints = "checkpoints";
  /// Checkpoint used by sampling, attention plots and the service.
  std::string checkpoint = "checkpoints/last.ckpt";
  /// Append-only sample collection of the service.
  std::string store = "samples.ndjson";
  /// Glyph templates for the synthetic writer; empty selects the built-in set.
  std::string glyphs;

  friend bool operator==(const ProjectPaths&, const ProjectPaths&) = default;
};

/// Every setting of a pipeline run. The hashes cover everything except paths
/// and thread counts.
struct ProjectConfig {
  std::uint64_t seed = 1337;
  TokenizerConfig tokenizer;
  /// Fixed radius clip; when empty the corpus build estimates one.
  std::optional<double> r_max;
  WordBankConfig wordbank = WordBankConfig::defaults();
  /// Words in the prompt bank served by the collection endpoint.
  std::size_t prompt_bank_size = 10'000;
  SynthConfig synth;
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  ProjectPaths paths;
  /// 0 selects the hardware concurrency.
  unsigned threads = 0;

  /// Checks each section and that they agree with each other (vocabulary
  /// sizes, context lengths). Throws ConfigError.
  void validate() const;

  nlohmann::json to_json() const;
  /// Absent fields keep their defaults. Throws ConfigError.
  static ProjectConfig from_json(const nlohmann::json& j);

  /// Fingerprint of the whole configuration.
  std::string hash() const;
  /// Fingerprint of the settings a corpus depends on: seed, tokenizer, word
  /// bank, synthetic writer and dataset.
  std::string data_hash() const;

  unsigned resolved_threads() const;
  CorpusOptions corpus_options() const;
};

/// Applies `section.key=value` to a config document. The value is parsed as
/// JSON when possible and taken as a string otherwise. Throws ConfigError.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Reads a JSON config file (ArtifactError when missing, ConfigError when
/// malformed) and applies overrides in order.
ProjectConfig load_project(const std::optional<std::string>& path, const std::vector<std::string>& overrides = {});

}  // namespace cursive
