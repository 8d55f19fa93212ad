#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cursive/ascii.hpp"
#include "cursive/model/checkpoint.hpp"
#include "cursive/model/transformer.hpp"
#include "cursive/stroke.hpp"
#include "cursive/tokenizer.hpp"

namespace cursive {

/// Real handwriting fed to the model before generation starts. `tokens` holds
/// complete words (one WORD token per word of `text`) and no END.
struct Warmup {
  std::string text;
  TokenStream tokens;

  friend bool operator==(const Warmup&, const Warmup&) = default;
};

struct SamplingConfig {
  double temperature = 1.0;
  std::uint64_t seed = 0;
  /// Budget for the generated stream, END included.
  int max_tokens = 1050;
  /// Arg-max decoding instead of sampling.
  bool greedy = false;
  std::optional<Warmup> warmup;

  void validate() const;
  nlohmann::json to_json() const;
  static SamplingConfig from_json(const nlohmann::json& j);
};

struct SampleResult {
  TokenStream tokens;
  /// The budget ran out before the model chose END; the open words were
  /// closed with WORD tokens and END appended.
  bool truncated = false;
  /// Entropy (nats) of each sampling distribution after masking and
  /// temperature scaling, one per token chosen by the model.
  std::vector<double> entropies;

  double mean_entropy() const;
};

/// A trained model with the codec it was trained with.
struct LoadedModel {
  Transformer<float> model;
  TokenizerConfig tokenizer;
  std::string config_hash;

  explicit LoadedModel(const Checkpoint& ckpt);
  LoadedModel(Transformer<float> m, TokenizerConfig tok, std::string hash = {});
};

/// Grammar-constrained autoregressive generation. At a direction position the
/// legal tokens are the direction bins, WORD (once the current word has an
/// offset and words remain) and END (once every word of the text is closed);
/// after a direction token only radius/pen tokens are legal.
class Sampler {
 public:
  explicit Sampler(const LoadedModel& model);

  const TokenizerConfig& tokenizer() const noexcept { return tok_; }

  SampleResult sample(const std::string& text, const SamplingConfig& sc) const;

  /// Generation that starts with `prefix` (complete words of `text`, no END)
  /// already written. The result includes the prefix.
  SampleResult continue_from(const std::string& text, const TokenStream& prefix, const SamplingConfig& sc) const;

 private:
  const Transformer<float>* model_;
  TokenizerConfig tok_;
  AsciiTokenizer ascii_;
};

/// Half-open token range of one word, its WORD token included.
struct WordSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  friend bool operator==(const WordSpan&, const WordSpan&) = default;
};

struct GeneratedPage {
  std::string text;
  std::vector<std::string> words;
  TokenStream tokens;
  std::vector<WordSpan> spans;
  TokenizerConfig tokenizer;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  bool truncated = false;
  std::optional<Warmup> warmup;
  std::string config_hash;

  /// Absolute pen positions of each word (+y up), continuing from the end of
  /// the previous word.
  std::vector<StrokeSequence> word_points() const;
};

/// Token spans of each word; throws GrammarError on an invalid stream.
std::vector<WordSpan> word_spans(const TokenStream& tokens, const TokenizerConfig& tok);

GeneratedPage make_page(const std::string& text, const SampleResult& result, const TokenizerConfig& tok,
                        const SamplingConfig& sc, const std::string& config_hash = {});

GeneratedPage generate_page(const Sampler& sampler, const std::string& text, const SamplingConfig& sc,
                            const std::string& config_hash = {});

/// Resamples every word from the first selected one onward, conditioned on
/// the full text and the kept tokens before it. Words before the first
/// selected index keep their tokens. An empty selection returns the page
/// unchanged. Throws std::out_of_range for an invalid index.
GeneratedPage regenerate(const Sampler& sampler, const GeneratedPage& page, const std::vector<std::size_t>& word_indices,
                         const SamplingConfig& sc);

/// Greedy line filling: words are placed on the current line while the
/// line's character count (words plus single spaces) stays within
/// `line_width_chars`; a word longer than the budget gets a line of its own.
/// Returns the line index of each word.
std::vector<int> line_breaks(const std::vector<std::string>& words, int line_width_chars);

/// Page JSON with per-word spans, strokes and line assignments.
nlohmann::json page_to_json(const GeneratedPage& page, int line_width_chars = 40);
/// Inverse of page_to_json; derived fields are recomputed from the tokens and
/// checked. Throws SchemaError with a JSON path.
GeneratedPage page_from_json(const nlohmann::json& j);

}  // namespace cursive
