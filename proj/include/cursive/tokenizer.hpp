#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cursive/stroke.hpp"

namespace cursive {

using TokenId = std::int32_t;
using TokenStream = std::vector<TokenId>;

/// Bin counts and radius clip for the two-token stroke codec.
///
/// Id layout: [0, J) direction bins, [J, J + 2K) packed radius/pen tokens
/// (J + 2 * r_bin + pen), then PAD, END and WORD.
struct TokenizerConfig {
  int theta_bins = 220;
  int r_bins = 150;
  double r_max = 1.0;

  void validate() const;

  int vocab_size() const noexcept { return theta_bins + 2 * r_bins + 3; }
  TokenId pad_id() const noexcept { return theta_bins + 2 * r_bins; }
  TokenId end_id() const noexcept { return theta_bins + 2 * r_bins + 1; }
  TokenId word_id() const noexcept { return theta_bins + 2 * r_bins + 2; }

  bool is_theta(TokenId id) const noexcept { return id >= 0 && id < theta_bins; }
  bool is_rp(TokenId id) const noexcept { return id >= theta_bins && id < theta_bins + 2 * r_bins; }

  friend bool operator==(const TokenizerConfig&, const TokenizerConfig&) = default;
};

int vocab_size(const TokenizerConfig& cfg);

struct GrammarViolation {
  std::size_t index = 0;
  std::string reason;
};

/// First position at which `ids` leaves `((THETA RP) | WORD)* END PAD*`.
std::optional<GrammarViolation> find_grammar_violation(std::span<const TokenId> ids, const TokenizerConfig& cfg);

/// Throws GrammarError naming the first offending index.
void validate_grammar(std::span<const TokenId> ids, const TokenizerConfig& cfg);

struct DecodedStream {
  std::vector<PolarOffset> offsets;
  /// Offset count at each WORD token.
  std::vector<std::size_t> word_breaks;
};

class StrokeTokenizer {
 public:
  explicit StrokeTokenizer(TokenizerConfig cfg);
  StrokeTokenizer(const StrokeTokenizer& other) : cfg_(other.cfg_) {}
  StrokeTokenizer& operator=(const StrokeTokenizer& other) {
    cfg_ = other.cfg_;
    return *this;
  }

  const TokenizerConfig& config() const noexcept { return cfg_; }

  /// Uniform bin over [-pi, pi); throws if theta is outside that range.
  int bin_theta(double theta) const;
  /// Uniform bin over [0, r_max]; larger radii saturate into the last bin.
  int bin_r(double r) const;

  double theta_center(int bin) const noexcept;
  double r_center(int bin) const noexcept;

  /// Two tokens per offset, a WORD token after each word, then END.
  /// `word_breaks` holds the offset count at which each word ends; it must be
  /// strictly increasing and no larger than the number of offsets.
  TokenStream encode(std::span<const PolarOffset> offsets, std::span<const std::size_t> word_breaks = {}) const;

  /// Inverse of encode up to bin quantization; trailing PAD is ignored.
  DecodedStream decode(std::span<const TokenId> ids) const;

  /// Radii seen above r_max since construction.
  std::uint64_t clipped_count() const noexcept { return clipped_.load(std::memory_order_relaxed); }

 private:
  TokenizerConfig cfg_;
  mutable std::atomic<std::uint64_t> clipped_{0};
};

}  // namespace cursive
