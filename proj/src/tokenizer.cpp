#include "cursive/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cursive/error.hpp"

namespace cursive {

void TokenizerConfig::validate() const {
  if (theta_bins < 1) throw std::invalid_argument("tokenizer: theta_bins must be >= 1");
  if (r_bins < 1) throw std::invalid_argument("tokenizer: r_bins must be >= 1");
  if (!(r_max > 0.0) || !std::isfinite(r_max)) throw std::invalid_argument("tokenizer: r_max must be positive");
}

int vocab_size(const TokenizerConfig& cfg) {
  cfg.validate();
  return cfg.vocab_size();
}

std::optional<GrammarViolation> find_grammar_violation(std::span<const TokenId> ids, const TokenizerConfig& cfg) {
  const TokenId vocab = cfg.vocab_size();
  enum class State { pair_start, need_rp, padding };
  State state = State::pair_start;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const TokenId id = ids[i];
    if (id < 0 || id >= vocab) return GrammarViolation{i, "id " + std::to_string(id) + " out of range"};
    switch (state) {
      case State::pair_start:
        if (cfg.is_theta(id)) {
          state = State::need_rp;
        } else if (id == cfg.word_id()) {
          // stays at a pair boundary
        } else if (id == cfg.end_id()) {
          state = State::padding;
        } else if (cfg.is_rp(id)) {
          return GrammarViolation{i, "radius/pen token where a direction token was expected"};
        } else {
          return GrammarViolation{i, "PAD before END"};
        }
        break;
      case State::need_rp:
        if (!cfg.is_rp(id)) return GrammarViolation{i, "direction token not followed by a radius/pen token"};
        state = State::pair_start;
        break;
      case State::padding:
        if (id != cfg.pad_id()) return GrammarViolation{i, "only PAD may follow END"};
        break;
    }
  }
  if (state == State::need_rp) return GrammarViolation{ids.size() - 1, "dangling direction token"};
  if (state == State::pair_start) {
    return GrammarViolation{ids.size(), "stream is not terminated by END"};
  }
  return std::nullopt;
}

void validate_grammar(std::span<const TokenId> ids, const TokenizerConfig& cfg) {
  if (auto v = find_grammar_violation(ids, cfg)) throw GrammarError(v->index, v->reason);
}

StrokeTokenizer::StrokeTokenizer(TokenizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

int StrokeTokenizer::bin_theta(double theta) const {
  if (!(theta >= -std::numbers::pi && theta < std::numbers::pi)) {
    throw std::invalid_argument("bin_theta: theta outside [-pi, pi)");
  }
  const auto bin = static_cast<int>(std::floor((theta + std::numbers::pi) / (2.0 * std::numbers::pi) * cfg_.theta_bins));
  return std::clamp(bin, 0, cfg_.theta_bins - 1);
}

int StrokeTokenizer::bin_r(double r) const {
  if (!(r >= 0.0)) throw std::invalid_argument("bin_r: radius must be non-negative");
  if (r > cfg_.r_max) {
    clipped_.fetch_add(1, std::memory_order_relaxed);
    r = cfg_.r_max;
  }
  const auto bin = static_cast<int>(std::floor(r / cfg_.r_max * cfg_.r_bins));
  return std::min(bin, cfg_.r_bins - 1);
}

double StrokeTokenizer::theta_center(int bin) const noexcept {
  return -std::numbers::pi + (bin + 0.5) * 2.0 * std::numbers::pi / cfg_.theta_bins;
}

double StrokeTokenizer::r_center(int bin) const noexcept { return (bin + 0.5) * cfg_.r_max / cfg_.r_bins; }

TokenStream StrokeTokenizer::encode(std::span<const PolarOffset> offsets, std::span<const std::size_t> word_breaks) const {
  for (std::size_t i = 0; i < word_breaks.size(); ++i) {
    if (word_breaks[i] > offsets.size()) throw std::invalid_argument("encode: word break beyond end of sequence");
    if (i > 0 && word_breaks[i] <= word_breaks[i - 1]) {
      throw std::invalid_argument("encode: word breaks must be strictly increasing");
    }
  }
  TokenStream ids;
  ids.reserve(2 * offsets.size() + word_breaks.size() + 1);
  std::size_t next_break = 0;
  for (std::size_t i = 0; i <= offsets.size(); ++i) {
    while (next_break < word_breaks.size() && word_breaks[next_break] == i) {
      ids.push_back(cfg_.word_id());
      ++next_break;
    }
    if (i == offsets.size()) break;
    const auto& o = offsets[i];
    ids.push_back(bin_theta(o.theta));
    ids.push_back(cfg_.theta_bins + 2 * bin_r(o.r) + (o.pen ? 1 : 0));
  }
  ids.push_back(cfg_.end_id());
  return ids;
}

DecodedStream StrokeTokenizer::decode(std::span<const TokenId> ids) const {
  validate_grammar(ids, cfg_);
  DecodedStream out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const TokenId id = ids[i];
    if (id == cfg_.end_id()) break;
    if (id == cfg_.word_id()) {
      out.word_breaks.push_back(out.offsets.size());
      continue;
    }
    const TokenId packed = ids[++i] - cfg_.theta_bins;
    out.offsets.push_back({theta_center(id), r_center(packed / 2), (packed % 2) == 1});
  }
  return out;
}

}  // namespace cursive
