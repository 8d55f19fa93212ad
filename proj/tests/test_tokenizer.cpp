#include <algorithm>
#include <stdexcept>
#include <cmath>
#include <numbers>

#include "cursive/error.hpp"
#include "cursive/rng.hpp"
#include "cursive/token_io.hpp"
#include "cursive/tokenizer.hpp"
#include "doctest.h"

using namespace cursive;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<PolarOffset> random_polar(Rng& rng, std::size_t n, double r_max) {
  std::vector<PolarOffset> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({rng.uniform(-kPi, kPi), rng.uniform(0, r_max), rng.uniform() < 0.7});
  return out;
}

}  // namespace

TEST_CASE("vocab size") {
  CHECK(vocab_size(TokenizerConfig{220, 150, 1.0}) == 523);
  CHECK(vocab_size(TokenizerConfig{1, 1, 1.0}) == 6);
  CHECK(vocab_size(TokenizerConfig{100, 50, 1.0}) == 203);
}

TEST_CASE("special ids follow the two token blocks") {
  const TokenizerConfig cfg;
  CHECK(cfg.pad_id() == 520);
  CHECK(cfg.end_id() == 521);
  CHECK(cfg.word_id() == 522);
  for (TokenId id = 0; id < cfg.vocab_size(); ++id) {
    const int kinds = int(cfg.is_theta(id)) + int(cfg.is_rp(id)) +
                      int(id == cfg.pad_id() || id == cfg.end_id() || id == cfg.word_id());
    CHECK(kinds == 1);
  }
}

TEST_CASE("config validation") {
  CHECK_THROWS(TokenizerConfig{0, 150, 1.0}.validate());
  CHECK_THROWS(TokenizerConfig{220, 0, 1.0}.validate());
  CHECK_THROWS(TokenizerConfig{220, 150, 0.0}.validate());
}

TEST_CASE("bin_theta boundaries") {
  const StrokeTokenizer tok(TokenizerConfig{});
  CHECK(tok.bin_theta(-kPi) == 0);
  CHECK(tok.bin_theta(std::nextafter(kPi, 0.0)) == 219);
  CHECK(tok.bin_theta(0.0) == 110);
  CHECK_THROWS_AS(tok.bin_theta(kPi), std::invalid_argument);
  CHECK_THROWS_AS(tok.bin_theta(-4.0), std::invalid_argument);
}

TEST_CASE("bin_r clips and counts") {
  const StrokeTokenizer tok(TokenizerConfig{220, 150, 2.0});
  CHECK(tok.bin_r(0.0) == 0);
  CHECK(tok.bin_r(1.0) == 75);
  CHECK(tok.clipped_count() == 0);
  CHECK(tok.bin_r(2.0) == 149);
  CHECK(tok.bin_r(7.5) == 149);
  CHECK(tok.clipped_count() == 1);
}

TEST_CASE("encode examples") {
  const TokenizerConfig cfg;
  const StrokeTokenizer tok(cfg);
  CHECK(tok.encode(std::vector<PolarOffset>{{0, 0, true}}) == TokenStream{110, 221, cfg.end_id()});
  CHECK(tok.encode(std::vector<PolarOffset>{}) == TokenStream{cfg.end_id()});
  const std::vector<PolarOffset> two{{0.1, 0.2, true}, {-0.1, 0.3, false}};
  const std::vector<std::size_t> breaks{1};
  const auto s = tok.encode(two, breaks);
  REQUIRE(s.size() == 6);
  CHECK(cfg.is_theta(s[0]));
  CHECK(cfg.is_rp(s[1]));
  CHECK(s[2] == cfg.word_id());
  CHECK(cfg.is_theta(s[3]));
  CHECK(cfg.is_rp(s[4]));
  CHECK(s[5] == cfg.end_id());
}

TEST_CASE("encode places a WORD token after every word") {
  const StrokeTokenizer tok(TokenizerConfig{});
  Rng rng(3);
  const auto offsets = random_polar(rng, 10, 1.0);
  const std::vector<std::size_t> breaks{2, 5, 9, 10};
  const auto s = tok.encode(offsets, breaks);
  CHECK(s.size() == 2 * 10 + 4 + 1);
  CHECK(std::count(s.begin(), s.end(), tok.config().word_id()) == 4);
  CHECK(s[s.size() - 2] == tok.config().word_id());
  CHECK_FALSE(find_grammar_violation(s, tok.config()).has_value());
}

TEST_CASE("encode rejects bad word breaks") {
  const StrokeTokenizer tok(TokenizerConfig{});
  const std::vector<PolarOffset> two{{0, 0.1, true}, {0, 0.1, true}};
  CHECK_THROWS_AS(tok.encode(two, std::vector<std::size_t>{2, 1}), std::invalid_argument);
  CHECK_THROWS_AS(tok.encode(two, std::vector<std::size_t>{1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(tok.encode(two, std::vector<std::size_t>{3}), std::invalid_argument);
}

TEST_CASE("decode to bin centres") {
  const TokenizerConfig cfg{220, 150, 3.0};
  const StrokeTokenizer tok(cfg);
  const auto empty = tok.decode(TokenStream{cfg.end_id()});
  CHECK(empty.offsets.empty());
  CHECK(empty.word_breaks.empty());

  const auto d = tok.decode(TokenStream{110, 221, cfg.end_id()});
  REQUIRE(d.offsets.size() == 1);
  CHECK(d.offsets[0].theta == doctest::Approx(-kPi + 110.5 * 2 * kPi / 220).epsilon(1e-14));
  CHECK(d.offsets[0].r == doctest::Approx(0.5 * 3.0 / 150).epsilon(1e-14));
  CHECK(d.offsets[0].pen);

  const auto p = cartesian_to_polar({3, 4, true});
  const StrokeTokenizer wide(TokenizerConfig{220, 150, 6.0});
  const auto back = wide.decode(wide.encode(std::vector<PolarOffset>{p})).offsets.at(0);
  CHECK(std::abs(back.theta - p.theta) <= kPi / 220);
  CHECK(std::abs(back.r - p.r) <= 6.0 / 300);
}

TEST_CASE("decode recovers word breaks and ignores padding") {
  const TokenizerConfig cfg;
  const StrokeTokenizer tok(cfg);
  Rng rng(5);
  const auto offsets = random_polar(rng, 6, 1.0);
  const std::vector<std::size_t> breaks{0, 3, 6};
  auto s = tok.encode(offsets, breaks);
  s.push_back(cfg.pad_id());
  s.push_back(cfg.pad_id());
  const auto d = tok.decode(s);
  CHECK(d.offsets.size() == 6);
  CHECK(d.word_breaks == breaks);
}

TEST_CASE("round trip within half a bin over random sequences") {
  const TokenizerConfig cfg{220, 150, 2.5};
  const StrokeTokenizer tok(cfg);
  Rng rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto n = 1 + rng.below(30);
    const auto offsets = random_polar(rng, n, cfg.r_max);
    const auto d = tok.decode(tok.encode(offsets));
    REQUIRE(d.offsets.size() == n);
    StrokeSequence truth;
    StrokeSequence approx;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(d.offsets[i].theta - offsets[i].theta) <= kPi / cfg.theta_bins + 1e-12);
      CHECK(std::abs(d.offsets[i].r - offsets[i].r) <= cfg.r_max / (2.0 * cfg.r_bins) + 1e-12);
      CHECK(d.offsets[i].pen == offsets[i].pen);
    }
    const auto a = offsets_to_coords(to_cartesian(offsets));
    const auto b = offsets_to_coords(to_cartesian(d.offsets));
    const double bound = double(n) * (cfg.r_max / (2.0 * cfg.r_bins) + cfg.r_max * kPi / cfg.theta_bins);
    CHECK(std::hypot(a.back().x - b.back().x, a.back().y - b.back().y) <= bound);
  }
}

TEST_CASE("grammar validation examples") {
  const TokenizerConfig cfg;
  CHECK_FALSE(find_grammar_violation(TokenStream{cfg.end_id()}, cfg).has_value());
  CHECK_FALSE(find_grammar_violation(TokenStream{cfg.word_id(), cfg.end_id(), cfg.pad_id()}, cfg).has_value());

  const auto dangling = find_grammar_violation(TokenStream{5, cfg.end_id()}, cfg);
  REQUIRE(dangling.has_value());
  CHECK(dangling->index == 1);

  const auto rp_first = find_grammar_violation(TokenStream{221, 5, cfg.end_id()}, cfg);
  REQUIRE(rp_first.has_value());
  CHECK(rp_first->index == 0);

  CHECK(find_grammar_violation(TokenStream{}, cfg)->index == 0);
  CHECK(find_grammar_violation(TokenStream{5, 221}, cfg)->index == 2);
  CHECK(find_grammar_violation(TokenStream{cfg.end_id(), 5}, cfg)->index == 1);
  CHECK(find_grammar_violation(TokenStream{cfg.pad_id(), cfg.end_id()}, cfg)->index == 0);
  CHECK(find_grammar_violation(TokenStream{5, 221, 600, cfg.end_id()}, cfg)->index == 2);
  CHECK(find_grammar_violation(TokenStream{-1, cfg.end_id()}, cfg)->index == 0);

  try {
    validate_grammar(TokenStream{5, cfg.end_id()}, cfg);
    FAIL("expected a grammar error");
  } catch (const GrammarError& e) {
    CHECK(e.index() == 1);
  }
}

TEST_CASE("decode rejects malformed streams") {
  const StrokeTokenizer tok(TokenizerConfig{});
  CHECK_THROWS_AS(tok.decode(TokenStream{221, tok.config().end_id()}), GrammarError);
  CHECK_THROWS_AS(tok.decode(TokenStream{5}), GrammarError);
}

TEST_CASE("token files round trip bit-exactly") {
  const TokenizerConfig cfg{220, 150, 0.73125};
  const StrokeTokenizer tok(cfg);
  Rng rng(21);
  TokenFile file;
  file.header.tokenizer = cfg;
  file.header.config_hash = "00ff00ff00ff00ff";
  for (int k = 0; k < 5; ++k) {
    const auto s = tok.encode(random_polar(rng, 20, cfg.r_max), std::vector<std::size_t>{7, 20});
    file.ids.insert(file.ids.end(), s.begin(), s.end());
  }
  const auto json_text = write_token_json(file);
  CHECK(read_token_json(json_text) == file);
  CHECK(write_token_json(read_token_json(json_text)) == json_text);

  const auto packed = write_token_packed(file);
  CHECK(read_token_packed(packed) == file);
  CHECK(write_token_packed(read_token_packed(packed)) == packed);
  const auto header_end = packed.find('\n');
  CHECK(packed.size() - header_end - 1 == 2 * file.ids.size());
}

TEST_CASE("token file header must agree with the id layout") {
  auto j = TokenFileHeader{}.to_json();
  j["end_id"] = 3;
  CHECK_THROWS(TokenFileHeader::from_json(j));
}
