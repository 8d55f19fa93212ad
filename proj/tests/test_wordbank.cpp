#include <stdexcept>
#include <cmath>
#include <map>
#include <numeric>

#include "cursive/wordbank.hpp"
#include "doctest.h"

using namespace cursive;

TEST_CASE("default weights cover the alphabet") {
  const auto w = default_char_weights();
  CHECK(w.size() == 70);
  CHECK(kWordAlphabet.size() == 70);
  CHECK(w.at('a') == 2.90);
  CHECK(w.at('o') == 2.67);
  CHECK(w.at('g') == 1.95);
  CHECK(w.at('G') == 0.68);
  const double total = std::accumulate(w.begin(), w.end(), 0.0, [](double s, const auto& kv) { return s + kv.second; });
  CHECK(total == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(w.at('z') == doctest::Approx((100.0 - 17.86) / 58.0).epsilon(1e-12));
}

TEST_CASE("validate_word examples") {
  for (const char* ok : {"Joakn", "hlin", "42", "rymrtd", "RSATSRKN", "IVSN", "\"BMSAOP", "noagpb\")", "wr.", "(7?"}) {
    CHECK_MESSAGE(validate_word(ok).empty(), ok);
  }
  const auto b = validate_word("aB");
  REQUIRE(b.size() == 1);
  CHECK(b[0].rule == 'b');
  const auto a = validate_word("4a2");
  REQUIRE_FALSE(a.empty());
  CHECK(a[0].rule == 'a');
  const auto c = validate_word("a.b");
  REQUIRE(c.size() == 1);
  CHECK(c[0].rule == 'c');
  CHECK(validate_word("a#")[0].rule == '0');
}

TEST_CASE("forced single-character alphabet") {
  WordBankConfig cfg;
  cfg.alphabet = "a";
  cfg.char_weights = {{'a', 1.0}};
  cfg.min_length = cfg.max_length = 1;
  cfg = WordBankConfig::balanced(cfg);
  Rng rng(1);
  CHECK(generate_word(rng, cfg) == "a");
  CHECK(generate_bank(9, cfg, 5) == std::vector<std::string>(5, "a"));
}

TEST_CASE("empty alphabet is rejected") {
  WordBankConfig cfg = WordBankConfig::defaults();
  cfg.alphabet.clear();
  Rng rng(1);
  CHECK_THROWS_AS(generate_word(rng, cfg), std::invalid_argument);
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("bank generation is deterministic") {
  const auto cfg = WordBankConfig::defaults();
  CHECK(generate_bank(1, cfg, 0).empty());
  const auto a = generate_bank(1, cfg, 75);
  CHECK(a.size() == 75);
  CHECK(a == generate_bank(1, cfg, 75));
  CHECK(a != generate_bank(2, cfg, 75));
}

TEST_CASE("generated words follow the conventions") {
  const auto bank = generate_bank(2024, WordBankConfig::defaults(), 10000);
  std::size_t violations = 0;
  for (const auto& w : bank) {
    CHECK_FALSE(w.empty());
    violations += validate_word(w).size();
  }
  CHECK(violations == 0);
}

TEST_CASE("digit words carry no internal period") {
  const auto bank = generate_bank(7, WordBankConfig::defaults(), 5000);
  for (const auto& w : bank) {
    if (w.find_first_of("0123456789") == std::string::npos) continue;
    const auto first = w.find_first_of("0123456789");
    const auto last = w.find_last_of("0123456789");
    CHECK(w.substr(first, last - first + 1).find('.') == std::string::npos);
  }
}

TEST_CASE("character frequencies match the configured weights") {
  const auto cfg = WordBankConfig::defaults();
  const auto bank = generate_bank(99, cfg, 100000);
  std::map<char, double> counts;
  double n = 0;
  for (const auto& w : bank) {
    for (char c : w) {
      counts[c] += 1;
      n += 1;
    }
  }
  double total_weight = 0;
  for (char c : cfg.alphabet) total_weight += cfg.weight(c);
  for (char c : cfg.alphabet) {
    const double p = cfg.weight(c) / total_weight;
    const double sigma = std::sqrt(n * p * (1 - p));
    CHECK_MESSAGE(std::abs(counts[c] - n * p) <= 3 * sigma, "character '" << c << "' count " << counts[c]
                                                                          << " expected " << n * p);
  }
}

TEST_CASE("config JSON round trip and rebalancing") {
  const auto cfg = WordBankConfig::defaults();
  const auto back = WordBankConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());

  const auto shorter = WordBankConfig::from_json({{"word_length_range", {2, 4}}});
  CHECK(shorter.min_length == 2);
  CHECK(shorter.max_length == 4);
  CHECK(shorter.digit_word_probability != cfg.digit_word_probability);

  const auto pinned = WordBankConfig::from_json({{"word_length_range", {2, 4}}, {"digit_word_probability", 0.0}});
  CHECK(pinned.digit_word_probability == 0.0);
  for (const auto& w : generate_bank(3, pinned, 500)) CHECK(w.find_first_of("0123456789") == std::string::npos);

  CHECK_THROWS(WordBankConfig::from_json({{"char_weights", {{"a", -1.0}}}}));
  CHECK_THROWS(WordBankConfig::from_json({{"alphabet", "a#"}}));
}
