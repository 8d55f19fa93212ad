#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cursive/rng.hpp"

namespace cursive {

/// Every character that may appear in a word, in the order the reference
/// word bank lists them.
inline constexpr std::string_view kWordAlphabet =
    "anesitohr.xdgvkcpufyzbwmlqj810679245IN3SOTHARE\")'(D,BMZQVWPUJFYCG?KL!X";

/// Characters that may only end a sentence-like word.
inline constexpr std::string_view kTerminalPunctuation = ".?!";

/// Published sampling weights (percent); every other character shares the
/// remaining mass uniformly.
std::map<char, double> default_char_weights();

/// Synthetic word generator settings.
///
/// A word is a core (letters or digits, never both) plus optional edge
/// punctuation. The structural probabilities decide how many character slots
/// of each class a word has; `balanced()` derives them from the character
/// weights so that the long-run frequency of every character matches its
/// normalized weight.
struct WordBankConfig {
  std::map<char, double> char_weights;
  std::string alphabet{kWordAlphabet};
  int min_length = 1;
  int max_length = 9;
  int min_digits = 1;
  int max_digits = 5;
  double digit_word_probability = 0.0;
  double capitalize_probability = 0.0;
  double all_caps_probability = 0.0;
  double terminal_punct_probability = 0.0;
  double open_paren_probability = 0.0;
  double close_paren_probability = 0.0;
  /// Probability of a quote at each edge of the word.
  double quote_probability = 0.0;

  /// Default weights with derived structural probabilities.
  static WordBankConfig defaults();

  /// Recomputes the structural probabilities of `cfg` from its weights,
  /// alphabet and length ranges. `capitalized_share` is the preferred
  /// probability of a capitalized (not all-caps) alphabetic word.
  static WordBankConfig balanced(WordBankConfig cfg, double capitalized_share = 0.2);

  /// Weight of `c`, or 0 when `c` is outside the alphabet.
  double weight(char c) const;

  void validate() const;

  nlohmann::json to_json() const;
  /// Fields absent from `j` keep their value from `base`. When `j` overrides
  /// weights, alphabet or lengths but no structural probability, the
  /// probabilities are re-derived.
  static WordBankConfig from_json(const nlohmann::json& j, const WordBankConfig& base = defaults());
};

struct RuleViolation {
  /// '0' unknown character, 'a' digits mixed with letters, 'b' misplaced
  /// capital, 'c' sentence punctuation before the end.
  char rule = '0';
  std::size_t position = 0;
  std::string message;
};

/// Checks the word-bank conventions. All-uppercase words are accepted; an
/// uppercase letter anywhere else must be the first letter.
std::vector<RuleViolation> validate_word(std::string_view word);

std::string generate_word(Rng& rng, const WordBankConfig& cfg);

std::vector<std::string> generate_bank(std::uint64_t seed, const WordBankConfig& cfg, std::size_t n);

}  // namespace cursive
