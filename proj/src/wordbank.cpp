#include "cursive/wordbank.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <stdexcept>

namespace cursive {
namespace {

enum CharClass : std::size_t { kLower, kUpper, kDigit, kTerminal, kOpen, kClose, kQuote, kClassCount };

std::size_t char_class(char c) {
  const auto u = static_cast<unsigned char>(c);
  if (std::islower(u)) return kLower;
  if (std::isupper(u)) return kUpper;
  if (std::isdigit(u)) return kDigit;
  switch (c) {
    case '.':
    case ',':
    case '?':
    case '!':
      return kTerminal;
    case '(':
      return kOpen;
    case ')':
      return kClose;
    case '"':
    case '\'':
      return kQuote;
    default:
      throw std::invalid_argument(std::string("word bank: unsupported character '") + c + "'");
  }
}

bool in_paper_alphabet(char c) { return kWordAlphabet.find(c) != std::string_view::npos; }

/// Characters of the alphabet in one class, with their weights.
struct ClassTable {
  std::array<std::vector<char>, kClassCount> chars;
  std::array<std::vector<double>, kClassCount> weights;
  std::array<double, kClassCount> mass{};

  explicit ClassTable(const WordBankConfig& cfg) {
    for (char c : cfg.alphabet) {
      const double w = cfg.weight(c);
      const auto k = char_class(c);
      chars[k].push_back(c);
      weights[k].push_back(w);
      mass[k] += w;
    }
  }

  bool has(std::size_t k) const { return mass[k] > 0.0; }
  char draw(Rng& rng, std::size_t k) const { return chars[k][rng.categorical(weights[k])]; }
};

int draw_length(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

}  // namespace

std::map<char, double> default_char_weights() {
  const std::map<char, double> listed{{'a', 2.90}, {'o', 2.67}, {'g', 1.95}, {'f', 1.84}, {'l', 1.70},  {'6', 1.39},
                                      {'I', 1.28}, {'H', 1.13}, {'\'', 0.85}, {'Q', 0.76}, {'J', 0.71}, {'G', 0.68}};
  double listed_mass = 0.0;
  for (const auto& [c, w] : listed) listed_mass += w;
  const double residual = (100.0 - listed_mass) / static_cast<double>(kWordAlphabet.size() - listed.size());
  std::map<char, double> weights;
  for (char c : kWordAlphabet) {
    const auto it = listed.find(c);
    weights[c] = it != listed.end() ? it->second : residual;
  }
  return weights;
}

WordBankConfig WordBankConfig::defaults() {
  WordBankConfig cfg;
  cfg.char_weights = default_char_weights();
  return balanced(std::move(cfg));
}

WordBankConfig WordBankConfig::balanced(WordBankConfig cfg, double capitalized_share) {
  const ClassTable table(cfg);
  double total = 0.0;
  for (double m : table.mass) total += m;
  if (!(total > 0.0)) throw std::invalid_argument("word bank: alphabet has no positive weight");
  std::array<double, kClassCount> share{};
  for (std::size_t k = 0; k < kClassCount; ++k) share[k] = table.mass[k] / total;

  const double letter_len = 0.5 * (cfg.min_length + cfg.max_length);
  const double digit_len = 0.5 * (cfg.min_digits + cfg.max_digits);
  const double letters = share[kLower] + share[kUpper];
  const double digits = share[kDigit];
  if (letters <= 0.0 && digits <= 0.0) throw std::invalid_argument("word bank: alphabet needs letters or digits");

  // Expected characters per word (`chars_per_word`) times each class share
  // must equal the expected number of slots of that class per word.
  double q = 0.0;
  double chars_per_word = 0.0;
  if (digits <= 0.0) {
    chars_per_word = letter_len / letters;
  } else if (letters <= 0.0) {
    q = 1.0;
    chars_per_word = digit_len / digits;
  } else {
    q = letter_len * digits / (letter_len * digits + digit_len * letters);
    chars_per_word = digit_len * q / digits;
  }
  cfg.digit_word_probability = q;

  double caps = 0.0;
  double capitalized = 0.0;
  if (q < 1.0 && share[kUpper] > 0.0) {
    if (share[kLower] <= 0.0) {
      caps = 1.0;
    } else {
      // capitals per alphabetic word = capitalized + caps * letter_len
      const double upper_slots = chars_per_word * share[kUpper] / (1.0 - q);
      capitalized = std::min(capitalized_share, upper_slots);
      caps = (upper_slots - capitalized) / letter_len;
      if (caps + capitalized > 1.0 && letter_len > 1.0) {
        capitalized = (letter_len - upper_slots) / (letter_len - 1.0);
        caps = 1.0 - capitalized;
      }
    }
  }
  cfg.all_caps_probability = std::clamp(caps, 0.0, 1.0);
  cfg.capitalize_probability = std::clamp(capitalized, 0.0, 1.0 - cfg.all_caps_probability);
  cfg.terminal_punct_probability = std::clamp(chars_per_word * share[kTerminal], 0.0, 1.0);
  cfg.open_paren_probability = std::clamp(chars_per_word * share[kOpen], 0.0, 1.0);
  cfg.close_paren_probability = std::clamp(chars_per_word * share[kClose], 0.0, 1.0);
  cfg.quote_probability = std::clamp(0.5 * chars_per_word * share[kQuote], 0.0, 1.0);
  return cfg;
}

double WordBankConfig::weight(char c) const {
  if (alphabet.find(c) == std::string::npos) return 0.0;
  const auto it = char_weights.find(c);
  return it == char_weights.end() ? 0.0 : it->second;
}

void WordBankConfig::validate() const {
  if (alphabet.empty()) throw std::invalid_argument("word bank: empty alphabet");
  for (char c : alphabet) {
    if (!in_paper_alphabet(c)) throw std::invalid_argument(std::string("word bank: character '") + c + "' not supported");
    const auto it = char_weights.find(c);
    if (it == char_weights.end() || !(it->second > 0.0)) {
      throw std::invalid_argument(std::string("word bank: character '") + c + "' needs a positive weight");
    }
  }
  if (min_length < 1 || max_length < min_length) throw std::invalid_argument("word bank: bad word_length_range");
  if (min_digits < 1 || max_digits < min_digits) throw std::invalid_argument("word bank: bad digit_length_range");
  for (double p : {digit_word_probability, capitalize_probability, all_caps_probability, terminal_punct_probability,
                   open_paren_probability, close_paren_probability, quote_probability}) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("word bank: probabilities must lie in [0, 1]");
  }
  if (capitalize_probability + all_caps_probability > 1.0 + 1e-12) {
    throw std::invalid_argument("word bank: capitalize + all_caps probability exceeds 1");
  }
}

nlohmann::json WordBankConfig::to_json() const {
  nlohmann::json weights = nlohmann::json::object();
  for (const auto& [c, w] : char_weights) weights[std::string(1, c)] = w;
  return {{"char_weights", weights},
          {"alphabet", alphabet},
          {"word_length_range", {min_length, max_length}},
          {"digit_length_range", {min_digits, max_digits}},
          {"digit_word_probability", digit_word_probability},
          {"capitalize_probability", capitalize_probability},
          {"all_caps_probability", all_caps_probability},
          {"terminal_punct_probability", terminal_punct_probability},
          {"open_paren_probability", open_paren_probability},
          {"close_paren_probability", close_paren_probability},
          {"quote_probability", quote_probability}};
}

WordBankConfig WordBankConfig::from_json(const nlohmann::json& j, const WordBankConfig& base) {
  if (!j.is_object()) throw std::invalid_argument("word bank config must be a JSON object");
  WordBankConfig cfg = base;
  bool shape_changed = false;
  if (j.contains("char_weights")) {
    for (const auto& [key, value] : j.at("char_weights").items()) {
      if (key.size() != 1) throw std::invalid_argument("word bank: weight keys must be single characters");
      cfg.char_weights[key[0]] = value.get<double>();
    }
    shape_changed = true;
  }
  if (j.contains("alphabet")) {
    cfg.alphabet = j.at("alphabet").get<std::string>();
    shape_changed = true;
  }
  if (j.contains("word_length_range")) {
    cfg.min_length = j.at("word_length_range").at(0).get<int>();
    cfg.max_length = j.at("word_length_range").at(1).get<int>();
    shape_changed = true;
  }
  if (j.contains("digit_length_range")) {
    cfg.min_digits = j.at("digit_length_range").at(0).get<int>();
    cfg.max_digits = j.at("digit_length_range").at(1).get<int>();
    shape_changed = true;
  }
  static constexpr std::array kProbabilityKeys{"digit_word_probability",     "capitalize_probability",
                                               "all_caps_probability",       "terminal_punct_probability",
                                               "open_paren_probability",     "close_paren_probability",
                                               "quote_probability"};
  const bool explicit_probabilities =
      std::any_of(kProbabilityKeys.begin(), kProbabilityKeys.end(), [&](const char* k) { return j.contains(k); });
  if (shape_changed && !explicit_probabilities) cfg = balanced(std::move(cfg));
  cfg.digit_word_probability = j.value("digit_word_probability", cfg.digit_word_probability);
  cfg.capitalize_probability = j.value("capitalize_probability", cfg.capitalize_probability);
  cfg.all_caps_probability = j.value("all_caps_probability", cfg.all_caps_probability);
  cfg.terminal_punct_probability = j.value("terminal_punct_probability", cfg.terminal_punct_probability);
  cfg.open_paren_probability = j.value("open_paren_probability", cfg.open_paren_probability);
  cfg.close_paren_probability = j.value("close_paren_probability", cfg.close_paren_probability);
  cfg.quote_probability = j.value("quote_probability", cfg.quote_probability);
  cfg.validate();
  return cfg;
}

std::vector<RuleViolation> validate_word(std::string_view word) {
  std::vector<RuleViolation> out;
  bool has_digit = false;
  bool has_letter = false;
  bool all_upper = true;
  std::size_t first_letter = std::string_view::npos;
  for (std::size_t i = 0; i < word.size(); ++i) {
    const char c = word[i];
    const auto u = static_cast<unsigned char>(c);
    if (!in_paper_alphabet(c)) {
      out.push_back({'0', i, std::string("character '") + c + "' is outside the alphabet"});
      continue;
    }
    if (std::isdigit(u)) has_digit = true;
    if (std::isalpha(u)) {
      has_letter = true;
      if (first_letter == std::string_view::npos) first_letter = i;
      if (!std::isupper(u)) all_upper = false;
    }
  }
  if (has_digit && has_letter) out.push_back({'a', 0, "digits and letters in the same word"});
  if (has_letter && !all_upper) {
    for (std::size_t i = first_letter + 1; i < word.size(); ++i) {
      if (std::isupper(static_cast<unsigned char>(word[i]))) {
        out.push_back({'b', i, "uppercase letter after the first letter"});
        break;
      }
    }
  }
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (kTerminalPunctuation.find(word[i]) == std::string_view::npos) continue;
    const auto rest = word.substr(i + 1);
    if (std::any_of(rest.begin(), rest.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; })) {
      out.push_back({'c', i, std::string("'") + word[i] + "' before the end of the word"});
      break;
    }
  }
  return out;
}

std::string generate_word(Rng& rng, const WordBankConfig& cfg) {
  if (cfg.alphabet.empty()) throw std::invalid_argument("generate_word: empty alphabet");
  const ClassTable table(cfg);
  if (!table.has(kLower) && !table.has(kUpper) && !table.has(kDigit)) {
    throw std::invalid_argument("generate_word: alphabet needs letters or digits");
  }

  std::string core;
  const bool letters_available = table.has(kLower) || table.has(kUpper);
  const bool digit_word = table.has(kDigit) && (!letters_available || rng.uniform() < cfg.digit_word_probability);
  if (digit_word) {
    const int n = draw_length(rng, cfg.min_digits, cfg.max_digits);
    for (int i = 0; i < n; ++i) core.push_back(table.draw(rng, kDigit));
  } else {
    const int n = draw_length(rng, cfg.min_length, cfg.max_length);
    const double style = rng.uniform();
    const bool caps = table.has(kUpper) && (!table.has(kLower) || style < cfg.all_caps_probability);
    const bool capitalized =
        !caps && table.has(kUpper) && style < cfg.all_caps_probability + cfg.capitalize_probability;
    for (int i = 0; i < n; ++i) {
      const bool upper = caps || (capitalized && i == 0);
      core.push_back(table.draw(rng, upper ? kUpper : kLower));
    }
  }

  std::vector<char> lead;
  if (table.has(kOpen) && rng.uniform() < cfg.open_paren_probability) lead.push_back(table.draw(rng, kOpen));
  if (table.has(kQuote) && rng.uniform() < cfg.quote_probability) lead.push_back(table.draw(rng, kQuote));
  std::vector<char> trail;
  if (table.has(kTerminal) && rng.uniform() < cfg.terminal_punct_probability) trail.push_back(table.draw(rng, kTerminal));
  if (table.has(kClose) && rng.uniform() < cfg.close_paren_probability) trail.push_back(table.draw(rng, kClose));
  if (table.has(kQuote) && rng.uniform() < cfg.quote_probability) trail.push_back(table.draw(rng, kQuote));
  for (auto* edge : {&lead, &trail}) {
    for (std::size_t i = edge->size(); i > 1; --i) std::swap((*edge)[i - 1], (*edge)[rng.below(i)]);
  }
  return std::string(lead.begin(), lead.end()) + core + std::string(trail.begin(), trail.end());
}

std::vector<std::string> generate_bank(std::uint64_t seed, const WordBankConfig& cfg, std::size_t n) {
  cfg.validate();
  Rng rng(seed);
  std::vector<std::string> bank;
  bank.reserve(n);
  for (std::size_t i = 0; i < n; ++i) bank.push_back(generate_word(rng, cfg));
  return bank;
}

}  // namespace cursive
