#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cursive {

/// Character-level tokenizer for the conditioning text. Id 0 is PAD, id 1 is
/// the space, then the word-bank alphabet in its listed order.
class AsciiTokenizer {
 public:
  static constexpr int kPad = 0;

  AsciiTokenizer();

  int vocab_size() const noexcept { return static_cast<int>(chars_.size()) + 1; }
  bool contains(char c) const noexcept { return ids_[static_cast<unsigned char>(c)] > 0; }
  int id(char c) const;
  char character(int id) const;

  /// Throws std::invalid_argument naming the first unknown character.
  std::vector<int> encode(std::string_view text) const;
  /// PAD ids are skipped.
  std::string decode(std::span<const int> ids) const;

 private:
  std::string chars_;
  std::array<int, 256> ids_{};
};

/// Splits on runs of spaces; empty words are dropped.
std::vector<std::string> split_words(std::string_view text);

}  // namespace cursive
