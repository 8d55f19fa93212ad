#include "cursive/ascii.hpp"

#include <stdexcept>

#include "cursive/wordbank.hpp"

namespace cursive {

AsciiTokenizer::AsciiTokenizer() : chars_(" ") {
  chars_.append(kWordAlphabet);
  for (std::size_t i = 0; i < chars_.size(); ++i) ids_[static_cast<unsigned char>(chars_[i])] = static_cast<int>(i) + 1;
}

int AsciiTokenizer::id(char c) const {
  const int v = ids_[static_cast<unsigned char>(c)];
  if (v == 0) throw std::invalid_argument(std::string("character '") + c + "' cannot be tokenized");
  return v;
}

char AsciiTokenizer::character(int id) const {
  if (id < 1 || id > static_cast<int>(chars_.size())) throw std::out_of_range("ascii id out of range");
  return chars_[static_cast<std::size_t>(id - 1)];
}

std::vector<int> AsciiTokenizer::encode(std::string_view text) const {
  std::vector<int> out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const int v = ids_[static_cast<unsigned char>(text[i])];
    if (v == 0) {
      // Report the whole UTF-8 sequence so the message shows the character.
      std::size_t len = 1;
      while (i + len < text.size() && (static_cast<unsigned char>(text[i + len]) & 0xC0) == 0x80) ++len;
      throw std::invalid_argument("unknown character '" + std::string(text.substr(i, len)) + "' at position " +
                                  std::to_string(i) + " cannot be tokenized");
    }
    out.push_back(v);
  }
  return out;
}

std::string AsciiTokenizer::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id != kPad) out.push_back(character(id));
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < text.size() && text[i] != ' ') ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

}  // namespace cursive
