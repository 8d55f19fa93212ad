#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cursive/tokenizer.hpp"

namespace cursive {

inline constexpr int kTokenFormatVersion = 1;

/// Header shared by both token file encodings.
struct TokenFileHeader {
  int version = kTokenFormatVersion;
  TokenizerConfig tokenizer;
  std::string config_hash;

  nlohmann::json to_json() const;
  static TokenFileHeader from_json(const nlohmann::json& j);
  friend bool operator==(const TokenFileHeader&, const TokenFileHeader&) = default;
};

struct TokenFile {
  TokenFileHeader header;
  std::vector<TokenId> ids;
  friend bool operator==(const TokenFile&, const TokenFile&) = default;
};

/// `{"header": {...}, "ids": [...]}`
std::string write_token_json(const TokenFile& file);
TokenFile read_token_json(std::string_view text);

/// One line of header JSON terminated by '\n', followed by the ids as
/// little-endian u16.
std::string write_token_packed(const TokenFile& file);
TokenFile read_token_packed(std::string_view bytes);

void append_u16le(std::string& out, std::span<const TokenId> ids);

}  // namespace cursive
