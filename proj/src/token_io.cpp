#include "cursive/token_io.hpp"

#include <stdexcept>

#include "cursive/error.hpp"

namespace cursive {

nlohmann::json TokenFileHeader::to_json() const {
  return {{"format", "cursive-tokens"},
          {"version", version},
          {"theta_bins", tokenizer.theta_bins},
          {"r_bins", tokenizer.r_bins},
          {"r_max", tokenizer.r_max},
          {"pad_id", tokenizer.pad_id()},
          {"end_id", tokenizer.end_id()},
          {"word_id", tokenizer.word_id()},
          {"config_hash", config_hash}};
}

TokenFileHeader TokenFileHeader::from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "cursive-tokens") {
    throw SchemaError("$.header", "not a cursive token header");
  }
  TokenFileHeader h;
  try {
    h.version = j.at("version").get<int>();
    h.tokenizer.theta_bins = j.at("theta_bins").get<int>();
    h.tokenizer.r_bins = j.at("r_bins").get<int>();
    h.tokenizer.r_max = j.at("r_max").get<double>();
    h.config_hash = j.value("config_hash", "");
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("$.header", e.what());
  }
  if (h.version != kTokenFormatVersion) throw SchemaError("$.header.version", "unsupported version");
  h.tokenizer.validate();
  if (j.at("pad_id").get<TokenId>() != h.tokenizer.pad_id() || j.at("end_id").get<TokenId>() != h.tokenizer.end_id() ||
      j.at("word_id").get<TokenId>() != h.tokenizer.word_id()) {
    throw SchemaError("$.header", "special token ids disagree with bin counts");
  }
  return h;
}

std::string write_token_json(const TokenFile& file) {
  nlohmann::json j{{"header", file.header.to_json()}, {"ids", file.ids}};
  return j.dump();
}

TokenFile read_token_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("$", e.what());
  }
  if (!j.is_object() || !j.contains("header") || !j.contains("ids")) throw SchemaError("$", "expected header and ids");
  TokenFile file;
  file.header = TokenFileHeader::from_json(j["header"]);
  const auto& ids = j["ids"];
  if (!ids.is_array()) throw SchemaError("$.ids", "expected an array");
  const TokenId vocab = file.header.tokenizer.vocab_size();
  file.ids.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!ids[i].is_number_integer()) throw SchemaError("$.ids[" + std::to_string(i) + "]", "expected an integer");
    const auto id = ids[i].get<TokenId>();
    if (id < 0 || id >= vocab) throw SchemaError("$.ids[" + std::to_string(i) + "]", "id out of range");
    file.ids.push_back(id);
  }
  return file;
}

void append_u16le(std::string& out, std::span<const TokenId> ids) {
  out.reserve(out.size() + 2 * ids.size());
  for (TokenId id : ids) {
    if (id < 0 || id > 0xFFFF) throw std::out_of_range("token id does not fit in u16");
    out.push_back(static_cast<char>(id & 0xFF));
    out.push_back(static_cast<char>((id >> 8) & 0xFF));
  }
}

std::string write_token_packed(const TokenFile& file) {
  std::string out = file.header.to_json().dump();
  out.push_back('\n');
  append_u16le(out, file.ids);
  return out;
}

TokenFile read_token_packed(std::string_view bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw SchemaError("$", "missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, newline));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("$.header", e.what());
  }
  TokenFile file;
  file.header = TokenFileHeader::from_json(header);
  const auto body = bytes.substr(newline + 1);
  if (body.size() % 2 != 0) throw SchemaError("$.ids", "odd payload length");
  const TokenId vocab = file.header.tokenizer.vocab_size();
  file.ids.resize(body.size() / 2);
  for (std::size_t i = 0; i < file.ids.size(); ++i) {
    const auto lo = static_cast<unsigned char>(body[2 * i]);
    const auto hi = static_cast<unsigned char>(body[2 * i + 1]);
    const TokenId id = lo | (hi << 8);
    if (id >= vocab) throw SchemaError("$.ids[" + std::to_string(i) + "]", "id out of range");
    file.ids[i] = id;
  }
  return file;
}

}  // namespace cursive
