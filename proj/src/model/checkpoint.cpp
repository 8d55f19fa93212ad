#include "cursive/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cursive/error.hpp"
#include "cursive/model/layout.hpp"

namespace cursive {
namespace {

constexpr char kMagic[8] = {'C', 'R', 'S', 'V', 'C', 'K', 'P', 'T'};

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(std::string_view bytes, std::size_t at) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

void put_floats(std::string& out, const std::vector<float>& values) {
  out.reserve(out.size() + 4 * values.size());
  for (float f : values) put_le(out, std::bit_cast<std::uint32_t>(f));
}

std::vector<float> get_floats(std::string_view bytes, std::size_t at, std::size_t n) {
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, at + 4 * i));
  return out;
}

}  // namespace

nlohmann::json checkpoint_header(const Checkpoint& ckpt) {
  const ParameterLayout layout(ckpt.model);
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : layout.tensors) {
    tensors.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"offset", t.offset}});
  }
  nlohmann::json sections = {"params"};
  if (ckpt.has_optimizer()) {
    sections.push_back("adam_m");
    sections.push_back("adam_v");
  }
  return {{"format", "cursive-checkpoint"},
          {"version", kCheckpointVersion},
          {"model", ckpt.model.to_json()},
          {"train", ckpt.train.to_json()},
          {"tokenizer",
           {{"theta_bins", ckpt.tokenizer.theta_bins},
            {"r_bins", ckpt.tokenizer.r_bins},
            {"r_max", ckpt.tokenizer.r_max},
            {"pad_id", ckpt.tokenizer.pad_id()},
            {"end_id", ckpt.tokenizer.end_id()},
            {"word_id", ckpt.tokenizer.word_id()}}},
          {"config_hash", ckpt.config_hash},
          {"step", ckpt.step},
          {"rng", {{"seed", ckpt.train.seed}, {"batch_stream", "substream(seed, step)"}}},
          {"param_count", layout.total},
          {"dtype", "float32-le"},
          {"sections", sections},
          {"tensors", tensors}};
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const std::size_t n = ParameterLayout(ckpt.model).total;
  if (ckpt.params.size() != n) throw std::invalid_argument("checkpoint: parameter count does not match the model config");
  if (ckpt.has_optimizer() && (ckpt.adam_m.size() != n || ckpt.adam_v.size() != n)) {
    throw std::invalid_argument("checkpoint: optimizer state does not match the parameters");
  }
  const std::string header = checkpoint_header(ckpt).dump();
  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, header.size());
  out += header;
  put_floats(out, ckpt.params);
  if (ckpt.has_optimizer()) {
    put_floats(out, ckpt.adam_m);
    put_floats(out, ckpt.adam_v);
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw SchemaError("$", "not a cursive checkpoint");
  }
  if (get_le<std::uint32_t>(bytes, 8) != kCheckpointVersion) throw SchemaError("$.version", "unsupported checkpoint version");
  const auto header_len = get_le<std::uint64_t>(bytes, 12);
  if (20 + header_len > bytes.size()) throw SchemaError("$", "truncated checkpoint header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(20, header_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("$", e.what());
  }
  Checkpoint ckpt;
  ckpt.model = ModelConfig::from_json(h.at("model"));
  ckpt.train = TrainConfig::from_json(h.at("train"));
  const auto& tok = h.at("tokenizer");
  ckpt.tokenizer = {tok.at("theta_bins").get<int>(), tok.at("r_bins").get<int>(), tok.at("r_max").get<double>()};
  ckpt.tokenizer.validate();
  if (ckpt.tokenizer.vocab_size() != ckpt.model.stroke_vocab) {
    throw SchemaError("$.tokenizer", "tokenizer vocabulary does not match the model");
  }
  ckpt.config_hash = h.value("config_hash", "");
  ckpt.step = h.at("step").get<std::int64_t>();
  const std::size_t n = ParameterLayout(ckpt.model).total;
  const std::size_t sections = h.at("sections").size();
  const std::size_t body = 20 + header_len;
  if (bytes.size() != body + 4 * n * sections) throw SchemaError("$.sections", "tensor payload has the wrong size");
  ckpt.params = get_floats(bytes, body, n);
  if (sections == 3) {
    ckpt.adam_m = get_floats(bytes, body + 4 * n, n);
    ckpt.adam_v = get_floats(bytes, body + 8 * n, n);
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ArtifactError("cannot write checkpoint " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open checkpoint " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace cursive
