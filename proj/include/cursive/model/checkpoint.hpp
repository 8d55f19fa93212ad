#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cursive/model/config.hpp"
#include "cursive/tokenizer.hpp"

namespace cursive {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Model weights plus everything needed to continue training exactly:
/// configs, optimizer moments and the step counter. Batches depend only on
/// (seed, step), so those two values are the whole data-order state.
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  TokenizerConfig tokenizer;
  std::string config_hash;
  std::int64_t step = 0;
  std::vector<float> params;
  /// Empty when the checkpoint carries weights only.
  std::vector<float> adam_m;
  std::vector<float> adam_v;

  bool has_optimizer() const noexcept { return !adam_m.empty(); }
};

/// Layout: 8-byte magic "CRSVCKPT", u32 version, u64 header length, the JSON
/// header, then the float32 little-endian sections listed in the header.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// The JSON header alone, for inspection.
nlohmann::json checkpoint_header(const Checkpoint& ckpt);

}  // namespace cursive
