#pragma once

// Binary checkpoint: "CALAV1", an 8-byte little-endian header length, a JSON
// header, then little-endian float64 arrays in row-major order.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include <json.hpp>

#include "calav/model.hpp"
#include "calav/optimizer.hpp"

namespace calav {

inline constexpr char kCheckpointMagic[] = "CALAV1";

struct Checkpoint {
  ModelConfig config;
  Model model;
  std::optional<AdamState> adam;  // present for resumable checkpoints
  std::uint64_t vocab_hash = 0;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  nlohmann::json train_config = nlohmann::json::object();
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace calav
