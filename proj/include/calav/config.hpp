#pragma once

// Run configuration: one JSON file with a section per command. Every key
// has a default; unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "calav/data.hpp"
#include "calav/trainer.hpp"

namespace calav {

/// Overlays `patch` onto `base` recursively, refusing keys `base` lacks.
void merge_strict(nlohmann::json& base, const nlohmann::json& patch, const std::string& where);

struct PrepConfig {
  std::string format = "docs-jsonl";
  std::string split = "disjoint";  // disjoint (fandoms and authors) or author
  double test_fraction = 0.2;
  std::size_t vocab_tokens = 5000;
  std::size_t vocab_chars = 300;
  WindowParams window;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static PrepConfig from_json(const nlohmann::json& patch);
};

struct SampleConfig {
  std::string side = "test";
  std::string subsets = "all";
  std::size_t rounds = 1;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static SampleConfig from_json(const nlohmann::json& patch);
};

struct EvalConfig {
  std::string stages = "dml,bfs,ual";
  std::string subsets = "all";
  std::size_t bins = 10;

  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& patch);
};

struct RunConfig {
  PrepConfig prep;
  SampleConfig sample;
  TrainConfig train;
  EvalConfig eval;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

/// Seed from CALAV_SEED when set.
std::optional<std::uint64_t> env_seed();

}  // namespace calav
