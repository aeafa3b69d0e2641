#pragma once

// All trainable state in one place plus a flat registry over it, so the
// same struct serves as parameters, gradients and optimizer moments.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "calav/bfs.hpp"
#include "calav/dml.hpp"
#include "calav/encoder.hpp"
#include "calav/ual.hpp"

namespace calav {

/// Parameter groups that are optimized independently.
enum class ParamGroup { EncoderDml = 0, Bfs = 1, Ual = 2 };
inline constexpr int kGroupCount = 3;

std::string_view group_name(ParamGroup g);

struct ModelConfig {
  EncoderDims encoder;
  std::size_t lev_dim = 32;
  std::size_t bfs_dim = 16;
  std::size_t ual_dim = 16;
  Activation activation = Activation::Swish;
  double beta = 0.1;
  double prior_log_odds = 0.0;
  bool learn_kernel = true;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

struct Model {
  EmbeddingTables tables;
  EncoderParams encoder;
  DmlParams dml;
  BfsParams bfs;
  UalParams ual;
};

Model init_model(const ModelConfig& cfg, std::size_t n_tokens, std::size_t n_chars, std::uint64_t seed);

/// A dense parameter block in column-major storage. Scalars are 1 x 1.
struct ParamView {
  std::string name;
  ParamGroup group;
  double* data;
  Eigen::Index rows, cols;
  Eigen::Index size() const { return rows * cols; }
};

/// Every trainable block in a fixed order.
std::vector<ParamView> parameters(Model& m);

/// Same shapes as `m`, all zeros. Non-trainable settings are copied.
Model zeros_like(const Model& m);

/// LEV of one encoded document.
Vec document_lev(const EncodedDocument& doc, const Model& m);

}  // namespace calav
