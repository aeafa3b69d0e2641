#pragma once

// Joint training with gradient barriers between the encoder/DML, BFS and UAL
// groups, plus checkpoint evaluation.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "calav/checkpoint.hpp"
#include "calav/data.hpp"
#include "calav/optimizer.hpp"
#include "calav/sampler.hpp"

namespace calav {

struct TrainConfig {
  std::size_t epochs = 33;
  std::size_t batch_size = 32;
  AdamHyper encoder_dml;
  AdamHyper bfs;
  AdamHyper ual;
  std::uint64_t seed = 0;
  double delta_1 = 0.7, delta_2 = 0.6, delta_3 = 0.6;
  DmlLoss dml_loss = DmlLoss::Probabilistic;
  ContrastiveMargins margins;
  LegacyMargins legacy_margins;
  ModelConfig model;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TelemetryRow {
  std::size_t epoch = 0;
  double loss_dml = 0.0, loss_bfs = 0.0, loss_ual = 0.0;
  double h_within = 0.0, h_between = 0.0;
};

void write_telemetry_header(std::ostream& out);
void write_telemetry_row(std::ostream& out, const TelemetryRow& row);
std::vector<TelemetryRow> read_telemetry_csv(std::istream& in);

/// Called with the untrained state (epoch 0) and after every epoch.
using EpochCallback = std::function<void(const Checkpoint&, const TelemetryRow&)>;

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TelemetryRow> telemetry;  // row 0 holds the untrained state unless resumed
};

/// Trains on `docs` (the training split, already encoded). `resume`
/// continues from a checkpoint written by an earlier run of the same config.
TrainResult train(std::span<const EncodedEntry> docs, const Vocabulary& vocab, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {}, const std::optional<Checkpoint>& resume = std::nullopt);

struct BatchLosses {
  double dml = 0.0, bfs = 0.0, ual = 0.0;
};

/// Losses of one batch of pairs. With `grads` (zeroed, shaped like `model`)
/// also runs the three isolated backward passes; nothing is updated.
BatchLosses batch_objective(const Model& model, std::span<const EncodedDocument* const> first,
                            std::span<const EncodedDocument* const> second, std::span<const int> labels,
                            const TrainConfig& cfg, Model* grads);

/// One optimisation step on a batch of pairs: a shared forward pass, then
/// three isolated backward passes each updating only its own group.
BatchLosses train_step(Model& model, AdamState& adam, std::span<const EncodedDocument* const> first,
                       std::span<const EncodedDocument* const> second, std::span<const int> labels,
                       const TrainConfig& cfg);

/// Per-stage posteriors for one evaluation pair.
struct PairPrediction {
  DocumentPair pair;
  double p_dml = 0.5, p_bfs = 0.5, p_ual = 0.5;
};

/// Scores fixed pairs. Throws ConsistencyError when the encoded corpus was
/// built with a different vocabulary or a pair names an unknown document.
std::vector<PairPrediction> evaluate_checkpoint(const Checkpoint& ckpt, std::uint64_t corpus_vocab_hash,
                                                std::span<const EncodedEntry> docs,
                                                std::span<const DocumentPair> pairs);

void write_predictions_jsonl(std::ostream& out, std::span<const PairPrediction> preds);

}  // namespace calav
