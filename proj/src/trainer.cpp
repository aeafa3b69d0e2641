#include "calav/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "calav/config.hpp"
#include "calav/error.hpp"

namespace calav {

void TrainConfig::validate() const {
  if (epochs == 0) throw ValidationError("epochs must be positive");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  for (const auto* h : {&encoder_dml, &bfs, &ual}) {
    if (!(h->lr > 0.0)) throw ValidationError("learning rates must be positive");
    if (!(h->beta1 >= 0.0 && h->beta1 < 1.0 && h->beta2 >= 0.0 && h->beta2 < 1.0 && h->eps > 0.0))
      throw ValidationError("invalid Adam hyperparameters");
  }
  for (double d : {delta_1, delta_2, delta_3})
    if (!(d >= 0.0 && d <= 1.0)) throw ValidationError("sampling probabilities must lie in [0, 1]");
  if (!(model.beta >= 0.0)) throw ValidationError("beta must be non-negative");
  if (model.lev_dim == 0 || model.bfs_dim == 0 || model.ual_dim == 0 || model.encoder.word_dim == 0 ||
      model.encoder.char_dim == 0 || model.encoder.char_word_dim == 0 || model.encoder.output_dim == 0)
    throw ValidationError("dimensions must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"lr_encoder_dml", encoder_dml.lr},
          {"lr_bfs", bfs.lr},
          {"lr_ual", ual.lr},
          {"adam_beta1", encoder_dml.beta1},
          {"adam_beta2", encoder_dml.beta2},
          {"adam_eps", encoder_dml.eps},
          {"seed", seed},
          {"delta_1", delta_1},
          {"delta_2", delta_2},
          {"delta_3", delta_3},
          {"dml_loss", dml_loss == DmlLoss::Probabilistic ? "probabilistic" : "legacy"},
          {"tau_same", margins.same},
          {"tau_diff", margins.diff},
          {"legacy_same", legacy_margins.same},
          {"legacy_diff", legacy_margins.diff},
          {"model", model.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& patch) {
  nlohmann::json j = TrainConfig{}.to_json();
  merge_strict(j, patch, "train config");
  TrainConfig c;
  try {
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.encoder_dml.lr = j.at("lr_encoder_dml").get<double>();
    c.bfs.lr = j.at("lr_bfs").get<double>();
    c.ual.lr = j.at("lr_ual").get<double>();
    for (auto* h : {&c.encoder_dml, &c.bfs, &c.ual}) {
      h->beta1 = j.at("adam_beta1").get<double>();
      h->beta2 = j.at("adam_beta2").get<double>();
      h->eps = j.at("adam_eps").get<double>();
    }
    c.seed = j.at("seed").get<std::uint64_t>();
    c.delta_1 = j.at("delta_1").get<double>();
    c.delta_2 = j.at("delta_2").get<double>();
    c.delta_3 = j.at("delta_3").get<double>();
    const auto loss = j.at("dml_loss").get<std::string>();
    if (loss == "probabilistic")
      c.dml_loss = DmlLoss::Probabilistic;
    else if (loss == "legacy")
      c.dml_loss = DmlLoss::Legacy;
    else
      throw ValidationError("dml_loss must be probabilistic or legacy");
    c.margins = {j.at("tau_same").get<double>(), j.at("tau_diff").get<double>()};
    c.legacy_margins = {j.at("legacy_same").get<double>(), j.at("legacy_diff").get<double>()};
    c.model = ModelConfig::from_json(j.at("model"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

void write_telemetry_header(std::ostream& out) { out << "epoch,loss_dml,loss_bfs,loss_ual,h_within,h_between\n"; }

void write_telemetry_row(std::ostream& out, const TelemetryRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.loss_dml, r.loss_bfs, r.loss_ual,
                r.h_within, r.h_between);
  out << buf;
}

std::vector<TelemetryRow> read_telemetry_csv(std::istream& in) {
  std::vector<TelemetryRow> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (n == 1 || line.empty()) continue;
    TelemetryRow r;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf", &r.epoch, &r.loss_dml, &r.loss_bfs, &r.loss_ual,
                    &r.h_within, &r.h_between) != 6)
      throw ParseError("malformed telemetry row", n);
    rows.push_back(r);
  }
  return rows;
}

namespace {


using DocSpan = std::span<const EncodedDocument* const>;

struct BatchForward {
  std::vector<EncoderTrace> t1, t2;
  std::vector<Vec> x1, x2;
  std::vector<DmlPairForward> dml;
  std::vector<Vec> lev1, lev2;
};

BatchForward forward_batch(const Model& model, DocSpan first, DocSpan second, bool keep_traces) {
  const std::size_t n = first.size();
  BatchForward f;
  f.t1.resize(n);
  f.t2.resize(n);
  f.x1.resize(n);
  f.x2.resize(n);
  f.dml.resize(n);
  f.lev1.resize(n);
  f.lev2.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    f.x1[k] = encode(*first[k], model.tables, model.encoder, keep_traces ? &f.t1[k] : nullptr);
    f.x2[k] = encode(*second[k], model.tables, model.encoder, keep_traces ? &f.t2[k] : nullptr);
    f.dml[k] = dml_forward(f.x1[k], f.x2[k], model.dml);
    f.lev1[k] = f.dml[k].y1;
    f.lev2[k] = f.dml[k].y2;
  }
  return f;
}

}  // namespace

BatchLosses batch_objective(const Model& model, DocSpan first, DocSpan second, std::span<const int> labels,
                         const TrainConfig& cfg, Model* grads) {
  const std::size_t n = labels.size();
  const double scale = 1.0 / static_cast<double>(n);
  const BatchForward f = forward_batch(model, first, second, grads != nullptr);
  BatchLosses L;
  for (std::size_t k = 0; k < n; ++k) {
    L.dml += scale * dml_pair_loss(f.dml[k], labels[k], cfg.dml_loss, cfg.margins, cfg.legacy_margins);
    if (!grads) continue;
    const auto dx = dml_backward(f.dml[k], f.x1[k], f.x2[k], labels[k], model.dml, grads->dml, scale, cfg.dml_loss,
                                 cfg.margins, cfg.legacy_margins, cfg.model.learn_kernel);
    encoder_backward(*first[k], model.tables, model.encoder, f.t1[k], dx.dx1, grads->tables, grads->encoder);
    encoder_backward(*second[k], model.tables, model.encoder, f.t2[k], dx.dx2, grads->tables, grads->encoder);
  }
  const auto bfs = bfs_batch(f.lev1, f.lev2, labels, model.bfs, grads ? &grads->bfs : nullptr);
  L.bfs = bfs.loss;
  const auto ual = ual_batch(f.lev1, f.lev2, bfs.probabilities, labels, model.ual, grads ? &grads->ual : nullptr);
  L.ual = ual.loss;
  return L;
}

namespace {

bool finite(const BatchLosses& L) { return std::isfinite(L.dml) && std::isfinite(L.bfs) && std::isfinite(L.ual); }

}  // namespace

BatchLosses train_step(Model& model, AdamState& adam, DocSpan first, DocSpan second, std::span<const int> labels,
                       const TrainConfig& cfg) {
  Model grads = zeros_like(model);
  const BatchLosses L = batch_objective(model, first, second, labels, cfg, &grads);
  if (!finite(L)) {
    std::ostringstream ss;
    ss << "non-finite loss (dml " << L.dml << ", bfs " << L.bfs << ", ual " << L.ual << ")";
    throw NumericError(ss.str());
  }
  optimizer_step(model, grads, adam, ParamGroup::EncoderDml, cfg.encoder_dml);
  optimizer_step(model, grads, adam, ParamGroup::Bfs, cfg.bfs);
  optimizer_step(model, grads, adam, ParamGroup::Ual, cfg.ual);
  return L;
}

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) { return derive_seed(seed, 0xe90c, epoch); }

struct EpochPairs {
  std::vector<DocumentPair> pairs;
  std::vector<const EncodedDocument*> first, second;
  std::vector<int> labels;
};

EpochPairs epoch_pairs(std::span<const EncodedEntry> docs, std::span<const DocumentMeta> metas,
                       const std::unordered_map<std::string, std::size_t>& index, const TrainConfig& cfg,
                       std::size_t epoch) {
  EpochPairs e;
  e.pairs = resample_epoch(metas, {cfg.delta_1, cfg.delta_2, cfg.delta_3, epoch_seed(cfg.seed, epoch)});
  for (const auto& p : e.pairs) {
    e.first.push_back(&docs[index.at(p.doc_1)].grid);
    e.second.push_back(&docs[index.at(p.doc_2)].grid);
    e.labels.push_back(p.a);
  }
  return e;
}

std::string batch_dump(std::span<const DocumentPair> pairs) {
  std::ostringstream ss;
  ss << "offending batch:";
  for (const auto& p : pairs) ss << " (" << p.doc_1 << ", " << p.doc_2 << ", a=" << p.a << ")";
  return ss.str();
}

}  // namespace

TrainResult train(std::span<const EncodedEntry> docs, const Vocabulary& vocab, const TrainConfig& cfg,
                  const EpochCallback& on_epoch, const std::optional<Checkpoint>& resume) {
  cfg.validate();
  if (docs.size() < 2) throw ValidationError("training needs at least two documents");
  std::vector<DocumentMeta> metas;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < docs.size(); ++k) {
    metas.push_back(docs[k].meta);
    if (!index.emplace(docs[k].meta.doc_id, k).second)
      throw ValidationError("duplicate document id " + docs[k].meta.doc_id);
  }

  TrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  std::size_t first_epoch = 1;
  if (resume) {
    if (resume->vocab_hash != vocab.hash()) throw ConsistencyError("checkpoint was trained with a different vocabulary");
    if (!(resume->config == cfg.model)) throw ConsistencyError("checkpoint model config differs from the requested one");
    if (!resume->adam) throw ConsistencyError("checkpoint carries no optimizer state; cannot resume");
    ckpt = *resume;
    first_epoch = resume->epoch + 1;
  } else {
    ckpt.config = cfg.model;
    ckpt.model = init_model(cfg.model, vocab.token_count(), vocab.char_count(), derive_seed(cfg.seed, 0x1417));
    ckpt.adam = init_adam(ckpt.model);
    ckpt.vocab_hash = vocab.hash();
  }
  ckpt.train_config = cfg.to_json();

  const auto run_epoch = [&](std::size_t epoch, bool update) {
    const EpochPairs e = epoch_pairs(docs, metas, index, cfg, update ? epoch : 1);
    TelemetryRow row;
    row.epoch = epoch;
    const std::size_t n = e.pairs.size();
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - start);
      const DocSpan first(e.first.data() + start, len), second(e.second.data() + start, len);
      const std::span<const int> labels(e.labels.data() + start, len);
      BatchLosses L;
      try {
        L = update ? train_step(ckpt.model, *ckpt.adam, first, second, labels, cfg)
                   : batch_objective(ckpt.model, first, second, labels, cfg, nullptr);
      } catch (const NumericError& err) {
        throw NumericError(std::string(err.what()) + " at epoch " + std::to_string(epoch) + "; " +
                           batch_dump(std::span(e.pairs).subspan(start, len)));
      }
      if (!finite(L))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + "; " +
                           batch_dump(std::span(e.pairs).subspan(start, len)));
      if (update) ++ckpt.step;
      const double w = static_cast<double>(len) / static_cast<double>(n);
      row.loss_dml += w * L.dml;
      row.loss_bfs += w * L.bfs;
      row.loss_ual += w * L.ual;
    }
    const auto h = gaussian_entropies(ckpt.model.bfs);
    row.h_within = h.within;
    row.h_between = h.between;
    return row;
  };

  if (!resume) {
    result.telemetry.push_back(run_epoch(0, false));
    if (on_epoch) on_epoch(ckpt, result.telemetry.back());
  }
  for (std::size_t epoch = first_epoch; epoch <= cfg.epochs; ++epoch) {
    const TelemetryRow row = run_epoch(epoch, true);
    ckpt.epoch = epoch;
    result.telemetry.push_back(row);
    if (on_epoch) on_epoch(ckpt, row);
  }
  return result;
}

std::vector<PairPrediction> evaluate_checkpoint(const Checkpoint& ckpt, std::uint64_t corpus_vocab_hash,
                                                std::span<const EncodedEntry> docs,
                                                std::span<const DocumentPair> pairs) {
  if (ckpt.vocab_hash != corpus_vocab_hash)
    throw ConsistencyError("vocabulary hash mismatch: checkpoint " + std::to_string(ckpt.vocab_hash) + ", corpus " +
                           std::to_string(corpus_vocab_hash));
  std::unordered_map<std::string, const EncodedDocument*> index;
  for (const auto& d : docs) index.emplace(d.meta.doc_id, &d.grid);
  std::unordered_map<std::string, Vec> levs;
  const auto lev = [&](const std::string& id) -> const Vec& {
    auto it = levs.find(id);
    if (it != levs.end()) return it->second;
    auto doc = index.find(id);
    if (doc == index.end()) throw ConsistencyError("pair refers to unknown document " + id);
    return levs.emplace(id, document_lev(*doc->second, ckpt.model)).first->second;
  };

  const TwoCovarianceModel bfs(ckpt.model.bfs);
  std::vector<PairPrediction> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const Vec& y1 = lev(p.doc_1);
    const Vec& y2 = lev(p.doc_2);
    PairPrediction r;
    r.pair = p;
    r.p_dml = kernel_posterior(y1, y2, ckpt.model.dml).probability;
    const double score = bfs.score(project_bfs(y1, ckpt.model.bfs), project_bfs(y2, ckpt.model.bfs));
    r.p_bfs = sigmoid(score + ckpt.model.bfs.prior_log_odds);
    r.p_ual = ual_forward(y1, y2, r.p_bfs, ckpt.model.ual).p_ual[1];
    out.push_back(r);
  }
  return out;
}

void write_predictions_jsonl(std::ostream& out, std::span<const PairPrediction> preds) {
  for (const auto& r : preds) {
    const nlohmann::json j = {{"doc_id_1", r.pair.doc_1}, {"doc_id_2", r.pair.doc_2}, {"a", r.pair.a},
                              {"f", r.pair.f},            {"p_dml", r.p_dml},         {"p_bfs", r.p_bfs},
                              {"p_ual", r.p_ual}};
    out << j.dump() << '\n';
  }
}

}  // namespace calav
