#include "calav/model.hpp"

#include <algorithm>

#include "calav/error.hpp"

namespace calav {

std::string_view group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::EncoderDml: return "encoder_dml";
    case ParamGroup::Bfs: return "bfs";
    case ParamGroup::Ual: return "ual";
  }
  return "?";
}

nlohmann::json ModelConfig::to_json() const {
  return {{"word_dim", encoder.word_dim},
          {"char_dim", encoder.char_dim},
          {"char_word_dim", encoder.char_word_dim},
          {"output_dim", encoder.output_dim},
          {"lev_dim", lev_dim},
          {"bfs_dim", bfs_dim},
          {"ual_dim", ual_dim},
          {"activation", std::string(activation_name(activation))},
          {"beta", beta},
          {"prior_log_odds", prior_log_odds},
          {"learn_kernel", learn_kernel}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.encoder.word_dim = j.at("word_dim").get<std::size_t>();
    c.encoder.char_dim = j.at("char_dim").get<std::size_t>();
    c.encoder.char_word_dim = j.at("char_word_dim").get<std::size_t>();
    c.encoder.output_dim = j.at("output_dim").get<std::size_t>();
    c.lev_dim = j.at("lev_dim").get<std::size_t>();
    c.bfs_dim = j.at("bfs_dim").get<std::size_t>();
    c.ual_dim = j.at("ual_dim").get<std::size_t>();
    c.activation = parse_activation(j.at("activation").get<std::string>());
    c.beta = j.at("beta").get<double>();
    c.prior_log_odds = j.at("prior_log_odds").get<double>();
    c.learn_kernel = j.at("learn_kernel").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
  return c;
}

Model init_model(const ModelConfig& cfg, std::size_t n_tokens, std::size_t n_chars, std::uint64_t seed) {
  if (cfg.beta < 0.0) throw ValidationError("beta must be non-negative");
  Model m;
  Rng tables_rng(derive_seed(seed, 1)), enc_rng(derive_seed(seed, 2)), dml_rng(derive_seed(seed, 3)),
      bfs_rng(derive_seed(seed, 4)), ual_rng(derive_seed(seed, 5));
  m.tables = init_tables(n_tokens, n_chars, cfg.encoder, tables_rng);
  m.encoder = init_encoder(cfg.encoder, enc_rng);
  m.dml = init_dml(cfg.encoder.output_dim, cfg.lev_dim, dml_rng);
  m.bfs = init_bfs(cfg.lev_dim, cfg.bfs_dim, cfg.activation, bfs_rng);
  m.bfs.prior_log_odds = cfg.prior_log_odds;
  m.ual = init_ual(cfg.lev_dim, cfg.ual_dim, cfg.beta, ual_rng);
  return m;
}

namespace {

void add(std::vector<ParamView>& out, std::string name, ParamGroup g, Mat& m) {
  out.push_back({std::move(name), g, m.data(), m.rows(), m.cols()});
}
void add(std::vector<ParamView>& out, std::string name, ParamGroup g, Vec& v) {
  out.push_back({std::move(name), g, v.data(), v.rows(), 1});
}
void add(std::vector<ParamView>& out, std::string name, ParamGroup g, double& s) {
  out.push_back({std::move(name), g, &s, 1, 1});
}

}  // namespace

std::vector<ParamView> parameters(Model& m) {
  std::vector<ParamView> out;
  const auto E = ParamGroup::EncoderDml, B = ParamGroup::Bfs, U = ParamGroup::Ual;
  add(out, "tables.word", E, m.tables.word);
  add(out, "tables.char", E, m.tables.chr);
  add(out, "encoder.char_proj", E, m.encoder.char_proj);
  add(out, "encoder.char_proj_bias", E, m.encoder.char_proj_bias);
  add(out, "encoder.char_attn", E, m.encoder.char_attn);
  add(out, "encoder.token_proj", E, m.encoder.token_proj);
  add(out, "encoder.token_bias", E, m.encoder.token_bias);
  add(out, "encoder.token_attn", E, m.encoder.token_attn);
  add(out, "encoder.sentence_attn", E, m.encoder.sentence_attn);
  add(out, "dml.weight", E, m.dml.weight);
  add(out, "dml.bias", E, m.dml.bias);
  add(out, "dml.log_gamma", E, m.dml.log_gamma);
  add(out, "dml.log_alpha", E, m.dml.log_alpha);
  add(out, "bfs.weight", B, m.bfs.weight);
  add(out, "bfs.bias", B, m.bfs.bias);
  add(out, "bfs.mean", B, m.bfs.mean);
  add(out, "bfs.within_lower", B, m.bfs.within_lower);
  add(out, "bfs.within_log_diag", B, m.bfs.within_log_diag);
  add(out, "bfs.between_lower", B, m.bfs.between_lower);
  add(out, "bfs.between_log_diag", B, m.bfs.between_log_diag);
  add(out, "ual.weight", U, m.ual.weight);
  add(out, "ual.bias", U, m.ual.bias);
  add(out, "ual.conf_weight", U, m.ual.conf_weight);
  add(out, "ual.conf_bias", U, m.ual.conf_bias);
  return out;
}

Model zeros_like(const Model& m) {
  Model z = m;
  for (auto& p : parameters(z)) std::fill(p.data, p.data + p.size(), 0.0);
  return z;
}

Vec document_lev(const EncodedDocument& doc, const Model& m) {
  return project_lev(encode(doc, m.tables, m.encoder), m.dml);
}

}  // namespace calav
