#include "calav/encoder.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "calav/error.hpp"

namespace calav {

namespace {

Mat uniform_matrix(std::size_t rows, std::size_t cols, double limit, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-limit, limit);
  return m;
}

Mat glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  return uniform_matrix(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)), rng);
}

// Softmax restricted to positions with mask[i] true. Masked entries get 0;
// an all-masked input yields all zeros.
Vec masked_softmax(const Vec& scores, const std::vector<bool>& mask) {
  Vec w = Vec::Zero(scores.size());
  double hi = -INFINITY;
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    if (mask[i]) hi = std::max(hi, scores[i]);
  if (hi == -INFINITY) return w;
  double z = 0.0;
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    if (mask[i]) z += (w[i] = std::exp(scores[i] - hi));
  return w / z;
}

}  // namespace

EmbeddingTables init_tables(std::size_t n_tokens, std::size_t n_chars, const EncoderDims& dims, Rng& rng) {
  EmbeddingTables t{uniform_matrix(n_tokens, dims.word_dim, 0.1, rng), uniform_matrix(n_chars, dims.char_dim, 0.1, rng)};
  t.word.row(Vocabulary::kPad).setZero();
  t.chr.row(Vocabulary::kPad).setZero();
  return t;
}

EncoderParams init_encoder(const EncoderDims& d, Rng& rng) {
  EncoderParams p;
  p.char_proj = glorot(d.char_word_dim, d.char_dim, rng);
  p.char_proj_bias = Vec::Zero(d.char_word_dim);
  p.char_attn = glorot(d.char_dim, 1, rng);
  p.token_proj = glorot(d.output_dim, d.word_dim + d.char_word_dim, rng);
  p.token_bias = Vec::Zero(d.output_dim);
  p.token_attn = glorot(d.output_dim, 1, rng);
  p.sentence_attn = glorot(d.output_dim, 1, rng);
  return p;
}

std::size_t load_word_vectors(const std::filesystem::path& path, const Vocabulary& vocab,
                              EmbeddingTables& tables) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open embedding file " + path.string());
  std::size_t loaded = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<double> values;
    double v;
    while (ss >> v) values.push_back(v);
    if (values.size() != static_cast<std::size_t>(tables.word.cols()))
      throw ParseError("expected " + std::to_string(tables.word.cols()) + " values for '" + token + "'", line_no);
    const int id = vocab.token_id(token);
    if (id == Vocabulary::kUnk && token != Vocabulary::kUnkSymbol) continue;
    if (id == Vocabulary::kPad) continue;
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (!std::isfinite(values[k])) throw ParseError("non-finite embedding value", line_no);
      tables.word(id, static_cast<Eigen::Index>(k)) = values[k];
    }
    ++loaded;
  }
  return loaded;
}

EmbeddedDocument embed(const EncodedDocument& doc, const EmbeddingTables& tables) {
  EmbeddedDocument out;
  const auto T_w = static_cast<Eigen::Index>(doc.width);
  const auto T_c = static_cast<Eigen::Index>(doc.chars_per_token);
  for (std::size_t s = 0; s < doc.n_sentences; ++s) {
    Mat words(tables.word.cols(), T_w);
    for (Eigen::Index w = 0; w < T_w; ++w) {
      const int id = doc.token(s, w);
      if (id < 0 || id >= tables.word.rows()) throw IndexError("token id " + std::to_string(id) + " out of range");
      words.col(w) = tables.word.row(id).transpose();
      Mat chars(tables.chr.cols(), T_c);
      for (Eigen::Index c = 0; c < T_c; ++c) {
        const int cid = doc.ch(s, w, c);
        if (cid < 0 || cid >= tables.chr.rows()) throw IndexError("char id " + std::to_string(cid) + " out of range");
        chars.col(c) = tables.chr.row(cid).transpose();
      }
      out.chars.push_back(std::move(chars));
    }
    out.words.push_back(std::move(words));
  }
  return out;
}

Vec encode(const EncodedDocument& doc, const EmbeddingTables& tables, const EncoderParams& params,
           EncoderTrace* trace) {
  EncoderTrace local;
  EncoderTrace& tr = trace ? *trace : local;
  tr.sentences.assign(doc.n_sentences, {});
  const std::size_t D_x = static_cast<std::size_t>(params.token_bias.size());
  const auto D_w = tables.word.cols();

  std::vector<bool> sentence_mask(doc.n_sentences, false);
  Vec sentence_scores = Vec::Zero(static_cast<Eigen::Index>(doc.n_sentences));
  for (std::size_t s = 0; s < doc.n_sentences; ++s) {
    auto& sent = tr.sentences[s];
    sent.tokens.resize(doc.width);
    std::vector<bool> token_mask(doc.width, false);
    Vec token_scores = Vec::Zero(static_cast<Eigen::Index>(doc.width));
    for (std::size_t w = 0; w < doc.width; ++w) {
      const int id = doc.token(s, w);
      if (id == Vocabulary::kPad) continue;
      if (id < 0 || id >= tables.word.rows()) throw IndexError("token id " + std::to_string(id) + " out of range");
      auto& tok = sent.tokens[w];
      tok.masked = false;
      token_mask[w] = true;

      // Characters -> word vector.
      tok.char_ids.clear();
      for (std::size_t c = 0; c < doc.chars_per_token; ++c) {
        const int cid = doc.ch(s, w, c);
        if (cid == Vocabulary::kPad) continue;
        if (cid < 0 || cid >= tables.chr.rows()) throw IndexError("char id " + std::to_string(cid) + " out of range");
        tok.char_ids.push_back(cid);
      }
      const auto n_c = static_cast<Eigen::Index>(tok.char_ids.size());
      tok.pooled = Vec::Zero(tables.chr.cols());
      tok.char_weights = Vec::Zero(n_c);
      if (n_c > 0) {
        Vec scores(n_c);
        for (Eigen::Index k = 0; k < n_c; ++k) scores[k] = tables.chr.row(tok.char_ids[k]).dot(params.char_attn);
        tok.char_weights = masked_softmax(scores, std::vector<bool>(n_c, true));
        for (Eigen::Index k = 0; k < n_c; ++k)
          tok.pooled += tok.char_weights[k] * tables.chr.row(tok.char_ids[k]).transpose();
      }
      tok.input.resize(D_w + params.char_proj.rows());
      tok.input.head(D_w) = tables.word.row(id).transpose();
      tok.input.tail(params.char_proj.rows()) = params.char_proj * tok.pooled + params.char_proj_bias;
      tok.hidden = (params.token_proj * tok.input + params.token_bias).array().tanh().matrix();
      token_scores[static_cast<Eigen::Index>(w)] = tok.hidden.dot(params.token_attn);
    }
    sent.token_weights = masked_softmax(token_scores, token_mask);
    sent.vec = Vec::Zero(static_cast<Eigen::Index>(D_x));
    for (std::size_t w = 0; w < doc.width; ++w)
      if (token_mask[w]) sent.vec += sent.token_weights[static_cast<Eigen::Index>(w)] * sent.tokens[w].hidden;
    sent.masked = std::none_of(token_mask.begin(), token_mask.end(), [](bool b) { return b; });
    sentence_mask[s] = !sent.masked;
    if (!sent.masked) sentence_scores[static_cast<Eigen::Index>(s)] = sent.vec.dot(params.sentence_attn);
  }
  tr.sentence_weights = masked_softmax(sentence_scores, sentence_mask);
  tr.output = Vec::Zero(static_cast<Eigen::Index>(D_x));
  for (std::size_t s = 0; s < doc.n_sentences; ++s)
    if (sentence_mask[s]) tr.output += tr.sentence_weights[static_cast<Eigen::Index>(s)] * tr.sentences[s].vec;
  return tr.output;
}

void encoder_backward(const EncodedDocument& doc, const EmbeddingTables& tables, const EncoderParams& params,
                      const EncoderTrace& trace, const Vec& grad_x, EmbeddingTables& grad_tables,
                      EncoderParams& grad_params) {
  const auto D_w = tables.word.cols();
  const auto D_r = params.char_proj.rows();
  const double gx_dot_x = grad_x.dot(trace.output);
  for (std::size_t s = 0; s < doc.n_sentences; ++s) {
    const auto& sent = trace.sentences[s];
    if (sent.masked) continue;
    const double b = trace.sentence_weights[static_cast<Eigen::Index>(s)];
    // x = sum_s b_s v_s with b = softmax(sentence_attn . v_s)
    const double dscore = b * (grad_x.dot(sent.vec) - gx_dot_x);
    grad_params.sentence_attn += dscore * sent.vec;
    const Vec grad_sent = b * grad_x + dscore * params.sentence_attn;

    const double gs_dot_v = grad_sent.dot(sent.vec);
    for (std::size_t w = 0; w < doc.width; ++w) {
      const auto& tok = sent.tokens[w];
      if (tok.masked) continue;
      const double a = sent.token_weights[static_cast<Eigen::Index>(w)];
      const double tscore = a * (grad_sent.dot(tok.hidden) - gs_dot_v);
      grad_params.token_attn += tscore * tok.hidden;
      const Vec grad_hidden = a * grad_sent + tscore * params.token_attn;

      const Vec dz = grad_hidden.array() * (1.0 - tok.hidden.array().square());
      grad_params.token_proj.noalias() += dz * tok.input.transpose();
      grad_params.token_bias += dz;
      const Vec grad_input = params.token_proj.transpose() * dz;

      const int id = doc.token(s, w);
      grad_tables.word.row(id) += grad_input.head(D_w).transpose();

      const Vec grad_r = grad_input.tail(D_r);
      grad_params.char_proj.noalias() += grad_r * tok.pooled.transpose();
      grad_params.char_proj_bias += grad_r;
      if (tok.char_ids.empty()) continue;
      const Vec grad_pooled = params.char_proj.transpose() * grad_r;
      const double gp_dot_p = grad_pooled.dot(tok.pooled);
      for (std::size_t k = 0; k < tok.char_ids.size(); ++k) {
        const auto row = tables.chr.row(tok.char_ids[k]).transpose();
        const double alpha = tok.char_weights[static_cast<Eigen::Index>(k)];
        const double cscore = alpha * (grad_pooled.dot(row) - gp_dot_p);
        grad_params.char_attn += cscore * row;
        grad_tables.chr.row(tok.char_ids[k]) += (alpha * grad_pooled + cscore * params.char_attn).transpose();
      }
    }
  }
  grad_tables.word.row(Vocabulary::kPad).setZero();
  grad_tables.chr.row(Vocabulary::kPad).setZero();
}

}  // namespace calav
