#pragma once

// Neural feature extraction: maps an encoded document to a fixed-length
// embedding x. The reference encoder is a two-tier attention-pooling network
// (characters -> word, tokens -> sentence, sentences -> document).

#include <algorithm>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "calav/data.hpp"
#include "calav/rng.hpp"

namespace calav {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct EncoderDims {
  std::size_t word_dim = 32;       // D_w
  std::size_t char_dim = 8;        // D_c
  std::size_t char_word_dim = 30;  // D_r
  std::size_t output_dim = 64;     // D_x

  bool operator==(const EncoderDims&) const = default;
};

/// Lookup tables; row id holds the vector for symbol id. Row
/// Vocabulary::kPad is zero and never updated.
struct EmbeddingTables {
  Mat word;  // V_tok x D_w
  Mat chr;   // V_chr x D_c
};

struct EncoderParams {
  Mat char_proj;       // D_r x D_c
  Vec char_proj_bias;  // D_r
  Vec char_attn;       // D_c, scores characters within a token
  Mat token_proj;      // D_x x (D_w + D_r)
  Vec token_bias;      // D_x
  Vec token_attn;      // D_x, scores tokens within a sentence unit
  Vec sentence_attn;   // D_x, scores sentence units within a document
};

EmbeddingTables init_tables(std::size_t n_tokens, std::size_t n_chars, const EncoderDims& dims, Rng& rng);
EncoderParams init_encoder(const EncoderDims& dims, Rng& rng);

/// Replaces rows of the word table with vectors from a whitespace text file
/// ("token v1 ... vD" per line). Unknown tokens are skipped; returns the
/// number of rows loaded.
std::size_t load_word_vectors(const std::filesystem::path& path, const Vocabulary& vocab,
                              EmbeddingTables& tables);

/// Word and character vectors of one document.
struct EmbeddedDocument {
  std::vector<Mat> words;  // per sentence: D_w x T_w
  std::vector<Mat> chars;  // per (sentence, token): D_c x T_c, index s * T_w + w
};

/// Plain lookup. Throws IndexError for ids outside the tables.
EmbeddedDocument embed(const EncodedDocument& doc, const EmbeddingTables& tables);

/// Intermediate values kept from the forward pass.
struct EncoderTrace {
  struct Token {
    bool masked = true;
    Vec char_weights;  // over valid character slots
    std::vector<int> char_ids;
    Vec pooled;        // D_c
    Vec input;         // [word; char-level word], D_w + D_r
    Vec hidden;        // D_x
  };
  struct Sentence {
    bool masked = true;
    std::vector<Token> tokens;
    Vec token_weights;  // over T_w, zero at masked positions
    Vec vec;            // D_x
  };
  std::vector<Sentence> sentences;
  Vec sentence_weights;  // over units, zero at masked units
  Vec output;
};

/// Forward pass. Fills `trace` when given.
Vec encode(const EncodedDocument& doc, const EmbeddingTables& tables, const EncoderParams& params,
           EncoderTrace* trace = nullptr);

/// Accumulates d(loss)/d(parameters) into `grad_params` and `grad_tables`
/// given d(loss)/dx. The PAD rows of the table gradients stay zero.
void encoder_backward(const EncodedDocument& doc, const EmbeddingTables& tables, const EncoderParams& params,
                      const EncoderTrace& trace, const Vec& grad_x, EmbeddingTables& grad_tables,
                      EncoderParams& grad_params);

}  // namespace calav
