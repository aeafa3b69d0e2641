#pragma once

// Generated corpora for benchmarks and sampler statistics.

#include <cstdint>
#include <vector>

#include "calav/data.hpp"

namespace calav {

/// Authors write with their own preferred tokens mixed with the topic tokens
/// of the fandom each document belongs to and shared background tokens.
struct StyleCorpusConfig {
  std::size_t authors = 200;
  std::size_t fandoms = 2;
  std::size_t docs_per_fandom = 2;  // per author and fandom
  std::size_t doc_tokens = 200;
  std::size_t style_vocab = 200;
  std::size_t style_tokens_per_author = 4;
  std::size_t topic_vocab = 60;  // per fandom
  std::size_t background_vocab = 80;
  double style_weight = 0.7;
  double topic_weight = 0.3;  // the remainder draws background tokens
  std::uint64_t seed = 0;
};

std::vector<Document> synthetic_style_corpus(const StyleCorpusConfig& cfg);

/// Document metadata only, with a truncated power-law number of documents
/// per author whose mean is `mean_docs_per_author`.
struct PairingCorpusConfig {
  std::size_t docs = 10000;
  std::size_t fandoms = 40;
  std::size_t max_docs_per_author = 200;
  double mean_docs_per_author = 303142.0 / 200732.0;
  std::uint64_t seed = 0;
};

std::vector<DocumentMeta> synthetic_pairing_corpus(const PairingCorpusConfig& cfg);

/// Exponent s of p(k) ~ k^-s on 1..k_max with the requested mean.
double power_law_exponent(double mean, std::size_t k_max);

}  // namespace calav
