#pragma once

// Corpus ingestion, disjoint splitting, tokenisation, sliding-window
// segmentation, vocabulary pruning and numeric encoding.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace calav {

/// Identity of a document without its text. This is all pair sampling needs.
struct DocumentMeta {
  std::string doc_id;
  std::string author_id;
  std::string fandom_id;
};

struct Document {
  std::string doc_id;
  std::string author_id;
  std::string fandom_id;
  std::string text;

  DocumentMeta meta() const { return {doc_id, author_id, fandom_id}; }
};

struct CorpusSplit {
  std::vector<Document> train;
  std::vector<Document> test;
};

enum class CorpusFormat { DocsJsonl, PanJsonl };

CorpusFormat parse_corpus_format(std::string_view tag);

/// Reads a flat docs-jsonl stream. Exact-duplicate texts are dropped (first
/// occurrence wins); a repeated doc_id is a ValidationError.
std::vector<Document> read_docs_jsonl(std::istream& in);

/// Reads a PAN pairs file plus its truth file. Each pair contributes two
/// documents named "<id>_0" and "<id>_1".
std::vector<Document> read_pan_jsonl(std::istream& pairs, std::istream& truth);

/// File-level entry point. `truth` is required for PanJsonl and ignored
/// otherwise.
std::vector<Document> ingest_corpus(const std::filesystem::path& path, CorpusFormat format,
                                    const std::filesystem::path& truth = {});

void write_docs_jsonl(std::ostream& out, std::span<const Document> docs);

/// Partitions fandoms into train/test by `test_fandom_fraction`, then removes
/// from the test side every document whose author also writes in train.
CorpusSplit split_disjoint(std::span<const Document> docs, double test_fandom_fraction,
                           std::uint64_t seed);

/// Partitions authors (fandoms are shared). Used for held-out-author
/// benchmarks where the fandom count is too small to split.
CorpusSplit split_by_author(std::span<const Document> docs, double test_author_fraction,
                            std::uint64_t seed);

struct SplitStats {
  std::size_t docs = 0, authors = 0, fandoms = 0;
};
SplitStats split_stats(std::span<const Document> docs);

// ---------------------------------------------------------------- text

/// Trims surrounding Unicode whitespace. Throws ValidationError on invalid UTF-8.
std::string normalize_text(std::string_view text);

/// Splits a UTF-8 string into code points, each returned as its UTF-8 bytes.
std::vector<std::string> utf8_chars(std::string_view text);

/// Whitespace split, then leading and trailing punctuation peeled off into
/// single-character tokens. Case is preserved.
std::vector<std::string> tokenize(std::string_view text);

// ---------------------------------------------------------------- windows

struct WindowParams {
  std::size_t width = 30;       // tokens per sentence unit
  std::size_t hop = 26;         // shift between consecutive units
  std::size_t max_units = 210;  // cap on units per document
  std::size_t chars_per_token = 12;
};

/// Number of sentence units for a document of n tokens:
/// ceil((n - width + hop) / hop) capped at max_units, or 1 when n < width.
std::size_t window_count(std::size_t n_tokens, std::size_t width, std::size_t hop,
                         std::size_t max_units);

/// Cuts `tokens` into overlapping units of exactly `width` items; only the
/// last unit is padded with `pad`. An empty input yields one all-pad unit.
template <class T>
std::vector<std::vector<T>> sliding_window(std::span<const T> tokens, std::size_t width,
                                           std::size_t hop, std::size_t max_units,
                                           const T& pad);

// ---------------------------------------------------------------- vocabulary

class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kPad = 1;
  static inline const std::string kUnkSymbol = "<UNK>";
  static inline const std::string kPadSymbol = "<PAD>";

  Vocabulary();
  Vocabulary(std::vector<std::string> tokens, std::vector<std::string> chars);

  int token_id(std::string_view token) const;
  int char_id(std::string_view ch) const;

  std::size_t token_count() const { return tokens_.size(); }
  std::size_t char_count() const { return chars_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::string>& chars() const { return chars_; }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  /// FNV-1a over the serialised form; stamped into checkpoints.
  std::uint64_t hash() const;

 private:
  std::vector<std::string> tokens_;
  std::vector<std::string> chars_;
  std::unordered_map<std::string, int> token_index_;
  std::unordered_map<std::string, int> char_index_;
};

/// Keeps the `max_tokens` most frequent tokens and `max_chars` most frequent
/// characters of the training documents; ties go to the lexicographically
/// smaller symbol.
Vocabulary build_vocabulary(std::span<const Document> train_docs, std::size_t max_tokens = 5000,
                            std::size_t max_chars = 300);

// ---------------------------------------------------------------- encoding

/// Token grid (n_sentences x width) and character grid
/// (n_sentences x width x chars_per_token), row-major.
struct EncodedDocument {
  std::size_t n_sentences = 0;
  std::size_t width = 0;
  std::size_t chars_per_token = 0;
  std::vector<int> tokens;
  std::vector<int> chars;

  int token(std::size_t s, std::size_t w) const { return tokens[s * width + w]; }
  int ch(std::size_t s, std::size_t w, std::size_t c) const {
    return chars[(s * width + w) * chars_per_token + c];
  }
  bool operator==(const EncodedDocument&) const = default;
};

EncodedDocument encode_document(const Document& doc, const Vocabulary& vocab,
                                const WindowParams& params = {});

/// A document as stored after preprocessing: identity plus encoded grids.
struct EncodedEntry {
  DocumentMeta meta;
  EncodedDocument grid;
};

void write_encoded_jsonl(std::ostream& out, std::span<const EncodedEntry> entries);
std::vector<EncodedEntry> read_encoded_jsonl(std::istream& in);

// ---------------------------------------------------------------- template impl

template <class T>
std::vector<std::vector<T>> sliding_window(std::span<const T> tokens, std::size_t width,
                                           std::size_t hop, std::size_t max_units,
                                           const T& pad) {
  const std::size_t units = window_count(tokens.size(), width, hop, max_units);
  std::vector<std::vector<T>> out;
  out.reserve(units);
  for (std::size_t u = 0; u < units; ++u) {
    std::vector<T> unit(width, pad);
    const std::size_t start = u * hop;
    for (std::size_t k = 0; k < width && start + k < tokens.size(); ++k) unit[k] = tokens[start + k];
    out.push_back(std::move(unit));
  }
  return out;
}

}  // namespace calav

namespace calav {

/// Vocabulary from the training side and both sides encoded with it.
struct PreparedCorpus {
  Vocabulary vocab;
  std::vector<EncodedEntry> train;
  std::vector<EncodedEntry> test;
};

PreparedCorpus prepare_split(const CorpusSplit& split, std::size_t max_tokens = 5000, std::size_t max_chars = 300,
                             const WindowParams& window = {});

}  // namespace calav
