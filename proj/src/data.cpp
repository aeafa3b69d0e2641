#include "calav/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <unordered_set>

#include "calav/error.hpp"
#include "calav/rng.hpp"

namespace calav {

using nlohmann::json;

CorpusFormat parse_corpus_format(std::string_view tag) {
  if (tag == "docs-jsonl") return CorpusFormat::DocsJsonl;
  if (tag == "pan-jsonl") return CorpusFormat::PanJsonl;
  throw ValidationError("unknown corpus format '" + std::string(tag) +
                        "' (expected docs-jsonl or pan-jsonl)");
}

namespace {

std::string require_string(const json& rec, const char* key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end()) throw ParseError(std::string("missing field '") + key + "'", line);
  if (!it->is_string()) throw ParseError(std::string("field '") + key + "' is not a string", line);
  return it->get<std::string>();
}

json parse_line(const std::string& text, std::size_t line) {
  try {
    json rec = json::parse(text);
    if (!rec.is_object()) throw ParseError("record is not a JSON object", line);
    return rec;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), line);
  }
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

// Applies the dedup rule shared by both corpus formats.
std::vector<Document> finalize(std::vector<Document> raw, const std::vector<std::size_t>& lines) {
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!ids.insert(raw[i].doc_id).second)
      throw ValidationError("duplicate doc_id '" + raw[i].doc_id + "' at line " +
                            std::to_string(lines[i]));
  }
  std::unordered_set<std::string> texts;
  std::vector<Document> out;
  out.reserve(raw.size());
  for (auto& d : raw) {
    if (texts.insert(d.text).second) out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

std::vector<Document> read_docs_jsonl(std::istream& in) {
  std::vector<Document> raw;
  std::vector<std::size_t> lines;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (blank(text)) continue;
    json rec = parse_line(text, line);
    Document d{require_string(rec, "doc_id", line), require_string(rec, "author_id", line),
               require_string(rec, "fandom_id", line), {}};
    try {
      d.text = normalize_text(require_string(rec, "text", line));
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line);
    }
    if (d.text.empty()) throw ParseError("empty text after normalization", line);
    raw.push_back(std::move(d));
    lines.push_back(line);
  }
  return finalize(std::move(raw), lines);
}

std::vector<Document> read_pan_jsonl(std::istream& pairs, std::istream& truth) {
  struct Truth {
    bool same;
    std::string a0, a1;
  };
  std::map<std::string, Truth> truths;
  std::string text;
  std::size_t line = 0;
  while (std::getline(truth, text)) {
    ++line;
    if (blank(text)) continue;
    json rec = parse_line(text, line);
    auto id = require_string(rec, "id", line);
    auto same = rec.find("same");
    auto authors = rec.find("authors");
    if (same == rec.end() || !same->is_boolean()) throw ParseError("truth 'same' missing or not bool", line);
    if (authors == rec.end() || !authors->is_array() || authors->size() != 2 ||
        !(*authors)[0].is_string() || !(*authors)[1].is_string())
      throw ParseError("truth 'authors' must be two strings", line);
    truths[id] = {same->get<bool>(), (*authors)[0].get<std::string>(), (*authors)[1].get<std::string>()};
  }

  std::vector<Document> raw;
  std::vector<std::size_t> lines;
  line = 0;
  while (std::getline(pairs, text)) {
    ++line;
    if (blank(text)) continue;
    json rec = parse_line(text, line);
    auto id = require_string(rec, "id", line);
    auto fandoms = rec.find("fandoms");
    auto pair = rec.find("pair");
    if (fandoms == rec.end() || !fandoms->is_array() || fandoms->size() != 2)
      throw ParseError("'fandoms' must be an array of two strings", line);
    if (pair == rec.end() || !pair->is_array() || pair->size() != 2)
      throw ParseError("'pair' must be an array of two strings", line);
    auto t = truths.find(id);
    if (t == truths.end()) throw ParseError("no truth record for pair '" + id + "'", line);
    const std::string authors[2] = {t->second.a0, t->second.a1};
    for (int k = 0; k < 2; ++k) {
      if (!(*fandoms)[k].is_string() || !(*pair)[k].is_string())
        throw ParseError("'fandoms'/'pair' entries must be strings", line);
      Document d{id + "_" + std::to_string(k), authors[k], (*fandoms)[k].get<std::string>(), {}};
      try {
        d.text = normalize_text((*pair)[k].get<std::string>());
      } catch (const ValidationError& e) {
        throw ParseError(e.what(), line);
      }
      if (d.text.empty()) throw ParseError("empty text after normalization", line);
      raw.push_back(std::move(d));
      lines.push_back(line);
    }
  }
  return finalize(std::move(raw), lines);
}

std::vector<Document> ingest_corpus(const std::filesystem::path& path, CorpusFormat format,
                                    const std::filesystem::path& truth) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open corpus file " + path.string());
  if (format == CorpusFormat::DocsJsonl) return read_docs_jsonl(in);
  if (truth.empty()) throw ValidationError("pan-jsonl corpus requires a truth file");
  std::ifstream tin(truth);
  if (!tin) throw ValidationError("cannot open truth file " + truth.string());
  return read_pan_jsonl(in, tin);
}

void write_docs_jsonl(std::ostream& out, std::span<const Document> docs) {
  for (const auto& d : docs) {
    json rec = {{"doc_id", d.doc_id}, {"author_id", d.author_id}, {"fandom_id", d.fandom_id},
                {"text", d.text}};
    out << rec.dump() << '\n';
  }
}

// ------------------------------------------------------------------ splitting

CorpusSplit split_disjoint(std::span<const Document> docs, double test_fandom_fraction,
                           std::uint64_t seed) {
  if (docs.empty()) throw SplitError("cannot split an empty corpus");
  if (!(test_fandom_fraction > 0.0 && test_fandom_fraction < 1.0))
    throw SplitError("test fandom fraction must lie in (0, 1)");

  std::set<std::string> fandom_set;
  for (const auto& d : docs) fandom_set.insert(d.fandom_id);
  std::vector<std::string> fandoms(fandom_set.begin(), fandom_set.end());
  Rng rng(seed);
  rng.shuffle(std::span(fandoms));

  auto n_test = static_cast<std::size_t>(test_fandom_fraction * static_cast<double>(fandoms.size()) + 0.5);
  n_test = std::clamp<std::size_t>(n_test, 1, fandoms.size() - (fandoms.size() > 1 ? 1 : 0));
  std::unordered_set<std::string> test_fandoms(fandoms.begin(), fandoms.begin() + n_test);

  CorpusSplit split;
  std::unordered_set<std::string> train_authors;
  for (const auto& d : docs) {
    if (!test_fandoms.contains(d.fandom_id)) {
      split.train.push_back(d);
      train_authors.insert(d.author_id);
    }
  }
  for (const auto& d : docs) {
    if (test_fandoms.contains(d.fandom_id) && !train_authors.contains(d.author_id)) split.test.push_back(d);
  }
  if (split.train.empty() || split.test.empty())
    throw SplitError("split leaves an empty side (train " + std::to_string(split.train.size()) +
                     ", test " + std::to_string(split.test.size()) + ")");
  return split;
}

CorpusSplit split_by_author(std::span<const Document> docs, double test_author_fraction,
                            std::uint64_t seed) {
  if (docs.empty()) throw SplitError("cannot split an empty corpus");
  if (!(test_author_fraction > 0.0 && test_author_fraction < 1.0))
    throw SplitError("test author fraction must lie in (0, 1)");
  std::set<std::string> author_set;
  for (const auto& d : docs) author_set.insert(d.author_id);
  std::vector<std::string> authors(author_set.begin(), author_set.end());
  Rng rng(seed);
  rng.shuffle(std::span(authors));
  auto n_test = static_cast<std::size_t>(test_author_fraction * static_cast<double>(authors.size()) + 0.5);
  std::unordered_set<std::string> test_authors(authors.begin(),
                                               authors.begin() + std::min(n_test, authors.size()));
  CorpusSplit split;
  for (const auto& d : docs) (test_authors.contains(d.author_id) ? split.test : split.train).push_back(d);
  if (split.train.empty() || split.test.empty()) throw SplitError("split leaves an empty side");
  return split;
}

SplitStats split_stats(std::span<const Document> docs) {
  std::unordered_set<std::string> authors, fandoms;
  for (const auto& d : docs) {
    authors.insert(d.author_id);
    fandoms.insert(d.fandom_id);
  }
  return {docs.size(), authors.size(), fandoms.size()};
}

// ------------------------------------------------------------------ text

namespace {

// Decodes one code point starting at text[i]; advances i. Throws on malformed input.
char32_t decode_utf8(std::string_view text, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(text[i]);
  int len;
  char32_t cp;
  if (b0 < 0x80) {
    ++i;
    return b0;
  } else if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    throw ValidationError("invalid UTF-8 lead byte at offset " + std::to_string(i));
  }
  if (i + len > text.size()) throw ValidationError("truncated UTF-8 sequence");
  for (int k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(text[i + k]);
    if ((b & 0xC0) != 0x80) throw ValidationError("invalid UTF-8 continuation byte");
    cp = (cp << 6) | (b & 0x3F);
  }
  i += len;
  return cp;
}

bool is_space(char32_t c) {
  if (c == ' ' || (c >= 0x09 && c <= 0x0D)) return true;
  switch (c) {
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

bool is_punct(char32_t c) {
  if (c < 0x80) return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) ||
                       (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E);
  switch (c) {
    case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
    case 0x37E: case 0x387: case 0x55D: case 0x589: case 0x5BE: case 0x60C: case 0x61F:
      return true;
    default:
      break;
  }
  return (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) ||
         (c >= 0x3001 && c <= 0x3003) || (c >= 0x3008 && c <= 0x3011) ||
         (c >= 0x3014 && c <= 0x301F) || (c >= 0xFE10 && c <= 0xFE19) ||
         (c >= 0xFE30 && c <= 0xFE4F) || (c >= 0xFF01 && c <= 0xFF0F) ||
         (c >= 0xFF1A && c <= 0xFF20) || (c >= 0xFF3B && c <= 0xFF3D) ||
         (c >= 0xFF5B && c <= 0xFF65);
}

struct CodePoint {
  char32_t value;
  std::size_t begin, end;  // byte range
};

std::vector<CodePoint> code_points(std::string_view text) {
  std::vector<CodePoint> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t begin = i;
    char32_t c = decode_utf8(text, i);
    out.push_back({c, begin, i});
  }
  return out;
}

}  // namespace

std::string normalize_text(std::string_view text) {
  auto cps = code_points(text);
  std::size_t lo = 0, hi = cps.size();
  while (lo < hi && is_space(cps[lo].value)) ++lo;
  while (hi > lo && is_space(cps[hi - 1].value)) --hi;
  if (lo == hi) return {};
  return std::string(text.substr(cps[lo].begin, cps[hi - 1].end - cps[lo].begin));
}

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& cp : code_points(text)) out.emplace_back(text.substr(cp.begin, cp.end - cp.begin));
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  auto cps = code_points(text);
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && is_space(cps[i].value)) ++i;
    std::size_t j = i;
    while (j < cps.size() && !is_space(cps[j].value)) ++j;
    if (i == j) break;
    // [i, j) is one whitespace-delimited chunk.
    std::size_t lo = i, hi = j;
    while (lo < hi && is_punct(cps[lo].value)) ++lo;
    while (hi > lo && is_punct(cps[hi - 1].value)) --hi;
    auto piece = [&](std::size_t a, std::size_t b) {
      return std::string(text.substr(cps[a].begin, cps[b - 1].end - cps[a].begin));
    };
    for (std::size_t k = i; k < lo; ++k) tokens.push_back(piece(k, k + 1));
    if (lo < hi) tokens.push_back(piece(lo, hi));
    for (std::size_t k = hi; k < j; ++k) tokens.push_back(piece(k, k + 1));
    i = j;
  }
  return tokens;
}

// ------------------------------------------------------------------ windows

std::size_t window_count(std::size_t n_tokens, std::size_t width, std::size_t hop,
                         std::size_t max_units) {
  if (hop == 0 || hop > width) throw ValidationError("window hop must satisfy 0 < hop <= width");
  if (max_units == 0) throw ValidationError("max_units must be at least 1");
  if (n_tokens < width) return 1;
  const std::size_t units = (n_tokens - width + hop + hop - 1) / hop;
  return std::min(units, max_units);
}

// ------------------------------------------------------------------ vocabulary

Vocabulary::Vocabulary() : Vocabulary({kUnkSymbol, kPadSymbol}, {kUnkSymbol, kPadSymbol}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::vector<std::string> chars)
    : tokens_(std::move(tokens)), chars_(std::move(chars)) {
  if (tokens_.size() < 2 || tokens_[kUnk] != kUnkSymbol || tokens_[kPad] != kPadSymbol ||
      chars_.size() < 2 || chars_[kUnk] != kUnkSymbol || chars_[kPad] != kPadSymbol)
    throw ValidationError("vocabulary must reserve ids 0 and 1 for <UNK> and <PAD>");
  for (std::size_t i = 2; i < tokens_.size(); ++i)
    if (!token_index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw ValidationError("duplicate vocabulary token '" + tokens_[i] + "'");
  for (std::size_t i = 2; i < chars_.size(); ++i)
    if (!char_index_.emplace(chars_[i], static_cast<int>(i)).second)
      throw ValidationError("duplicate vocabulary character '" + chars_[i] + "'");
}

int Vocabulary::token_id(std::string_view token) const {
  auto it = token_index_.find(std::string(token));
  return it == token_index_.end() ? kUnk : it->second;
}

int Vocabulary::char_id(std::string_view ch) const {
  auto it = char_index_.find(std::string(ch));
  return it == char_index_.end() ? kUnk : it->second;
}

json Vocabulary::to_json() const { return {{"tokens", tokens_}, {"chars", chars_}}; }

Vocabulary Vocabulary::from_json(const json& j) {
  if (!j.is_object() || !j.contains("tokens") || !j.contains("chars"))
    throw ParseError("vocabulary JSON needs 'tokens' and 'chars'");
  try {
    return Vocabulary(j.at("tokens").get<std::vector<std::string>>(),
                      j.at("chars").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("vocabulary JSON: ") + e.what());
  }
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json().dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {
std::vector<std::string> top_symbols(const std::unordered_map<std::string, std::size_t>& counts,
                                     std::size_t keep) {
  std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> out{Vocabulary::kUnkSymbol, Vocabulary::kPadSymbol};
  for (std::size_t i = 0; i < items.size() && i < keep; ++i) out.push_back(items[i].first);
  return out;
}
}  // namespace

Vocabulary build_vocabulary(std::span<const Document> train_docs, std::size_t max_tokens,
                            std::size_t max_chars) {
  std::unordered_map<std::string, std::size_t> token_counts, char_counts;
  for (const auto& d : train_docs) {
    for (const auto& tok : tokenize(d.text)) {
      ++token_counts[tok];
      for (auto& ch : utf8_chars(tok)) ++char_counts[ch];
    }
  }
  return Vocabulary(top_symbols(token_counts, max_tokens), top_symbols(char_counts, max_chars));
}

// ------------------------------------------------------------------ encoding

EncodedDocument encode_document(const Document& doc, const Vocabulary& vocab,
                                const WindowParams& params) {
  const auto toks = tokenize(doc.text);
  std::vector<int> ids(toks.size());
  for (std::size_t i = 0; i < toks.size(); ++i) ids[i] = vocab.token_id(toks[i]);
  // Window over positions so character rows can be recovered from the token text.
  std::vector<long> positions(toks.size());
  for (std::size_t i = 0; i < toks.size(); ++i) positions[i] = static_cast<long>(i);
  auto units = sliding_window<long>(positions, params.width, params.hop, params.max_units, -1L);

  EncodedDocument out;
  out.n_sentences = units.size();
  out.width = params.width;
  out.chars_per_token = params.chars_per_token;
  out.tokens.assign(out.n_sentences * out.width, Vocabulary::kPad);
  out.chars.assign(out.n_sentences * out.width * out.chars_per_token, Vocabulary::kPad);
  for (std::size_t s = 0; s < units.size(); ++s) {
    for (std::size_t w = 0; w < params.width; ++w) {
      const long pos = units[s][w];
      if (pos < 0) continue;
      out.tokens[s * out.width + w] = ids[pos];
      const auto chars = utf8_chars(toks[pos]);
      for (std::size_t c = 0; c < params.chars_per_token && c < chars.size(); ++c)
        out.chars[(s * out.width + w) * out.chars_per_token + c] = vocab.char_id(chars[c]);
    }
  }
  return out;
}

void write_encoded_jsonl(std::ostream& out, std::span<const EncodedEntry> entries) {
  for (const auto& e : entries) {
    json rec = {{"doc_id", e.meta.doc_id},
                {"author_id", e.meta.author_id},
                {"fandom_id", e.meta.fandom_id},
                {"n_sentences", e.grid.n_sentences},
                {"width", e.grid.width},
                {"chars_per_token", e.grid.chars_per_token},
                {"tokens", e.grid.tokens},
                {"chars", e.grid.chars}};
    out << rec.dump() << '\n';
  }
}

std::vector<EncodedEntry> read_encoded_jsonl(std::istream& in) {
  std::vector<EncodedEntry> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (blank(text)) continue;
    json rec = parse_line(text, line);
    try {
      EncodedEntry e;
      e.meta = {rec.at("doc_id").get<std::string>(), rec.at("author_id").get<std::string>(),
                rec.at("fandom_id").get<std::string>()};
      e.grid.n_sentences = rec.at("n_sentences").get<std::size_t>();
      e.grid.width = rec.at("width").get<std::size_t>();
      e.grid.chars_per_token = rec.at("chars_per_token").get<std::size_t>();
      e.grid.tokens = rec.at("tokens").get<std::vector<int>>();
      e.grid.chars = rec.at("chars").get<std::vector<int>>();
      if (e.grid.tokens.size() != e.grid.n_sentences * e.grid.width ||
          e.grid.chars.size() != e.grid.tokens.size() * e.grid.chars_per_token)
        throw ParseError("encoded grid size does not match its shape", line);
      out.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw ParseError(std::string("encoded record: ") + e.what(), line);
    }
  }
  return out;
}

}  // namespace calav

namespace calav {

PreparedCorpus prepare_split(const CorpusSplit& split, std::size_t max_tokens, std::size_t max_chars,
                             const WindowParams& window) {
  PreparedCorpus out;
  out.vocab = build_vocabulary(split.train, max_tokens, max_chars);
  for (const auto& d : split.train) out.train.push_back({d.meta(), encode_document(d, out.vocab, window)});
  for (const auto& d : split.test) out.test.push_back({d.meta(), encode_document(d, out.vocab, window)});
  return out;
}

}  // namespace calav
