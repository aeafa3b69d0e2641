#pragma once

// Epoch-wise re-sampling of document pairs into the four (author, fandom)
// subsets, and one-off generation of a fixed evaluation pair list.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "calav/data.hpp"

namespace calav {

/// Pair subset by (same author, same fandom).
enum class Subset { SA_SF = 0, SA_DF = 1, DA_SF = 2, DA_DF = 3 };

std::string_view subset_name(Subset s);
Subset parse_subset(std::string_view name);
Subset subset_of(int a, int f);

struct DocumentPair {
  std::string doc_1;
  std::string doc_2;
  int a = 0;  // 1 iff same author
  int f = 0;  // 1 iff same fandom

  Subset subset() const { return subset_of(a, f); }
  bool operator==(const DocumentPair&) const = default;
};

struct SamplerConfig {
  double delta_1 = 0.7;  // probability of attempting a same-author pair
  double delta_2 = 0.6;  // within that, probability of preferring same fandom
  double delta_3 = 0.6;  // for different-author pairs, probability of preferring same fandom
  std::uint64_t seed = 0;
};

/// Set of subsets to keep.
class SubsetFilter {
 public:
  static SubsetFilter all() { return SubsetFilter({true, true, true, true}); }
  static SubsetFilter none() { return SubsetFilter({false, false, false, false}); }
  /// Comma separated names, e.g. "SA_DF,DA_SF". Empty or "all" keeps everything.
  static SubsetFilter parse(std::string_view list);

  SubsetFilter& add(Subset s) {
    keep_[static_cast<int>(s)] = true;
    return *this;
  }
  bool contains(Subset s) const { return keep_[static_cast<int>(s)]; }
  std::string to_string() const;

 private:
  explicit SubsetFilter(std::array<bool, 4> keep) : keep_(keep) {}
  std::array<bool, 4> keep_;
};

/// One epoch of pairs. Every document is used at most once; unpaired
/// leftovers are dropped.
std::vector<DocumentPair> resample_epoch(std::span<const DocumentMeta> docs, const SamplerConfig& cfg);

/// Runs `rounds` independent re-sampling passes with default deltas, merges
/// them without duplicate pairs and keeps only subsets in `keep`.
std::vector<DocumentPair> sample_fixed_test_pairs(std::span<const DocumentMeta> docs, std::uint64_t seed,
                                                  const SubsetFilter& keep = SubsetFilter::all(),
                                                  std::size_t rounds = 1);

struct PairCount {
  std::string doc_1;  // lexicographically smaller id
  std::string doc_2;
  std::size_t count = 0;
};

/// How often each unordered pair occurs across epochs, most frequent first.
std::vector<PairCount> pair_count_histogram(std::span<const std::vector<DocumentPair>> epochs);

void write_pairs_jsonl(std::ostream& out, std::span<const DocumentPair> pairs);
std::vector<DocumentPair> read_pairs_jsonl(std::istream& in);

}  // namespace calav
