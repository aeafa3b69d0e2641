#include "calav/sampler.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

#include "calav/error.hpp"
#include "calav/rng.hpp"

namespace calav {

using nlohmann::json;

std::string_view subset_name(Subset s) {
  switch (s) {
    case Subset::SA_SF: return "SA_SF";
    case Subset::SA_DF: return "SA_DF";
    case Subset::DA_SF: return "DA_SF";
    case Subset::DA_DF: return "DA_DF";
  }
  return "?";
}

Subset parse_subset(std::string_view name) {
  for (Subset s : {Subset::SA_SF, Subset::SA_DF, Subset::DA_SF, Subset::DA_DF})
    if (subset_name(s) == name) return s;
  throw ValidationError("unknown subset '" + std::string(name) + "'");
}

Subset subset_of(int a, int f) {
  if (a) return f ? Subset::SA_SF : Subset::SA_DF;
  return f ? Subset::DA_SF : Subset::DA_DF;
}

SubsetFilter SubsetFilter::parse(std::string_view list) {
  if (list.empty() || list == "all") return all();
  SubsetFilter out = none();
  std::size_t pos = 0;
  while (pos <= list.size()) {
    std::size_t comma = list.find(',', pos);
    if (comma == std::string_view::npos) comma = list.size();
    auto item = list.substr(pos, comma - pos);
    if (!item.empty()) out.add(parse_subset(item));
    pos = comma + 1;
  }
  return out;
}

std::string SubsetFilter::to_string() const {
  std::string out;
  for (Subset s : {Subset::SA_SF, Subset::SA_DF, Subset::DA_SF, Subset::DA_DF}) {
    if (!contains(s)) continue;
    if (!out.empty()) out += ',';
    out += subset_name(s);
  }
  return out;
}

namespace {

struct Pool {
  std::vector<std::size_t> author_of;  // doc index -> author index
  std::vector<std::size_t> fandom_of;  // doc index -> fandom index
  std::vector<std::vector<std::size_t>> docs_by_author;
};

Pool index_corpus(std::span<const DocumentMeta> docs) {
  Pool p;
  std::unordered_map<std::string, std::size_t> authors, fandoms;
  p.author_of.resize(docs.size());
  p.fandom_of.resize(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    auto [ait, anew] = authors.emplace(docs[i].author_id, authors.size());
    if (anew) p.docs_by_author.emplace_back();
    p.docs_by_author[ait->second].push_back(i);
    p.author_of[i] = ait->second;
    p.fandom_of[i] = fandoms.emplace(docs[i].fandom_id, fandoms.size()).first->second;
  }
  return p;
}

// Removes and returns a uniformly chosen element of `v`, order not preserved.
std::size_t take_random(std::vector<std::size_t>& v, Rng& rng) {
  const std::size_t k = rng.below(v.size());
  const std::size_t out = v[k];
  v[k] = v.back();
  v.pop_back();
  return out;
}

// Picks a uniformly random entry of `pool` satisfying `pred`, removes it.
template <class Pred>
bool take_matching(std::vector<std::size_t>& pool, Rng& rng, Pred pred, std::size_t& out) {
  std::vector<std::size_t> slots;
  for (std::size_t k = 0; k < pool.size(); ++k)
    if (pred(pool[k])) slots.push_back(k);
  if (slots.empty()) return false;
  const std::size_t k = slots[rng.below(slots.size())];
  out = pool[k];
  pool[k] = pool.back();
  pool.pop_back();
  return true;
}

DocumentPair make_pair(std::span<const DocumentMeta> docs, std::size_t i, std::size_t j, Rng& rng) {
  if (rng.uniform() < 0.5) std::swap(i, j);
  return {docs[i].doc_id, docs[j].doc_id, docs[i].author_id == docs[j].author_id ? 1 : 0,
          docs[i].fandom_id == docs[j].fandom_id ? 1 : 0};
}

}  // namespace

std::vector<DocumentPair> resample_epoch(std::span<const DocumentMeta> docs, const SamplerConfig& cfg) {
  for (double d : {cfg.delta_1, cfg.delta_2, cfg.delta_3})
    if (!(d >= 0.0 && d <= 1.0)) throw ValidationError("sampler deltas must lie in [0, 1]");
  std::vector<DocumentPair> pairs;
  if (docs.size() < 2) return pairs;

  Pool p = index_corpus(docs);
  Rng rng(cfg.seed);

  std::vector<std::size_t> active(p.docs_by_author.size());
  for (std::size_t a = 0; a < active.size(); ++a) active[a] = a;
  rng.shuffle(std::span(active));
  auto remaining = p.docs_by_author;

  // Loop 1: same-author pairs, or hand documents over as different-author candidates.
  std::vector<std::size_t> candidates;
  while (!active.empty()) {
    for (std::size_t a : active) {
      auto& pool = remaining[a];
      const std::size_t d1 = take_random(pool, rng);
      bool paired = false;
      if (rng.uniform() < cfg.delta_1) {
        const bool want_same_fandom = rng.uniform() < cfg.delta_2;
        auto same = [&](std::size_t d) { return p.fandom_of[d] == p.fandom_of[d1]; };
        auto diff = [&](std::size_t d) { return p.fandom_of[d] != p.fandom_of[d1]; };
        std::size_t d2;
        // A failed same-fandom attempt degrades to a cross-fandom one.
        if (want_same_fandom) paired = take_matching(pool, rng, same, d2) || take_matching(pool, rng, diff, d2);
        else paired = take_matching(pool, rng, diff, d2);
        if (paired) pairs.push_back(make_pair(docs, d1, d2, rng));
      }
      if (!paired) candidates.push_back(d1);
    }
    std::erase_if(active, [&](std::size_t a) { return remaining[a].empty(); });
  }

  // Loop 2: pair candidates across authors. Drawing the first document from
  // the author with the most open candidates keeps leftovers to a minimum.
  std::vector<std::size_t> open_per_author(p.docs_by_author.size(), 0);
  for (std::size_t d : candidates) ++open_per_author[p.author_of[d]];
  while (candidates.size() >= 2) {
    std::size_t best = 0;
    for (std::size_t d : candidates) best = std::max(best, open_per_author[p.author_of[d]]);
    std::size_t d1;
    take_matching(candidates, rng, [&](std::size_t d) { return open_per_author[p.author_of[d]] == best; }, d1);
    --open_per_author[p.author_of[d1]];

    const bool want_same_fandom = rng.uniform() < cfg.delta_3;
    auto other = [&](std::size_t d) { return p.author_of[d] != p.author_of[d1]; };
    auto same = [&](std::size_t d) { return other(d) && p.fandom_of[d] == p.fandom_of[d1]; };
    auto diff = [&](std::size_t d) { return other(d) && p.fandom_of[d] != p.fandom_of[d1]; };
    std::size_t d2;
    const bool paired = want_same_fandom
                            ? take_matching(candidates, rng, same, d2) || take_matching(candidates, rng, diff, d2)
                            : take_matching(candidates, rng, diff, d2) || take_matching(candidates, rng, same, d2);
    if (!paired) break;  // only d1's author is left; the rest stay unpaired
    --open_per_author[p.author_of[d2]];
    pairs.push_back(make_pair(docs, d1, d2, rng));
  }
  return pairs;
}

std::vector<DocumentPair> sample_fixed_test_pairs(std::span<const DocumentMeta> docs, std::uint64_t seed,
                                                  const SubsetFilter& keep, std::size_t rounds) {
  std::vector<DocumentPair> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t r = 0; r < std::max<std::size_t>(rounds, 1); ++r) {
    SamplerConfig cfg;
    cfg.seed = derive_seed(seed, 0x7e57, r);
    for (auto& pair : resample_epoch(docs, cfg)) {
      if (!keep.contains(pair.subset())) continue;
      auto key = std::minmax(pair.doc_1, pair.doc_2);
      if (seen.emplace(key.first, key.second).second) out.push_back(std::move(pair));
    }
  }
  return out;
}

std::vector<PairCount> pair_count_histogram(std::span<const std::vector<DocumentPair>> epochs) {
  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  for (const auto& epoch : epochs)
    for (const auto& pair : epoch) {
      auto key = std::minmax(pair.doc_1, pair.doc_2);
      ++counts[{key.first, key.second}];
    }
  std::vector<PairCount> out;
  out.reserve(counts.size());
  for (const auto& [key, n] : counts) out.push_back({key.first, key.second, n});
  std::stable_sort(out.begin(), out.end(), [](const PairCount& a, const PairCount& b) { return a.count > b.count; });
  return out;
}

void write_pairs_jsonl(std::ostream& out, std::span<const DocumentPair> pairs) {
  for (const auto& p : pairs) {
    json rec = {{"doc_id_1", p.doc_1}, {"doc_id_2", p.doc_2}, {"a", p.a}, {"f", p.f}};
    out << rec.dump() << '\n';
  }
}

std::vector<DocumentPair> read_pairs_jsonl(std::istream& in) {
  std::vector<DocumentPair> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      json rec = json::parse(text);
      DocumentPair p{rec.at("doc_id_1").get<std::string>(), rec.at("doc_id_2").get<std::string>(),
                     rec.at("a").get<int>(), rec.at("f").get<int>()};
      if ((p.a != 0 && p.a != 1) || (p.f != 0 && p.f != 1)) throw ParseError("labels a and f must be 0 or 1", line);
      if (p.doc_1 == p.doc_2) throw ParseError("pair repeats document '" + p.doc_1 + "'", line);
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError(std::string("pair record: ") + e.what(), line);
    }
  }
  return out;
}

}  // namespace calav
