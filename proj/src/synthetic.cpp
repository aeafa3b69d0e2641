#include "calav/synthetic.hpp"

#include <cmath>
#include <set>
#include <string>

#include "calav/error.hpp"
#include "calav/rng.hpp"

namespace calav {

namespace {

// Distinct pronounceable lowercase words.
std::vector<std::string> make_words(std::size_t n, Rng& rng, std::set<std::string>& taken) {
  static const char* consonants = "bcdfghjklmnprstvwz";
  static const char* vowels = "aeiou";
  std::vector<std::string> out;
  while (out.size() < n) {
    const std::size_t syllables = 1 + rng.below(3);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
      w += consonants[rng.below(18)];
      w += vowels[rng.below(5)];
    }
    if (rng.uniform() < 0.5) w += consonants[rng.below(18)];
    if (taken.insert(w).second) out.push_back(w);
  }
  return out;
}

}  // namespace

std::vector<Document> synthetic_style_corpus(const StyleCorpusConfig& cfg) {
  if (cfg.authors == 0 || cfg.fandoms == 0 || cfg.docs_per_fandom == 0 || cfg.doc_tokens == 0)
    throw ValidationError("synthetic corpus sizes must be positive");
  if (cfg.style_tokens_per_author > cfg.style_vocab) throw ValidationError("style vocabulary too small");
  if (cfg.style_weight < 0 || cfg.topic_weight < 0 || cfg.style_weight + cfg.topic_weight > 1)
    throw ValidationError("style and topic weights must be non-negative and sum to at most 1");
  Rng rng(cfg.seed);
  std::set<std::string> taken;
  const auto style = make_words(cfg.style_vocab, rng, taken);
  const auto background = make_words(cfg.background_vocab, rng, taken);
  std::vector<std::vector<std::string>> topics;
  for (std::size_t f = 0; f < cfg.fandoms; ++f) topics.push_back(make_words(cfg.topic_vocab, rng, taken));

  std::vector<Document> docs;
  for (std::size_t a = 0; a < cfg.authors; ++a) {
    std::vector<std::size_t> prefs(cfg.style_vocab);
    for (std::size_t k = 0; k < prefs.size(); ++k) prefs[k] = k;
    rng.shuffle(std::span(prefs));
    prefs.resize(cfg.style_tokens_per_author);
    for (std::size_t f = 0; f < cfg.fandoms; ++f) {
      for (std::size_t d = 0; d < cfg.docs_per_fandom; ++d) {
        std::string text;
        for (std::size_t t = 0; t < cfg.doc_tokens; ++t) {
          const double u = rng.uniform();
          const std::string& w = u < cfg.style_weight                    ? style[prefs[rng.below(prefs.size())]]
                                 : u < cfg.style_weight + cfg.topic_weight ? topics[f][rng.below(cfg.topic_vocab)]
                                                                           : background[rng.below(background.size())];
          if (!text.empty()) text += ' ';
          text += w;
          if (rng.uniform() < 0.08) text += '.';
        }
        const std::string id = "a" + std::to_string(a) + "_f" + std::to_string(f) + "_d" + std::to_string(d);
        docs.push_back({id, "author" + std::to_string(a), "fandom" + std::to_string(f), text});
      }
    }
  }
  return docs;
}

namespace {

double power_law_mean(double s, std::size_t k_max) {
  double z = 0.0, m = 0.0;
  for (std::size_t k = 1; k <= k_max; ++k) {
    const double w = std::pow(static_cast<double>(k), -s);
    z += w;
    m += static_cast<double>(k) * w;
  }
  return m / z;
}

}  // namespace

double power_law_exponent(double mean, std::size_t k_max) {
  if (k_max < 2 || !(mean > 1.0) || !(mean < power_law_mean(0.0, k_max)))
    throw ValidationError("requested mean is not reachable by a power law on 1..k_max");
  double lo = 0.0, hi = 50.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (power_law_mean(mid, k_max) > mean)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<DocumentMeta> synthetic_pairing_corpus(const PairingCorpusConfig& cfg) {
  if (cfg.docs == 0 || cfg.fandoms == 0) throw ValidationError("pairing corpus sizes must be positive");
  const double s = power_law_exponent(cfg.mean_docs_per_author, cfg.max_docs_per_author);
  std::vector<double> cdf(cfg.max_docs_per_author);
  double acc = 0.0;
  for (std::size_t k = 1; k <= cfg.max_docs_per_author; ++k) {
    acc += std::pow(static_cast<double>(k), -s);
    cdf[k - 1] = acc;
  }
  Rng rng(cfg.seed);
  std::vector<DocumentMeta> docs;
  for (std::size_t a = 0; docs.size() < cfg.docs; ++a) {
    const double u = rng.uniform() * acc;
    std::size_t k = 1;
    while (k < cfg.max_docs_per_author && cdf[k - 1] < u) ++k;
    for (std::size_t d = 0; d < k && docs.size() < cfg.docs; ++d)
      docs.push_back({"doc" + std::to_string(docs.size()), "author" + std::to_string(a),
                      "fandom" + std::to_string(rng.below(cfg.fandoms))});
  }
  return docs;
}

}  // namespace calav
