#include "benchmark.hpp"

namespace calav::test {

BenchmarkSetup default_benchmark(std::uint64_t train_seed) {
  BenchmarkSetup s;
  s.corpus.seed = 1;
  s.train.seed = train_seed;
  s.train.epochs = 30;
  return s;
}

BenchmarkResult run_benchmark(const BenchmarkSetup& setup, const EpochCallback& on_epoch) {
  const auto docs = synthetic_style_corpus(setup.corpus);
  const auto split = split_by_author(docs, setup.test_author_fraction, setup.split_seed);
  const auto prepared = prepare_split(split);
  std::vector<DocumentMeta> test_meta;
  for (const auto& e : prepared.test) test_meta.push_back(e.meta);
  const auto keep = SubsetFilter::parse("SA_DF,DA_SF");
  const auto pairs = sample_fixed_test_pairs(test_meta, setup.pair_seed, keep, setup.test_rounds);

  BenchmarkResult out;
  out.trained = train(prepared.train, prepared.vocab, setup.train, on_epoch);
  out.predictions = evaluate_checkpoint(out.trained.checkpoint, prepared.vocab.hash(), prepared.test, pairs);
  for (Stage st : {Stage::Dml, Stage::Bfs, Stage::Ual}) {
    const auto trials = stage_trials(out.predictions, st, keep);
    out.reports[static_cast<std::size_t>(st)] = compute_report(trials);
  }
  return out;
}

}  // namespace calav::test
