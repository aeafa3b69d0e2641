#include "calav/config.hpp"

#include <cstdlib>
#include <fstream>

#include "calav/error.hpp"

namespace calav {

void merge_strict(nlohmann::json& base, const nlohmann::json& patch, const std::string& where) {
  if (!patch.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    if (!base.contains(key)) throw ValidationError("unknown key '" + key + "' in " + where);
    if (base[key].is_object())
      merge_strict(base[key], value, where + "." + key);
    else
      base[key] = value;
  }
}

namespace {

template <class F>
auto read_fields(const char* where, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string(where) + ": " + e.what());
  }
}

}  // namespace

nlohmann::json PrepConfig::to_json() const {
  return {{"format", format},
          {"split", split},
          {"test_fraction", test_fraction},
          {"vocab_tokens", vocab_tokens},
          {"vocab_chars", vocab_chars},
          {"width", window.width},
          {"hop", window.hop},
          {"max_units", window.max_units},
          {"chars_per_token", window.chars_per_token},
          {"seed", seed}};
}

PrepConfig PrepConfig::from_json(const nlohmann::json& patch) {
  nlohmann::json j = PrepConfig{}.to_json();
  merge_strict(j, patch, "prep");
  PrepConfig c = read_fields("prep", [&] {
    PrepConfig c;
    c.format = j.at("format").get<std::string>();
    c.split = j.at("split").get<std::string>();
    c.test_fraction = j.at("test_fraction").get<double>();
    c.vocab_tokens = j.at("vocab_tokens").get<std::size_t>();
    c.vocab_chars = j.at("vocab_chars").get<std::size_t>();
    c.window.width = j.at("width").get<std::size_t>();
    c.window.hop = j.at("hop").get<std::size_t>();
    c.window.max_units = j.at("max_units").get<std::size_t>();
    c.window.chars_per_token = j.at("chars_per_token").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  });
  parse_corpus_format(c.format);
  if (c.split != "disjoint" && c.split != "author") throw ValidationError("prep.split must be disjoint or author");
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) throw ValidationError("prep.test_fraction must be in (0, 1)");
  if (c.window.chars_per_token == 0) throw ValidationError("prep.chars_per_token must be positive");
  window_count(1, c.window.width, c.window.hop, c.window.max_units);
  return c;
}

nlohmann::json SampleConfig::to_json() const {
  return {{"side", side}, {"subsets", subsets}, {"rounds", rounds}, {"seed", seed}};
}

SampleConfig SampleConfig::from_json(const nlohmann::json& patch) {
  nlohmann::json j = SampleConfig{}.to_json();
  merge_strict(j, patch, "sample");
  SampleConfig c = read_fields("sample", [&] {
    SampleConfig c;
    c.side = j.at("side").get<std::string>();
    c.subsets = j.at("subsets").get<std::string>();
    c.rounds = j.at("rounds").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  });
  if (c.side != "train" && c.side != "test") throw ValidationError("sample.side must be train or test");
  if (c.rounds == 0) throw ValidationError("sample.rounds must be positive");
  SubsetFilter::parse(c.subsets);
  return c;
}

nlohmann::json EvalConfig::to_json() const { return {{"stages", stages}, {"subsets", subsets}, {"bins", bins}}; }

EvalConfig EvalConfig::from_json(const nlohmann::json& patch) {
  nlohmann::json j = EvalConfig{}.to_json();
  merge_strict(j, patch, "eval");
  EvalConfig c = read_fields("eval", [&] {
    EvalConfig c;
    c.stages = j.at("stages").get<std::string>();
    c.subsets = j.at("subsets").get<std::string>();
    c.bins = j.at("bins").get<std::size_t>();
    return c;
  });
  if (c.bins == 0) throw ValidationError("eval.bins must be positive");
  SubsetFilter::parse(c.subsets);
  return c;
}

nlohmann::json RunConfig::to_json() const {
  return {{"prep", prep.to_json()}, {"sample", sample.to_json()}, {"train", train.to_json()}, {"eval", eval.to_json()}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (key != "prep" && key != "sample" && key != "train" && key != "eval")
      throw ValidationError("unknown config section '" + key + "'");
  const auto section = [&](const char* name) { return j.contains(name) ? j.at(name) : nlohmann::json::object(); };
  RunConfig c;
  c.prep = PrepConfig::from_json(section("prep"));
  c.sample = SampleConfig::from_json(section("sample"));
  c.train = TrainConfig::from_json(section("train"));
  c.eval = EvalConfig::from_json(section("eval"));
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("CALAV_SEED");
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (*end != '\0' || v[0] == '-') throw ValidationError("CALAV_SEED must be a non-negative integer");
  return s;
}

}  // namespace calav
