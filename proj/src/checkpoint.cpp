#include "calav/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "calav/error.hpp"

namespace calav {

namespace {

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw ParseError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[k]) << (8 * k);
  return v;
}

void put_f64(std::ostream& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

struct Block {
  std::string name;
  ParamView view;
};

std::vector<Block> blocks(Model& m, const std::string& prefix) {
  std::vector<Block> out;
  for (auto& v : parameters(m)) out.push_back({prefix + v.name, v});
  return out;
}

std::vector<Block> all_blocks(Checkpoint& c) {
  auto out = blocks(c.model, "");
  if (c.adam) {
    for (auto& b : blocks(c.adam->m, "adam.m.")) out.push_back(b);
    for (auto& b : blocks(c.adam->v, "adam.v.")) out.push_back(b);
  }
  return out;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt_in) {
  Checkpoint ckpt = ckpt_in;
  const auto list = all_blocks(ckpt);
  nlohmann::json params = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& b : list) {
    params.push_back({{"name", b.name},
                      {"group", std::string(group_name(b.view.group))},
                      {"shape", {b.view.rows, b.view.cols}},
                      {"offset", offset}});
    offset += static_cast<std::uint64_t>(b.view.size()) * 8;
  }
  nlohmann::json header = {{"format", "CALAV1"},
                           {"version", 1},
                           {"vocab_hash", ckpt.vocab_hash},
                           {"step", ckpt.step},
                           {"epoch", ckpt.epoch},
                           {"config", ckpt.config.to_json()},
                           {"train_config", ckpt.train_config},
                           {"params", params},
                           {"data_bytes", offset}};
  if (ckpt.adam) header["adam_steps"] = ckpt.adam->steps;
  const std::string text = header.dump();
  out.write(kCheckpointMagic, kMagicLen);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& b : list) {
    const auto& v = b.view;
    for (Eigen::Index r = 0; r < v.rows; ++r)
      for (Eigen::Index c = 0; c < v.cols; ++c) put_f64(out, v.data[c * v.rows + r]);
  }
  if (!out) throw Error("failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[kMagicLen];
  if (!in.read(magic, kMagicLen) || std::memcmp(magic, kCheckpointMagic, kMagicLen) != 0)
    throw ParseError("not a checkpoint (bad magic)");
  const std::uint64_t len = get_u64(in);
  if (len > (1ull << 32)) throw ParseError("checkpoint header length is implausible");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw ParseError("checkpoint header truncated");

  Checkpoint ckpt;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    if (header.at("format") != "CALAV1" || header.at("version") != 1)
      throw ParseError("unsupported checkpoint format");
    ckpt.config = ModelConfig::from_json(header.at("config"));
    ckpt.vocab_hash = header.at("vocab_hash").get<std::uint64_t>();
    ckpt.step = header.at("step").get<std::uint64_t>();
    ckpt.epoch = header.at("epoch").get<std::uint64_t>();
    ckpt.train_config = header.value("train_config", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
  const auto& params = header.at("params");
  const auto find_shape = [&](const std::string& name) -> std::pair<Eigen::Index, Eigen::Index> {
    for (const auto& p : params)
      if (p.at("name") == name) return {p.at("shape")[0].get<Eigen::Index>(), p.at("shape")[1].get<Eigen::Index>()};
    throw ParseError("checkpoint lacks parameter " + name);
  };
  const auto word = find_shape("tables.word");
  const auto chr = find_shape("tables.char");
  ckpt.model = init_model(ckpt.config, static_cast<std::size_t>(word.first), static_cast<std::size_t>(chr.first), 0);
  ckpt.model.bfs.prior_log_odds = ckpt.config.prior_log_odds;
  if (header.contains("adam_steps")) {
    ckpt.adam = init_adam(ckpt.model);
    ckpt.adam->steps = header.at("adam_steps").get<std::array<std::uint64_t, kGroupCount>>();
  }

  const auto list = all_blocks(ckpt);
  if (list.size() != params.size()) throw ParseError("checkpoint parameter count mismatch");
  for (std::size_t k = 0; k < list.size(); ++k) {
    const auto& v = list[k].view;
    const auto& p = params[k];
    if (p.at("name") != list[k].name || p.at("shape")[0].get<Eigen::Index>() != v.rows ||
        p.at("shape")[1].get<Eigen::Index>() != v.cols)
      throw ParseError("checkpoint parameter " + list[k].name + " does not match the configured shape");
    for (Eigen::Index r = 0; r < v.rows; ++r)
      for (Eigen::Index c = 0; c < v.cols; ++c) v.data[c * v.rows + r] = get_f64(in);
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot open " + tmp + " for writing");
    write_checkpoint(out, ckpt);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace calav
