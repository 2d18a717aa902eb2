#include "declip/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace declip {

using nlohmann::json;

namespace {

void put_u64_le(std::ostream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t get_u64_le(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void put_doubles_le(std::ostream& out, const std::vector<double>& v) {
  for (double d : v) put_u64_le(out, std::bit_cast<uint64_t>(d));
}

}  // namespace

void save_checkpoint(const std::string& path, const DualEncoder& model,
                     const CheckpointMeta& meta) {
  json header;
  header["schema_version"] = 1;
  header["seed"] = meta.seed;
  header["config_hash"] = meta.config_hash;
  const ModelConfig& c = model.config();
  header["model_config"] = {{"image_dim", c.image_dim}, {"text_dim", c.text_dim},
                            {"embed_dim", c.embed_dim}, {"hidden", c.hidden},
                            {"depth", c.depth},         {"tau_init", c.tau_init},
                            {"init_seed", c.init_seed}};
  json plist = json::array();
  for (const auto& [name, arr] : model.params())
    plist.push_back({{"name", name}, {"rows", arr.rows()}, {"cols", arr.cols()}});
  header["params"] = plist;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  const std::string hs = header.dump();
  out.write(kCheckpointMagic, 8);
  put_u64_le(out, hs.size());
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, arr] : model.params()) put_doubles_le(out, arr.data());
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint64_t hlen = get_u64_le(in);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error("checkpoint: truncated header in " + path);
  json header = json::parse(hs);
  if (header.at("schema_version").get<int>() != 1)
    throw std::runtime_error("checkpoint: unsupported schema version");

  ModelConfig cfg;
  const auto& mc = header.at("model_config");
  cfg.image_dim = mc.at("image_dim").get<int>();
  cfg.text_dim = mc.at("text_dim").get<int>();
  cfg.embed_dim = mc.at("embed_dim").get<int>();
  cfg.hidden = mc.at("hidden").get<int>();
  cfg.depth = mc.at("depth").get<int>();
  cfg.tau_init = mc.at("tau_init").get<double>();
  cfg.init_seed = mc.at("init_seed").get<uint64_t>();

  LoadedCheckpoint out{DualEncoder::init(cfg), {}};
  out.meta.seed = header.at("seed").get<uint64_t>();
  out.meta.config_hash = header.at("config_hash").get<std::string>();

  for (const auto& p : header.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    const int rows = p.at("rows").get<int>(), cols = p.at("cols").get<int>();
    Array& arr = out.model.params().get(name);
    if (arr.rows() != rows || arr.cols() != cols)
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    for (size_t i = 0; i < arr.size(); ++i) arr[i] = std::bit_cast<double>(get_u64_le(in));
  }
  if (!in) throw std::runtime_error("checkpoint: truncated payload in " + path);
  return out;
}

}  // namespace declip
