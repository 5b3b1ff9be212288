#include "pclmix/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace pclmix::checkpoint {
namespace {

constexpr char kMagic[8] = {'P', 'C', 'L', 'M', 'I', 'X', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

nlohmann::json config_json(const model::NetConfig& c) {
  return {{"classes", c.classes},       {"base_width", c.base_width}, {"depth", c.depth},
          {"embed_dim", c.embed_dim},   {"attn_heads", c.attn_heads},
          {"attn_blocks", c.attn_blocks}, {"feature_stride", c.feature_stride}};
}

model::NetConfig config_from(const nlohmann::json& j) {
  model::NetConfig c;
  c.classes = j.at("classes");
  c.base_width = j.at("base_width");
  c.depth = j.at("depth");
  c.embed_dim = j.at("embed_dim");
  c.attn_heads = j.at("attn_heads");
  c.attn_blocks = j.at("attn_blocks");
  c.feature_stride = j.at("feature_stride");
  return c;
}

std::map<std::string, torch::Tensor> state_of(model::SegNet& net) {
  std::map<std::string, torch::Tensor> state;
  for (const auto& p : net->named_parameters()) state[p.key()] = p.value();
  for (const auto& b : net->named_buffers()) state[b.key()] = b.value();
  return state;
}

struct Header {
  nlohmann::json json;
  std::streamoff data_start = 0;
};

Header read_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t size = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&size), sizeof size);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw Error("not a checkpoint: " + path.string());
  if (version != kVersion) throw Error("unsupported checkpoint version in " + path.string());
  std::string text(size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(size));
  if (!in) throw Error("truncated checkpoint header: " + path.string());
  Header h;
  h.json = nlohmann::json::parse(text);
  h.data_start = in.tellg();
  return h;
}

}  // namespace

void save(const std::filesystem::path& path, model::SegNet& net,
          const std::map<std::string, std::string>& metadata) {
  const auto state = state_of(net);
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : state) {
    tensors.push_back({{"name", name}, {"shape", t.sizes().vec()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.numel()) * sizeof(float);
  }
  nlohmann::json header = {{"format", "pclmix-checkpoint"},
                           {"net", config_json(net->config())},
                           {"metadata", metadata},
                           {"tensors", tensors}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  const std::uint64_t size = text.size();
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  out.write(reinterpret_cast<const char*>(&size), sizeof size);
  out.write(text.data(), static_cast<std::streamsize>(size));
  for (const auto& [name, t] : state) {
    auto data = t.detach().to(torch::kFloat32).contiguous();
    out.write(reinterpret_cast<const char*>(data.data_ptr<float>()),
              static_cast<std::streamsize>(data.numel() * sizeof(float)));
  }
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Loaded load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing checkpoint " + path.string());
  const auto header = read_header(in, path);
  Loaded out;
  out.net = model::SegNet(config_from(header.json.at("net")));
  out.metadata = header.json.at("metadata").get<std::map<std::string, std::string>>();

  auto state = state_of(out.net);
  const auto& index = header.json.at("tensors");
  require(index.size() == state.size(), "checkpoint tensor count does not match the network");
  torch::NoGradGuard no_grad;
  for (const auto& entry : index) {
    const std::string name = entry.at("name");
    auto it = state.find(name);
    require(it != state.end(), "checkpoint has unknown tensor " + name);
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    require(it->second.sizes().vec() == shape, "checkpoint shape mismatch for " + name);
    auto buffer = torch::empty(shape, torch::kFloat32);
    in.seekg(header.data_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(buffer.data_ptr<float>()),
            static_cast<std::streamsize>(buffer.numel() * sizeof(float)));
    if (!in) throw Error("truncated checkpoint data for " + name);
    it->second.copy_(buffer);
  }
  return out;
}

model::NetConfig read_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing checkpoint " + path.string());
  return config_from(read_header(in, path).json.at("net"));
}

}  // namespace pclmix::checkpoint
