#include "pclmix/config.hpp"

#include <algorithm>
#include <charconv>
#include <fmt/format.h>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace pclmix::config {
namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(fmt::format("invalid value '{}' for config key '{}'", text, key));
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw Error(fmt::format("invalid boolean '{}' for config key '{}'", text, key));
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <typename T, typename Access>
Field number(Access access) {
  return {[access](const RunConfig& c) { return fmt::format("{}", access(c)); },
          [access](RunConfig& c, const std::string& k, const std::string& v) {
            access(c) = parse_number<T>(k, v);
          }};
}

template <typename Access>
Field boolean(Access access) {
  return {[access](const RunConfig& c) {
            return std::string(access(c) ? "true" : "false");
          },
          [access](RunConfig& c, const std::string& k, const std::string& v) {
            access(c) = parse_bool(k, v);
          }};
}

template <typename Access>
Field text(Access access) {
  return {[access](const RunConfig& c) { return access(c); },
          [access](RunConfig& c, const std::string&, const std::string& v) { access(c) = v; }};
}

#define PCLMIX_REF(expr) [](auto& c) -> auto& { return c.expr; }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["classes"] = number<int>(PCLMIX_REF(net.classes));
    f["base_width"] = number<int>(PCLMIX_REF(net.base_width));
    f["depth"] = number<int>(PCLMIX_REF(net.depth));
    f["embed_dim"] = number<int>(PCLMIX_REF(net.embed_dim));
    f["attn_heads"] = number<int>(PCLMIX_REF(net.attn_heads));
    f["attn_blocks"] = number<int>(PCLMIX_REF(net.attn_blocks));
    f["feature_stride"] = number<int>(PCLMIX_REF(net.feature_stride));

    f["lr0"] = number<double>(PCLMIX_REF(train.lr0));
    f["lr_end"] = number<double>(PCLMIX_REF(train.lr_end));
    f["poly_power"] = number<double>(PCLMIX_REF(train.poly_power));
    f["momentum"] = number<double>(PCLMIX_REF(train.momentum));
    f["weight_decay"] = number<double>(PCLMIX_REF(train.weight_decay));
    f["batch_size"] = number<int>(PCLMIX_REF(train.batch_size));
    f["total_iters"] = number<int>(PCLMIX_REF(train.total_iters));
    f["mix_ratio"] = number<double>(PCLMIX_REF(train.mix_ratio));
    f["per_item_boxes"] = boolean(PCLMIX_REF(train.per_item_boxes));
    f["ckpt_every"] = number<int>(PCLMIX_REF(train.ckpt_every));
    f["use_ctr"] = boolean(PCLMIX_REF(train.flags.use_ctr));
    f["use_het"] = boolean(PCLMIX_REF(train.flags.use_het));
    f["use_mix"] = boolean(PCLMIX_REF(train.flags.use_mix));
    f["use_aux_decoder_sup"] = boolean(PCLMIX_REF(train.flags.use_aux_decoder_sup));
    f["lambda_ctr"] = number<double>(PCLMIX_REF(train.weights.lambda_ctr));
    f["lambda_con"] = number<double>(PCLMIX_REF(train.weights.lambda_con));
    f["lambda_mix"] = number<double>(PCLMIX_REF(train.weights.lambda_mix));
    f["lambda_t"] = number<double>(PCLMIX_REF(train.weights.lambda_t));
    f["threshold_scale"] = number<double>(PCLMIX_REF(train.threshold_scale));
    f["entropy_eps"] = number<double>(PCLMIX_REF(train.entropy_eps));
    f["queue_capacity"] = number<int>(PCLMIX_REF(train.ctr.queue_capacity));
    f["push_per_iter"] = number<int>(PCLMIX_REF(train.ctr.push_per_iter));
    f["anchors"] = number<int>(PCLMIX_REF(train.ctr.anchors));
    f["tau"] = number<double>(PCLMIX_REF(train.ctr.tau));
    f["include_background"] = boolean(PCLMIX_REF(train.ctr.include_background));
    f["pce_reduction"] = {
        [](const RunConfig& c) {
          return std::string(c.train.pce_reduction == losses::Reduction::kMean ? "mean" : "sum");
        },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          if (v == "mean") c.train.pce_reduction = losses::Reduction::kMean;
          else if (v == "sum") c.train.pce_reduction = losses::Reduction::kSum;
          else throw Error(fmt::format("invalid value '{}' for config key '{}' (mean|sum)", v, k));
        }};

    f["data_dir"] = text(PCLMIX_REF(data_dir));
    f["synth_n"] = number<int>(PCLMIX_REF(synth_n));
    f["data_seed"] = number<std::uint64_t>(PCLMIX_REF(data_seed));
    f["image_size"] = number<int>(PCLMIX_REF(image_size));
    f["folds"] = number<int>(PCLMIX_REF(folds));
    f["val_fold"] = number<int>(PCLMIX_REF(val_fold));
    f["out_dir"] = text(PCLMIX_REF(out_dir));
    f["tag"] = text(PCLMIX_REF(tag));
    f["seed"] = {
        [](const RunConfig& c) { return std::to_string(c.seed); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.seed = parse_number<std::uint64_t>(k, v);
          c.sync_seed();
        }};
    f["jobs"] = number<int>(PCLMIX_REF(jobs));
    return f;
  }();
  return table;
}

#undef PCLMIX_REF

}  // namespace

std::vector<std::string> valid_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : fields()) keys.push_back(k);
  return keys;
}

void set_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = fields();
  auto it = table.find(key);
  if (it == table.end()) {
    std::string list;
    for (const auto& k : valid_keys()) list += (list.empty() ? "" : ", ") + k;
    throw Error(fmt::format("unknown config key '{}'; valid keys: {}", key, list));
  }
  it->second.set(cfg, key, value);
}

std::string serialize(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, field] : fields()) out += k + "=" + field.get(cfg) + "\n";
  return out;
}

void apply_text(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(fmt::format("config line {} is not key=value: '{}'", lineno, line));
    }
    set_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

RunConfig parse(const std::string& text) {
  RunConfig cfg;
  apply_text(cfg, text);
  return cfg;
}

RunConfig load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void save_file(const std::filesystem::path& path, const RunConfig& cfg) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize(cfg);
}

}  // namespace pclmix::config
