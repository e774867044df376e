#pragma once

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "cmfd/nn/backbone.hpp"
#include "cmfd/tensor.hpp"

namespace cmfd::nn {

inline nlohmann::json backbone_config_to_json(const BackboneConfig& cfg) {
  return {{"t", cfg.t},
          {"attention_enabled", cfg.attention_enabled},
          {"extractor", cfg.extractor},
          {"aspp_rates", {cfg.aspp_rates[0], cfg.aspp_rates[1], cfg.aspp_rates[2]}},
          {"aspp_channels", cfg.aspp_channels},
          {"init_seed", cfg.init_seed}};
}

inline BackboneConfig backbone_config_from_json(const nlohmann::json& j) {
  BackboneConfig cfg;
  cfg.t = j.value("t", cfg.t);
  cfg.attention_enabled = j.value("attention_enabled", cfg.attention_enabled);
  cfg.extractor = j.value("extractor", cfg.extractor);
  if (j.contains("aspp_rates")) {
    for (int i = 0; i < 3; ++i) cfg.aspp_rates[i] = j["aspp_rates"][i];
  }
  cfg.aspp_channels = j.value("aspp_channels", cfg.aspp_channels);
  cfg.init_seed = j.value("init_seed", cfg.init_seed);
  return cfg;
}

// Versioned checkpoint: magic, version, JSON header (config + named tensor
// directory), then raw little-endian doubles in directory order.
constexpr char kCheckpointMagic[8] = {'C', 'M', 'F', 'D', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, SelfMatchNet& net) {
  require(net.initialized(), "save_checkpoint: network not initialized");
  auto params = net.params();
  nlohmann::json header;
  header["config"] = backbone_config_to_json(net.config());
  nlohmann::json tensors = nlohmann::json::array();
  for (const Param* p : params) {
    tensors.push_back({{"name", p->name},
                       {"c", p->value.channels()},
                       {"h", p->value.height()},
                       {"w", p->value.width()}});
  }
  header["tensors"] = tensors;
  std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kCheckpointMagic, 8);
  uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), (std::streamsize)header_str.size());
  for (const Param* p : params) {
    out.write(reinterpret_cast<const char*>(p->value.data()),
              (std::streamsize)(p->value.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline SelfMatchNet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kCheckpointVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(version));
  }
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  in.read(header_str.data(), (std::streamsize)len);
  nlohmann::json header = nlohmann::json::parse(header_str);

  SelfMatchNet net(backbone_config_from_json(header["config"]));
  auto params = net.params();
  const auto& tensors = header["tensors"];
  require(tensors.size() == params.size(), "load_checkpoint: parameter count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    require(t["name"] == params[i]->name, "load_checkpoint: parameter order mismatch at " +
                                              params[i]->name);
    require(t["c"] == params[i]->value.channels() && t["h"] == params[i]->value.height() &&
                t["w"] == params[i]->value.width(),
            "load_checkpoint: shape mismatch for " + params[i]->name);
    in.read(reinterpret_cast<char*>(params[i]->value.data()),
            (std::streamsize)(params[i]->value.size() * sizeof(double)));
  }
  if (!in) throw std::runtime_error("load_checkpoint: truncated file " + path);
  net.mark_initialized();
  return net;
}

}  // namespace cmfd::nn
