// Copyright 2026 The SK-Net Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sknet/model.hpp"

namespace sknet {

inline constexpr const char* kCheckpointFormat = "sknet-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct BufferSnapshot {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  bool initialized = false;
};

/// Model configuration, parameter arrays and batch-norm statistics, plus
/// free-form metadata (epoch, metric, seed).
struct Checkpoint {
  ModelConfig config;
  std::map<std::string, std::vector<double>> parameters;
  std::map<std::string, BufferSnapshot> buffers;
  nlohmann::json meta = nlohmann::json::object();
};

inline Checkpoint snapshot(SkNet& model, nlohmann::json meta = nlohmann::json::object()) {
  Checkpoint ck;
  ck.config = model.config();
  for (const auto& p : model.parameters()) {
    const auto d = p.tensor.data();
    ck.parameters[p.name].assign(d.begin(), d.end());
  }
  for (const auto& b : model.batch_norm_states())
    ck.buffers[b.name] = {b.state->running_mean, b.state->running_var, b.state->initialized};
  ck.meta = std::move(meta);
  return ck;
}

/// Copies checkpoint values into `model`. The model's configuration must hash
/// identically to the checkpoint's.
inline void restore(SkNet& model, const Checkpoint& ck) {
  const std::string want = model_config_hash(ck.config);
  const std::string have = model_config_hash(model.config());
  require<ConfigError>(want == have, "checkpoint config hash ", want, " does not match model config hash ", have);
  for (auto& p : model.parameters()) {
    const auto it = ck.parameters.find(p.name);
    require<ConfigError>(it != ck.parameters.end(), "checkpoint is missing parameter '", p.name, "'");
    auto dst = p.tensor.data_mut();
    require<ConfigError>(it->second.size() == dst.size(), "checkpoint parameter '", p.name, "' has ",
                         it->second.size(), " values, model expects ", dst.size());
    std::copy(it->second.begin(), it->second.end(), dst.begin());
  }
  for (auto& b : model.batch_norm_states()) {
    const auto it = ck.buffers.find(b.name);
    require<ConfigError>(it != ck.buffers.end(), "checkpoint is missing buffer '", b.name, "'");
    b.state->running_mean = it->second.running_mean;
    b.state->running_var = it->second.running_var;
    b.state->initialized = it->second.initialized;
  }
}

inline std::unique_ptr<SkNet> model_from_checkpoint(const Checkpoint& ck) {
  auto model = std::make_unique<SkNet>(ck.config, 0);
  restore(*model, ck);
  return model;
}

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = model_config_text(ck.config);
  j["config_hash"] = model_config_hash(ck.config);
  j["parameters"] = ck.parameters;
  nlohmann::json buffers = nlohmann::json::object();
  for (const auto& [name, b] : ck.buffers)
    buffers[name] = {{"running_mean", b.running_mean}, {"running_var", b.running_var}, {"initialized", b.initialized}};
  j["buffers"] = buffers;
  j["meta"] = ck.meta;
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    require<ConfigError>(j.at("format") == kCheckpointFormat, "not an sknet checkpoint");
    require<ConfigError>(j.at("version") == kCheckpointVersion, "unsupported checkpoint version ",
                         j.at("version").dump());
    Checkpoint ck;
    ck.config = model_config_from_text(j.at("config").get<std::string>());
    const std::string hash = j.at("config_hash").get<std::string>();
    require<ConfigError>(hash == model_config_hash(ck.config), "checkpoint config hash ", hash,
                         " does not match its stored config");
    ck.parameters = j.at("parameters").get<std::map<std::string, std::vector<double>>>();
    for (const auto& [name, b] : j.at("buffers").items())
      ck.buffers[name] = {b.at("running_mean").get<std::vector<double>>(),
                          b.at("running_var").get<std::vector<double>>(), b.at("initialized").get<bool>()};
    if (j.contains("meta")) ck.meta = j.at("meta");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    raise<ConfigError>("malformed checkpoint: ", e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write checkpoint ", path.string());
  out << checkpoint_to_json(ck).dump() << '\n';
  require(static_cast<bool>(out), "failed writing checkpoint ", path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require<ConfigError>(static_cast<bool>(in), "cannot open checkpoint ", path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise<ConfigError>("checkpoint ", path.string(), " is not valid JSON: ", e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace sknet
