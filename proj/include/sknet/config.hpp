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

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sknet/dataio.hpp"
#include "sknet/error.hpp"

namespace sknet {

enum class Task { classification, segmentation };
enum class PdFeatures { both, detail, pattern };
enum class LocalSampling { knn, ball };
enum class KeypointSource { learned, fps, random };

/// Architecture hyperparameters. Hidden widths only: the 3*M Skeypoint
/// regression layer and the n_classes logit layer are appended implicitly.
struct ModelConfig {
  std::size_t n_points = 1024;
  std::size_t n_skeypoints = 192;
  std::size_t detail_k = 32;
  std::size_t pattern_k = 16;
  std::vector<std::size_t> point_mlp_widths = {64, 64, 64, 128, 512};
  std::vector<std::size_t> skeypoint_fc_widths = {256, 256};
  std::vector<std::size_t> detail_mlp_widths = {64, 128, 256};
  std::vector<std::size_t> pattern_mlp_widths = {64, 128, 256};
  std::vector<std::size_t> pd_fc_widths = {512, 512};
  std::vector<std::size_t> head_widths = {256, 128};
  double head_dropout = 0.5;
  std::size_t n_classes = 4;
  bool with_normals = false;
  Task task = Task::classification;
  bool recenter_local = true;
  PdFeatures pd_features = PdFeatures::both;
  LocalSampling local_sampling = LocalSampling::knn;
  double ball_radius = 0.2;
  KeypointSource keypoint_source = KeypointSource::learned;
  double keypoint_jitter = 0.01;

  std::size_t input_channels() const { return with_normals ? 6 : 3; }

  void validate() const {
    auto positive = [](const std::vector<std::size_t>& ws, const char* name) {
      require<ConfigError>(!ws.empty(), name, " must not be empty");
      for (auto w : ws) require<ConfigError>(w >= 1, name, " entries must be >= 1");
    };
    positive(point_mlp_widths, "model.point_mlp_widths");
    positive(detail_mlp_widths, "model.detail_mlp_widths");
    positive(pattern_mlp_widths, "model.pattern_mlp_widths");
    positive(pd_fc_widths, "model.pd_fc_widths");
    for (auto w : skeypoint_fc_widths) require<ConfigError>(w >= 1, "model.skeypoint_fc_widths entries must be >= 1");
    for (auto w : head_widths) require<ConfigError>(w >= 1, "model.head_widths entries must be >= 1");
    require<ConfigError>(n_skeypoints >= 1, "model.n_skeypoints must be >= 1");
    require<ConfigError>(detail_k >= 1, "model.detail_k (H) must be >= 1");
    require<ConfigError>(pattern_k >= 1 && pattern_k <= n_skeypoints, "model.pattern_k (K=", pattern_k,
                         ") must lie in [1, n_skeypoints=", n_skeypoints, "]");
    require<ConfigError>(detail_k <= n_points, "model.detail_k (H=", detail_k,
                         ") exceeds model.n_points (", n_points, ")");
    require<ConfigError>(n_classes >= 1, "model.n_classes must be >= 1");
    require<ConfigError>(head_dropout >= 0.0 && head_dropout < 1.0, "model.head_dropout not in [0,1)");
    require<ConfigError>(ball_radius > 0.0, "model.ball_radius must be positive");
    require<ConfigError>(keypoint_jitter >= 0.0, "model.keypoint_jitter must be >= 0");
    if (task == Task::segmentation)
      require<ConfigError>(n_skeypoints >= 3, "segmentation interpolation needs >= 3 Skeypoints");
    if (keypoint_source != KeypointSource::learned)
      require<ConfigError>(n_skeypoints <= n_points, "baseline keypoints: n_skeypoints exceeds n_points");
  }
};

/// Regulating-loss thresholds (squared-distance units by default) and weights.
struct LossConfig {
  double delta = 0.05;
  double theta = 0.05;
  double weight_task = 1.0;
  double weight_sep = 1.0;
  double weight_close = 1.0;
  bool thresholds_are_squared = true;

  double delta_sq() const { return thresholds_are_squared ? delta : delta * delta; }
  double theta_sq() const { return thresholds_are_squared ? theta : theta * theta; }

  void validate() const {
    require<ConfigError>(delta > 0.0, "loss.delta must be > 0");
    require<ConfigError>(theta >= 0.0, "loss.theta must be >= 0");
    require<ConfigError>(weight_task >= 0.0 && weight_sep >= 0.0 && weight_close >= 0.0,
                         "loss weights must be >= 0");
  }
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  double learning_rate = 0.001;
  double decay_rate = 0.7;
  std::size_t decay_epochs = 20;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  bool augment_rotation_z = false;
  double augment_jitter_sigma = 0.0;
  double augment_jitter_clip = 0.05;
  std::size_t eval_batch_size = 16;

  void validate() const {
    require<ConfigError>(epochs >= 1, "train.epochs must be >= 1");
    require<ConfigError>(batch_size >= 1 && eval_batch_size >= 1, "batch sizes must be >= 1");
    require<ConfigError>(learning_rate > 0.0, "train.learning_rate must be > 0");
    require<ConfigError>(decay_rate > 0.0 && decay_rate <= 1.0, "train.decay_rate not in (0,1]");
    require<ConfigError>(decay_epochs >= 1, "train.decay_epochs must be >= 1");
  }
};

enum class DataSource { synthetic, manifest };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  std::string train_manifest;
  std::string test_manifest;
  bool normalize = true;
  std::size_t synth_train_per_class = 100;
  std::size_t synth_test_per_class = 25;
  std::size_t synth_points = 1024;
  double synth_noise = 0.01;
  std::uint64_t synth_seed = 7;

  void validate() const {
    if (source == DataSource::manifest)
      require<ConfigError>(!train_manifest.empty() && !test_manifest.empty(),
                           "data.train_manifest and data.test_manifest are required for manifest data");
    else
      require<ConfigError>(synth_train_per_class >= 1 && synth_test_per_class >= 1 && synth_points >= 16,
                           "invalid synthetic dataset sizes");
  }
};

/// Everything one run needs; serialized to the run directory before compute.
struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  DataConfig data;
  std::string output_dir = "runs/latest";

  void validate() const {
    model.validate();
    loss.validate();
    train.validate();
    data.validate();
  }
};

// ---------------------------------------------------------------------------
// Text format: `[section]` headers, `key = value` lines, `#` comments.
// Keys are addressed as `section.key`. Values are integers, decimals,
// true/false, bare or double-quoted strings, or `[a, b, c]` integer lists.
// ---------------------------------------------------------------------------

namespace config_detail {

inline std::string_view strip(std::string_view s) { return data::detail::trim(s); }

inline std::string unquote(std::string_view raw) {
  raw = strip(raw);
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') return std::string(raw.substr(1, raw.size() - 2));
  return std::string(raw);
}

inline std::size_t to_size(std::string_view raw, const std::string& key) {
  raw = strip(raw);
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  require<ConfigError>(ec == std::errc() && p == raw.data() + raw.size(), key,
                       ": expected a non-negative integer, got '", raw, "'");
  return v;
}

inline std::uint64_t to_u64(std::string_view raw, const std::string& key) {
  raw = strip(raw);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  require<ConfigError>(ec == std::errc() && p == raw.data() + raw.size(), key,
                       ": expected an unsigned integer, got '", raw, "'");
  return v;
}

inline double to_double(std::string_view raw, const std::string& key) {
  raw = strip(raw);
  double v = 0.0;
  auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  require<ConfigError>(ec == std::errc() && p == raw.data() + raw.size(), key,
                       ": expected a number, got '", raw, "'");
  return v;
}

inline bool to_bool(std::string_view raw, const std::string& key) {
  raw = strip(raw);
  if (raw == "true") return true;
  if (raw == "false") return false;
  raise<ConfigError>(key, ": expected true or false, got '", raw, "'");
}

inline std::vector<std::size_t> to_sizes(std::string_view raw, const std::string& key) {
  raw = strip(raw);
  require<ConfigError>(raw.size() >= 2 && raw.front() == '[' && raw.back() == ']', key,
                       ": expected a list like [64, 128], got '", raw, "'");
  std::vector<std::size_t> out;
  for (auto tok : data::detail::split_tokens(raw.substr(1, raw.size() - 2), ", \t"))
    out.push_back(to_size(tok, key));
  return out;
}

inline std::string from_sizes(const std::vector<std::size_t>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + "]";
}

inline std::string quote(const std::string& s) { return "\"" + s + "\""; }

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

template <typename E, std::size_t N>
E to_enum(std::string_view raw, const std::string& key, const EnumName<E> (&names)[N]) {
  const std::string v = unquote(raw);
  std::string allowed;
  for (const auto& n : names) {
    if (v == n.name) return n.value;
    allowed += (allowed.empty() ? "" : "|") + std::string(n.name);
  }
  raise<ConfigError>(key, ": expected ", allowed, ", got '", v, "'");
}

template <typename E, std::size_t N>
std::string from_enum(E value, const EnumName<E> (&names)[N]) {
  for (const auto& n : names)
    if (n.value == value) return quote(n.name);
  return "\"?\"";
}

inline constexpr EnumName<Task> kTasks[] = {{Task::classification, "classification"},
                                            {Task::segmentation, "segmentation"}};
inline constexpr EnumName<PdFeatures> kPdFeatures[] = {
    {PdFeatures::both, "both"}, {PdFeatures::detail, "detail"}, {PdFeatures::pattern, "pattern"}};
inline constexpr EnumName<LocalSampling> kSamplings[] = {{LocalSampling::knn, "knn"},
                                                         {LocalSampling::ball, "ball"}};
inline constexpr EnumName<KeypointSource> kSources[] = {{KeypointSource::learned, "learned"},
                                                        {KeypointSource::fps, "fps"},
                                                        {KeypointSource::random, "random"}};
inline constexpr EnumName<DataSource> kDataSources[] = {{DataSource::synthetic, "synthetic"},
                                                        {DataSource::manifest, "manifest"}};

struct Field {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SKNET_SIZE(sec, name)                                                              \
  Field{#sec "." #name, [](RunConfig& c, std::string_view v) { c.sec.name = to_size(v, #sec "." #name); }, \
        [](const RunConfig& c) { return std::to_string(c.sec.name); }}
#define SKNET_U64(sec, name)                                                               \
  Field{#sec "." #name, [](RunConfig& c, std::string_view v) { c.sec.name = to_u64(v, #sec "." #name); }, \
        [](const RunConfig& c) { return std::to_string(c.sec.name); }}
#define SKNET_DOUBLE(sec, name)                                                            \
  Field{#sec "." #name,                                                                    \
        [](RunConfig& c, std::string_view v) { c.sec.name = to_double(v, #sec "." #name); },  \
        [](const RunConfig& c) { return data::format_double(c.sec.name); }}
#define SKNET_BOOL(sec, name)                                                              \
  Field{#sec "." #name, [](RunConfig& c, std::string_view v) { c.sec.name = to_bool(v, #sec "." #name); }, \
        [](const RunConfig& c) { return std::string(c.sec.name ? "true" : "false"); }}
#define SKNET_SIZES(sec, name)                                                             \
  Field{#sec "." #name,                                                                    \
        [](RunConfig& c, std::string_view v) { c.sec.name = to_sizes(v, #sec "." #name); },   \
        [](const RunConfig& c) { return from_sizes(c.sec.name); }}
#define SKNET_STRING(sec, name)                                                            \
  Field{#sec "." #name, [](RunConfig& c, std::string_view v) { c.sec.name = unquote(v); }, \
        [](const RunConfig& c) { return quote(c.sec.name); }}
#define SKNET_ENUM(sec, name, table)                                                       \
  Field{#sec "." #name,                                                                    \
        [](RunConfig& c, std::string_view v) { c.sec.name = to_enum(v, #sec "." #name, table); }, \
        [](const RunConfig& c) { return from_enum(c.sec.name, table); }}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SKNET_SIZE(model, n_points),
      SKNET_SIZE(model, n_skeypoints),
      SKNET_SIZE(model, detail_k),
      SKNET_SIZE(model, pattern_k),
      SKNET_SIZES(model, point_mlp_widths),
      SKNET_SIZES(model, skeypoint_fc_widths),
      SKNET_SIZES(model, detail_mlp_widths),
      SKNET_SIZES(model, pattern_mlp_widths),
      SKNET_SIZES(model, pd_fc_widths),
      SKNET_SIZES(model, head_widths),
      SKNET_DOUBLE(model, head_dropout),
      SKNET_SIZE(model, n_classes),
      SKNET_BOOL(model, with_normals),
      SKNET_ENUM(model, task, kTasks),
      SKNET_BOOL(model, recenter_local),
      SKNET_ENUM(model, pd_features, kPdFeatures),
      SKNET_ENUM(model, local_sampling, kSamplings),
      SKNET_DOUBLE(model, ball_radius),
      SKNET_ENUM(model, keypoint_source, kSources),
      SKNET_DOUBLE(model, keypoint_jitter),
      SKNET_DOUBLE(loss, delta),
      SKNET_DOUBLE(loss, theta),
      SKNET_DOUBLE(loss, weight_task),
      SKNET_DOUBLE(loss, weight_sep),
      SKNET_DOUBLE(loss, weight_close),
      SKNET_BOOL(loss, thresholds_are_squared),
      SKNET_SIZE(train, epochs),
      SKNET_SIZE(train, batch_size),
      SKNET_DOUBLE(train, learning_rate),
      SKNET_DOUBLE(train, decay_rate),
      SKNET_SIZE(train, decay_epochs),
      SKNET_DOUBLE(train, beta1),
      SKNET_DOUBLE(train, beta2),
      SKNET_DOUBLE(train, adam_eps),
      SKNET_U64(train, seed),
      SKNET_BOOL(train, augment_rotation_z),
      SKNET_DOUBLE(train, augment_jitter_sigma),
      SKNET_DOUBLE(train, augment_jitter_clip),
      SKNET_SIZE(train, eval_batch_size),
      SKNET_ENUM(data, source, kDataSources),
      SKNET_STRING(data, train_manifest),
      SKNET_STRING(data, test_manifest),
      SKNET_BOOL(data, normalize),
      SKNET_SIZE(data, synth_train_per_class),
      SKNET_SIZE(data, synth_test_per_class),
      SKNET_SIZE(data, synth_points),
      SKNET_DOUBLE(data, synth_noise),
      SKNET_U64(data, synth_seed),
      Field{"run.output_dir", [](RunConfig& c, std::string_view v) { c.output_dir = unquote(v); },
            [](const RunConfig& c) { return quote(c.output_dir); }},
  };
  return table;
}

#undef SKNET_SIZE
#undef SKNET_U64
#undef SKNET_DOUBLE
#undef SKNET_BOOL
#undef SKNET_SIZES
#undef SKNET_STRING
#undef SKNET_ENUM

inline std::string section_of(const std::string& key) { return key.substr(0, key.find('.')); }

}  // namespace config_detail

/// Sets one dotted key from its textual value.
inline void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : config_detail::fields())
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  raise<ConfigError>("unknown config key '", key, "'");
}

/// Applies a `key=value` override as given on the command line.
inline void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  require<ConfigError>(eq != std::string_view::npos, "override '", assignment,
                       "' is not of the form key=value");
  set_config_value(cfg, config_detail::strip(assignment.substr(0, eq)),
                   config_detail::strip(assignment.substr(eq + 1)));
}

/// Parses config text on top of the current values in `cfg`.
inline void parse_config(std::istream& in, RunConfig& cfg) {
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view body = config_detail::strip(line);
    // '#' starts a comment unless inside a quoted string.
    bool quoted = false;
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (body[i] == '"') quoted = !quoted;
      if (body[i] == '#' && !quoted) {
        body = config_detail::strip(body.substr(0, i));
        break;
      }
    }
    if (body.empty()) continue;
    if (body.front() == '[' && body.find('=') == std::string_view::npos) {
      if (body.back() != ']') throw ConfigError(concat_message("line ", lineno, ": malformed section header"));
      section = std::string(config_detail::strip(body.substr(1, body.size() - 2)));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(concat_message("line ", lineno, ": expected key = value"));
    std::string key(config_detail::strip(body.substr(0, eq)));
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    try {
      set_config_value(cfg, key, config_detail::strip(body.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(concat_message("line ", lineno, ": ", e.what()));
    }
  }
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream in(path);
  require<ConfigError>(in.good(), "cannot open config file ", path.string());
  try {
    parse_config(in, base);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return base;
}

/// Canonical text of every field, grouped by section, in a fixed order.
/// `only_section` restricts the output to one section.
inline std::string config_to_text(const RunConfig& cfg, std::string_view only_section = {}) {
  std::ostringstream out;
  std::string current;
  for (const auto& f : config_detail::fields()) {
    const std::string sec = config_detail::section_of(f.key);
    if (!only_section.empty() && sec != only_section) continue;
    if (sec != current) {
      if (!current.empty()) out << '\n';
      out << '[' << sec << "]\n";
      current = sec;
    }
    out << f.key.substr(sec.size() + 1) << " = " << f.get(cfg) << '\n';
  }
  return out.str();
}

inline std::string model_config_text(const ModelConfig& model) {
  RunConfig cfg;
  cfg.model = model;
  return config_to_text(cfg, "model");
}

inline ModelConfig model_config_from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  parse_config(in, cfg);
  return cfg.model;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string model_config_hash(const ModelConfig& model) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(model_config_text(model))));
  return buf;
}

}  // namespace sknet
