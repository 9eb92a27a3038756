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

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sknet/error.hpp"
#include "sknet/geometry.hpp"
#include "sknet/ops.hpp"
#include "sknet/tensor.hpp"

namespace sknet::data {

/// N points with optional normals, class label and per-point labels.
struct PointCloud {
  std::vector<double> coords;                  // N x 3
  std::optional<std::vector<double>> normals;  // N x 3
  std::optional<int> class_label;
  std::optional<std::vector<int>> point_labels;  // N

  std::size_t size() const { return coords.size() / 3; }
  geometry::PointsView view() const { return geometry::PointsView(coords); }

  /// Keeps the listed points, in the listed order, with attributes in sync.
  PointCloud select(std::span<const std::size_t> indices) const {
    PointCloud out;
    out.class_label = class_label;
    out.coords.reserve(indices.size() * 3);
    if (normals) out.normals.emplace().reserve(indices.size() * 3);
    if (point_labels) out.point_labels.emplace().reserve(indices.size());
    for (std::size_t i : indices) {
      require(i < size(), "select: index ", i, " out of range ", size());
      out.coords.insert(out.coords.end(), coords.begin() + 3 * i, coords.begin() + 3 * i + 3);
      if (normals)
        out.normals->insert(out.normals->end(), normals->begin() + 3 * i,
                            normals->begin() + 3 * i + 3);
      if (point_labels) out.point_labels->push_back((*point_labels)[i]);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Text formats
// ---------------------------------------------------------------------------

enum class FileFormat { automatic, ply, off, xyz_csv };

/// Shortest decimal text that reads back to the identical double.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_tokens(std::string_view s, std::string_view seps) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto start = s.find_first_not_of(seps, pos);
    if (start == std::string_view::npos) break;
    auto end = s.find_first_of(seps, start);
    if (end == std::string_view::npos) end = s.size();
    out.push_back(s.substr(start, end - start));
    pos = end;
  }
  return out;
}

inline double parse_number(std::string_view token, std::size_t line) {
  double v = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw ParseError("invalid number '" + std::string(token) + "'", line);
  if (!std::isfinite(v)) throw ParseError("non-finite coordinate '" + std::string(token) + "'", line);
  return v;
}

inline std::size_t parse_count(std::string_view token, std::size_t line) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw ParseError("invalid count '" + std::string(token) + "'", line);
  return v;
}

}  // namespace detail

/// One `x,y,z` triple per line; blank lines are skipped.
inline PointCloud read_xyz_csv(std::istream& in) {
  PointCloud pc;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto fields = detail::split_tokens(body, ", \t");
    if (fields.size() != 3) throw ParseError("expected 3 comma-separated values", lineno);
    for (const auto& f : fields) pc.coords.push_back(detail::parse_number(f, lineno));
  }
  if (pc.size() == 0) throw ParseError("xyz-csv: no points", lineno);
  return pc;
}

/// ASCII PLY. Reads x y z, optional nx ny nz and an optional integer `label`
/// from the vertex element; other properties and elements are skipped.
inline PointCloud read_ply(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&](bool required) -> bool {
    if (std::getline(in, line)) {
      ++lineno;
      return true;
    }
    if (required) throw ParseError("unexpected end of file", lineno + 1);
    return false;
  };
  next_line(true);
  if (detail::trim(line) != "ply") throw ParseError("missing 'ply' magic", lineno);

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> properties;
  };
  std::vector<Element> elements;
  bool ascii = false;
  while (true) {
    next_line(true);
    const auto tok = detail::split_tokens(detail::trim(line), " \t");
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() < 2) throw ParseError("malformed format line", lineno);
      if (tok[1] != "ascii") throw ParseError("unsupported PLY encoding '" + std::string(tok[1]) + "'", lineno);
      ascii = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError("malformed element line", lineno);
      elements.push_back({std::string(tok[1]), detail::parse_count(tok[2], lineno), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseError("property before any element", lineno);
      if (tok.size() >= 2 && tok[1] == "list") {
        elements.back().properties.push_back("<list>");
      } else {
        if (tok.size() != 3) throw ParseError("malformed property line", lineno);
        elements.back().properties.emplace_back(tok[2]);
      }
    } else {
      throw ParseError("unknown header keyword '" + std::string(tok[0]) + "'", lineno);
    }
  }
  if (!ascii) throw ParseError("missing format line", lineno);

  PointCloud pc;
  bool seen_vertex = false;
  for (const Element& el : elements) {
    if (el.name != "vertex") {
      for (std::size_t i = 0; i < el.count; ++i) next_line(true);
      continue;
    }
    seen_vertex = true;
    auto find = [&](const char* name) -> std::optional<std::size_t> {
      auto it = std::find(el.properties.begin(), el.properties.end(), name);
      if (it == el.properties.end()) return std::nullopt;
      return static_cast<std::size_t>(it - el.properties.begin());
    };
    const auto px = find("x"), py = find("y"), pz = find("z");
    if (!px || !py || !pz) throw ParseError("vertex element lacks x/y/z", lineno);
    const auto nx = find("nx"), ny = find("ny"), nz = find("nz");
    const bool has_normals = nx && ny && nz;
    const auto plabel = find("label");
    if (has_normals) pc.normals.emplace();
    if (plabel) pc.point_labels.emplace();
    for (std::size_t i = 0; i < el.count; ++i) {
      next_line(true);
      const auto tok = detail::split_tokens(detail::trim(line), " \t");
      if (tok.size() != el.properties.size())
        throw ParseError("expected " + std::to_string(el.properties.size()) + " vertex values, got " +
                             std::to_string(tok.size()),
                         lineno);
      for (auto p : {*px, *py, *pz}) pc.coords.push_back(detail::parse_number(tok[p], lineno));
      if (has_normals)
        for (auto p : {*nx, *ny, *nz}) pc.normals->push_back(detail::parse_number(tok[p], lineno));
      if (plabel) pc.point_labels->push_back(static_cast<int>(detail::parse_number(tok[*plabel], lineno)));
    }
  }
  if (!seen_vertex) throw ParseError("no vertex element", lineno);
  if (pc.size() == 0) throw ParseError("PLY: no points", lineno);
  return pc;
}

/// OFF mesh; vertices are kept, faces ignored.
inline PointCloud read_off(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next_content = [&]() -> std::string_view {
    while (std::getline(in, line)) {
      ++lineno;
      auto body = detail::trim(line);
      if (const auto hash = body.find('#'); hash != std::string_view::npos)
        body = detail::trim(body.substr(0, hash));
      if (!body.empty()) return body;
    }
    throw ParseError("unexpected end of file", lineno + 1);
  };
  auto header = next_content();
  if (header.substr(0, 3) != "OFF") throw ParseError("missing 'OFF' magic", lineno);
  // Some exporters glue the counts onto the magic: "OFF490 518 0".
  auto rest = detail::trim(header.substr(3));
  if (rest.empty()) rest = next_content();
  const auto counts = detail::split_tokens(rest, " \t");
  if (counts.size() < 2) throw ParseError("malformed OFF counts line", lineno);
  const std::size_t nv = detail::parse_count(counts[0], lineno);
  PointCloud pc;
  pc.coords.reserve(nv * 3);
  for (std::size_t i = 0; i < nv; ++i) {
    const auto tok = detail::split_tokens(next_content(), " \t");
    if (tok.size() < 3) throw ParseError("vertex line needs 3 coordinates", lineno);
    for (std::size_t k = 0; k < 3; ++k) pc.coords.push_back(detail::parse_number(tok[k], lineno));
  }
  if (pc.size() == 0) throw ParseError("OFF: no vertices", lineno);
  return pc;
}

inline FileFormat detect_format(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ply") return FileFormat::ply;
  if (ext == ".off") return FileFormat::off;
  if (ext == ".csv" || ext == ".xyz" || ext == ".txt") return FileFormat::xyz_csv;
  raise("unsupported point file format '", ext, "' for ", path.string());
}

inline FileFormat parse_format(std::string_view name) {
  if (name == "auto") return FileFormat::automatic;
  if (name == "ply") return FileFormat::ply;
  if (name == "off") return FileFormat::off;
  if (name == "xyz-csv") return FileFormat::xyz_csv;
  raise("unsupported format '", name, "'");
}

inline PointCloud load_point_file(const std::filesystem::path& path,
                                  FileFormat format = FileFormat::automatic) {
  if (format == FileFormat::automatic) format = detect_format(path);
  std::ifstream in(path);
  require(in.good(), "cannot open ", path.string());
  try {
    switch (format) {
      case FileFormat::ply: return read_ply(in);
      case FileFormat::off: return read_off(in);
      case FileFormat::xyz_csv: return read_xyz_csv(in);
      case FileFormat::automatic: break;
    }
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.line());
  }
  raise("unsupported format");
}

using Rgb = std::array<int, 3>;

/// ASCII PLY with x y z, then nx ny nz / red green blue / label when given.
inline void write_ply(std::ostream& out, const PointCloud& pc,
                      const std::vector<Rgb>* colors = nullptr) {
  const std::size_t n = pc.size();
  require(!colors || colors->size() == n, "write_ply: ", colors ? colors->size() : 0,
          " colors for ", n, " points");
  out << "ply\nformat ascii 1.0\nelement vertex " << n << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (pc.normals) out << "property double nx\nproperty double ny\nproperty double nz\n";
  if (colors) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (pc.point_labels) out << "property int label\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < n; ++i) {
    out << format_double(pc.coords[3 * i]) << ' ' << format_double(pc.coords[3 * i + 1]) << ' '
        << format_double(pc.coords[3 * i + 2]);
    if (pc.normals)
      for (std::size_t k = 0; k < 3; ++k) out << ' ' << format_double((*pc.normals)[3 * i + k]);
    if (colors) out << ' ' << (*colors)[i][0] << ' ' << (*colors)[i][1] << ' ' << (*colors)[i][2];
    if (pc.point_labels) out << ' ' << (*pc.point_labels)[i];
    out << '\n';
  }
}

inline void write_ply(const std::filesystem::path& path, const PointCloud& pc,
                      const std::vector<Rgb>* colors = nullptr) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write ", path.string());
  write_ply(out, pc, colors);
  require(out.good(), "failed writing ", path.string());
}

inline void write_xyz_csv(std::ostream& out, const PointCloud& pc) {
  for (std::size_t i = 0; i < pc.size(); ++i)
    out << format_double(pc.coords[3 * i]) << ',' << format_double(pc.coords[3 * i + 1]) << ','
        << format_double(pc.coords[3 * i + 2]) << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic primitives
// ---------------------------------------------------------------------------

enum class SyntheticShape { sphere, box, cylinder, torus };

inline constexpr std::array<SyntheticShape, 4> kSyntheticShapes = {
    SyntheticShape::sphere, SyntheticShape::box, SyntheticShape::cylinder, SyntheticShape::torus};

inline const char* shape_name(SyntheticShape s) {
  switch (s) {
    case SyntheticShape::sphere: return "sphere";
    case SyntheticShape::box: return "box";
    case SyntheticShape::cylinder: return "cylinder";
    case SyntheticShape::torus: return "torus";
  }
  return "?";
}

inline SyntheticShape parse_shape(std::string_view name) {
  for (auto s : kSyntheticShapes)
    if (name == shape_name(s)) return s;
  raise<ConfigError>("unknown synthetic shape '", name, "'");
}

/// Part count of each primitive: sphere upper/lower hemisphere, box x/y/z
/// face pairs, cylinder top cap/bottom cap/side, torus outer/inner half.
inline int synthetic_part_count(SyntheticShape s) {
  switch (s) {
    case SyntheticShape::sphere: return 2;
    case SyntheticShape::box: return 3;
    case SyntheticShape::cylinder: return 3;
    case SyntheticShape::torus: return 2;
  }
  return 0;
}

inline constexpr double kTorusMajor = 0.7;
inline constexpr double kTorusMinor = 0.3;

/// Area-uniform samples on the surface of a unit-scale primitive, with
/// per-point part labels and Gaussian jitter of `noise_sigma` per axis.
template <typename Urbg>
PointCloud generate_synthetic(SyntheticShape shape, std::size_t n_points, double noise_sigma,
                              Urbg& rng) {
  require<ConfigError>(n_points >= 16, "generate_synthetic: need at least 16 points, got ",
                       n_points);
  require<ConfigError>(noise_sigma >= 0.0, "generate_synthetic: negative noise");
  constexpr double pi = std::numbers::pi;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  PointCloud pc;
  pc.coords.reserve(n_points * 3);
  pc.normals.emplace().reserve(n_points * 3);
  pc.point_labels.emplace().reserve(n_points);
  auto emit = [&](double x, double y, double z, double nx, double ny, double nz, int part) {
    pc.coords.insert(pc.coords.end(), {x, y, z});
    pc.normals->insert(pc.normals->end(), {nx, ny, nz});
    pc.point_labels->push_back(part);
  };
  for (std::size_t i = 0; i < n_points; ++i) {
    switch (shape) {
      case SyntheticShape::sphere: {
        double v[3];
        double r = 0.0;
        do {
          for (double& c : v) c = gauss(rng);
          r = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        } while (r < 1e-12);
        emit(v[0] / r, v[1] / r, v[2] / r, v[0] / r, v[1] / r, v[2] / r, v[2] >= 0.0 ? 0 : 1);
        break;
      }
      case SyntheticShape::box: {
        std::uniform_int_distribution<int> face(0, 5);
        const int f = face(rng);
        const int axis = f / 2;
        const double sign = (f % 2 == 0) ? 1.0 : -1.0;
        double p[3];
        double n[3] = {0.0, 0.0, 0.0};
        for (int k = 0; k < 3; ++k) p[k] = 2.0 * unit(rng) - 1.0;
        p[axis] = sign;
        n[axis] = sign;
        emit(p[0], p[1], p[2], n[0], n[1], n[2], axis);
        break;
      }
      case SyntheticShape::cylinder: {
        // Side area 4*pi against pi per cap.
        const double u = unit(rng) * 6.0;
        const double phi = 2.0 * pi * unit(rng);
        if (u < 4.0) {
          const double z = 2.0 * unit(rng) - 1.0;
          emit(std::cos(phi), std::sin(phi), z, std::cos(phi), std::sin(phi), 0.0, 2);
        } else {
          const double r = std::sqrt(unit(rng));
          const bool top = u < 5.0;
          emit(r * std::cos(phi), r * std::sin(phi), top ? 1.0 : -1.0, 0.0, 0.0, top ? 1.0 : -1.0,
               top ? 0 : 1);
        }
        break;
      }
      case SyntheticShape::torus: {
        // Rejection on the tube angle gives area-uniform samples.
        double theta = 0.0;
        do {
          theta = 2.0 * pi * unit(rng);
        } while (unit(rng) * (kTorusMajor + kTorusMinor) >
                 kTorusMajor + kTorusMinor * std::cos(theta));
        const double phi = 2.0 * pi * unit(rng);
        const double ring = kTorusMajor + kTorusMinor * std::cos(theta);
        emit(ring * std::cos(phi), ring * std::sin(phi), kTorusMinor * std::sin(theta),
             std::cos(theta) * std::cos(phi), std::cos(theta) * std::sin(phi), std::sin(theta),
             std::cos(theta) >= 0.0 ? 0 : 1);
        break;
      }
    }
  }
  if (noise_sigma > 0.0)
    for (double& c : pc.coords) c += noise_sigma * gauss(rng);
  return pc;
}

// ---------------------------------------------------------------------------
// Normalization and augmentation
// ---------------------------------------------------------------------------

/// Moves the centroid to the origin and divides by the largest absolute
/// coordinate, so every coordinate lands in [-1, 1]. A zero-extent cloud
/// collapses to the origin.
inline PointCloud normalize_unit_cube(PointCloud pc) {
  const std::size_t n = pc.size();
  if (n == 0) return pc;
  double centroid[3] = {0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 3; ++k) centroid[k] += pc.coords[3 * i + k];
  for (double& c : centroid) c /= static_cast<double>(n);
  double extent = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      double& c = pc.coords[3 * i + k];
      c -= centroid[k];
      extent = std::max(extent, std::abs(c));
    }
  if (extent == 0.0) {
    std::fill(pc.coords.begin(), pc.coords.end(), 0.0);
    return pc;
  }
  for (double& c : pc.coords) c /= extent;
  return pc;
}

struct AugmentSpec {
  bool rotation_z = false;
  double jitter_sigma = 0.0;
  double jitter_clip = 0.05;
  double dropout_ratio = 0.0;
};

inline constexpr std::size_t kMinCloudPoints = 16;

/// Random z rotation, clipped jitter, then random point removal.
template <typename Urbg>
PointCloud augment(const PointCloud& pc, const AugmentSpec& spec, Urbg& rng) {
  require<ConfigError>(spec.dropout_ratio >= 0.0 && spec.dropout_ratio < 1.0,
                       "augment: dropout_ratio ", spec.dropout_ratio, " not in [0,1)");
  PointCloud out = pc;
  if (spec.rotation_z) {
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    const double a = angle(rng);
    const double c = std::cos(a);
    const double s = std::sin(a);
    auto rotate = [c, s](std::vector<double>& v) {
      for (std::size_t i = 0; i + 2 < v.size(); i += 3) {
        const double x = v[i];
        const double y = v[i + 1];
        v[i] = c * x - s * y;
        v[i + 1] = s * x + c * y;
      }
    };
    rotate(out.coords);
    if (out.normals) rotate(*out.normals);
  }
  if (spec.jitter_sigma > 0.0) {
    std::normal_distribution<double> gauss(0.0, spec.jitter_sigma);
    for (double& v : out.coords) v += std::clamp(gauss(rng), -spec.jitter_clip, spec.jitter_clip);
  }
  if (spec.dropout_ratio > 0.0) {
    const std::size_t n = out.size();
    const auto drop = static_cast<std::size_t>(std::llround(spec.dropout_ratio * static_cast<double>(n)));
    const std::size_t keep = n - std::min(drop, n);
    require<ConfigError>(keep >= kMinCloudPoints, "augment: dropout leaves ", keep,
                         " points, need at least ", kMinCloudPoints);
    auto idx = geometry::random_dropout_sample(n, keep, rng);
    std::sort(idx.begin(), idx.end());
    out = out.select(idx);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Manifest entry: a file path (relative paths resolve against the manifest's
/// directory) or a synthetic recipe `synth:<shape>:<n_points>:<noise>:<seed>`.
struct ManifestEntry {
  std::string source;
  int label = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::string split = "train";
  std::vector<std::string> class_names;
  std::filesystem::path base_dir;
};

/// Text manifest: a `classes: a,b,c` header, an optional `split: train|test`
/// line, then `path<TAB>label` rows. Labels may be indices or class names.
inline DatasetManifest parse_manifest(std::istream& in, std::filesystem::path base_dir = {}) {
  DatasetManifest m;
  m.base_dir = std::move(base_dir);
  std::string line;
  std::size_t lineno = 0;
  bool have_classes = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty() || body[0] == '#') continue;
    if (body.starts_with("classes:")) {
      for (auto name : detail::split_tokens(body.substr(8), ", \t")) m.class_names.emplace_back(name);
      have_classes = true;
      continue;
    }
    if (body.starts_with("split:")) {
      m.split = std::string(detail::trim(body.substr(6)));
      if (m.split != "train" && m.split != "test") throw ParseError("split must be train or test", lineno);
      continue;
    }
    if (!have_classes) throw ParseError("entry before 'classes:' header", lineno);
    const auto tab = body.rfind('\t');
    if (tab == std::string_view::npos) throw ParseError("expected path<TAB>label", lineno);
    const auto path = detail::trim(body.substr(0, tab));
    const auto label_text = detail::trim(body.substr(tab + 1));
    int label = -1;
    auto [ptr, ec] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
    if (ec != std::errc() || ptr != label_text.data() + label_text.size()) {
      auto it = std::find(m.class_names.begin(), m.class_names.end(), label_text);
      if (it == m.class_names.end())
        throw ParseError("unknown label '" + std::string(label_text) + "'", lineno);
      label = static_cast<int>(it - m.class_names.begin());
    }
    if (label < 0 || static_cast<std::size_t>(label) >= m.class_names.size())
      throw ParseError("label " + std::to_string(label) + " outside class range", lineno);
    m.entries.push_back({std::string(path), label});
  }
  if (!have_classes) throw ParseError("manifest lacks 'classes:' header", lineno);
  return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open manifest ", path.string());
  try {
    return parse_manifest(in, path.parent_path());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.detail(), e.line());
  }
}

inline void write_manifest(std::ostream& out, const DatasetManifest& m) {
  out << "classes: ";
  for (std::size_t i = 0; i < m.class_names.size(); ++i) out << (i ? "," : "") << m.class_names[i];
  out << "\nsplit: " << m.split << "\n";
  for (const auto& e : m.entries) out << e.source << '\t' << e.label << '\n';
}

inline std::string synthetic_recipe(SyntheticShape shape, std::size_t n_points, double noise,
                                    std::uint64_t seed) {
  return concat_message("synth:", shape_name(shape), ":", n_points, ":", format_double(noise), ":",
                        seed);
}

/// In-memory point clouds plus the label vocabulary.
struct Dataset {
  std::vector<PointCloud> clouds;
  std::vector<std::string> class_names;
  /// Global part ids of each class, for segmentation metrics. May be empty.
  std::vector<std::vector<int>> class_parts;

  std::size_t size() const { return clouds.size(); }
};

inline PointCloud load_entry(const DatasetManifest& m, const ManifestEntry& e) {
  PointCloud pc;
  if (e.source.starts_with("synth:")) {
    const auto parts = detail::split_tokens(std::string_view(e.source).substr(6), ":");
    require<ConfigError>(parts.size() == 4, "bad synthetic recipe '", e.source, "'");
    const auto shape = parse_shape(parts[0]);
    const std::size_t n = detail::parse_count(parts[1], 0);
    const double noise = detail::parse_number(parts[2], 0);
    std::mt19937_64 rng(detail::parse_count(parts[3], 0));
    pc = generate_synthetic(shape, n, noise, rng);
  } else {
    std::filesystem::path p(e.source);
    if (p.is_relative() && !m.base_dir.empty()) p = m.base_dir / p;
    pc = load_point_file(p);
  }
  pc.class_label = e.label;
  return pc;
}

inline Dataset load_dataset(const DatasetManifest& m, bool normalize = true) {
  Dataset ds;
  ds.class_names = m.class_names;
  ds.clouds.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    PointCloud pc = load_entry(m, e);
    ds.clouds.push_back(normalize ? normalize_unit_cube(std::move(pc)) : std::move(pc));
  }
  return ds;
}

struct SyntheticSplitSpec {
  std::size_t per_class = 100;
  std::size_t n_points = 1024;
  double noise_sigma = 0.01;
  std::uint64_t seed = 1;
};

/// Manifest of synthetic recipes over the four primitives, class-interleaved.
inline DatasetManifest synthetic_manifest(const SyntheticSplitSpec& spec, const std::string& split) {
  DatasetManifest m;
  m.split = split;
  for (auto s : kSyntheticShapes) m.class_names.emplace_back(shape_name(s));
  std::mt19937_64 seeder(spec.seed);
  for (std::size_t i = 0; i < spec.per_class; ++i)
    for (std::size_t c = 0; c < kSyntheticShapes.size(); ++c)
      m.entries.push_back({synthetic_recipe(kSyntheticShapes[c], spec.n_points, spec.noise_sigma,
                                            seeder()),
                           static_cast<int>(c)});
  return m;
}

/// Remaps per-shape part labels to global ids (class offset + local part) and
/// fills `class_parts`.
inline void assign_global_parts(Dataset& ds) {
  ds.class_parts.clear();
  int offset = 0;
  std::vector<int> offsets;
  for (const auto& name : ds.class_names) {
    const int count = synthetic_part_count(parse_shape(name));
    std::vector<int> ids(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) ids[static_cast<std::size_t>(k)] = offset + k;
    ds.class_parts.push_back(std::move(ids));
    offsets.push_back(offset);
    offset += count;
  }
  for (auto& pc : ds.clouds) {
    require(pc.point_labels.has_value() && pc.class_label.has_value(),
            "assign_global_parts: cloud without part labels");
    for (int& l : *pc.point_labels) l += offsets[static_cast<std::size_t>(*pc.class_label)];
  }
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

struct Batch {
  Tensor coords;                  // [B, n_points, 3 or 6]
  std::vector<int> labels;        // B
  std::vector<int> point_labels;  // B * n_points, empty when unavailable
  std::vector<std::size_t> items;
};

/// Exactly `n_points` indices: a uniform subset without replacement when the
/// cloud is larger, every point plus uniform extras when it is smaller.
template <typename Urbg>
std::vector<std::size_t> resample_indices(std::size_t n, std::size_t n_points, Urbg& rng) {
  require(n > 0, "resample: empty cloud");
  if (n == n_points) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }
  if (n > n_points) return geometry::random_dropout_sample(n, n_points, rng);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  while (idx.size() < n_points) idx.push_back(pick(rng));
  return idx;
}

/// Packs clouds (already resampled to a common size) into one batch.
inline Batch make_batch(std::span<const PointCloud> clouds, bool with_normals) {
  require(!clouds.empty(), "make_batch: no clouds");
  const std::size_t n = clouds[0].size();
  const std::size_t channels = with_normals ? 6 : 3;
  Batch batch;
  std::vector<double> data;
  data.reserve(clouds.size() * n * channels);
  bool labelled = true;
  for (const auto& pc : clouds) {
    require(pc.size() == n, "make_batch: clouds of different sizes ", n, " and ", pc.size());
    require<ConfigError>(!with_normals || pc.normals.has_value(),
                         "make_batch: normals requested but missing");
    for (std::size_t i = 0; i < n; ++i) {
      data.insert(data.end(), pc.coords.begin() + 3 * i, pc.coords.begin() + 3 * i + 3);
      if (with_normals)
        data.insert(data.end(), pc.normals->begin() + 3 * i, pc.normals->begin() + 3 * i + 3);
    }
    batch.labels.push_back(pc.class_label.value_or(0));
    labelled = labelled && pc.point_labels.has_value();
  }
  if (labelled)
    for (const auto& pc : clouds)
      batch.point_labels.insert(batch.point_labels.end(), pc.point_labels->begin(),
                                pc.point_labels->end());
  batch.coords = Tensor::from_data({clouds.size(), n, channels}, std::move(data));
  return batch;
}

/// Deterministic stream of fixed-size batches over a dataset. The final
/// partial batch is emitted.
class BatchIterator {
 public:
  BatchIterator(const Dataset& dataset, std::size_t batch_size, std::size_t n_points, bool shuffle,
                std::uint64_t seed, bool with_normals = false, AugmentSpec augment = {})
      : dataset_(dataset),
        batch_size_(batch_size),
        n_points_(n_points),
        with_normals_(with_normals),
        augment_(augment),
        rng_(seed) {
    require<ConfigError>(dataset.size() > 0, "batch iterator over an empty dataset");
    require<ConfigError>(batch_size > 0 && n_points > 0, "batch size and n_points must be positive");
    order_.resize(dataset.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (shuffle) std::shuffle(order_.begin(), order_.end(), rng_);
  }

  std::size_t batch_count() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

  std::optional<Batch> next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
    std::vector<PointCloud> clouds;
    clouds.reserve(end - cursor_);
    std::vector<std::size_t> items;
    for (std::size_t k = cursor_; k < end; ++k) {
      const PointCloud& src = dataset_.clouds[order_[k]];
      const auto idx = resample_indices(src.size(), n_points_, rng_);
      PointCloud pc = src.select(idx);
      if (augment_.rotation_z || augment_.jitter_sigma > 0.0 || augment_.dropout_ratio > 0.0)
        pc = augment(pc, augment_, rng_);
      clouds.push_back(std::move(pc));
      items.push_back(order_[k]);
    }
    cursor_ = end;
    Batch b = make_batch(clouds, with_normals_);
    b.items = std::move(items);
    return b;
  }

 private:
  const Dataset& dataset_;
  std::size_t batch_size_;
  std::size_t n_points_;
  bool with_normals_;
  AugmentSpec augment_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace sknet::data
