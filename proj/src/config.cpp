/* Copyright 2026 The PFNet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "pfnet/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "pfnet/errors.hpp"

namespace pfnet {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("invalid value '" + std::string(v) + "' for " + std::string(key));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("invalid boolean '" + std::string(v) + "' for " + std::string(key));
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view v) {
  std::vector<std::size_t> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(parse_number<std::size_t>(key, trim(v.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

std::string format_list(std::span<const std::size_t> xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

struct Field {
  std::string key;
  std::function<std::string(RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename Access>
Field size_field(std::string key, Access acc) {
  return {key, [acc](RunConfig& c) { return std::to_string(acc(c)); },
          [acc, key](RunConfig& c, std::string_view v) { acc(c) = parse_number<std::size_t>(key, v); }};
}

template <typename Access>
Field u64_field(std::string key, Access acc) {
  return {key, [acc](RunConfig& c) { return std::to_string(acc(c)); },
          [acc, key](RunConfig& c, std::string_view v) { acc(c) = parse_number<std::uint64_t>(key, v); }};
}

template <typename Access>
Field double_field(std::string key, Access acc) {
  return {key, [acc](RunConfig& c) { return format_double(acc(c)); },
          [acc, key](RunConfig& c, std::string_view v) {
            const double d = parse_number<double>(key, v);
            if (!std::isfinite(d)) throw ConfigError(key + " must be finite");
            acc(c) = d;
          }};
}

template <typename Access>
Field bool_field(std::string key, Access acc) {
  return {key, [acc](RunConfig& c) { return std::string(acc(c) ? "true" : "false"); },
          [acc, key](RunConfig& c, std::string_view v) { acc(c) = parse_bool(key, v); }};
}

template <typename Access>
Field list_field(std::string key, Access acc) {
  return {key, [acc](RunConfig& c) { return format_list(acc(c)); },
          [acc, key](RunConfig& c, std::string_view v) {
            auto xs = parse_list(key, v);
            auto& dst = acc(c);
            if constexpr (requires { dst.assign(xs.begin(), xs.end()); }) {
              dst.assign(xs.begin(), xs.end());
            } else {
              if (xs.size() != dst.size()) {
                throw ConfigError(key + " expects " + std::to_string(dst.size()) + " values");
              }
              std::copy(xs.begin(), xs.end(), dst.begin());
            }
          }};
}

template <typename Access, typename Parse>
Field enum_field(std::string key, Access acc, Parse parse) {
  return {key, [acc](RunConfig& c) { return std::string(to_string(acc(c))); },
          [acc, parse, key](RunConfig& c, std::string_view v) {
            try {
              acc(c) = parse(v);
            } catch (const std::invalid_argument& e) {
              throw ConfigError(key + ": " + e.what());
            }
          }};
}

std::string_view texture_name(Texture t) { return t == Texture::kFlat ? "flat" : "noise"; }

std::vector<Field> build_fields() {
  std::vector<Field> f;
  f.push_back(u64_field("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }));

  // [network]
  f.push_back(size_field("network.input_h", [](RunConfig& c) -> std::size_t& { return c.network.input_h; }));
  f.push_back(size_field("network.input_w", [](RunConfig& c) -> std::size_t& { return c.network.input_w; }));
  f.push_back(size_field("network.num_classes", [](RunConfig& c) -> std::size_t& { return c.network.num_classes; }));
  f.push_back(size_field("network.fpn_channels", [](RunConfig& c) -> std::size_t& { return c.network.fpn_channels; }));
  f.push_back(size_field("network.stem_channels", [](RunConfig& c) -> std::size_t& { return c.network.stem_channels; }));
  f.push_back(list_field("network.backbone_channels",
                         [](RunConfig& c) -> std::array<std::size_t, 4>& { return c.network.backbone_channels; }));
  f.push_back(list_field("network.ppm_bins", [](RunConfig& c) -> std::vector<std::size_t>& { return c.network.ppm_bins; }));
  f.push_back(bool_field("network.use_ppm", [](RunConfig& c) -> bool& { return c.network.use_ppm; }));

  // [pfm.gapN]
  for (int gap = 3; gap <= 5; ++gap) {
    const std::string p = "pfm.gap" + std::to_string(gap) + ".";
    const std::size_t i = static_cast<std::size_t>(gap - 3);
    f.push_back(bool_field(p + "enabled", [i](RunConfig& c) -> bool& { return c.network.pfm_enabled[i]; }));
    f.push_back(size_field(p + "salient_kh", [i](RunConfig& c) -> std::size_t& { return c.network.pfm[i].salient_kh; }));
    f.push_back(size_field(p + "salient_kw", [i](RunConfig& c) -> std::size_t& { return c.network.pfm[i].salient_kw; }));
    f.push_back(size_field(p + "boundary_k", [i](RunConfig& c) -> std::size_t& { return c.network.pfm[i].boundary_k; }));
    f.push_back(enum_field(p + "direction", [i](RunConfig& c) -> Direction& { return c.network.pfm[i].direction; },
                           parse_direction));
    f.push_back(enum_field(p + "edge_mode", [i](RunConfig& c) -> EdgeMode& { return c.network.pfm[i].edge_mode; },
                           parse_edge_mode));
    f.push_back(enum_field(p + "salient_sampling",
                           [i](RunConfig& c) -> SalientSampling& { return c.network.pfm[i].salient_sampling; },
                           parse_salient_sampling));
    f.push_back(double_field(p + "affinity_scale", [i](RunConfig& c) -> double& { return c.network.pfm[i].affinity_scale; }));
    f.push_back(bool_field(p + "salient_flow", [i](RunConfig& c) -> bool& { return c.network.pfm[i].salient_flow; }));
    f.push_back(bool_field(p + "boundary_flow", [i](RunConfig& c) -> bool& { return c.network.pfm[i].boundary_flow; }));
    f.push_back(size_field(p + "smoothing_kernel", [i](RunConfig& c) -> std::size_t& { return c.network.pfm[i].smoothing_kernel; }));
    f.push_back(u64_field(p + "sampling_seed", [i](RunConfig& c) -> std::uint64_t& { return c.network.pfm[i].sampling_seed; }));
  }

  // [train]
  f.push_back(size_field("train.epochs", [](RunConfig& c) -> std::size_t& { return c.train.epochs; }));
  f.push_back(double_field("train.base_lr", [](RunConfig& c) -> double& { return c.train.base_lr; }));
  f.push_back(double_field("train.momentum", [](RunConfig& c) -> double& { return c.train.momentum; }));
  f.push_back(double_field("train.weight_decay", [](RunConfig& c) -> double& { return c.train.weight_decay; }));
  f.push_back(double_field("train.poly_power", [](RunConfig& c) -> double& { return c.train.poly_power; }));
  f.push_back(size_field("train.batch_size", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; }));
  f.push_back(size_field("train.edge_radius", [](RunConfig& c) -> std::size_t& { return c.train.edge_radius; }));
  f.push_back(double_field("train.ce_weight", [](RunConfig& c) -> double& { return c.train.ce_weight; }));
  f.push_back(double_field("train.bce_weight", [](RunConfig& c) -> double& { return c.train.bce_weight; }));
  f.push_back(bool_field("train.augment", [](RunConfig& c) -> bool& { return c.train.augment; }));
  f.push_back(size_field("train.checkpoint_every", [](RunConfig& c) -> std::size_t& { return c.train.checkpoint_every; }));

  // [data]
  f.push_back(size_field("data.count", [](RunConfig& c) -> std::size_t& { return c.data.count; }));
  f.push_back(double_field("data.val_ratio", [](RunConfig& c) -> double& { return c.data.val_ratio; }));
  f.push_back(size_field("data.canvas_h", [](RunConfig& c) -> std::size_t& { return c.data.scene.height; }));
  f.push_back(size_field("data.canvas_w", [](RunConfig& c) -> std::size_t& { return c.data.scene.width; }));
  f.push_back(size_field("data.min_objects", [](RunConfig& c) -> std::size_t& { return c.data.scene.min_objects; }));
  f.push_back(size_field("data.max_objects", [](RunConfig& c) -> std::size_t& { return c.data.scene.max_objects; }));
  f.push_back(size_field("data.min_size", [](RunConfig& c) -> std::size_t& { return c.data.scene.min_size; }));
  f.push_back(size_field("data.max_size", [](RunConfig& c) -> std::size_t& { return c.data.scene.max_size; }));
  f.push_back(double_field("data.target_fg_ratio", [](RunConfig& c) -> double& { return c.data.scene.target_fg_ratio; }));
  f.push_back(double_field("data.fg_tolerance", [](RunConfig& c) -> double& { return c.data.scene.fg_tolerance; }));
  f.push_back(Field{"data.texture", [](RunConfig& c) { return std::string(texture_name(c.data.scene.texture)); },
                    [](RunConfig& c, std::string_view v) {
                      if (v == "flat") c.data.scene.texture = Texture::kFlat;
                      else if (v == "noise") c.data.scene.texture = Texture::kNoise;
                      else throw ConfigError("data.texture must be flat or noise, got '" + std::string(v) + "'");
                    }});
  f.push_back(size_field("data.crop_ref", [](RunConfig& c) -> std::size_t& { return c.data.crop_ref; }));
  f.push_back(size_field("data.stride_ref", [](RunConfig& c) -> std::size_t& { return c.data.stride_ref; }));
  f.push_back(size_field("data.scale_divisor", [](RunConfig& c) -> std::size_t& { return c.data.scale_divisor; }));
  f.push_back(bool_field("data.previews", [](RunConfig& c) -> bool& { return c.data.previews; }));

  // [metrics]
  f.push_back(list_field("metrics.boundary_thresholds",
                         [](RunConfig& c) -> std::vector<std::size_t>& { return c.metrics.boundary_thresholds; }));
  f.push_back(size_field("metrics.threshold_divisor", [](RunConfig& c) -> std::size_t& { return c.metrics.threshold_divisor; }));
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = build_fields();
  return f;
}

}  // namespace

std::size_t DataConfig::val_count() const {
  return static_cast<std::size_t>(std::floor(static_cast<double>(count) * val_ratio + 1e-9));
}

std::size_t DataConfig::crop_size() const {
  return static_cast<std::size_t>(std::lround(static_cast<double>(crop_ref) / static_cast<double>(scale_divisor)));
}

std::size_t DataConfig::crop_stride() const {
  return static_cast<std::size_t>(std::lround(static_cast<double>(stride_ref) / static_cast<double>(scale_divisor)));
}

void RunConfig::finalize() {
  data.scene.seed = seed;
  train.seed = seed;
  data.scene.num_classes = network.num_classes;
  network.validate();
  train.validate();
  if (data.scale_divisor == 0) throw ConfigError("data.scale_divisor must be >= 1");
  if (data.val_ratio < 0 || data.val_ratio > 1) throw ConfigError("data.val_ratio must be in [0, 1]");
  if (data.crop_size() != network.input_h || data.crop_size() != network.input_w) {
    throw ConfigError("crop size " + std::to_string(data.crop_size()) + " (data.crop_ref / data.scale_divisor) must equal the network input " +
                      std::to_string(network.input_h) + "x" + std::to_string(network.input_w));
  }
  if (data.crop_stride() == 0) throw ConfigError("crop stride rounds to zero");
  if (data.crop_size() > data.scene.height || data.crop_size() > data.scene.width) {
    throw ConfigError("crop size exceeds the canvas");
  }
  if (metrics.threshold_divisor == 0) throw ConfigError("metrics.threshold_divisor must be >= 1");
  for (std::size_t t : metrics.boundary_thresholds) {
    if (t == 0) throw ConfigError("boundary thresholds must be >= 1");
  }
}

void apply_override(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const Field& f : fields()) {
    if (f.key == key) {
      f.set(cfg, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void apply_config_text(RunConfig& cfg, std::string_view text, std::string_view origin) {
  std::string section;
  std::size_t lineno = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = std::string(origin) + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const std::string key = std::string(trim(line.substr(0, eq)));
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      apply_override(cfg, full, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  apply_config_text(cfg, ss.str(), path.string());
}

std::string echo_config(const RunConfig& cfg) {
  RunConfig& c = const_cast<RunConfig&>(cfg);  // accessors are shared with the setters
  std::ostringstream os;
  std::string section;
  for (const Field& f : fields()) {
    const auto dot = f.key.rfind('.');
    const std::string sec = dot == std::string::npos ? "" : f.key.substr(0, dot);
    const std::string name = dot == std::string::npos ? f.key : f.key.substr(dot + 1);
    if (sec != section) {
      os << "\n[" << sec << "]\n";
      section = sec;
    }
    os << name << " = " << f.get(c) << '\n';
  }
  return os.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace pfnet
