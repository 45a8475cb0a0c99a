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

#include "pfnet/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pfnet/random.hpp"

namespace pfnet {
namespace {

constexpr std::array<std::array<float, 3>, 8> kClassColors{{
    {0.00f, 0.00f, 0.00f},  // background (unused)
    {0.86f, 0.18f, 0.16f},
    {0.16f, 0.32f, 0.90f},
    {0.92f, 0.86f, 0.20f},
    {0.95f, 0.95f, 0.95f},
    {0.78f, 0.30f, 0.86f},
    {0.18f, 0.82f, 0.86f},
    {0.95f, 0.55f, 0.10f},
}};

float smoothstep(float t) { return t * t * (3.0f - 2.0f * t); }

// Multi-octave value noise in [0, 1].
std::vector<float> value_noise(std::size_t h, std::size_t w, Rng& rng) {
  std::vector<float> field(h * w, 0.0f);
  float amplitude = 1.0f, total = 0.0f;
  for (std::size_t cell : {32u, 16u, 8u, 4u}) {
    const std::size_t gh = h / cell + 2, gw = w / cell + 2;
    std::vector<float> lattice(gh * gw);
    for (auto& v : lattice) v = static_cast<float>(rng.uniform01());
    for (std::size_t y = 0; y < h; ++y) {
      const float fy = static_cast<float>(y) / static_cast<float>(cell);
      const auto y0 = static_cast<std::size_t>(fy);
      const float ty = smoothstep(fy - static_cast<float>(y0));
      for (std::size_t x = 0; x < w; ++x) {
        const float fx = static_cast<float>(x) / static_cast<float>(cell);
        const auto x0 = static_cast<std::size_t>(fx);
        const float tx = smoothstep(fx - static_cast<float>(x0));
        const float top = lattice[y0 * gw + x0] * (1 - tx) + lattice[y0 * gw + x0 + 1] * tx;
        const float bot = lattice[(y0 + 1) * gw + x0] * (1 - tx) + lattice[(y0 + 1) * gw + x0 + 1] * tx;
        field[y * w + x] += amplitude * (top * (1 - ty) + bot * ty);
      }
    }
    total += amplitude;
    amplitude *= 0.5f;
  }
  for (auto& v : field) v /= total;
  return field;
}

struct Placed {
  std::size_t y0, x0, h, w;
  std::uint8_t label;
  bool ellipse;
};

bool covers(const Placed& o, std::size_t y, std::size_t x) {
  if (!o.ellipse) return true;
  const double dy = (static_cast<double>(y - o.y0) + 0.5 - o.h / 2.0) / (o.h / 2.0);
  const double dx = (static_cast<double>(x - o.x0) + 0.5 - o.w / 2.0) / (o.w / 2.0);
  return dy * dy + dx * dx <= 1.0;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

double foreground_ratio(const LabelMap& mask) {
  if (mask.labels.empty()) return 0.0;
  std::size_t fg = 0;
  for (std::uint8_t l : mask.labels) fg += (l != 0 && l != kIgnoreLabel) ? 1 : 0;
  return static_cast<double>(fg) / static_cast<double>(mask.labels.size());
}

SceneSample synth_scene(const SceneConfig& cfg, std::uint64_t index) {
  if (cfg.height == 0 || cfg.width == 0) throw ConfigError("scene canvas must be non-empty");
  if (cfg.num_classes < 2 || cfg.num_classes > kClassColors.size()) {
    throw ConfigError("scene classes must be in [2, " + std::to_string(kClassColors.size()) + "]");
  }
  if (cfg.min_size == 0 || cfg.min_size > cfg.max_size || cfg.max_size > std::min(cfg.height, cfg.width)) {
    throw ConfigError("invalid object size range");
  }
  if (cfg.min_objects > cfg.max_objects) throw ConfigError("invalid object count range");

  Rng rng(mix_seed(cfg.seed, index));
  const std::size_t h = cfg.height, w = cfg.width, area = h * w;
  std::vector<float> noise = cfg.texture == Texture::kNoise ? value_noise(h, w, rng)
                                                            : std::vector<float>(area, 0.5f);

  std::vector<Placed> objects;
  LabelMap mask(h, w, 0);
  bool accepted = cfg.max_objects == 0;
  const double lo = cfg.target_fg_ratio * (1.0 - cfg.fg_tolerance);
  const double hi = cfg.target_fg_ratio * (1.0 + cfg.fg_tolerance);
  for (int attempt = 0; attempt < 100 && !accepted; ++attempt) {
    objects.clear();
    std::fill(mask.labels.begin(), mask.labels.end(), std::uint8_t{0});
    std::size_t fg = 0;
    while (objects.size() < cfg.max_objects) {
      if (objects.size() >= cfg.min_objects &&
          static_cast<double>(fg) >= cfg.target_fg_ratio * static_cast<double>(area)) {
        break;
      }
      bool placed = false;
      for (int tries = 0; tries < 64 && !placed; ++tries) {
        Placed o;
        o.h = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(cfg.min_size),
                                                   static_cast<std::int64_t>(cfg.max_size)));
        o.w = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(cfg.min_size),
                                                   static_cast<std::int64_t>(cfg.max_size)));
        o.y0 = static_cast<std::size_t>(rng.below(h - o.h + 1));
        o.x0 = static_cast<std::size_t>(rng.below(w - o.w + 1));
        o.label = static_cast<std::uint8_t>(1 + rng.below(cfg.num_classes - 1));
        o.ellipse = rng.below(2) == 1;
        bool free = true;
        for (std::size_t y = o.y0; y < o.y0 + o.h && free; ++y) {
          for (std::size_t x = o.x0; x < o.x0 + o.w; ++x) {
            if (mask.at(y, x) != 0) {
              free = false;
              break;
            }
          }
        }
        if (!free) continue;
        for (std::size_t y = o.y0; y < o.y0 + o.h; ++y) {
          for (std::size_t x = o.x0; x < o.x0 + o.w; ++x) {
            if (covers(o, y, x)) {
              mask.at(y, x) = o.label;
              ++fg;
            }
          }
        }
        objects.push_back(o);
        placed = true;
      }
      if (!placed) break;
    }
    const double ratio = static_cast<double>(fg) / static_cast<double>(area);
    accepted = objects.size() >= cfg.min_objects && ratio >= lo && ratio <= hi;
  }
  if (!accepted) {
    throw ConfigError("scene " + std::to_string(index) +
                      ": foreground ratio window not met after 100 attempts");
  }

  std::vector<float> img(3 * area);
  for (std::size_t i = 0; i < area; ++i) {
    const float n = noise[i] - 0.5f;
    img[i] = std::clamp(0.34f + 0.30f * n, 0.0f, 1.0f);
    img[area + i] = std::clamp(0.38f + 0.27f * n, 0.0f, 1.0f);
    img[2 * area + i] = std::clamp(0.30f + 0.24f * n, 0.0f, 1.0f);
  }
  for (std::size_t i = 0; i < area; ++i) {
    const std::uint8_t l = mask.labels[i];
    if (l == 0) continue;
    for (std::size_t c = 0; c < 3; ++c) {
      const float jitter = static_cast<float>(rng.uniform(-0.05, 0.05));
      img[c * area + i] = std::clamp(kClassColors[l][c] + jitter, 0.0f, 1.0f);
    }
  }
  return {Tensor<float>({3, h, w}, std::move(img)), std::move(mask)};
}

std::vector<std::size_t> window_starts(std::size_t extent, std::size_t size, std::size_t stride) {
  if (size == 0 || stride == 0) throw ShapeError("crop size and stride must be positive");
  if (size > extent) {
    throw ShapeError("crop size " + std::to_string(size) + " exceeds canvas " + std::to_string(extent));
  }
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + size <= extent; s += stride) starts.push_back(s);
  if (starts.back() + size < extent) starts.push_back(extent - size);
  return starts;
}

std::vector<Crop> sliding_crop(const Tensor<float>& image, const LabelMap& mask, std::size_t size,
                               std::size_t stride) {
  if (image.rank() != 3 || image.dim(1) != mask.height || image.dim(2) != mask.width) {
    throw ShapeError("sliding_crop: image [C,H,W] and mask must agree");
  }
  const std::size_t ch = image.dim(0), h = mask.height, w = mask.width;
  std::vector<Crop> crops;
  for (std::size_t y0 : window_starts(h, size, stride)) {
    for (std::size_t x0 : window_starts(w, size, stride)) {
      std::vector<float> px(ch * size * size);
      LabelMap m(size, size);
      for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t y = 0; y < size; ++y) {
          const float* src = image.data() + (c * h + y0 + y) * w + x0;
          std::copy(src, src + size, px.begin() + static_cast<std::ptrdiff_t>((c * size + y) * size));
        }
      }
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) m.at(y, x) = mask.at(y0 + y, x0 + x);
      }
      crops.push_back({Tensor<float>({ch, size, size}, std::move(px)), std::move(m), y0, x0});
    }
  }
  return crops;
}

LabelMap stitch_votes(const std::vector<Crop>& predictions, std::size_t height, std::size_t width,
                      std::size_t num_classes) {
  std::vector<std::uint32_t> votes(num_classes * height * width, 0);
  for (const Crop& c : predictions) {
    for (std::size_t y = 0; y < c.mask.height; ++y) {
      for (std::size_t x = 0; x < c.mask.width; ++x) {
        const std::uint8_t l = c.mask.at(y, x);
        if (l >= num_classes) continue;
        ++votes[(static_cast<std::size_t>(l) * height + c.y0 + y) * width + c.x0 + x];
      }
    }
  }
  LabelMap out(height, width, 0);
  for (std::size_t i = 0; i < height * width; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < num_classes; ++k) {
      if (votes[k * height * width + i] > votes[best * height * width + i]) best = k;
    }
    out.labels[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

SceneSample augment(const SceneSample& sample, AugmentOp op) {
  const std::size_t ch = sample.image.dim(0), h = sample.mask.height, w = sample.mask.width;
  const bool rotates = op == AugmentOp::kRot90 || op == AugmentOp::kRot180 || op == AugmentOp::kRot270;
  if (rotates && h != w) throw ShapeError("augment: rotation needs a square input");
  if (op == AugmentOp::kIdentity) return sample;
  // Destination of source pixel (i, j).
  auto target = [&](std::size_t i, std::size_t j) -> std::pair<std::size_t, std::size_t> {
    switch (op) {
      case AugmentOp::kHFlip: return {i, w - 1 - j};
      case AugmentOp::kVFlip: return {h - 1 - i, j};
      case AugmentOp::kRot90: return {j, h - 1 - i};
      case AugmentOp::kRot180: return {h - 1 - i, w - 1 - j};
      case AugmentOp::kRot270: return {w - 1 - j, i};
      case AugmentOp::kIdentity: break;
    }
    return {i, j};
  };
  std::vector<float> px(sample.image.numel());
  LabelMap m(h, w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const auto [ti, tj] = target(i, j);
      m.at(ti, tj) = sample.mask.at(i, j);
      for (std::size_t c = 0; c < ch; ++c) px[(c * h + ti) * w + tj] = sample.image[(c * h + i) * w + j];
    }
  }
  return {Tensor<float>(sample.image.shape(), std::move(px)), std::move(m)};
}

void write_tensor(std::ostream& os, const AnyTensor& t) {
  std::vector<std::uint8_t> out{'P', 'F', 'T', '1'};
  const Shape& shape = std::visit([](const auto& v) -> const Shape& {
    if constexpr (std::is_same_v<std::decay_t<decltype(v)>, ByteTensor>) return v.shape;
    else return v.shape();
  }, t);
  if (shape.size() > 255) throw ShapeError("PFT1 supports at most 255 dimensions");
  std::uint8_t code = 0;
  if (std::holds_alternative<Tensor<float>>(t)) code = 1;
  else if (std::holds_alternative<Tensor<double>>(t)) code = 2;
  else code = 3;
  out.push_back(code);
  out.push_back(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t d : shape) put_u32(out, static_cast<std::uint32_t>(d));
  if (const auto* f = std::get_if<Tensor<float>>(&t)) {
    for (float v : f->values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  } else if (const auto* d = std::get_if<Tensor<double>>(&t)) {
    for (double v : d->values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  } else {
    const auto& b = std::get<ByteTensor>(t);
    if (b.values.size() != shape_numel(b.shape)) throw ShapeError("byte tensor size mismatch");
    out.insert(out.end(), b.values.begin(), b.values.end());
  }
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw IoError("failed to write tensor");
}

AnyTensor read_tensor(std::istream& is) {
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() < 6 || buf[0] != 'P' || buf[1] != 'F' || buf[2] != 'T' || buf[3] != '1') {
    throw IoError("bad magic: not a PFT1 tensor file");
  }
  const std::uint8_t code = buf[4];
  if (code < 1 || code > 3) throw IoError("unknown dtype code " + std::to_string(code));
  const std::size_t ndim = buf[5];
  if (buf.size() < 6 + 4 * ndim) throw IoError("truncated header");
  Shape shape(ndim);
  for (std::size_t i = 0; i < ndim; ++i) shape[i] = get_le(buf.data() + 6 + 4 * i, 4);
  const std::size_t elem = code == 1 ? 4 : code == 2 ? 8 : 1;
  const std::size_t offset = 6 + 4 * ndim;
  const std::size_t n = shape_numel(shape);
  if (buf.size() - offset < n * elem) throw IoError("truncated payload");
  if (buf.size() - offset > n * elem) throw IoError("trailing bytes after payload");
  const std::uint8_t* p = buf.data() + offset;
  if (code == 1) {
    std::vector<float> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(p + 4 * i, 4)));
    return Tensor<float>(shape, std::move(v));
  }
  if (code == 2) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = std::bit_cast<double>(get_le(p + 8 * i, 8));
    return Tensor<double>(shape, std::move(v));
  }
  return ByteTensor{shape, std::vector<std::uint8_t>(p, p + n)};
}

void write_tensor(const std::filesystem::path& path, const AnyTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  write_tensor(os, t);
}

AnyTensor read_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  return read_tensor(is);
}

ByteTensor to_bytes(const LabelMap& mask) { return {{mask.height, mask.width}, mask.labels}; }

LabelMap to_label_map(const ByteTensor& t) {
  if (t.shape.size() != 2) throw ShapeError("label map must be a 2-D u8 tensor");
  LabelMap m(t.shape[0], t.shape[1]);
  m.labels = t.values;
  return m;
}

void write_pgm(const std::filesystem::path& path, const LabelMap& mask, std::size_t num_classes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  const std::size_t step = num_classes > 1 ? 255 / (num_classes - 1) : 255;
  for (std::uint8_t l : mask.labels) {
    const auto v = static_cast<char>(l == kIgnoreLabel ? 255 : std::min<std::size_t>(255, l * step));
    os.put(v);
  }
  if (!os) throw IoError("failed to write '" + path.string() + "'");
}

void write_ppm_rgb(const std::filesystem::path& path, std::size_t height, std::size_t width,
                   const std::vector<std::uint8_t>& rgb) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << "P6\n" << width << ' ' << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!os) throw IoError("failed to write '" + path.string() + "'");
}

void write_ppm(const std::filesystem::path& path, const Tensor<float>& image) {
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::vector<std::uint8_t> rgb(3 * h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      rgb[3 * i + c] = static_cast<std::uint8_t>(std::lround(std::clamp(image[c * h * w + i], 0.0f, 1.0f) * 255.0f));
    }
  }
  write_ppm_rgb(path, h, w, rgb);
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& e : entries) os << e.image_path << '\t' << e.mask_path << '\t' << e.split << '\n';
  if (!os) throw IoError("failed to write '" + path.string() + "'");
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest '" + path.string() + "'");
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    ManifestEntry e;
    std::istringstream ls(line);
    if (!std::getline(ls, e.image_path, '\t') || !std::getline(ls, e.mask_path, '\t') ||
        !std::getline(ls, e.split) || (e.split != "train" && e.split != "val")) {
      throw IoError("malformed manifest line " + std::to_string(lineno) + " in '" + path.string() + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

SceneSample load_sample(const std::filesystem::path& manifest_dir, const ManifestEntry& entry) {
  AnyTensor img = read_tensor(manifest_dir / entry.image_path);
  AnyTensor mask = read_tensor(manifest_dir / entry.mask_path);
  auto* image = std::get_if<Tensor<float>>(&img);
  auto* labels = std::get_if<ByteTensor>(&mask);
  if (image == nullptr || labels == nullptr) {
    throw IoError("sample '" + entry.image_path + "' must be an f32 image and a u8 mask");
  }
  LabelMap m = to_label_map(*labels);
  if (image->rank() != 3 || image->dim(1) != m.height || image->dim(2) != m.width) {
    throw IoError("sample '" + entry.image_path + "' image and mask sizes differ");
  }
  return {*image, std::move(m)};
}

}  // namespace pfnet
