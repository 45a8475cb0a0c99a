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

#include "pfnet/network.hpp"

#include <cmath>
#include <string>

#include "pfnet/ops.hpp"
#include "pfnet/random.hpp"

namespace pfnet {
namespace {

enum class Init { kWeight, kZero, kOne, kBoundaryBias };

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init;
};

struct Layout {
  std::vector<ParamSpec> params;
  std::vector<std::string> norms;  // prefixes owning running statistics
};

void add_conv(Layout& l, const std::string& prefix, std::size_t cin, std::size_t cout,
              std::size_t k, Init bias = Init::kZero) {
  l.params.push_back({prefix + ".weight", {cout, cin, k, k}, Init::kWeight});
  l.params.push_back({prefix + ".bias", {cout}, bias});
}

void add_norm(Layout& l, const std::string& prefix, std::size_t c) {
  l.params.push_back({prefix + ".gamma", {c}, Init::kOne});
  l.params.push_back({prefix + ".beta", {c}, Init::kZero});
  l.norms.push_back(prefix);
}

std::size_t ppm_branch_channels(const NetworkConfig& cfg) {
  return std::max<std::size_t>(1, cfg.fpn_channels / 4);
}

Layout network_layout(const NetworkConfig& cfg) {
  Layout l;
  const std::size_t c = cfg.fpn_channels;
  add_conv(l, "backbone.stem.conv", 3, cfg.stem_channels, 3);
  add_norm(l, "backbone.stem.norm", cfg.stem_channels);
  std::size_t in = cfg.stem_channels;
  for (std::size_t s = 0; s < 4; ++s) {
    const std::string stage = "backbone.stage" + std::to_string(s + 1);
    const std::size_t out = cfg.backbone_channels[s];
    add_conv(l, stage + ".conv1", in, out, 3);
    add_norm(l, stage + ".norm1", out);
    add_conv(l, stage + ".conv2", out, out, 3);
    add_norm(l, stage + ".norm2", out);
    in = out;
  }
  for (int lvl = 2; lvl <= 5; ++lvl) {
    if (lvl == 5 && cfg.use_ppm) continue;
    const std::string lat = "lateral" + std::to_string(lvl);
    add_conv(l, lat + ".conv_a", cfg.backbone_channels[static_cast<std::size_t>(lvl - 2)], c, 1);
    add_conv(l, lat + ".conv_b", c, c, 1);
  }
  if (cfg.use_ppm) {
    const std::size_t c5 = cfg.backbone_channels[3];
    const auto bins = usable_bins(cfg.ppm_bins, cfg.input_h / 32, cfg.input_w / 32);
    const std::size_t branch = ppm_branch_channels(cfg);
    for (std::size_t b : bins) add_conv(l, "ppm.bin" + std::to_string(b), c5, branch, 1);
    add_conv(l, "ppm.fuse", c5 + bins.size() * branch, c, 3);
    add_norm(l, "ppm.norm", c);
  }
  for (int gap = 3; gap <= 5; ++gap) {
    if (!cfg.gap_enabled(gap)) continue;
    const std::string pfm = "pfm.gap" + std::to_string(gap);
    add_conv(l, pfm + ".saliency", 2 * c, 1, 3);
    if (cfg.gap(gap).boundary_enabled()) add_conv(l, pfm + ".boundary", c, 1, 1, Init::kBoundaryBias);
  }
  add_conv(l, "head.fuse", 4 * c, c, 3);
  add_norm(l, "head.norm", c);
  add_conv(l, "head.classifier", c, cfg.num_classes, 1);
  return l;
}

// FNV-1a, so each parameter's stream depends only on (seed, name).
std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
Var<T> norm(const Var<T>& x, const BoundParams<T>& p, const std::string& prefix,
            ForwardContext<T>& ctx) {
  if (ctx.mode == NormMode::kBatch) {
    NormStats<T> stats;
    Var<T> y = channel_norm(x, p[prefix + ".gamma"], p[prefix + ".beta"], T(1e-5), &stats);
    ctx.batch_stats[prefix] = std::move(stats);
    return y;
  }
  const auto& buffers = p.source->buffers;
  const auto mean_it = buffers.find(prefix + ".running_mean");
  const auto var_it = buffers.find(prefix + ".running_var");
  if (mean_it == buffers.end() || var_it == buffers.end()) {
    throw ShapeError("missing running statistics for '" + prefix + "'");
  }
  return channel_norm_frozen(x, p[prefix + ".gamma"], p[prefix + ".beta"], mean_it->second.values(),
                             var_it->second.values(), T(1e-5));
}

template <typename T>
Var<T> conv_norm_relu(const Var<T>& x, const BoundParams<T>& p, const std::string& conv,
                      const std::string& norm_prefix, std::size_t stride, ForwardContext<T>& ctx) {
  return relu(norm(conv2d(x, p.conv(conv, stride, 1)), p, norm_prefix, ctx));
}

template <typename T>
Var<T> lateral(const Var<T>& x, const BoundParams<T>& p, int lvl) {
  const std::string lat = "lateral" + std::to_string(lvl);
  return conv2d(relu(conv2d(x, p.conv(lat + ".conv_a", 1, 0))), p.conv(lat + ".conv_b", 1, 0));
}

}  // namespace

void NetworkConfig::validate() const {
  if (input_h == 0 || input_w == 0 || input_h % 32 != 0 || input_w % 32 != 0) {
    throw ConfigError("network input size must be a positive multiple of 32, got " +
                      std::to_string(input_h) + "x" + std::to_string(input_w));
  }
  if (num_classes < 2) throw ConfigError("network needs at least 2 classes");
  if (fpn_channels == 0 || stem_channels == 0) throw ConfigError("channel counts must be positive");
  for (std::size_t c : backbone_channels) {
    if (c == 0) throw ConfigError("backbone channels must be positive");
  }
  for (const PfmConfig& g : pfm) {
    if (g.salient_kh == 0 || g.salient_kw == 0) throw ConfigError("salient kernel must be >= 1");
  }
  if (use_ppm && usable_bins(ppm_bins, input_h / 32, input_w / 32).empty()) {
    throw ConfigError("no PPM bin fits the deepest feature map");
  }
}

std::vector<std::size_t> usable_bins(std::span<const std::size_t> bins, std::size_t h,
                                     std::size_t w) {
  std::vector<std::size_t> out;
  for (std::size_t b : bins) {
    if (b >= 1 && b <= std::min(h, w)) out.push_back(b);
  }
  return out;
}

template <typename T>
ParameterSet<T> init_params(const NetworkConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Layout layout = network_layout(cfg);
  ParameterSet<T> ps;
  for (const ParamSpec& spec : layout.params) {
    switch (spec.init) {
      case Init::kWeight: {
        const double fan_in = static_cast<double>(spec.shape[1] * spec.shape[2] * spec.shape[3]);
        const double bound = std::sqrt(6.0 / fan_in);
        ps.params.emplace(spec.name, Tensor<T>::uniform(spec.shape, mix_seed(seed, name_hash(spec.name)),
                                                        -bound, bound));
        break;
      }
      case Init::kZero: ps.params.emplace(spec.name, Tensor<T>(spec.shape, T(0))); break;
      case Init::kOne: ps.params.emplace(spec.name, Tensor<T>(spec.shape, T(1))); break;
      case Init::kBoundaryBias: ps.params.emplace(spec.name, Tensor<T>(spec.shape, T(-2))); break;
    }
  }
  for (const std::string& n : layout.norms) {
    const std::size_t c = ps.params.at(n + ".gamma").numel();
    ps.buffers.emplace(n + ".running_mean", Tensor<T>({c}, T(0)));
    ps.buffers.emplace(n + ".running_var", Tensor<T>({c}, T(1)));
  }
  return ps;
}

template <typename T>
const Var<T>& BoundParams<T>::operator[](const std::string& name) const {
  const auto it = vars.find(name);
  if (it == vars.end()) throw ShapeError("parameter '" + name + "' is not in the parameter set");
  return it->second;
}

template <typename T>
ConvParams<T> BoundParams<T>::conv(const std::string& prefix, std::size_t stride,
                                   std::size_t padding) const {
  return ConvParams<T>{(*this)[prefix + ".weight"], (*this)[prefix + ".bias"], stride, padding};
}

template <typename T>
BoundParams<T> bind(Tape<T>& tape, const ParameterSet<T>& params, bool requires_grad) {
  BoundParams<T> b;
  b.source = &params;
  for (const auto& [name, value] : params.params) b.vars.emplace(name, tape.leaf(value, requires_grad));
  return b;
}

template <typename T>
Pyramid<T> backbone_forward(const Var<T>& image, const BoundParams<T>& p, ForwardContext<T>& ctx) {
  const Shape& s = image.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] % 32 != 0 || s[3] % 32 != 0) {
    throw ShapeError("backbone: input must be [N,3,H,W] with H, W divisible by 32, got " + shape_str(s));
  }
  Var<T> x = conv_norm_relu(image, p, "backbone.stem.conv", "backbone.stem.norm", 2, ctx);
  Pyramid<T> pyr;
  for (std::size_t stage = 0; stage < 4; ++stage) {
    const std::string name = "backbone.stage" + std::to_string(stage + 1);
    x = conv_norm_relu(x, p, name + ".conv1", name + ".norm1", 2, ctx);
    x = conv_norm_relu(x, p, name + ".conv2", name + ".norm2", 1, ctx);
    pyr.levels[stage] = x;
  }
  return pyr;
}

template <typename T>
Var<T> ppm_forward(const Var<T>& c5, const BoundParams<T>& p, std::span<const std::size_t> bins,
                   ForwardContext<T>& ctx) {
  const std::size_t h = c5.dim(2), w = c5.dim(3);
  std::vector<Var<T>> parts{c5};
  for (std::size_t b : bins) {
    if (b == 0 || b > std::min(h, w)) {
      throw ShapeError("ppm: bin " + std::to_string(b) + " larger than the " + std::to_string(h) +
                       "x" + std::to_string(w) + " map");
    }
    const Var<T> pooled = adaptive_avg_pool(c5, b, b);
    const Var<T> reduced = relu(conv2d(pooled, p.conv("ppm.bin" + std::to_string(b), 1, 0)));
    parts.push_back(bilinear_resize(reduced, h, w));
  }
  const Var<T> fused = conv2d(concat_channels(std::span<const Var<T>>(parts)), p.conv("ppm.fuse", 1, 1));
  return relu(norm(fused, p, "ppm.norm", ctx));
}

template <typename T>
NetworkOutput<T> pfnet_forward(const Var<T>& image, const BoundParams<T>& p,
                               const NetworkConfig& cfg, ForwardContext<T>& ctx) {
  cfg.validate();
  const Pyramid<T> pyr = backbone_forward(image, p, ctx);
  NetworkOutput<T> out;
  std::array<Var<T>, 4>& dec = out.decoder;

  const Var<T>& c5 = pyr.levels[3];
  dec[3] = cfg.use_ppm ? ppm_forward(c5, p, usable_bins(cfg.ppm_bins, c5.dim(2), c5.dim(3)), ctx)
                       : lateral(c5, p, 5);

  for (int gap = 5; gap >= 3; --gap) {
    const auto hi = static_cast<std::size_t>(gap - 2);
    const Var<T> low = lateral(pyr.levels[hi - 1], p, gap - 1);
    if (!cfg.gap_enabled(gap)) {
      dec[hi - 1] = add(low, bilinear_resize(dec[hi], low.dim(2), low.dim(3)));
      continue;
    }
    const std::string prefix = "pfm.gap" + std::to_string(gap);
    const PfmConfig gcfg = fit_to_grid(cfg.gap(gap), dec[hi].dim(2), dec[hi].dim(3));
    PfmParams<T> pp;
    pp.saliency = p.conv(prefix + ".saliency", 1, 1);
    if (gcfg.boundary_enabled()) pp.boundary = p.conv(prefix + ".boundary", 1, 0);
    PfmOutput<T> pfm = pfm_forward(dec[hi], low, gcfg, pp);
    dec[hi - 1] = pfm.refined;
    dec[hi] = pfm.refined_high;
    if (gcfg.boundary_enabled()) {
      out.boundary_maps.push_back(pfm.boundary_map);
      out.boundary_gaps.push_back(gap);
    }
    out.point_sets.push_back(GapPoints{gap, dec[hi].dim(2), dec[hi].dim(3),
                                       std::move(pfm.salient_points), std::move(pfm.boundary_points)});
  }
  // Gaps were visited top-down; report them in ascending gap order.
  std::reverse(out.boundary_maps.begin(), out.boundary_maps.end());
  std::reverse(out.boundary_gaps.begin(), out.boundary_gaps.end());
  std::reverse(out.point_sets.begin(), out.point_sets.end());

  const std::size_t qh = dec[0].dim(2), qw = dec[0].dim(3);
  std::vector<Var<T>> fused{dec[0]};
  for (std::size_t i = 1; i < 4; ++i) fused.push_back(bilinear_resize(dec[i], qh, qw));
  const Var<T> head = conv_norm_relu(concat_channels(std::span<const Var<T>>(fused)), p, "head.fuse",
                                     "head.norm", 1, ctx);
  out.logits = conv2d(head, p.conv("head.classifier", 1, 0));
  return out;
}

template <typename T>
void update_running_stats(ParameterSet<T>& params,
                          const std::map<std::string, NormStats<T>>& batch_stats, double momentum) {
  for (const auto& [prefix, stats] : batch_stats) {
    auto& mean = params.buffers.at(prefix + ".running_mean");
    auto& var = params.buffers.at(prefix + ".running_var");
    std::vector<T> m = mean.to_vector(), v = var.to_vector();
    for (std::size_t c = 0; c < m.size(); ++c) {
      m[c] = static_cast<T>((1.0 - momentum) * m[c] + momentum * stats.mean[c]);
      v[c] = static_cast<T>((1.0 - momentum) * v[c] + momentum * stats.var[c]);
    }
    mean = Tensor<T>(mean.shape(), std::move(m));
    var = Tensor<T>(var.shape(), std::move(v));
  }
}

#define PFNET_INSTANTIATE(T)                                                                    \
  template ParameterSet<T> init_params<T>(const NetworkConfig&, std::uint64_t);                 \
  template struct BoundParams<T>;                                                               \
  template BoundParams<T> bind<T>(Tape<T>&, const ParameterSet<T>&, bool);                      \
  template Pyramid<T> backbone_forward<T>(const Var<T>&, const BoundParams<T>&, ForwardContext<T>&); \
  template Var<T> ppm_forward<T>(const Var<T>&, const BoundParams<T>&, std::span<const std::size_t>, \
                                 ForwardContext<T>&);                                           \
  template NetworkOutput<T> pfnet_forward<T>(const Var<T>&, const BoundParams<T>&,              \
                                             const NetworkConfig&, ForwardContext<T>&);         \
  template void update_running_stats<T>(ParameterSet<T>&, const std::map<std::string, NormStats<T>>&, \
                                        double);

PFNET_INSTANTIATE(float)
PFNET_INSTANTIATE(double)
#undef PFNET_INSTANTIATE

}  // namespace pfnet
