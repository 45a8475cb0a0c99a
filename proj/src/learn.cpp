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

#include "pfnet/learn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pfnet/errors.hpp"
#include "pfnet/nn.hpp"
#include "pfnet/ops.hpp"
#include "pfnet/random.hpp"

namespace pfnet {

void TrainConfig::validate() const {
  if (!(base_lr > 0)) throw ConfigError("train.base_lr must be > 0");
  if (!(poly_power > 0)) throw ConfigError("train.poly_power must be > 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("train.momentum must be in [0, 1)");
  if (weight_decay < 0) throw ConfigError("train.weight_decay must be >= 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (edge_radius == 0) throw ConfigError("train.edge_radius must be >= 1");
  if (ce_weight < 0 || bce_weight < 0) throw ConfigError("loss weights must be >= 0");
}

double poly_lr(double base_lr, std::size_t iter, std::size_t total, double power) {
  if (total == 0 || iter >= total) return 0.0;
  return base_lr * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(total), power);
}

std::vector<LabelMap> edge_targets_from_mask(const LabelMap& mask, std::size_t radius,
                                             std::span<const std::size_t> strides) {
  const std::size_t h = mask.height, w = mask.width;
  if (h == 0 || w == 0) throw ShapeError("edge_targets_from_mask: empty mask");
  if (radius == 0) throw ConfigError("edge radius must be >= 1");
  LabelMap edge(h, w, 0);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const std::uint8_t l = mask.at(i, j);
      const bool differs = (i > 0 && mask.at(i - 1, j) != l) || (i + 1 < h && mask.at(i + 1, j) != l) ||
                           (j > 0 && mask.at(i, j - 1) != l) || (j + 1 < w && mask.at(i, j + 1) != l);
      edge.at(i, j) = differs ? 1 : 0;
    }
  }
  if (radius > 1) {
    const std::size_t r = radius - 1;
    LabelMap dilated(h, w, 0);
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        if (edge.at(i, j) == 0) continue;
        for (std::size_t y = i > r ? i - r : 0; y <= std::min(h - 1, i + r); ++y) {
          for (std::size_t x = j > r ? j - r : 0; x <= std::min(w - 1, j + r); ++x) dilated.at(y, x) = 1;
        }
      }
    }
    edge = std::move(dilated);
  }
  std::vector<LabelMap> out;
  for (std::size_t s : strides) {
    if (s == 0) throw ConfigError("edge target stride must be >= 1");
    LabelMap pooled((h + s - 1) / s, (w + s - 1) / s, 0);
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) pooled.at(i / s, j / s) |= edge.at(i, j);
    }
    out.push_back(std::move(pooled));
  }
  return out;
}

template <typename T>
Var<T> bce_loss(const Var<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("bce_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                     shape_str(target.shape()));
  }
  constexpr double kEps = 1e-7;
  const auto p = pred.value().values();
  const auto t = target.values();
  const std::size_t n = p.size();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double q = std::clamp(static_cast<double>(p[i]), kEps, 1.0 - kEps);
    total -= static_cast<double>(t[i]) * std::log(q) + (1.0 - static_cast<double>(t[i])) * std::log(1.0 - q);
  }
  return pred.tape()->record(
      "bce_loss", Tensor<T>({1}, static_cast<T>(total / static_cast<double>(n))), {pred},
      [pred, target, n](std::span<const T> g, Tape<T>& tape) {
        std::span<T> dp = tape.grad_buffer(pred);
        if (dp.empty()) return;
        const auto pv = pred.value().values();
        const auto tv = target.values();
        const double scale = static_cast<double>(g[0]) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const double q = static_cast<double>(pv[i]);
          if (q < kEps || q > 1.0 - kEps) continue;  // clamped: flat
          const double tt = static_cast<double>(tv[i]);
          dp[i] += static_cast<T>(scale * ((1.0 - tt) / (1.0 - q) - tt / q));
        }
      });
}

template <typename T>
Var<T> ce_loss(const Var<T>& logits, std::span<const LabelMap> masks) {
  if (logits.value().rank() != 4) throw ShapeError("ce_loss: logits must be [N,K,H,W]");
  const std::size_t n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (masks.size() != n) throw ShapeError("ce_loss: one mask per batch item expected");
  for (const LabelMap& m : masks) {
    if (m.height != h || m.width != w) {
      throw ShapeError("ce_loss: mask " + std::to_string(m.height) + "x" + std::to_string(m.width) +
                       " vs logits " + std::to_string(h) + "x" + std::to_string(w));
    }
  }
  const std::size_t hw = h * w;
  const auto x = logits.value().values();
  // Softmax probabilities are kept for the adjoint.
  std::vector<T> prob(x.size(), T(0));
  std::vector<std::uint8_t> label(n * hw);
  double total = 0;
  std::size_t counted = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      const std::uint8_t l = masks[b].labels[p];
      label[b * hw + p] = l;
      if (l == kIgnoreLabel) continue;
      if (l >= k) throw ShapeError("ce_loss: label " + std::to_string(l) + " >= classes " + std::to_string(k));
      double mx = -INFINITY;
      for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(x[(b * k + c) * hw + p]));
      double z = 0;
      for (std::size_t c = 0; c < k; ++c) z += std::exp(static_cast<double>(x[(b * k + c) * hw + p]) - mx);
      for (std::size_t c = 0; c < k; ++c) {
        prob[(b * k + c) * hw + p] = static_cast<T>(std::exp(static_cast<double>(x[(b * k + c) * hw + p]) - mx) / z);
      }
      total -= static_cast<double>(x[(b * k + l) * hw + p]) - mx - std::log(z);
      ++counted;
    }
  }
  if (counted == 0) throw ShapeError("ce_loss: every pixel is ignored");
  return logits.tape()->record(
      "ce_loss", Tensor<T>({1}, static_cast<T>(total / static_cast<double>(counted))), {logits},
      [logits, prob = std::move(prob), label = std::move(label), n, k, hw, counted](std::span<const T> g,
                                                                                    Tape<T>& tape) {
        std::span<T> dx = tape.grad_buffer(logits);
        if (dx.empty()) return;
        const T scale = g[0] / static_cast<T>(counted);
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t p = 0; p < hw; ++p) {
            const std::uint8_t l = label[b * hw + p];
            if (l == kIgnoreLabel) continue;
            for (std::size_t c = 0; c < k; ++c) {
              const std::size_t i = (b * k + c) * hw + p;
              dx[i] += scale * (prob[i] - (c == l ? T(1) : T(0)));
            }
          }
        }
      });
}

void Sgd::step(ParameterSet<float>& params, const std::map<std::string, Tensor<float>>& grads, double lr) {
  for (auto& [name, w] : params.params) {
    const auto git = grads.find(name);
    if (git == grads.end()) continue;
    auto& v = velocity_[name];
    if (v.empty()) v.assign(w.numel(), 0.0f);
    const auto g = git->second.values();
    const auto wv = w.values();
    std::vector<float> next(wv.begin(), wv.end());
    const auto mu = static_cast<float>(momentum_), wd = static_cast<float>(weight_decay_),
               rate = static_cast<float>(lr);
    for (std::size_t i = 0; i < next.size(); ++i) {
      v[i] = mu * v[i] + (g[i] + wd * next[i]);
      next[i] -= rate * v[i];
    }
    w = Tensor<float>(w.shape(), std::move(next));
  }
}

Tensor<float> stack_images(std::span<const SceneSample> batch) {
  if (batch.empty()) throw ShapeError("empty batch");
  const Shape& s = batch.front().image.shape();
  std::vector<float> data;
  data.reserve(batch.size() * batch.front().image.numel());
  for (const SceneSample& smp : batch) {
    if (smp.image.shape() != s) throw ShapeError("batch images differ in shape");
    const auto v = smp.image.values();
    data.insert(data.end(), v.begin(), v.end());
  }
  return Tensor<float>({batch.size(), s[0], s[1], s[2]}, std::move(data));
}

StepStats train_step(ParameterSet<float>& params, Sgd& opt, std::span<const SceneSample> batch,
                     const NetworkConfig& net, const TrainConfig& cfg, std::size_t iter,
                     std::size_t total_iter) {
  const std::string where = "iteration " + std::to_string(iter) + ": ";
  StepStats stats;
  stats.iter = iter;
  stats.lr = poly_lr(cfg.base_lr, iter, total_iter, cfg.poly_power);

  Tape<float> tape;
  const BoundParams<float> bound = bind(tape, params, true);
  ForwardContext<float> ctx;
  ctx.mode = NormMode::kBatch;
  Gradients<float> grads;
  try {
    Var<float> image = tape.constant(stack_images(batch));
    NetworkOutput<float> out = pfnet_forward(image, bound, net, ctx);
    const std::size_t h = image.dim(2), w = image.dim(3);
    std::vector<LabelMap> masks;
    for (const SceneSample& s : batch) masks.push_back(s.mask);
    Var<float> ce = ce_loss(bilinear_resize(out.logits, h, w), std::span<const LabelMap>(masks));
    Var<float> total = scale(ce, static_cast<float>(cfg.ce_weight));
    stats.ce = ce.value()[0];

    if (!out.boundary_maps.empty() && cfg.bce_weight > 0) {
      std::vector<std::size_t> strides;
      for (int g : out.boundary_gaps) strides.push_back(std::size_t{1} << g);
      std::vector<std::vector<float>> targets(strides.size());
      for (const SceneSample& s : batch) {
        const auto edges = edge_targets_from_mask(s.mask, cfg.edge_radius, strides);
        for (std::size_t m = 0; m < edges.size(); ++m) {
          for (std::uint8_t e : edges[m].labels) targets[m].push_back(static_cast<float>(e));
        }
      }
      std::vector<Var<float>> terms;
      for (std::size_t m = 0; m < out.boundary_maps.size(); ++m) {
        Var<float> bce = bce_loss(out.boundary_maps[m],
                                  Tensor<float>(out.boundary_maps[m].shape(), std::move(targets[m])));
        stats.bce_total += bce.value()[0];
        terms.push_back(bce);
      }
      total = add(total, scale(add_n(std::span<const Var<float>>(terms)), static_cast<float>(cfg.bce_weight)));
    }
    stats.total = total.value()[0];
    grads = tape.backward(total);
  } catch (const NumericError& e) {
    throw NumericError(where + e.what());
  }

  std::map<std::string, Tensor<float>> grad_map;
  for (const auto& [name, var] : bound.vars) {
    Tensor<float> g = grads.of(var);
    if (!g.all_finite()) throw NumericError(where + "non-finite gradient for '" + name + "'");
    grad_map.emplace(name, std::move(g));
  }
  opt.step(params, grad_map, stats.lr);
  for (const auto& [name, t] : params.params) {
    if (!t.all_finite()) throw NumericError(where + "parameter '" + name + "' became non-finite");
  }
  update_running_stats(params, ctx.batch_stats);
  return stats;
}

std::size_t iterations_per_epoch(std::size_t num_samples, std::size_t batch_size) {
  return batch_size == 0 ? 0 : (num_samples + batch_size - 1) / batch_size;
}

void train(ParameterSet<float>& params, std::span<const SceneSample> samples, const NetworkConfig& net,
           const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  net.validate();
  if (samples.empty()) throw ConfigError("no training samples");
  const std::size_t per_epoch = iterations_per_epoch(samples.size(), cfg.batch_size);
  const std::size_t total_iter = per_epoch * cfg.epochs;
  Sgd opt(cfg.momentum, cfg.weight_decay);
  std::vector<std::size_t> order(samples.size());
  std::size_t iter = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(mix_seed(cfg.seed, 0x5348554646ULL + epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++iter) {
      Rng aug(mix_seed(cfg.seed, 0x41554700000000ULL + iter));
      std::vector<SceneSample> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        const SceneSample& s = samples[order[i]];
        batch.push_back(cfg.augment ? augment(s, static_cast<AugmentOp>(aug.below(6))) : s);
      }
      const StepStats st = train_step(params, opt, batch, net, cfg, iter, total_iter);
      if (on_step) on_step(st, params);
    }
  }
}

void save_checkpoint(const std::filesystem::path& stem, const ParameterSet<float>& params) {
  std::vector<float> flat;
  std::ostringstream index;
  auto emit = [&](const char* kind, const std::map<std::string, Tensor<float>>& m) {
    for (const auto& [name, t] : m) {
      index << kind << '\t' << name << '\t';
      for (std::size_t d = 0; d < t.rank(); ++d) index << (d ? "x" : "") << t.dim(d);
      index << '\t' << flat.size() << '\n';
      const auto v = t.values();
      flat.insert(flat.end(), v.begin(), v.end());
    }
  };
  emit("param", params.params);
  emit("buffer", params.buffers);
  const std::size_t n = flat.size();
  write_tensor(std::filesystem::path(stem.string() + ".pft"), Tensor<float>({n}, std::move(flat)));
  std::ofstream os(stem.string() + ".tsv");
  if (!os) throw IoError("cannot write checkpoint index '" + stem.string() + ".tsv'");
  os << index.str();
  if (!os) throw IoError("failed to write checkpoint index '" + stem.string() + ".tsv'");
}

ParameterSet<float> load_checkpoint(const std::filesystem::path& stem) {
  AnyTensor any = read_tensor(std::filesystem::path(stem.string() + ".pft"));
  const auto* flat = std::get_if<Tensor<float>>(&any);
  if (flat == nullptr) throw IoError("checkpoint payload must be f32");
  std::ifstream is(stem.string() + ".tsv");
  if (!is) throw IoError("cannot open checkpoint index '" + stem.string() + ".tsv'");
  ParameterSet<float> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind, name, dims, off;
    if (!std::getline(ls, kind, '\t') || !std::getline(ls, name, '\t') || !std::getline(ls, dims, '\t') ||
        !std::getline(ls, off)) {
      throw IoError("malformed checkpoint index line: " + line);
    }
    Shape shape;
    std::istringstream ds(dims);
    std::string d;
    std::size_t offset = 0;
    try {
      while (std::getline(ds, d, 'x')) shape.push_back(std::stoul(d));
      offset = std::stoul(off);
    } catch (const std::exception&) {
      throw IoError("malformed checkpoint index line: " + line);
    }
    const std::size_t n = shape_numel(shape);
    if (offset + n > flat->numel()) throw IoError("checkpoint entry '" + name + "' exceeds payload");
    std::vector<float> v(flat->data() + offset, flat->data() + offset + n);
    auto& dst = kind == "param" ? out.params : kind == "buffer" ? out.buffers
                                                                 : throw IoError("unknown checkpoint kind " + kind);
    dst.emplace(name, Tensor<float>(shape, std::move(v)));
  }
  return out;
}

#define PFNET_INSTANTIATE(T)                                                  \
  template Var<T> bce_loss<T>(const Var<T>&, const Tensor<T>&);               \
  template Var<T> ce_loss<T>(const Var<T>&, std::span<const LabelMap>);

PFNET_INSTANTIATE(float)
PFNET_INSTANTIATE(double)
#undef PFNET_INSTANTIATE

}  // namespace pfnet
