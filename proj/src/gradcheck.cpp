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

#include "pfnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <numeric>

#include "pfnet/errors.hpp"
#include "pfnet/learn.hpp"
#include "pfnet/network.hpp"
#include "pfnet/nn.hpp"
#include "pfnet/ops.hpp"
#include "pfnet/pointflow.hpp"
#include "pfnet/random.hpp"

namespace pfnet {
namespace {

using V = Var<double>;
using Leaves = std::vector<V>;
using Instance = GradcheckCase::Instance;
using LossResult = std::pair<V, std::uint64_t>;

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;

std::uint64_t fnv(std::uint64_t h, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) {
    h ^= (x >> (8 * i)) & 0xFF;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Hash of every relu activation pattern recorded on the tape.
std::uint64_t relu_signature(const Tape<double>& tape) {
  std::uint64_t h = kFnvOffset;
  for (std::size_t id = 0; id < tape.size(); ++id) {
    if (tape.op_name(id) != "relu") continue;
    for (double v : tape.value(id).values()) h = fnv(h, v > 0.0 ? 1 : 0);
  }
  return h;
}

std::uint64_t points_signature(std::uint64_t h, std::span<const PointSet> sets) {
  for (const PointSet& s : sets) {
    for (const NormalizedPoint& p : s.points) {
      h = fnv(h, static_cast<std::uint64_t>(std::llround(p.u * 1e9)));
      h = fnv(h, static_cast<std::uint64_t>(std::llround(p.v * 1e9)));
    }
    h = fnv(h, 0xFFFF);
  }
  return h;
}

Tensor<double> rand(Shape s, std::uint64_t seed, std::uint64_t stream, double lo = -1, double hi = 1) {
  return Tensor<double>::uniform(std::move(s), mix_seed(seed, stream), lo, hi);
}

/// sum(y * R) with a fixed random R, so every output element matters.
V weighted(const V& y, std::uint64_t seed) {
  Tape<double>& t = *y.tape();
  return sum(mul(y, t.constant(rand(y.shape(), seed, 0xC0FFEE))));
}

LossResult plain(const V& loss) { return {loss, 0}; }

GradcheckCase unary_case(std::string name, V (*fn)(const V&)) {
  return {name, [fn](std::uint64_t seed) {
            return Instance{{rand({2, 3, 4, 5}, seed, 1)},
                            [fn, seed](Tape<double>&, const Leaves& x) { return plain(weighted(fn(x[0]), seed)); }};
          }};
}

GradcheckCase binary_case(std::string name, BinaryKind kind, Shape b_shape) {
  return {name, [kind, b_shape](std::uint64_t seed) {
            return Instance{{rand({2, 3, 4, 4}, seed, 1), rand(b_shape, seed, 2)},
                            [kind, seed](Tape<double>&, const Leaves& x) {
                              return plain(weighted(binary(kind, x[0], x[1]), seed));
                            }};
          }};
}

ConvParams<double> conv_of(const Leaves& x, std::size_t wi, std::size_t stride, std::size_t pad) {
  return {x[wi], x[wi + 1], stride, pad};
}

std::vector<NormalizedPoint> random_points(std::size_t k, std::uint64_t seed, std::uint64_t stream) {
  Rng rng(mix_seed(seed, stream));
  std::vector<NormalizedPoint> pts(k);
  for (auto& p : pts) p = {rng.uniform01(), rng.uniform01()};
  return pts;
}

std::vector<NormalizedPoint> distinct_cell_points(std::size_t k, std::size_t h, std::size_t w,
                                                  std::uint64_t seed) {
  std::vector<std::size_t> cells(h * w);
  std::iota(cells.begin(), cells.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 77));
  for (std::size_t i = cells.size(); i > 1; --i) std::swap(cells[i - 1], cells[rng.below(i)]);
  std::vector<NormalizedPoint> pts;
  for (std::size_t i = 0; i < k; ++i) pts.push_back(cell_center(cells[i] / w, cells[i] % w, h, w));
  // One deliberate collision so last-write-wins routing is exercised.
  pts.push_back(pts.front());
  return pts;
}

GradcheckCase pfm_case(std::string name, Direction dir, EdgeMode edge) {
  return {name, [dir, edge](std::uint64_t seed) {
            const std::size_t c = 4;
            return Instance{
                {rand({2, c, 4, 4}, seed, 1), rand({2, c, 8, 8}, seed, 2), rand({1, 2 * c, 3, 3}, seed, 3),
                 rand({1}, seed, 4), rand({1, c, 1, 1}, seed, 5), rand({1}, seed, 6)},
                [dir, edge, seed](Tape<double>&, const Leaves& x) {
                  PfmConfig cfg;
                  cfg.salient_kh = cfg.salient_kw = 2;
                  cfg.boundary_k = 4;
                  cfg.direction = dir;
                  cfg.edge_mode = edge;
                  const PfmParams<double> params{conv_of(x, 2, 1, 1), conv_of(x, 4, 1, 0)};
                  const PfmOutput<double> out = pfm_forward(x[0], x[1], cfg, params);
                  V loss = add(weighted(out.refined, seed), weighted(out.refined_high, seed + 1));
                  loss = add(loss, weighted(out.boundary_map, seed + 2));
                  std::uint64_t sig = points_signature(kFnvOffset, out.salient_points);
                  sig = points_signature(sig, out.boundary_points);
                  return LossResult{loss, sig};
                }};
          }};
}

GradcheckCase pfnet_case() {
  return {"pfnet_forward", [](std::uint64_t seed) {
            NetworkConfig net;
            net.input_h = net.input_w = 32;
            net.num_classes = 3;
            net.fpn_channels = 4;
            net.stem_channels = 3;
            net.backbone_channels = {3, 4, 4, 4};
            auto params = std::make_shared<ParameterSet<double>>(init_params<double>(net, seed));
            // Perturb zero-initialised biases/betas so no gradient is trivially symmetric.
            std::uint64_t stream = 100;
            for (auto& [name, t] : params->params) {
              if (name.ends_with(".bias") || name.ends_with(".beta")) {
                t = rand(t.shape(), seed, stream++, -0.1, 0.1);
              }
            }
            Instance inst;
            inst.inputs.push_back(rand({2, 3, 32, 32}, seed, 1, 0, 1));
            std::vector<std::string> names;
            for (const auto& [name, t] : params->params) {
              names.push_back(name);
              inst.inputs.push_back(t);
            }
            std::vector<LabelMap> masks(2, LabelMap(32, 32, 0));
            Rng rng(mix_seed(seed, 9));
            for (auto& m : masks) {
              for (std::size_t r = 0; r < 3; ++r) {  // a few rectangles
                const std::size_t y = rng.below(24), x = rng.below(24);
                const auto l = static_cast<std::uint8_t>(1 + rng.below(2));
                for (std::size_t i = y; i < y + 8; ++i) {
                  for (std::size_t j = x; j < x + 8; ++j) m.at(i, j) = l;
                }
              }
            }
            inst.loss = [net, params, names, masks](Tape<double>&, const Leaves& x) {
              BoundParams<double> bound;
              bound.source = params.get();
              for (std::size_t i = 0; i < names.size(); ++i) bound.vars.emplace(names[i], x[i + 1]);
              ForwardContext<double> ctx;
              const NetworkOutput<double> out = pfnet_forward(x[0], bound, net, ctx);
              V loss = ce_loss(bilinear_resize(out.logits, 32, 32), std::span<const LabelMap>(masks));
              std::vector<std::size_t> strides;
              for (int g : out.boundary_gaps) strides.push_back(std::size_t{1} << g);
              std::vector<std::vector<LabelMap>> edges;
              for (const LabelMap& mask : masks) edges.push_back(edge_targets_from_mask(mask, 1, strides));
              for (std::size_t m = 0; m < out.boundary_maps.size(); ++m) {
                std::vector<double> target;
                for (const auto& e : edges) target.insert(target.end(), e[m].labels.begin(), e[m].labels.end());
                loss = add(loss, bce_loss(out.boundary_maps[m], Tensor<double>(out.boundary_maps[m].shape(), target)));
              }
              std::uint64_t sig = kFnvOffset;
              for (const GapPoints& g : out.point_sets) {
                sig = points_signature(sig, g.salient);
                sig = points_signature(sig, g.boundary);
              }
              return LossResult{loss, sig};
            };
            return inst;
          }};
}

std::vector<GradcheckCase> build_cases() {
  std::vector<GradcheckCase> cs;
  cs.push_back(unary_case("relu", [](const V& x) { return relu(x); }));
  cs.push_back(unary_case("sigmoid", [](const V& x) { return sigmoid(x); }));
  cs.push_back(unary_case("exp", [](const V& x) { return exponential(x); }));
  cs.push_back(unary_case("neg", [](const V& x) { return negate(x); }));
  cs.push_back(binary_case("add", BinaryKind::kAdd, {2, 3, 4, 4}));
  cs.push_back(binary_case("sub", BinaryKind::kSub, {2, 3, 4, 4}));
  cs.push_back(binary_case("mul", BinaryKind::kMul, {2, 3, 4, 4}));
  cs.push_back(binary_case("add_per_channel", BinaryKind::kAdd, {1, 3, 1, 1}));
  cs.push_back(binary_case("mul_per_channel", BinaryKind::kMul, {1, 3, 1, 1}));
  cs.push_back(binary_case("mul_spatial_map", BinaryKind::kMul, {2, 1, 4, 4}));
  cs.push_back(binary_case("sub_spatial_map", BinaryKind::kSub, {2, 1, 4, 4}));
  cs.push_back(unary_case("scale", [](const V& x) { return scale(x, -1.7); }));
  cs.push_back({"matmul", [](std::uint64_t seed) {
                  return Instance{{rand({3, 4}, seed, 1), rand({4, 5}, seed, 2)}, [seed](Tape<double>&, const Leaves& x) {
                                    return plain(weighted(matmul(x[0], x[1]), seed));
                                  }};
                }});
  cs.push_back({"transpose", [](std::uint64_t seed) {
                  return Instance{{rand({3, 5}, seed, 1)},
                                  [seed](Tape<double>&, const Leaves& x) { return plain(weighted(transpose(x[0]), seed)); }};
                }});
  cs.push_back({"softmax_rows", [](std::uint64_t seed) {
                  return Instance{{rand({4, 6}, seed, 1, -3, 3)}, [seed](Tape<double>&, const Leaves& x) {
                                    return plain(weighted(softmax_rows(x[0]), seed));
                                  }};
                }});
  cs.push_back({"concat_channels", [](std::uint64_t seed) {
                  return Instance{{rand({2, 2, 3, 3}, seed, 1), rand({2, 3, 3, 3}, seed, 2)},
                                  [seed](Tape<double>&, const Leaves& x) {
                                    return plain(weighted(concat_channels({x[0], x[1]}), seed));
                                  }};
                }});
  cs.push_back({"reshape", [](std::uint64_t seed) {
                  return Instance{{rand({2, 3, 4}, seed, 1)}, [seed](Tape<double>&, const Leaves& x) {
                                    return plain(weighted(reshape(x[0], Shape{6, 4}), seed));
                                  }};
                }});
  cs.push_back({"sum", [](std::uint64_t seed) {
                  return Instance{{rand({3, 4}, seed, 1)},
                                  [](Tape<double>&, const Leaves& x) { return plain(sum(mul(x[0], x[0]))); }};
                }});
  cs.push_back({"mean", [](std::uint64_t seed) {
                  return Instance{{rand({3, 4}, seed, 1)},
                                  [](Tape<double>&, const Leaves& x) { return plain(mean(mul(x[0], x[0]))); }};
                }});
  struct ConvSpec {
    const char* name;
    std::size_t k, stride, pad;
  };
  for (const ConvSpec s : {ConvSpec{"conv2d_3x3", 3, 1, 1}, ConvSpec{"conv2d_3x3_stride2", 3, 2, 1},
                           ConvSpec{"conv2d_1x1", 1, 1, 0}}) {
    cs.push_back({s.name, [s](std::uint64_t seed) {
                    return Instance{{rand({2, 3, 5, 6}, seed, 1), rand({4, 3, s.k, s.k}, seed, 2), rand({4}, seed, 3)},
                                    [s, seed](Tape<double>&, const Leaves& x) {
                                      return plain(weighted(conv2d(x[0], conv_of(x, 1, s.stride, s.pad)), seed));
                                    }};
                  }});
  }
  cs.push_back({"channel_norm", [](std::uint64_t seed) {
                  return Instance{{rand({2, 3, 3, 4}, seed, 1), rand({3}, seed, 2, 0.5, 1.5), rand({3}, seed, 3)},
                                  [seed](Tape<double>&, const Leaves& x) {
                                    return plain(weighted(channel_norm(x[0], x[1], x[2]), seed));
                                  }};
                }});
  cs.push_back({"channel_norm_frozen", [](std::uint64_t seed) {
                  return Instance{{rand({2, 3, 3, 4}, seed, 1), rand({3}, seed, 2, 0.5, 1.5), rand({3}, seed, 3)},
                                  [seed](Tape<double>&, const Leaves& x) {
                                    const std::vector<double> m{0.1, -0.2, 0.3}, v{0.5, 1.5, 2.0};
                                    return plain(weighted(channel_norm_frozen(x[0], x[1], x[2], std::span<const double>(m),
                                                                              std::span<const double>(v)),
                                                          seed));
                                  }};
                }});
  cs.push_back({"adaptive_max_pool", [](std::uint64_t seed) {
                  return Instance{{rand({2, 3, 5, 7}, seed, 1)}, [seed](Tape<double>&, const Leaves& x) {
                                    MaxPoolResult<double> r = adaptive_max_pool(x[0], 2, 3);
                                    std::uint64_t sig = kFnvOffset;
                                    for (std::size_t a : r.argmax) sig = fnv(sig, a);
                                    return LossResult{weighted(r.pooled, seed), sig};
                                  }};
                }});
  cs.push_back({"adaptive_avg_pool", [](std::uint64_t seed) {
                  return Instance{{rand({2, 3, 6, 5}, seed, 1)}, [seed](Tape<double>&, const Leaves& x) {
                                    return plain(weighted(adaptive_avg_pool(x[0], 4, 3), seed));
                                  }};
                }});
  cs.push_back({"box_avg_pool", [](std::uint64_t seed) {
                  return Instance{{rand({2, 2, 5, 6}, seed, 1)}, [seed](Tape<double>&, const Leaves& x) {
                                    return plain(weighted(box_avg_pool(x[0], 3), seed));
                                  }};
                }});
  cs.push_back({"bilinear_resize_up", [](std::uint64_t seed) {
                  return Instance{{rand({2, 2, 3, 5}, seed, 1)}, [seed](Tape<double>&, const Leaves& x) {
                                    return plain(weighted(bilinear_resize(x[0], 7, 4), seed));
                                  }};
                }});
  cs.push_back({"bilinear_resize_down", [](std::uint64_t seed) {
                  return Instance{{rand({2, 2, 8, 6}, seed, 1)}, [seed](Tape<double>&, const Leaves& x) {
                                    return plain(weighted(bilinear_resize(x[0], 3, 4), seed));
                                  }};
                }});
  cs.push_back({"point_sample", [](std::uint64_t seed) {
                  return Instance{{rand({2, 3, 4, 5}, seed, 1)}, [seed](Tape<double>&, const Leaves& x) {
                                    const auto pts = random_points(7, seed, 5);
                                    return plain(weighted(point_sample(x[0], 1, std::span<const NormalizedPoint>(pts)), seed));
                                  }};
                }});
  cs.push_back({"scatter_points", [](std::uint64_t seed) {
                  return Instance{{rand({2, 3, 4, 4}, seed, 1), rand({6, 3}, seed, 2)},
                                  [seed](Tape<double>&, const Leaves& x) {
                                    const auto pts = distinct_cell_points(5, 4, 4, seed);
                                    return plain(weighted(scatter_points(x[0], 1, std::span<const NormalizedPoint>(pts), x[1]), seed));
                                  }};
                }});
  cs.push_back({"bce_loss", [](std::uint64_t seed) {
                  std::vector<double> t(2 * 16);
                  Rng rng(mix_seed(seed, 3));
                  for (double& v : t) v = static_cast<double>(rng.below(2));
                  Tensor<double> target({2, 1, 4, 4}, std::move(t));
                  return Instance{{rand({2, 1, 4, 4}, seed, 1, -2, 2)}, [target](Tape<double>&, const Leaves& x) {
                                    return plain(bce_loss(sigmoid(x[0]), target));
                                  }};
                }});
  cs.push_back({"ce_loss", [](std::uint64_t seed) {
                  std::vector<LabelMap> masks(2, LabelMap(3, 3));
                  Rng rng(mix_seed(seed, 3));
                  for (auto& m : masks) {
                    for (auto& l : m.labels) l = static_cast<std::uint8_t>(rng.below(4));
                  }
                  masks[0].labels[4] = kIgnoreLabel;
                  return Instance{{rand({2, 4, 3, 3}, seed, 1, -2, 2)}, [masks](Tape<double>&, const Leaves& x) {
                                    return plain(ce_loss(x[0], std::span<const LabelMap>(masks)));
                                  }};
                }});
  cs.push_back({"compute_saliency", [](std::uint64_t seed) {
                  return Instance{{rand({2, 3, 4, 4}, seed, 1), rand({2, 3, 8, 8}, seed, 2), rand({1, 6, 3, 3}, seed, 3),
                                   rand({1}, seed, 4)},
                                  [seed](Tape<double>&, const Leaves& x) {
                                    return plain(weighted(compute_saliency(x[0], x[1], conv_of(x, 2, 1, 1)), seed));
                                  }};
                }});
  cs.push_back({"point_propagate", [](std::uint64_t seed) {
                  return Instance{{rand({2, 4, 4, 4}, seed, 1), rand({2, 4, 8, 8}, seed, 2)},
                                  [seed](Tape<double>&, const Leaves& x) {
                                    const auto pts = random_points(6, seed, 5);
                                    return plain(weighted(
                                        point_propagate(x[0], x[1], 1, std::span<const NormalizedPoint>(pts), 0.7), seed));
                                  }};
                }});
  cs.push_back(pfm_case("pfm_forward", Direction::kTopDown, EdgeMode::kSubtraction));
  cs.push_back(pfm_case("pfm_forward_bottom_up", Direction::kBottomUp, EdgeMode::kSubtraction));
  cs.push_back(pfm_case("pfm_forward_td_then_bu", Direction::kTopDownThenBottomUp, EdgeMode::kAddition));
  cs.push_back(pfm_case("pfm_forward_direct_edge", Direction::kTopDown, EdgeMode::kDirect));
  cs.push_back(pfnet_case());
  return cs;
}

double eval_loss(const GradcheckCase::Instance& inst, const std::vector<Tensor<double>>& inputs,
                 std::uint64_t& signature) {
  Tape<double> tape;
  Leaves leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t, false));
  auto [loss, sig] = inst.loss(tape, leaves);
  signature = fnv(sig, relu_signature(tape));
  return loss.value()[0];
}

}  // namespace

const std::vector<GradcheckCase>& gradcheck_cases() {
  static const std::vector<GradcheckCase> cases = build_cases();
  return cases;
}

GradcheckCase corrupted_adjoint_case() {
  return {"fixture:corrupted_adjoint", [](std::uint64_t seed) {
            return Instance{{rand({3, 4}, seed, 1)}, [seed](Tape<double>& t, const Leaves& x) {
                              // y = x^2 whose adjoint forgets the factor 2.
                              std::vector<double> y = x[0].value().to_vector();
                              for (double& v : y) v *= v;
                              const V in = x[0];
                              V sq = t.record("square_corrupted", Tensor<double>(in.shape(), std::move(y)), {in},
                                              [in](std::span<const double> g, Tape<double>& tape) {
                                                std::vector<double> dx(g.size());
                                                const auto xv = in.value().values();
                                                for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * xv[i];
                                                tape.accumulate(in, dx);
                                              });
                              return plain(weighted(sq, seed));
                            }};
          }};
}

GradcheckResult run_gradcheck_case(const GradcheckCase& c, const GradcheckOptions& opt) {
  GradcheckResult r;
  r.name = c.name;
  for (std::size_t s = 0; s < opt.seeds; ++s) {
    const std::uint64_t seed = 1000 + 17 * s;
    const Instance inst = c.make(seed);
    Tape<double> tape;
    Leaves leaves;
    for (const auto& t : inst.inputs) leaves.push_back(tape.leaf(t, true));
    auto [loss, sig0] = inst.loss(tape, leaves);
    const std::uint64_t base_sig = fnv(sig0, relu_signature(tape));
    const Gradients<double> grads = tape.backward(loss);

    std::vector<Tensor<double>> inputs = inst.inputs;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
      const Tensor<double> analytic = grads.of(leaves[li]);
      const std::size_t n = inputs[li].numel();
      std::vector<std::size_t> probe(n);
      std::iota(probe.begin(), probe.end(), std::size_t{0});
      if (n > opt.max_probes_per_leaf) {
        Rng rng(mix_seed(seed, 0x9E0 + li));
        for (std::size_t i = 0; i < opt.max_probes_per_leaf; ++i) std::swap(probe[i], probe[i + rng.below(n - i)]);
        probe.resize(opt.max_probes_per_leaf);
        std::sort(probe.begin(), probe.end());
      }
      const Tensor<double> original = inputs[li];
      for (std::size_t e : probe) {
        // Five-point stencil: O(h^4) truncation lets h stay large enough
        // that round-off in the loss does not dominate small gradients.
        std::vector<double> v = original.to_vector();
        const double x0 = v[e];
        double f[4];
        bool stable = true;
        const double offsets[4] = {-2.0, -1.0, 1.0, 2.0};
        for (int q = 0; q < 4; ++q) {
          v[e] = x0 + offsets[q] * opt.step;
          inputs[li] = Tensor<double>(original.shape(), v);
          std::uint64_t sig = 0;
          f[q] = eval_loss(inst, inputs, sig);
          stable = stable && sig == base_sig;
        }
        inputs[li] = original;
        if (!stable) {
          ++r.skipped;
          continue;
        }
        const double numeric = (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * opt.step);
        const double a = analytic[e];
        const double denom = std::max({std::abs(a), std::abs(numeric), opt.denominator_floor});
        r.max_rel_error = std::max(r.max_rel_error, std::abs(a - numeric) / denom);
        ++r.checked;
      }
    }
  }
  r.passed = r.checked > 0 && r.max_rel_error < opt.tolerance;
  return r;
}

std::vector<GradcheckResult> run_gradcheck(std::string_view scope, const GradcheckOptions& opt) {
  std::vector<GradcheckResult> out;
  if (scope == "fixture:corrupted_adjoint") {
    out.push_back(run_gradcheck_case(corrupted_adjoint_case(), opt));
    return out;
  }
  for (const GradcheckCase& c : gradcheck_cases()) {
    if (scope == "all" || scope == c.name) out.push_back(run_gradcheck_case(c, opt));
  }
  if (out.empty()) throw ConfigError("unknown gradcheck scope '" + std::string(scope) + "'");
  return out;
}

void write_gradcheck_table(std::ostream& os, const std::vector<GradcheckResult>& rows, double tolerance) {
  std::size_t width = 4;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  os << std::left << std::setw(static_cast<int>(width) + 2) << "op" << std::right << std::setw(14) << "max_rel_err"
     << std::setw(9) << "checked" << std::setw(9) << "skipped" << std::setw(8) << "status" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(width) + 2) << r.name << std::right << std::setw(14)
       << std::scientific << std::setprecision(3) << r.max_rel_error << std::defaultfloat << std::setw(9) << r.checked
       << std::setw(9) << r.skipped << std::setw(8) << (r.passed ? "PASS" : "FAIL") << '\n';
  }
  const auto failed = std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.passed; });
  os << rows.size() - static_cast<std::size_t>(failed) << "/" << rows.size() << " passed at tolerance " << tolerance << '\n';
}

}  // namespace pfnet
