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

#include "pfnet/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "pfnet/errors.hpp"
#include "pfnet/gradcheck.hpp"
#include "pfnet/learn.hpp"
#include "pfnet/network.hpp"
#include "pfnet/ops.hpp"

namespace pfnet {
namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;
constexpr std::size_t kEvalBatch = 8;

std::uint64_t fnv_bytes(std::uint64_t h, const char* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= kFnvPrime;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<fs::path> regular_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os = open_out(path);
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

void check_labels(std::span<const SceneSample> scenes, std::size_t num_classes) {
  for (const SceneSample& s : scenes) {
    for (std::uint8_t l : s.mask.labels) {
      if (l != kIgnoreLabel && l >= num_classes) {
        throw ConfigError("class-count mismatch: data contains label " + std::to_string(l) +
                          " but the network has " + std::to_string(num_classes) + " classes");
      }
    }
  }
}

/// Fails unless `params` has exactly the tensors (names and shapes) the
/// network config expects.
void check_compatible(const ParameterSet<float>& params, const NetworkConfig& net) {
  const ParameterSet<float> expected = init_params<float>(net, 0);
  const auto& cls = params.params.find("head.classifier.weight");
  if (cls != params.params.end() && cls->second.dim(0) != net.num_classes) {
    throw ConfigError("class-count mismatch: checkpoint predicts " + std::to_string(cls->second.dim(0)) +
                      " classes, config has " + std::to_string(net.num_classes));
  }
  auto compare = [](const auto& want, const auto& have, const char* kind) {
    for (const auto& [name, t] : want) {
      const auto it = have.find(name);
      if (it == have.end()) throw ConfigError(std::string("checkpoint lacks ") + kind + " '" + name + "'");
      if (it->second.shape() != t.shape()) {
        throw ConfigError(std::string("checkpoint ") + kind + " '" + name + "' has shape " +
                          shape_str(it->second.shape()) + ", config expects " + shape_str(t.shape()));
      }
    }
    if (want.size() != have.size()) throw ConfigError(std::string("checkpoint has extra ") + kind + "s");
  };
  compare(expected.params, params.params, "parameter");
  compare(expected.buffers, params.buffers, "buffer");
}

LabelMap argmax_labels(const Tensor<float>& logits, std::size_t n) {
  const std::size_t k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  const auto v = logits.values();
  LabelMap out(h, w);
  for (std::size_t p = 0; p < h * w; ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (v[(n * k + c) * h * w + p] > v[(n * k + best) * h * w + p]) best = c;
    }
    out.labels[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

struct Inference {
  std::vector<LabelMap> labels;                  // per crop, crop resolution
  std::vector<std::vector<NormalizedPoint>> points;  // per crop, all PFM points
  std::vector<GapPoints> gaps;                   // raw per-gap sets of the batch
};

Inference infer(const ParameterSet<float>& params, const NetworkConfig& net,
                std::span<const SceneSample> batch) {
  Tape<float> tape;
  const BoundParams<float> bound = bind(tape, params, false);
  ForwardContext<float> ctx;
  ctx.mode = NormMode::kRunning;
  const Var<float> image = tape.constant(stack_images(batch));
  NetworkOutput<float> out = pfnet_forward(image, bound, net, ctx);
  const Tensor<float> logits = bilinear_resize(out.logits, image.dim(2), image.dim(3)).value();
  Inference r;
  r.points.resize(batch.size());
  for (std::size_t n = 0; n < batch.size(); ++n) {
    r.labels.push_back(argmax_labels(logits, n));
    for (const GapPoints& g : out.point_sets) {
      for (const auto* sets : {&g.salient, &g.boundary}) {
        if (n < sets->size()) {
          const auto& pts = (*sets)[n].points;
          r.points[n].insert(r.points[n].end(), pts.begin(), pts.end());
        }
      }
    }
  }
  r.gaps = std::move(out.point_sets);
  return r;
}

/// Train without touching the filesystem.
ParameterSet<float> train_params(const RunConfig& cfg, std::span<const SceneSample> train_scenes,
                                 const StepCallback& on_step) {
  if (train_scenes.empty()) throw ConfigError("the manifest has no train split");
  check_labels(train_scenes, cfg.network.num_classes);
  const std::vector<SceneSample> crops = crops_of(train_scenes, cfg.data);
  ParameterSet<float> params = init_params<float>(cfg.network, cfg.seed);
  train(params, crops, cfg.network, cfg.train, on_step);
  return params;
}

std::string scene_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", i);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::uint64_t h = kFnvOffset;
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof buf);
    h = fnv_bytes(h, buf, static_cast<std::size_t>(is.gcount()));
  }
  return h;
}

void write_file_manifest(const fs::path& dir) {
  std::ostringstream os;
  for (const fs::path& rel : regular_files(dir)) {
    if (rel == "files.txt") continue;
    const fs::path p = dir / rel;
    os << rel.generic_string() << '\t' << fs::file_size(p) << '\t' << hex(file_hash(p)) << '\n';
  }
  write_text(dir / "files.txt", os.str());
}

std::uint64_t directory_hash(const fs::path& dir) {
  std::uint64_t h = kFnvOffset;
  for (const fs::path& rel : regular_files(dir)) {
    const std::string name = rel.generic_string();
    h = fnv_bytes(h, name.data(), name.size() + 1);
    const std::uint64_t fh = file_hash(dir / rel);
    h = fnv_bytes(h, reinterpret_cast<const char*>(&fh), sizeof fh);
  }
  return h;
}

// ---- gen-data ---------------------------------------------------------------

GenDataSummary cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  make_dir(out_dir / "scenes");
  if (cfg.data.previews) make_dir(out_dir / "previews");
  const std::size_t count = cfg.data.count;
  const std::size_t val = cfg.data.val_count();
  const std::size_t size = cfg.data.crop_size(), stride = cfg.data.crop_stride();
  const auto ys = window_starts(cfg.data.scene.height, size, stride);
  const auto xs = window_starts(cfg.data.scene.width, size, stride);

  GenDataSummary summary;
  std::vector<ManifestEntry> manifest;
  std::ostringstream crops;
  crops << "scene\tsplit\ty0\tx0\tsize\n";
  double fg_pixels = 0, pixels = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const SceneSample s = synth_scene(cfg.data.scene, i);
    const std::string stem = scene_stem(i);
    const std::string split = i + val >= count ? "val" : "train";
    ManifestEntry e{"scenes/" + stem + ".image.pft", "scenes/" + stem + ".mask.pft", split};
    write_tensor(out_dir / e.image_path, AnyTensor(s.image));
    write_tensor(out_dir / e.mask_path, AnyTensor(to_bytes(s.mask)));
    if (cfg.data.previews) {
      write_ppm(out_dir / "previews" / (stem + ".ppm"), s.image);
      write_pgm(out_dir / "previews" / (stem + ".pgm"), s.mask, cfg.network.num_classes);
    }
    for (std::size_t y : ys) {
      for (std::size_t x : xs) crops << i << '\t' << split << '\t' << y << '\t' << x << '\t' << size << '\n';
    }
    const double n = static_cast<double>(s.mask.labels.size());
    fg_pixels += foreground_ratio(s.mask) * n;
    pixels += n;
    (split == "val" ? summary.val : summary.train) += 1;
    manifest.push_back(std::move(e));
  }
  write_manifest(out_dir / "manifest.tsv", manifest);
  write_text(out_dir / "crops.tsv", crops.str());
  write_text(out_dir / "run.cfg", echo_config(cfg));
  write_file_manifest(out_dir);
  summary.fg_ratio = pixels > 0 ? fg_pixels / pixels : 0.0;
  log << "gen-data: " << count << " scenes (" << summary.train << " train, " << summary.val
      << " val), fg ratio " << std::fixed << std::setprecision(4) << summary.fg_ratio << std::defaultfloat
      << ", " << ys.size() * xs.size() << " crops of " << size << "px per scene -> " << out_dir.string() << '\n';
  return summary;
}

std::vector<SceneSample> load_split(const fs::path& data_dir, std::string_view split) {
  if (split != "train" && split != "val" && split != "all") {
    throw ConfigError("split must be train, val or all, got '" + std::string(split) + "'");
  }
  std::vector<SceneSample> out;
  for (const ManifestEntry& e : read_manifest(data_dir / "manifest.tsv")) {
    if (split == "all" || e.split == split) out.push_back(load_sample(data_dir, e));
  }
  return out;
}

std::vector<SceneSample> crops_of(std::span<const SceneSample> scenes, const DataConfig& data) {
  std::vector<SceneSample> out;
  for (const SceneSample& s : scenes) {
    for (Crop& c : sliding_crop(s.image, s.mask, data.crop_size(), data.crop_stride())) {
      out.push_back({std::move(c.image), std::move(c.mask)});
    }
  }
  return out;
}

// ---- train ------------------------------------------------------------------

ParameterSet<float> cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir,
                              std::ostream& log) {
  const std::vector<SceneSample> scenes = load_split(data_dir, "train");
  make_dir(out_dir);
  write_text(out_dir / "run.cfg", echo_config(cfg));
  std::ofstream csv = open_out(out_dir / "log.csv");
  csv << "iter,lr,ce,bce_total,total\n" << std::setprecision(9);
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t total_iter = 0;
  if (!scenes.empty()) {
    total_iter = iterations_per_epoch(crops_of(std::span(scenes).first(1), cfg.data).size() * scenes.size(),
                                      cfg.train.batch_size) * cfg.train.epochs;
  }
  const std::size_t report_every = std::max<std::size_t>(1, total_iter / 20);
  const StepCallback on_step = [&](const StepStats& st, const ParameterSet<float>& params) {
    csv << st.iter << ',' << st.lr << ',' << st.ce << ',' << st.bce_total << ',' << st.total << '\n';
    if (cfg.train.checkpoint_every > 0 && (st.iter + 1) % cfg.train.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "ckpt_%06zu", st.iter + 1);
      save_checkpoint(out_dir / name, params);
    }
    if ((st.iter + 1) % report_every == 0 || st.iter + 1 == total_iter) {
      log << "iter " << st.iter + 1 << "/" << total_iter << "  lr " << std::setprecision(4) << st.lr
          << "  ce " << st.ce << "  bce " << st.bce_total << "  (" << std::fixed << std::setprecision(1)
          << seconds_since(t0) << "s)" << std::defaultfloat << '\n';
    }
  };
  const ParameterSet<float> params = train_params(cfg, scenes, on_step);
  csv.close();
  if (!csv) throw IoError("write failed: " + (out_dir / "log.csv").string());
  save_checkpoint(out_dir / "model", params);
  write_file_manifest(out_dir);
  log << "train: " << total_iter << " iterations, checkpoint " << (out_dir / "model").string() << ".pft\n";
  return params;
}

// ---- eval -------------------------------------------------------------------

MetricReport evaluate(const RunConfig& cfg, const ParameterSet<float>& params,
                      std::span<const SceneSample> scenes) {
  const NetworkConfig& net = cfg.network;
  check_compatible(params, net);
  check_labels(scenes, net.num_classes);
  if (scenes.empty()) throw ConfigError("nothing to evaluate: the selected split is empty");

  MetricReport r;
  r.num_classes = net.num_classes;
  r.reference_thresholds = cfg.metrics.boundary_thresholds;
  r.thresholds = scaled_thresholds(r.reference_thresholds, cfg.metrics.threshold_divisor);
  ConfusionMatrix cm(net.num_classes);
  std::vector<BoundaryCounts> bc(r.thresholds.size());
  PointCounts pc;
  double fg_pixels = 0, pixels = 0;
  const std::size_t size = cfg.data.crop_size(), stride = cfg.data.crop_stride();

  for (const SceneSample& scene : scenes) {
    const std::vector<Crop> windows = sliding_crop(scene.image, scene.mask, size, stride);
    std::vector<Crop> predictions;
    for (std::size_t b = 0; b < windows.size(); b += kEvalBatch) {
      std::vector<SceneSample> batch;
      for (std::size_t i = b; i < std::min(windows.size(), b + kEvalBatch); ++i) {
        batch.push_back({windows[i].image, windows[i].mask});
      }
      Inference inf = infer(params, net, batch);
      for (std::size_t n = 0; n < batch.size(); ++n) {
        if (net.any_pfm()) pc.merge(fg_sample_counts(inf.points[n], batch[n].mask));
        Crop c;
        c.mask = std::move(inf.labels[n]);
        c.y0 = windows[b + n].y0;
        c.x0 = windows[b + n].x0;
        predictions.push_back(std::move(c));
      }
    }
    const LabelMap pred = stitch_votes(predictions, scene.mask.height, scene.mask.width, net.num_classes);
    cm.add(scene.mask, pred);
    for (std::size_t t = 0; t < r.thresholds.size(); ++t) {
      bc[t].merge(boundary_counts(pred, scene.mask, static_cast<double>(r.thresholds[t])));
    }
    const double n = static_cast<double>(scene.mask.labels.size());
    fg_pixels += foreground_ratio(scene.mask) * n;
    pixels += n;
  }
  r.iou = miou(cm);
  r.f1 = class_f1(cm);
  for (const BoundaryCounts& c : bc) r.boundary_f1.push_back(c.f1());
  if (net.any_pfm() && pc.total > 0) r.fg_sample_ratio = pc.ratio();
  r.fg_pixel_ratio = fg_pixels / pixels;
  return r;
}

MetricReport cmd_eval(const RunConfig& cfg, const fs::path& checkpoint_stem, const fs::path& data_dir,
                      const fs::path& out_dir, std::string_view split, std::ostream& log) {
  const ParameterSet<float> params = load_checkpoint(checkpoint_stem);
  const std::vector<SceneSample> scenes = load_split(data_dir, split);
  const MetricReport r = evaluate(cfg, params, scenes);
  make_dir(out_dir);
  write_text(out_dir / "run.cfg", echo_config(cfg));
  {
    std::ofstream csv = open_out(out_dir / "report.csv");
    write_report_csv(csv, r);
    std::ofstream txt = open_out(out_dir / "report.txt");
    write_report_table(txt, r);
    if (!csv || !txt) throw IoError("write failed in " + out_dir.string());
  }
  write_file_manifest(out_dir);
  log << "eval on " << scenes.size() << " " << split << " scenes\n";
  write_report_table(log, r);
  return r;
}

// ---- gradcheck --------------------------------------------------------------

bool cmd_gradcheck(std::string_view scope, std::ostream& out) {
  const GradcheckOptions opt;
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<GradcheckResult> rows = run_gradcheck(scope, opt);
  write_gradcheck_table(out, rows, opt.tolerance);
  out << "elapsed " << std::fixed << std::setprecision(1) << seconds_since(t0) << "s\n" << std::defaultfloat;
  return std::all_of(rows.begin(), rows.end(), [](const GradcheckResult& r) { return r.passed; });
}

// ---- ablate -----------------------------------------------------------------

std::vector<std::pair<std::string, std::vector<RunConfig>>> ablation_variants(const RunConfig& base,
                                                                              std::string_view axis) {
  std::vector<std::pair<std::string, std::vector<RunConfig>>> out;
  auto each_gap = [](RunConfig c, const auto& fn) {
    for (PfmConfig& g : c.network.pfm) fn(g);
    return c;
  };
  if (axis == "sampling") {
    for (SalientSampling s : {SalientSampling::kMaxPool, SalientSampling::kUniformRandom,
                              SalientSampling::kAttentionTopK}) {
      std::vector<RunConfig> runs;
      const std::uint64_t repeats = s == SalientSampling::kUniformRandom ? 10 : 1;
      for (std::uint64_t r = 0; r < repeats; ++r) {
        runs.push_back(each_gap(base, [&](PfmConfig& g) {
          g.salient_sampling = s;
          g.sampling_seed = r;
        }));
      }
      out.emplace_back(std::string(to_string(s)), std::move(runs));
    }
  } else if (axis == "direction") {
    for (Direction d : {Direction::kTopDown, Direction::kBottomUp, Direction::kTopDownThenBottomUp}) {
      out.emplace_back(std::string(to_string(d)),
                       std::vector{each_gap(base, [&](PfmConfig& g) { g.direction = d; })});
    }
  } else if (axis == "edge_mode") {
    for (EdgeMode m : {EdgeMode::kSubtraction, EdgeMode::kDirect, EdgeMode::kAddition}) {
      out.emplace_back(std::string(to_string(m)),
                       std::vector{each_gap(base, [&](PfmConfig& g) { g.edge_mode = m; })});
    }
  } else if (axis == "gaps") {
    const std::pair<const char*, std::array<bool, 3>> sets[] = {
        {"none", {false, false, false}}, {"gap5", {false, false, true}},
        {"gap4+gap5", {false, true, true}}, {"gap3+gap4+gap5", {true, true, true}}};
    for (const auto& [name, enabled] : sets) {
      RunConfig c = base;
      c.network.pfm_enabled = enabled;
      out.emplace_back(name, std::vector{c});
    }
  } else if (axis == "points") {
    for (std::size_t k : {32, 64, 128, 256}) {
      out.emplace_back("boundary_k=" + std::to_string(k),
                       std::vector{each_gap(base, [&](PfmConfig& g) { g.boundary_k = k; })});
    }
    for (std::size_t s : {7, 14, 24}) {
      out.emplace_back("salient=" + std::to_string(s) + "x" + std::to_string(s),
                       std::vector{each_gap(base, [&](PfmConfig& g) { g.salient_kh = g.salient_kw = s; })});
    }
  } else {
    throw ConfigError("unknown ablation axis '" + std::string(axis) +
                      "' (expected sampling, direction, edge_mode, gaps, points)");
  }
  return out;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows,
                        std::span<const std::size_t> thresholds) {
  os << "variant,miou";
  for (std::size_t t : thresholds) os << ",boundary_f1_" << t << "px";
  os << ",fg_sample_ratio,wall_seconds,runs\n";
  const auto old = os.precision(6);
  for (const AblationRow& r : rows) {
    os << r.variant << ',' << r.miou;
    for (double f : r.boundary_f1) os << ',' << f;
    os << ',';
    if (r.fg_sample_ratio) os << *r.fg_sample_ratio;
    os << ',' << r.seconds << ',' << r.runs << '\n';
  }
  os.precision(old);
}

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, std::string_view axis, const fs::path& data_dir,
                                    const fs::path& out_dir, std::ostream& log) {
  const auto variants = ablation_variants(cfg, axis);
  const std::vector<SceneSample> train_scenes = load_split(data_dir, "train");
  const std::vector<SceneSample> val_scenes = load_split(data_dir, "val");
  std::vector<AblationRow> rows;
  std::vector<std::size_t> thresholds;
  for (const auto& [name, runs] : variants) {
    AblationRow row;
    row.variant = name;
    row.runs = runs.size();
    const auto t0 = std::chrono::steady_clock::now();
    double fg_sum = 0;
    std::size_t fg_n = 0;
    for (const RunConfig& run : runs) {
      RunConfig c = run;
      c.finalize();
      const ParameterSet<float> params = train_params(c, train_scenes, nullptr);
      const MetricReport r = evaluate(c, params, val_scenes);
      thresholds = r.thresholds;
      row.miou += r.iou.mean / static_cast<double>(runs.size());
      row.boundary_f1.resize(r.boundary_f1.size());
      for (std::size_t t = 0; t < r.boundary_f1.size(); ++t) {
        row.boundary_f1[t] += r.boundary_f1[t] / static_cast<double>(runs.size());
      }
      if (r.fg_sample_ratio) {
        fg_sum += *r.fg_sample_ratio;
        ++fg_n;
      }
    }
    if (fg_n > 0) row.fg_sample_ratio = fg_sum / static_cast<double>(fg_n);
    row.seconds = seconds_since(t0);
    log << "ablate " << axis << ": " << name << "  mIoU " << std::fixed << std::setprecision(2)
        << 100 * row.miou << "  (" << std::setprecision(1) << row.seconds << "s)\n" << std::defaultfloat;
    rows.push_back(std::move(row));
  }
  make_dir(out_dir);
  write_text(out_dir / "run.cfg", echo_config(cfg));
  {
    std::ofstream csv = open_out(out_dir / "ablation.csv");
    write_ablation_csv(csv, rows, thresholds);
    if (!csv) throw IoError("write failed: " + (out_dir / "ablation.csv").string());
  }
  write_file_manifest(out_dir);
  write_ablation_csv(log, rows, thresholds);
  return rows;
}

// ---- sample-points ----------------------------------------------------------

void cmd_sample_points(const RunConfig& cfg, const fs::path& checkpoint_stem, const fs::path& data_dir,
                       std::size_t sample_index, std::size_t window_index, const fs::path& out_dir,
                       std::ostream& log) {
  if (!cfg.network.any_pfm()) throw ConfigError("sample-points needs at least one enabled PFM");
  const ParameterSet<float> params = load_checkpoint(checkpoint_stem);
  check_compatible(params, cfg.network);
  const std::vector<ManifestEntry> manifest = read_manifest(data_dir / "manifest.tsv");
  if (sample_index >= manifest.size()) {
    throw ConfigError("sample " + std::to_string(sample_index) + " out of range (manifest has " +
                      std::to_string(manifest.size()) + ")");
  }
  const SceneSample scene = load_sample(data_dir, manifest[sample_index]);
  const std::vector<Crop> windows =
      sliding_crop(scene.image, scene.mask, cfg.data.crop_size(), cfg.data.crop_stride());
  if (window_index >= windows.size()) {
    throw ConfigError("window " + std::to_string(window_index) + " out of range (" +
                      std::to_string(windows.size()) + " windows)");
  }
  const Crop& crop = windows[window_index];
  const std::vector<SceneSample> batch{{crop.image, crop.mask}};
  const Inference inf = infer(params, cfg.network, batch);

  make_dir(out_dir);
  write_text(out_dir / "run.cfg", echo_config(cfg));
  const std::size_t h = crop.image.dim(1), w = crop.image.dim(2);
  std::vector<std::uint8_t> base(h * w * 3);
  const auto px = crop.image.values();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < h * w; ++i) {
      base[i * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(px[c * h * w + i], 0.0f, 1.0f) * 255.0f));
    }
  }
  auto first = [](const std::vector<PointSet>& sets) {
    return sets.empty() ? std::span<const NormalizedPoint>() : std::span<const NormalizedPoint>(sets.front().points);
  };
  for (const GapPoints& g : inf.gaps) {
    const std::string tag = "gap" + std::to_string(g.gap);
    {
      std::ofstream csv = open_out(out_dir / ("points_" + tag + ".csv"));
      write_point_csv(csv, "salient", g.salient, true);
      write_point_csv(csv, "boundary", g.boundary, false);
      if (!csv) throw IoError("write failed in " + out_dir.string());
    }
    // Markers: a plus sign per point; centers are drawn last so no arm can
    // cover another point's exact pixel. Boundary wins shared pixels.
    std::vector<std::uint8_t> rgb = base;
    auto paint = [&](std::ptrdiff_t i, std::ptrdiff_t j, const std::uint8_t* color) {
      if (i < 0 || j < 0 || i >= static_cast<std::ptrdiff_t>(h) || j >= static_cast<std::ptrdiff_t>(w)) return;
      std::copy(color, color + 3, rgb.begin() + (static_cast<std::size_t>(i) * w + static_cast<std::size_t>(j)) * 3);
    };
    const std::uint8_t red[3] = {255, 0, 0}, green[3] = {0, 255, 0};
    for (bool centers : {false, true}) {
      for (const auto& [sets, color] : {std::pair{&g.salient, red}, std::pair{&g.boundary, green}}) {
        for (const NormalizedPoint& p : first(*sets)) {
          const auto i = static_cast<std::ptrdiff_t>(std::min(h - 1, static_cast<std::size_t>(std::floor(p.u * static_cast<double>(h)))));
          const auto j = static_cast<std::ptrdiff_t>(std::min(w - 1, static_cast<std::size_t>(std::floor(p.v * static_cast<double>(w)))));
          if (centers) {
            paint(i, j, color);
          } else {
            paint(i - 1, j, color);
            paint(i + 1, j, color);
            paint(i, j - 1, color);
            paint(i, j + 1, color);
          }
        }
      }
    }
    write_ppm_rgb(out_dir / ("overlay_" + tag + ".ppm"), h, w, rgb);
    log << tag << ": " << first(g.salient).size() << " salient + " << first(g.boundary).size()
        << " boundary points on a " << g.level_h << "x" << g.level_w << " grid\n";
  }
  write_file_manifest(out_dir);
}

}  // namespace pfnet
