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

// Acceptance harness: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. The desk-scale benchmark runs behind
// criteria 4-6 are cached in the work directory, keyed by the hash of the
// CLI binary and the exact command line, so an unchanged build reuses them.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metric_oracles.hpp"
#include "pfnet/commands.hpp"
#include "pfnet/config.hpp"
#include "pfnet/gradcheck.hpp"
#include "pfnet/metrics.hpp"
#include "pfnet/ops.hpp"
#include "pfnet/pointflow.hpp"

namespace fs = std::filesystem;
using namespace pfnet;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(PFNET_BINARY) + " " + args + " >> \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::map<std::string, double> read_report(const fs::path& csv) {
  std::map<std::string, double> out;
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    out[line.substr(0, a) + "." + line.substr(a + 1, b - a - 1)] = std::stod(line.substr(b + 1));
  }
  return out;
}

// ---- criterion 1 -------------------------------------------------------------

Outcome gradcheck_all() {
  const auto t0 = Clock::now();
  const GradcheckOptions opt;
  const auto rows = run_gradcheck("all", opt);
  const double secs = seconds_since(t0);
  double worst = 0;
  std::size_t failed = 0;
  for (const auto& r : rows) {
    worst = std::max(worst, r.max_rel_error);
    failed += !r.passed;
  }
  const bool has_e2e = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.name == "pfm_forward"; }) &&
                       std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.name == "pfnet_forward"; });
  return {failed == 0 && has_e2e && secs < 120.0 && opt.seeds == 3 && opt.tolerance <= 1e-4,
          std::to_string(rows.size() - failed) + "/" + std::to_string(rows.size()) + " ops, worst rel err " +
              std::to_string(worst) + ", " + fmt(secs, 1) + " s"};
}

// ---- criterion 2 -------------------------------------------------------------

Outcome dense_equivalence() {
  double worst = 0;
  for (std::size_t side : {4u, 8u}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Tape<double> tape;
      const auto src = Tensor<double>::uniform({1, 8, side, side}, mix_seed(seed, side), -1, 1);
      const auto dst = Tensor<double>::uniform({1, 8, 2 * side, 2 * side}, mix_seed(seed, 100 + side), -1, 1);
      std::vector<NormalizedPoint> pts;
      for (std::size_t i = 0; i < side; ++i)
        for (std::size_t j = 0; j < side; ++j) pts.push_back(cell_center(i, j, side, side));
      const auto s = tape.constant(src), d = tape.constant(dst);
      const auto rows = point_propagate(s, d, 0, std::span<const NormalizedPoint>(pts));
      const auto sparse = scatter_points(d, 0, std::span<const NormalizedPoint>(pts), rows).value();
      const auto dense = dense_affinity_reference(src, dst);
      for (std::size_t i = 0; i < dense.numel(); ++i) worst = std::max(worst, std::abs(sparse[i] - dense[i]));
    }
  }
  return {worst <= 1e-6, "max |sparse - dense| = " + std::to_string(worst) + " over 4x4 and 8x8, 10 seeds"};
}

// ---- criterion 3 -------------------------------------------------------------

Outcome affinity_rows() {
  // Channel 0 of the source is constant one, so output channel 0 minus the
  // sampled query is exactly the affinity row sum.
  Rng rng(2024);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng.below(256);
    std::vector<NormalizedPoint> pts(k);
    for (auto& p : pts) p = {rng.uniform(0, 1), rng.uniform(0, 1)};
    auto s = Tensor<double>::uniform({1, 4, 16, 16}, mix_seed(7, std::uint64_t(trial)), -3, 3).to_vector();
    std::fill(s.begin(), s.begin() + 256, 1.0);
    Tape<double> tape;
    const auto dst = tape.constant(Tensor<double>::uniform({1, 4, 32, 32}, mix_seed(8, std::uint64_t(trial)), -3, 3));
    const auto out = point_propagate(tape.constant(Tensor<double>({1, 4, 16, 16}, s)), dst, 0,
                                     std::span<const NormalizedPoint>(pts)).value();
    const auto q = point_sample(dst, 0, std::span<const NormalizedPoint>(pts)).value();
    for (std::size_t i = 0; i < k; ++i) worst = std::max(worst, std::abs(out[i * 4] - q[i * 4] - 1.0));
  }
  return {worst <= 1e-6, "max |row sum - 1| = " + std::to_string(worst) + " over 1000 cases"};
}

// ---- criterion 7 -------------------------------------------------------------

Outcome default_snapshot() {
  RunConfig cfg;
  apply_config_file(cfg, fs::path(PFNET_SOURCE_DIR) / "configs/default.cfg");
  cfg.finalize();
  const std::string golden = slurp(fs::path(PFNET_SOURCE_DIR) / "tests/golden/default_echo.cfg");
  bool ok = echo_config(cfg) == golden;
  for (int g = 3; g <= 5; ++g) {
    const auto& p = cfg.network.gap(g);
    ok = ok && p.boundary_k == 128 && p.salient_kh == 14 && p.salient_kw == 14;
  }
  ok = ok && cfg.train.ce_weight == 1.0 && cfg.train.bce_weight == 1.0 && cfg.data.crop_ref == 896 &&
       cfg.data.stride_ref == 512 && cfg.train.poly_power == 0.9;
  return {ok, "K=" + std::to_string(cfg.network.gap(3).boundary_k) + ", salient " +
                  std::to_string(cfg.network.gap(3).salient_kh) + "x" + std::to_string(cfg.network.gap(3).salient_kw) +
                  ", loss weights " + fmt(cfg.train.ce_weight, 1) + "/" + fmt(cfg.train.bce_weight, 1) + ", crop " +
                  std::to_string(cfg.data.crop_ref) + "/" + std::to_string(cfg.data.stride_ref) + ", poly " +
                  fmt(cfg.train.poly_power, 1) + ", golden echo " + (echo_config(cfg) == golden ? "matches" : "differs")};
}

// ---- criterion 9 -------------------------------------------------------------

Outcome metric_oracles() {
  Rng rng(99);
  std::size_t count_mismatch = 0;
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.below(4);
    const auto gt = oracle::random_mask(rng, 16, 16, k), pred = oracle::random_mask(rng, 16, 16, k);
    ConfusionMatrix cm(k);
    cm.add(gt, pred);
    const auto counts = oracle::confusion(gt, pred, k);
    for (std::size_t g = 0; g < k; ++g)
      for (std::size_t p = 0; p < k; ++p) count_mismatch += cm.at(g, p) != counts[g * k + p];
    const auto iou = miou(cm), f1 = class_f1(cm);
    const auto oi = oracle::class_scores(counts, k, false), of = oracle::class_scores(counts, k, true);
    count_mismatch += iou.excluded != oi.excluded;
    worst = std::max({worst, std::abs(iou.mean - oi.mean), std::abs(f1.mean - of.mean)});
    for (std::size_t c = 0; c < k; ++c)
      worst = std::max({worst, std::abs(iou.per_class[c] - oi.per_class[c]), std::abs(f1.per_class[c] - of.per_class[c])});
    for (double t : {1.0, 2.0, 3.0}) {
      const auto b = boundary_counts(pred, gt, t);
      const auto o = oracle::boundary(pred, gt, t);
      count_mismatch += (b.pred_matched != o.pred_matched) + (b.pred_total != o.pred_total) +
                        (b.gt_matched != o.gt_matched) + (b.gt_total != o.gt_total);
      worst = std::max(worst, std::abs(boundary_f1(pred, gt, t) - oracle::boundary_f1(o)));
    }
  }
  return {count_mismatch == 0 && worst <= 1e-9,
          std::to_string(count_mismatch) + " count mismatches, max ratio error " + std::to_string(worst) + " over 100 cases"};
}

// ---- cached CLI runs ---------------------------------------------------------

class Runner {
 public:
  explicit Runner(fs::path work) : work_(std::move(work)), log_(work_ / "cli.log") {
    fs::create_directories(work_);
    binary_ = std::to_string(file_hash(PFNET_BINARY));
  }

  const fs::path& work() const { return work_; }
  const fs::path& log() const { return log_; }

  // Runs `args` unless `stamp` records the same binary and arguments.
  // Returns the wall time of the (possibly cached) run, or a negative value
  // on failure.
  double cached(const fs::path& stamp, const std::string& args) {
    const std::string key = binary_ + "\t" + args;
    if (fs::exists(stamp)) {
      std::ifstream in(stamp);
      std::string k1, k2, secs;
      std::getline(in, k1);
      std::getline(in, secs);
      if (k1 == key) return std::stod(secs);
    }
    fs::remove(stamp);
    const auto t0 = Clock::now();
    std::cout << "  running: pfnet " << args << std::endl;
    if (run_cli(args, log_) != 0) return -1;
    const double secs = seconds_since(t0);
    fs::create_directories(stamp.parent_path());
    std::ofstream(stamp) << key << "\n" << secs << "\n";
    return secs;
  }

 private:
  fs::path work_, log_;
  std::string binary_;
};

const char* kFpnArgs = " --network.use_ppm=false --pfm.gap3.enabled=false --pfm.gap4.enabled=false --pfm.gap5.enabled=false";
const char* kNoBoundaryArgs = " --pfm.gap3.boundary_flow=false --pfm.gap4.boundary_flow=false --pfm.gap5.boundary_flow=false";

struct BenchResult {
  bool ok = true;
  std::string error;
  // variant -> per-seed report
  std::map<std::string, std::vector<std::map<std::string, double>>> reports;
  std::map<std::string, std::vector<double>> seconds;
};

// Desk-scale benchmark: default config = 128 canvas, fg 0.03, 200/50 scenes, 16 epochs.
BenchResult run_benchmark(Runner& r) {
  BenchResult out;
  const std::vector<std::pair<std::string, std::string>> variants{
      {"pfnet", ""}, {"fpn", kFpnArgs}, {"noboundary", kNoBoundaryArgs}};
  for (int seed = 1; seed <= 3; ++seed) {
    const fs::path dir = r.work() / ("bench_seed" + std::to_string(seed));
    const fs::path data = dir / "data";
    if (r.cached(dir / "data.stamp", "gen-data --seed=" + std::to_string(seed) + " " + data.string()) < 0) {
      return {false, "gen-data failed for seed " + std::to_string(seed), {}, {}};
    }
    for (const auto& [name, extra] : variants) {
      const fs::path model = dir / name;
      const std::string s = " --seed=" + std::to_string(seed);
      const double t_train = r.cached(dir / (name + ".train.stamp"), "train" + s + extra + " " + data.string() + " " + model.string());
      const double t_eval = t_train < 0 ? -1
                                        : r.cached(dir / (name + ".eval.stamp"), "eval " + (model / "model").string() + " " +
                                                                                     data.string() + " --out " + (model / "eval").string());
      if (t_train < 0 || t_eval < 0) return {false, name + " seed " + std::to_string(seed) + " failed (see cli.log)", {}, {}};
      out.reports[name].push_back(read_report(model / "eval" / "report.csv"));
      out.seconds[name].push_back(t_train + t_eval);
    }
  }
  return out;
}

std::vector<double> column(const BenchResult& b, const std::string& variant, const std::string& key) {
  std::vector<double> v;
  for (const auto& rep : b.reports.at(variant)) v.push_back(rep.count(key) ? rep.at(key) : std::nan(""));
  return v;
}

std::string join(const std::vector<double>& v, int prec) {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : "/") + fmt(x, prec);
  return s;
}

Outcome miou_ordering(const BenchResult& b) {
  if (!b.ok) return {false, b.error};
  const auto pf = column(b, "pfnet", "summary.miou"), fpn = column(b, "fpn", "summary.miou");
  const double gap = 100.0 * (median(pf) - median(fpn));
  double slowest = 0;
  for (const auto& [v, secs] : b.seconds) slowest = std::max(slowest, *std::max_element(secs.begin(), secs.end()));
  return {gap >= 1.0 && slowest < 15 * 60,
          "median val mIoU PFNet " + fmt(100 * median(pf), 2) + " vs FPN " + fmt(100 * median(fpn), 2) + " (+" + fmt(gap, 2) +
              " pts; seeds PFNet " + join(pf, 4) + ", FPN " + join(fpn, 4) + "); slowest run " + fmt(slowest, 0) + " s"};
}

Outcome boundary_ordering(const BenchResult& b) {
  if (!b.ok) return {false, b.error};
  // Tightest reference threshold (3 px) at desk scale.
  const std::string key = "boundary_f1.3px@1px";
  const auto on = column(b, "pfnet", key), off = column(b, "noboundary", key);
  return {median(on) > median(off), "median boundary F1 (3px -> 1px) with boundary flow " + fmt(median(on)) + " vs without " +
                                        fmt(median(off)) + " (seeds " + join(on, 4) + " vs " + join(off, 4) + ")"};
}

Outcome fg_sampling(const BenchResult& b) {
  if (!b.ok) return {false, b.error};
  const auto s = column(b, "pfnet", "points.fg_sample_ratio"), p = column(b, "pfnet", "points.fg_pixel_ratio");
  std::vector<double> ratio;
  for (std::size_t i = 0; i < s.size(); ++i) ratio.push_back(s[i] / p[i]);
  return {median(ratio) >= 1.5, "median fg_sample_ratio / fg pixel ratio = " + fmt(median(ratio), 3) + " (seeds " + join(ratio, 3) +
                                    "; sampled " + join(s, 4) + ", pixels " + join(p, 4) + ")"};
}

// ---- criterion 8 -------------------------------------------------------------

Outcome determinism(Runner& r) {
  const fs::path dir = r.work() / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string small = " --seed=5 --data.count=24 --train.epochs=2";
  auto pipeline = [&](const std::string& tag) -> bool {
    const fs::path d = dir / (tag + "_data"), m = dir / (tag + "_model"), e = dir / (tag + "_eval");
    return run_cli("gen-data" + small + " " + d.string(), r.log()) == 0 &&
           run_cli("train" + small + " " + d.string() + " " + m.string(), r.log()) == 0 &&
           run_cli("eval " + (m / "model").string() + " " + d.string() + " --out " + e.string(), r.log()) == 0;
  };
  if (!pipeline("a") || !pipeline("b")) return {false, "pipeline failed (see cli.log)"};
  std::string detail;
  bool ok = true;
  for (const char* part : {"data", "model", "eval"}) {
    const auto ha = directory_hash(dir / (std::string("a_") + part)), hb = directory_hash(dir / (std::string("b_") + part));
    ok = ok && ha == hb;
    std::ostringstream os;
    os << part << (ha == hb ? " identical" : " DIFFER") << " (" << std::hex << ha << ")";
    detail += (detail.empty() ? "" : ", ") + os.str();
  }
  // The full-size benchmark dataset is regenerated too.
  const fs::path full = dir / "full_data";
  const fs::path bench = r.work() / "bench_seed1" / "data";
  if (fs::exists(bench / "files.txt") && run_cli("gen-data --seed=1 " + full.string(), r.log()) == 0) {
    const bool same = directory_hash(full) == directory_hash(bench);
    ok = ok && same;
    detail += std::string(", full-size gen-data ") + (same ? "identical" : "DIFFERS");
  }
  return {ok, detail};
}

// ---- criterion 10 ------------------------------------------------------------

Outcome ablation_tables(Runner& r) {
  const fs::path dir = r.work() / "ablation";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string small = " --seed=3 --data.count=20 --train.epochs=2";
  if (run_cli("gen-data" + small + " " + (dir / "data").string(), r.log()) != 0) return {false, "gen-data failed"};
  std::string detail;
  bool ok = true;
  const std::map<std::string, std::vector<std::string>> expect{
      {"direction", {"top_down", "bottom_up", "td_then_bu"}}, {"edge_mode", {"subtraction", "direct", "addition"}}};
  for (const auto& [axis, names] : expect) {
    const fs::path out = dir / axis;
    if (run_cli("ablate" + small + " " + axis + " " + (dir / "data").string() + " " + out.string(), r.log()) != 0) {
      ok = false;
      detail += axis + " failed; ";
      continue;
    }
    std::ifstream in(out / "ablation.csv");
    std::string line;
    std::getline(in, line);
    std::vector<std::string> got;
    while (std::getline(in, line)) got.push_back(line.substr(0, line.find(',')));
    ok = ok && got == names;
    detail += axis + ": " + std::to_string(got.size()) + " rows (";
    for (std::size_t i = 0; i < got.size(); ++i) detail += (i ? ", " : "") + got[i];
    detail += "); ";
  }
  detail += "reduced scale: 20 scenes, 2 epochs";
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PFNet acceptance criteria"};
  std::string work = "acceptance_runs";
  std::string only;
  app.add_option("--work-dir", work, "Directory for runs and caches");
  app.add_option("--only", only, "Comma-separated criterion numbers to run");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  for (std::stringstream ss(only); ss.good();) {
    std::string tok;
    std::getline(ss, tok, ',');
    if (!tok.empty()) selected.insert(std::stoi(tok));
  }
  auto wanted = [&](int n) { return selected.empty() || selected.count(n); };

  Runner runner{fs::absolute(work)};
  std::map<int, std::pair<std::string, Outcome>> results;
  auto record = [&](int n, const std::string& title, const std::function<Outcome()>& f) {
    if (!wanted(n)) return;
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    results[n] = {title, o};
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << " - " << title << ": " << o.detail << std::endl;
  };

  record(1, "gradcheck all", gradcheck_all);
  record(2, "sparse vs dense affinity", dense_equivalence);
  record(3, "affinity rows sum to 1", affinity_rows);
  record(7, "default config snapshot", default_snapshot);
  record(9, "metrics vs brute-force oracles", metric_oracles);
  record(10, "ablation tables", [&] { return ablation_tables(runner); });
  BenchResult bench;
  if (wanted(4) || wanted(5) || wanted(6)) bench = run_benchmark(runner);
  record(4, "PFNet beats FPN by >= 1 mIoU point", [&] { return miou_ordering(bench); });
  record(5, "boundary flow improves tight boundary F1", [&] { return boundary_ordering(bench); });
  record(6, "foreground sampling ratio >= 1.5x", [&] { return fg_sampling(bench); });
  record(8, "bitwise-reproducible reruns", [&] { return determinism(runner); });

  std::cout << "\nsummary\n";
  int failed = 0;
  for (const auto& [n, r] : results) {
    std::cout << "criterion " << n << ": " << (r.second.pass ? "PASS" : "FAIL") << " - " << r.first << '\n';
    failed += !r.second.pass;
  }
  std::cout << results.size() - std::size_t(failed) << "/" << results.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
