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

// Library side of the `pfnet` command-line tool. Every command writes its
// artifacts under an output directory together with `files.txt`, a sorted
// manifest of every produced file with its size and FNV-1a 64 hash.

#ifndef PFNET_COMMANDS_HPP_
#define PFNET_COMMANDS_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "pfnet/config.hpp"
#include "pfnet/metrics.hpp"

namespace pfnet {

namespace fs = std::filesystem;

/// FNV-1a 64 of a file's bytes.
std::uint64_t file_hash(const fs::path& path);
/// Writes `<dir>/files.txt`: relative path, size, hash for every regular file
/// below `dir` (itself excluded), in path order.
void write_file_manifest(const fs::path& dir);
/// Combined hash of every regular file below `dir` (paths and bytes).
std::uint64_t directory_hash(const fs::path& dir);

struct GenDataSummary {
  std::size_t train = 0, val = 0;
  double fg_ratio = 0;  // pixel-weighted over all generated scenes
};

/// Scenes (PFT1 + optional previews), manifest.tsv, crops.tsv with the crop
/// windows of every scene, run.cfg, files.txt.
GenDataSummary cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log);

/// Loads the split's scenes from a gen-data directory.
std::vector<SceneSample> load_split(const fs::path& data_dir, std::string_view split);
/// Every crop window of every scene, at the configured crop size and stride.
std::vector<SceneSample> crops_of(std::span<const SceneSample> scenes, const DataConfig& data);

/// Trains on the train split; writes log.csv (iter,lr,ce,bce_total,total),
/// model.pft/.tsv, periodic ckpt_<iter>.pft/.tsv, run.cfg, files.txt.
/// Non-finite values abort with NumericError.
ParameterSet<float> cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir,
                              std::ostream& log);

/// Sliding-window inference on `split` (train, val or all) with running norm
/// statistics, majority-vote stitching, and the full metric report. Writes
/// report.csv, report.txt, files.txt. Throws ConfigError on a class-count
/// mismatch between checkpoint, config, and data.
MetricReport cmd_eval(const RunConfig& cfg, const fs::path& checkpoint_stem, const fs::path& data_dir,
                      const fs::path& out_dir, std::string_view split, std::ostream& log);

/// Same as cmd_eval but on in-memory parameters, writing nothing.
MetricReport evaluate(const RunConfig& cfg, const ParameterSet<float>& params,
                      std::span<const SceneSample> scenes);

/// Prints the table; returns true iff every case passed.
bool cmd_gradcheck(std::string_view scope, std::ostream& out);

struct AblationRow {
  std::string variant;
  double miou = 0;
  std::vector<double> boundary_f1;
  std::optional<double> fg_sample_ratio;
  double seconds = 0;
  std::size_t runs = 1;  // > 1 when the row averages several sampling seeds
};

/// Variants of one axis (sampling, direction, edge_mode, gaps, points) as
/// (name, config) pairs derived from `base`. Throws ConfigError otherwise.
std::vector<std::pair<std::string, std::vector<RunConfig>>> ablation_variants(const RunConfig& base,
                                                                              std::string_view axis);

/// Trains and evaluates each variant on the same data; writes ablation.csv.
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, std::string_view axis, const fs::path& data_dir,
                                    const fs::path& out_dir, std::ostream& log);
void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows,
                        std::span<const std::size_t> thresholds);

/// Runs one crop window of one scene through the network and writes
/// points_gap<l>.csv (batch,flow,u,v,score) and overlay_gap<l>.ppm (salient
/// points red, boundary points green) for every enabled PFM.
void cmd_sample_points(const RunConfig& cfg, const fs::path& checkpoint_stem, const fs::path& data_dir,
                       std::size_t sample_index, std::size_t window_index, const fs::path& out_dir,
                       std::ostream& log);

}  // namespace pfnet

#endif  // PFNET_COMMANDS_HPP_
