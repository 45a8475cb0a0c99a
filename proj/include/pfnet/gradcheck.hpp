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

// Central finite-difference verification of every differentiable operator
// and of the end-to-end PointFlow / PFNet graphs, in double precision.
#ifndef PFNET_GRADCHECK_HPP_
#define PFNET_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pfnet/autodiff.hpp"

namespace pfnet {

struct GradcheckOptions {
  std::size_t seeds = 3;
  /// Step of the five-point central-difference stencil.
  double step = 1e-3;
  double tolerance = 1e-4;
  /// Relative error is |a - n| / max(|a|, |n|, denominator_floor).
  double denominator_floor = 1e-6;
  /// Larger leaves are probed at this many seeded positions.
  std::size_t max_probes_per_leaf = 24;
};

/// A case builds its inputs for a seed and maps bound leaves to a scalar
/// loss plus a selection signature. Elements whose stencil perturbations
/// changes the signature sit on a selection boundary (argmax, top-K, relu
/// kink) where the gradient is undefined; they are skipped and counted.
struct GradcheckCase {
  std::string name;
  struct Instance {
    std::vector<Tensor<double>> inputs;
    std::function<std::pair<Var<double>, std::uint64_t>(Tape<double>&, const std::vector<Var<double>>&)> loss;
  };
  std::function<Instance(std::uint64_t seed)> make;
};

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = false;
};

/// Cases run by `all`, in table order.
const std::vector<GradcheckCase>& gradcheck_cases();
/// Test fixture with a deliberately wrong adjoint; never part of `all`.
GradcheckCase corrupted_adjoint_case();

GradcheckResult run_gradcheck_case(const GradcheckCase& c, const GradcheckOptions& opt);
/// `scope` is "all", a case name, or "fixture:corrupted_adjoint".
/// Throws ConfigError for an unknown scope.
std::vector<GradcheckResult> run_gradcheck(std::string_view scope, const GradcheckOptions& opt);
void write_gradcheck_table(std::ostream& os, const std::vector<GradcheckResult>& rows, double tolerance);

}  // namespace pfnet

#endif  // PFNET_GRADCHECK_HPP_
