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

#include <doctest.h>

#include <fstream>
#include <sstream>

#include "pfnet/config.hpp"
#include "pfnet/errors.hpp"

using namespace pfnet;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const std::filesystem::path kSource = PFNET_SOURCE_DIR;

}  // namespace

TEST_SUITE("configuration") {
  TEST_CASE("default snapshot") {
    RunConfig cfg;
    cfg.finalize();
    for (int g = 3; g <= 5; ++g) {
      CHECK(cfg.network.gap(g).boundary_k == 128);
      CHECK(cfg.network.gap(g).salient_kh == 14);
      CHECK(cfg.network.gap(g).salient_kw == 14);
      CHECK(cfg.network.gap_enabled(g));
    }
    CHECK(cfg.train.ce_weight == 1.0);
    CHECK(cfg.train.bce_weight == 1.0);
    CHECK(cfg.train.poly_power == 0.9);
    CHECK(cfg.train.base_lr == 0.01);
    CHECK(cfg.train.epochs == 16);
    CHECK(cfg.data.crop_ref == 896);
    CHECK(cfg.data.stride_ref == 512);
    CHECK(cfg.data.crop_size() == 64);
    CHECK(cfg.data.crop_stride() == 37);
    CHECK(cfg.data.val_count() == 50);
    CHECK(cfg.metrics.boundary_thresholds == std::vector<std::size_t>{12, 9, 5, 3});
    CHECK(echo_config(cfg) == slurp(kSource / "tests/golden/default_echo.cfg"));
  }

  TEST_CASE("the shipped default file reproduces the defaults") {
    RunConfig from_file;
    apply_config_file(from_file, kSource / "configs/default.cfg");
    from_file.finalize();
    RunConfig defaults;
    defaults.finalize();
    CHECK(echo_config(from_file) == echo_config(defaults));
  }

  TEST_CASE("echo round-trips through the parser") {
    RunConfig cfg;
    apply_override(cfg, "seed", "42");
    apply_override(cfg, "pfm.gap4.boundary_k", "64");
    apply_override(cfg, "pfm.gap3.direction", "td_then_bu");
    apply_override(cfg, "pfm.gap5.affinity_scale", "0.125");
    apply_override(cfg, "network.use_ppm", "false");
    apply_override(cfg, "train.weight_decay", "0.0003");
    apply_override(cfg, "data.texture", "flat");
    cfg.finalize();
    RunConfig back;
    apply_config_text(back, echo_config(cfg), "echo");
    back.finalize();
    CHECK(echo_config(back) == echo_config(cfg));
    CHECK(back.seed == 42);
    CHECK(back.train.seed == 42);
    CHECK(back.data.scene.seed == 42);
    CHECK(back.network.gap(4).boundary_k == 64);
    CHECK(back.network.gap(3).direction == Direction::kTopDownThenBottomUp);
    CHECK(back.network.gap(5).affinity_scale == 0.125);
    CHECK_FALSE(back.network.use_ppm);
  }

  TEST_CASE("every listed key is settable and echoed") {
    const auto keys = config_keys();
    CHECK(keys.size() > 40);
    const std::string echo = echo_config(RunConfig{});
    for (const auto& k : keys) {
      CAPTURE(k);
      const auto dot = k.rfind('.');
      const std::string leaf = dot == std::string::npos ? k : k.substr(dot + 1);
      const bool found = echo.find("\n" + leaf + " = ") != std::string::npos || echo.rfind(leaf + " = ", 0) == 0;
      CHECK(found);
    }
  }

  TEST_CASE("errors") {
    RunConfig cfg;
    CHECK_THROWS_AS(apply_override(cfg, "train.nope", "1"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "train.epochs", "many"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "train.epochs", "-3"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "network.use_ppm", "maybe"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "pfm.gap3.edge_mode", "xor"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "network.backbone_channels", "1,2"), ConfigError);
    CHECK_THROWS_AS(apply_config_text(cfg, "[train\nepochs = 1\n", "t"), ConfigError);
    CHECK_THROWS_AS(apply_config_text(cfg, "[train]\nepochs\n", "t"), ConfigError);
    try {
      apply_config_text(cfg, "# comment\n[train]\nepochs = 2\nbogus = 1\n", "my.cfg");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("my.cfg:4") != std::string::npos);
    }
    CHECK(cfg.train.epochs == 2);
    CHECK_THROWS_AS(apply_config_file(cfg, "/nonexistent/cfg"), IoError);

    RunConfig crop;
    apply_override(crop, "data.scale_divisor", "7");  // 128 px crops against a 64 px network
    CHECK_THROWS_AS(crop.finalize(), ConfigError);
    RunConfig lr;
    apply_override(lr, "train.base_lr", "0");
    CHECK_THROWS_AS(lr.finalize(), ConfigError);
  }
}
