#include <algorithm>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "emplace/config.hpp"
#include "emplace/error.hpp"
#include "emplace/pipeline.hpp"
#include "emplace/rng.hpp"
#include "tempdir.hpp"

using namespace emplace;
using namespace emplace::config;

TEST(Config, DefaultsValidate) {
  const auto c = from_key_values({});
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.train.si, "SI-2");
  EXPECT_EQ(c.train.batch_size, 64u);
  EXPECT_DOUBLE_EQ(c.train.lr, 1e-5);
  EXPECT_DOUBLE_EQ(c.train.clip, 0.5);
  EXPECT_EQ(c.train.patience_epochs, 5u);
  EXPECT_EQ(c.detector.window, (detect::WindowSize{8, 8}));
  EXPECT_DOUBLE_EQ(c.detector.small_ratio, 1.2);
  EXPECT_EQ(c.clustering.min_pts, 3u);
  EXPECT_DOUBLE_EQ(c.clustering.eps_m, 1.0);
  EXPECT_EQ(c.synth.seed, sub_seed(0, "synth"));
}

TEST(Config, OverlayAndDerivedSeeds) {
  const auto c = from_key_values({{"general.seed", "17"},
                                  {"train.lr", "0.01"},
                                  {"train.margin", "fixed"},
                                  {"detect.window", "6x4"},
                                  {"detect.calibration_windows", "8x8,6x6"},
                                  {"raster.masks", "0:40,0.25:10"},
                                  {"si.SI-X", "10,20,400,900"},
                                  {"si.SI-2", "274,475,750"}});
  EXPECT_EQ(c.seed, 17u);
  EXPECT_EQ(c.train.seed, 17u);
  EXPECT_EQ(c.synth.seed, sub_seed(17, "synth"));
  EXPECT_EQ(c.train.margin.mode, optim::MarginMode::fixed);
  EXPECT_EQ(c.detector.window, (detect::WindowSize{6, 4}));
  EXPECT_EQ(c.calibration_windows.size(), 2u);
  ASSERT_EQ(c.raster.preprocess.masks.size(), 2u);
  EXPECT_DOUBLE_EQ(c.raster.preprocess.masks[1].center_rel_col, 0.25);
  EXPECT_EQ(mining::find_si("SI-X", c.si_table).an_max, 900);
  EXPECT_EQ(mining::find_si("SI-2", c.si_table).ap_min, 274);
  EXPECT_EQ(c.si_table.size(), 6u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(from_key_values({{"train.lrr", "1"}}), ConfigError);
  EXPECT_THROW(from_key_values({{"train.lr", "fast"}}), ConfigError);
  EXPECT_THROW(from_key_values({{"train.margin", "sometimes"}}), ConfigError);
  EXPECT_THROW(from_key_values({{"si.SI-Y", "30,20,400"}}), ConfigError);
  EXPECT_THROW(from_key_values({{"detect.window", "8by8"}}), ConfigError);
  auto c = from_key_values({{"detect.window", "60x8"}});
  EXPECT_THROW(c.validate(), ConfigError);
  c = from_key_values({{"train.si", "SI-7"}});
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, IniFileAndDefaultDocumentRoundTrip) {
  testing_support::TempDir dir;
  std::ofstream(dir / "a.ini") << "[train]\nlr = 0.003\n\n[paths]\ndata_dir = /x/y\n";
  const auto c = from_key_values(read_ini(dir / "a.ini"));
  EXPECT_DOUBLE_EQ(c.train.lr, 0.003);
  EXPECT_EQ(c.data_dir, "/x/y");
  std::ofstream(dir / "b.ini") << "lr = 1\n";
  EXPECT_THROW(read_ini(dir / "b.ini"), ConfigError);
  EXPECT_THROW(read_ini(dir / "missing.ini"), ConfigError);

  std::ofstream(dir / "d.ini") << default_ini();
  const auto d = from_key_values(read_ini(dir / "d.ini"));
  EXPECT_NO_THROW(d.validate());
  EXPECT_EQ(d.detector.window, from_key_values({}).detector.window);
  EXPECT_EQ(d.train.max_epochs, from_key_values({}).train.max_epochs);
}

TEST(Config, WindowStrings) {
  EXPECT_EQ(parse_window("12x3"), (detect::WindowSize{12, 3}));
  EXPECT_EQ(window_string({8, 8}), "8x8");
}

TEST(Pipeline, ArtifactTagsAndCommands) {
  auto c = from_key_values({});
  EXPECT_EQ(pipeline::artifact_tag(c), "SI-2");
  c = from_key_values({{"train.margin", "fixed"}, {"train.cut_and_flip", "false"}, {"train.si", "SI-3"}});
  EXPECT_EQ(pipeline::artifact_tag(c), "SI-3_fixed_nocf");
  c = from_key_values({{"train.encoder", "passthrough"}});
  EXPECT_EQ(pipeline::artifact_tag(c), "passthrough");
  const auto& cmds = pipeline::commands();
  for (const char* name : {"synth", "cluster", "mine", "train", "eval-order", "finetune", "calibrate",
                           "eval-discrete", "detect", "analyze", "report"}) {
    EXPECT_NE(std::find(cmds.begin(), cmds.end(), name), cmds.end()) << name;
  }
  std::ostringstream log;
  EXPECT_THROW(pipeline::run_command("frobnicate", c, {}, log), ConfigError);
}
