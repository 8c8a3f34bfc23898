#include <gtest/gtest.h>

#include <filesystem>

#include "softarm/config.hpp"

using namespace softarm;

TEST(Config, EmptyTextGivesDefaults) {
  EXPECT_EQ(format_config(parse_config("")), format_config(ExperimentConfig{}));
}

TEST(Config, ShippedDefaultFileMatchesBuiltins) {
  const auto cfg = load_config(std::string(SOFTARM_SOURCE_DIR) + "/configs/default.ini");
  EXPECT_EQ(format_config(cfg), format_config(ExperimentConfig{}));
}

TEST(Config, FormatParseRoundTrip) {
  ExperimentConfig c;
  c.controller.lambda = {1.5, 2, 3, 4, 5, 6.25};
  c.controller.centers = 50;
  c.controller.kd = 0.01;
  c.controller.antiwindup = false;
  c.plant.model.stiffness_kpa = 321.5;
  c.plant.model.drift = false;
  c.plant.drop_time = 40.0;
  c.trajectory.seed = 123456789012345ull;
  c.monitor.strict_band = 0.1;
  c.experiment.mode = "realtime";
  c.experiment.sysid_amplitude = "peak";
  const auto text = format_config(c);
  const auto back = parse_config(text);
  EXPECT_EQ(format_config(back), text);
  EXPECT_EQ(back.controller.lambda, c.controller.lambda);
  EXPECT_EQ(back.trajectory.seed, c.trajectory.seed);
  EXPECT_FALSE(back.controller.antiwindup);

  const auto path = (std::filesystem::temp_directory_path() / "softarm_cfg.ini").string();
  save_config(c, path);
  EXPECT_EQ(format_config(load_config(path)), text);
  std::filesystem::remove(path);
}

TEST(Config, PartialFileOverridesOnlyGivenKeys) {
  const auto c = parse_config("[controller]\nkd = 4\n; comment\n[plant]\ntau_p = 0.02\n");
  EXPECT_DOUBLE_EQ(c.controller.kd, 4.0);
  EXPECT_DOUBLE_EQ(c.plant.model.tau_p, 0.02);
  EXPECT_DOUBLE_EQ(c.controller.k_ff, 35.0);
}

TEST(Config, RejectsUnknownAndMisplacedKeys) {
  EXPECT_THROW(parse_config("[controller]\nlambdas = 1\n"), InvalidArgument);
  EXPECT_THROW(parse_config("[plant]\nkd = 1\n"), InvalidArgument);
  EXPECT_THROW(parse_config("[nonsense]\nkd = 1\n"), InvalidArgument);
  EXPECT_THROW(parse_config("kd = 1\n"), InvalidArgument);
}

TEST(Config, RejectsMalformedValues) {
  EXPECT_THROW(parse_config("[controller]\nkd = fast\n"), InvalidArgument);
  EXPECT_THROW(parse_config("[controller]\nkd = 1 2\n"), InvalidArgument);
  EXPECT_THROW(parse_config("[controller]\nantiwindup = maybe\n"), InvalidArgument);
  EXPECT_THROW(parse_config("[controller]\nlambda = 1, 2, 3\n"), InvalidArgument);
  EXPECT_THROW(parse_config("[experiment]\nmode = batch\n"), InvalidArgument);
  EXPECT_THROW(parse_config("[controller]\nkd = 0\n"), InvalidArgument);
  EXPECT_THROW(parse_config("[controller]\ntau_filter = 0.05\n"), InvalidArgument);
  EXPECT_THROW(parse_config("[controller]\ncenters = 1\n"), InvalidArgument);
  EXPECT_NO_THROW(parse_config("[controller]\ncenters = 1\nwidth = 0.5\n"));
}

TEST(Config, GainsSizeLearningRatesForBiasRow) {
  ExperimentConfig c;
  c.controller.centers = 50;
  const auto g = c.gains();
  EXPECT_EQ(g.gamma.size(), 51);
  EXPECT_TRUE((g.gamma.array() == 15.0).all());
  EXPECT_EQ(g.lambda.size(), 6);
  EXPECT_DOUBLE_EQ(c.duration(), 120.0);
}
