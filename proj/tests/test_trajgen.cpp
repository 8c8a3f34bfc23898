#include <gtest/gtest.h>

#include <filesystem>

#include "softarm/trajgen.hpp"

using namespace softarm;

TEST(Steps, CountTimingAndBounds) {
  const auto sched = random_steps(StepSequence::symmetric(6, 0.5, 12, 10.0, 7));
  ASSERT_EQ(sched.size(), 12u);
  for (std::size_t k = 0; k < sched.size(); ++k) {
    EXPECT_DOUBLE_EQ(sched[k].t, 10.0 * k);
    EXPECT_EQ(sched[k].q_cmd.size(), 6);
    EXPECT_TRUE((sched[k].q_cmd.array().abs() <= 0.5).all());
  }
}

TEST(Steps, SeedDeterminesSchedule) {
  const auto a = random_steps(StepSequence::symmetric(6, 0.5, 12, 10.0, 7));
  const auto b = random_steps(StepSequence::symmetric(6, 0.5, 12, 10.0, 7));
  const auto c = random_steps(StepSequence::symmetric(6, 0.5, 12, 10.0, 8));
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k].q_cmd, b[k].q_cmd);
  EXPECT_NE(a[0].q_cmd, c[0].q_cmd);
}

TEST(Steps, UniformOverTheBox) {
  const auto sched = random_steps(StepSequence::symmetric(1, 1.0, 20000, 1.0, 3));
  double mean = 0.0, sq = 0.0;
  for (const auto& c : sched) {
    mean += c.q_cmd(0);
    sq += c.q_cmd(0) * c.q_cmd(0);
  }
  mean /= sched.size();
  sq /= sched.size();
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(sq, 1.0 / 3.0, 0.01);
}

TEST(Steps, RejectsBadSequence) {
  EXPECT_THROW(random_steps(StepSequence::symmetric(6, 4.0, 12, 10.0, 1)), InvalidArgument);
  EXPECT_THROW(random_steps(StepSequence::symmetric(6, 0.5, 0, 10.0, 1)), InvalidArgument);
  EXPECT_THROW(random_steps(StepSequence::symmetric(6, 0.5, 3, 0.0, 1)), InvalidArgument);
  auto seq = StepSequence::symmetric(6, 0.5, 3, 1.0, 1);
  seq.hi(2) = -0.6;
  EXPECT_THROW(random_steps(seq), InvalidArgument);
}

TEST(Steps, CommandAtHoldsUntilNextStep) {
  const auto sched = random_steps(StepSequence::symmetric(2, 0.5, 3, 10.0, 1));
  EXPECT_EQ(command_at(sched, 0.0), sched[0].q_cmd);
  EXPECT_EQ(command_at(sched, 9.999), sched[0].q_cmd);
  EXPECT_EQ(command_at(sched, 10.0), sched[1].q_cmd);
  EXPECT_EQ(command_at(sched, 1e6), sched[2].q_cmd);
  EXPECT_THROW(command_at(StepSchedule{}, 0.0), InvalidArgument);
}

TEST(Steps, CsvRoundTripIsExact) {
  const auto sched = random_steps(StepSequence::symmetric(6, 0.5, 12, 10.0, 9));
  const auto path = (std::filesystem::temp_directory_path() / "softarm_sched.csv").string();
  write_schedule_csv(sched, path);
  const auto back = read_schedule_csv(path);
  ASSERT_EQ(back.size(), sched.size());
  for (std::size_t k = 0; k < sched.size(); ++k) {
    EXPECT_EQ(back[k].t, sched[k].t);
    EXPECT_EQ(back[k].q_cmd, sched[k].q_cmd);
  }
  std::filesystem::remove(path);
}

TEST(Ramp, TriangleShape) {
  const auto r = pressure_ramp(200.0, 20.0, 2, 100.0);
  ASSERT_EQ(r.size(), 4001u);
  EXPECT_DOUBLE_EQ(r.front().dp, 0.0);
  EXPECT_DOUBLE_EQ(r.back().dp, 0.0);
  EXPECT_NEAR(r[500].dp, 200.0, 1e-9);
  EXPECT_NEAR(r[1500].dp, -200.0, 1e-9);
  EXPECT_NEAR(r[2500].dp, 200.0, 1e-9);
  EXPECT_NEAR(r.back().t, 40.0, 1e-12);
  for (std::size_t k = 1; k < r.size(); ++k) {
    EXPECT_LE(std::abs(r[k].dp), 200.0 + 1e-9);
    EXPECT_NEAR(std::abs(r[k].dp - r[k - 1].dp), 200.0 * 4.0 / 2000.0, 1e-9);
  }
}

TEST(Ramp, Rejections) {
  EXPECT_THROW(pressure_ramp(200.0, 1.0, 2, 100.0), InvalidArgument);
  EXPECT_THROW(pressure_ramp(400.0, 20.0, 2, 100.0), InvalidArgument);
  EXPECT_THROW(pressure_ramp(0.0, 20.0, 2, 100.0), InvalidArgument);
  EXPECT_TRUE(pressure_ramp(200.0, 20.0, 0, 100.0).empty());
}
