#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "lsdcalib/metrics.hpp"
#include "test_support.hpp"

namespace lsdcalib {
namespace {

SampleError with_rmse(double rot, double trans) {
  SampleError e;
  e.rot_rmse = rot;
  e.trans_rmse = trans;
  return e;
}

TEST(SampleErrorTest, ThreeFourFiveTranslation) {
  const SE3Transform gt = exp_map(Twist6(0.2, -0.1, 0.3, 1.0, 2.0, -0.5));
  const SE3Transform est = compose(SE3Transform::from_rt(Matrix3::Identity(), Vector3(0.03, 0.04, 0.0)), gt);
  const SampleError e = sample_error(transform_error(est, gt));
  EXPECT_NEAR(e.rot_rmse, 0.0, 1e-12);
  EXPECT_NEAR(e.tx, 3.0, 1e-12);
  EXPECT_NEAR(e.ty, 4.0, 1e-12);
  EXPECT_NEAR(e.trans_rmse, 5.0, 1e-12);

  const SampleError exact = sample_error(SE3Transform::from_rt(Matrix3::Identity(), Vector3(0.03, 0.04, 0.0)));
  EXPECT_EQ(exact.trans_rmse, 5.0);
  EXPECT_EQ(exact.tz, 0.0);
}

TEST(SampleErrorTest, SingleAxisRotation) {
  const SE3Transform dt = SE3Transform::from_rt(testing::axis_rotation(0, deg2rad(-2.0)), Vector3::Zero());
  const SampleError e = sample_error(dt);
  EXPECT_NEAR(e.roll, 2.0, 1e-12);
  EXPECT_NEAR(e.pitch, 0.0, 1e-12);
  EXPECT_NEAR(e.rot_rmse, 2.0, 1e-12);
}

TEST(SampleErrorTest, RmseIsAxisNorm) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const SampleError e = sample_error(testing::random_transform(rng, 0.3, 0.1));
    EXPECT_DOUBLE_EQ(e.rot_rmse * e.rot_rmse, e.roll * e.roll + e.pitch * e.pitch + e.yaw * e.yaw);
    EXPECT_DOUBLE_EQ(e.trans_rmse * e.trans_rmse, e.tx * e.tx + e.ty * e.ty + e.tz * e.tz);
  }
}

TEST(Rates, ThresholdsAreStrict) {
  EXPECT_FALSE(within(with_rmse(3.0, 1.0), 3.0, 3.0));
  EXPECT_FALSE(within(with_rmse(1.0, 3.0), 3.0, 3.0));
  EXPECT_TRUE(within(with_rmse(2.999, 2.999), 3.0, 3.0));
  const std::vector<SampleError> v = {with_rmse(3.0, 3.0), with_rmse(4.9, 4.9), with_rmse(1, 1), with_rmse(5, 1)};
  const AggregateReport r = aggregate(v);
  EXPECT_EQ(r.rate_3deg3cm, 0.25);
  EXPECT_EQ(r.rate_5deg5cm, 0.75);
  EXPECT_EQ(r.n_samples, 4u);
}

TEST(Rates, MatchBruteForceCount) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 8.0);
  std::vector<SampleError> v;
  for (int i = 0; i < 1000; ++i) v.push_back(with_rmse(u(rng), u(rng)));
  int n3 = 0, n5 = 0;
  for (const auto& e : v) {
    n3 += (e.rot_rmse < 3.0 && e.trans_rmse < 3.0) ? 1 : 0;
    n5 += (e.rot_rmse < 5.0 && e.trans_rmse < 5.0) ? 1 : 0;
  }
  const AggregateReport r = aggregate(v);
  EXPECT_EQ(r.rate_3deg3cm, n3 / 1000.0);
  EXPECT_EQ(r.rate_5deg5cm, n5 / 1000.0);
  EXPECT_LE(r.rate_3deg3cm, r.rate_5deg5cm);
}

TEST(Aggregate, MeansAndEmpty) {
  SampleError a, b;
  a.roll = 1.0;
  b.roll = 3.0;
  a.tz = 2.0;
  const std::vector<SampleError> v = {a, b};
  const AggregateReport r = aggregate(v);
  EXPECT_EQ(r.roll, 2.0);
  EXPECT_EQ(r.tz, 1.0);
  EXPECT_THROW(aggregate(std::span<const SampleError>{}), InvalidArgument);
}

TEST(Aggregate, PermutationInvariantWithinRounding) {
  std::mt19937_64 rng(3);
  std::vector<SampleError> v;
  for (int i = 0; i < 500; ++i) v.push_back(sample_error(testing::random_transform(rng, 0.2, 0.1)));
  const AggregateReport a = aggregate(v);
  std::shuffle(v.begin(), v.end(), rng);
  const AggregateReport b = aggregate(v);
  EXPECT_NEAR(a.rot_rmse, b.rot_rmse, 1e-12 * a.rot_rmse);
  EXPECT_NEAR(a.trans_rmse, b.trans_rmse, 1e-12 * a.trans_rmse);
  EXPECT_EQ(a.rate_5deg5cm, b.rate_5deg5cm);
}

AggregateReport sample_report() {
  AggregateReport r;
  r.roll = 0.125;
  r.pitch = 0.25;
  r.yaw = 1.0 / 3.0;
  r.rot_rmse = 0.5;
  r.tx = 1.5;
  r.ty = 2.0;
  r.tz = 0.1;
  r.trans_rmse = 3.0;
  r.rate_3deg3cm = 0.6;
  r.rate_5deg5cm = 0.875;
  r.n_samples = 8;
  return r;
}

TEST(Render, JsonRoundTripsExactly) {
  const AggregateReport r = sample_report();
  const std::string text = render_report(r, ReportFormat::json);
  const auto j = nlohmann::json::parse(text);
  EXPECT_EQ(aggregate_from_json(j), r);
  // Key order is fixed.
  EXPECT_LT(text.find("n_samples"), text.find("rotation_deg"));
  EXPECT_LT(text.find("rotation_deg"), text.find("translation_cm"));
  EXPECT_LT(text.find("translation_cm"), text.find("rate_3deg3cm"));
}

TEST(Render, Csv) {
  const std::string text = render_report(sample_report(), "csv");
  EXPECT_EQ(text, std::string(kCsvHeader) + "\n8,0.125,0.25,0.3333333333333333,0.5,1.5,2,0.1,3,0.6,0.875\n");
}

TEST(Render, Markdown) {
  const std::string text = markdown_table(sample_report(), "lsd");
  EXPECT_NE(text.find("| Roll (°) | Pitch (°) | Yaw (°) | RMSE (°) | X (cm) | Y (cm) | Z (cm) | RMSE (cm) | 3°3cm | 5°5cm |"),
            std::string::npos);
  EXPECT_NE(text.find("| lsd | 0.125 | 0.250 | 0.333 | 0.500 | 1.500 | 2.000 | 0.100 | 3.000 | 60.00% | 87.50% |"),
            std::string::npos);
  EXPECT_EQ(render_report(sample_report(), "md"), markdown_table(sample_report()));
}

TEST(Render, UnknownFormat) { EXPECT_THROW(parse_report_format("xml"), InvalidArgument); }

}  // namespace
}  // namespace lsdcalib
