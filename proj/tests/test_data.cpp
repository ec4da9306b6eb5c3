#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "gammkit/data.hpp"

using namespace gammkit;

namespace {

DataTable read(const std::string& text, const CsvSchema& schema) {
  std::istringstream in(text);
  return read_csv(in, schema);
}

CsvSchema rt_schema() { return CsvSchema{}.numeric("rt").factor("subj").numeric("trial"); }

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an exception";
  return ErrorKind::Io;
}

}  // namespace

TEST(LoadCsv, ReadsRows) {
  auto t = read("rt,subj,trial\n500,a,1\n620,a,2\n480,b,1\n", rt_schema());
  EXPECT_EQ(t.n_rows(), 3u);
  EXPECT_EQ(t.dropped_count(), 0u);
  EXPECT_DOUBLE_EQ(t.values("rt")[1], 620.0);
  EXPECT_EQ(t.factor("subj").label(2), "b");
}

TEST(LoadCsv, DropsMissingRows) {
  auto t = read("rt,subj,trial\n500,a,1\nNA,a,2\n480,b,1\n", rt_schema());
  EXPECT_EQ(t.n_rows(), 2u);
  EXPECT_EQ(t.dropped_count(), 1u);
  auto u = read("rt,subj,trial\n500,a,1\n,a,2\n", rt_schema());
  EXPECT_EQ(u.n_rows(), 1u);
}

TEST(LoadCsv, Errors) {
  EXPECT_EQ(kind_of([] { read("rt,subj\n500,a\n", rt_schema()); }), ErrorKind::Schema);
  EXPECT_EQ(kind_of([] { read("rt,subj,trial\n5x0,a,1\n", rt_schema()); }), ErrorKind::Parse);
  EXPECT_EQ(kind_of([] { read("rt,subj,trial\nNA,a,1\n", rt_schema()); }), ErrorKind::EmptyData);
  try {
    read("rt,subj,trial\n1,a,1\n2,a,2\nbad,a,3\n", rt_schema());
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos);
  }
}

TEST(LoadCsv, QuotedFieldsAndSeries) {
  auto schema = CsvSchema{}.numeric("rt").factor("subj").numeric("trial").series("subj", "trial");
  auto t = read("rt,subj,trial\r\n1.5,\"s, \"\"one\"\"\",1\r\n2,b,1\r\n", schema);
  EXPECT_EQ(t.factor("subj").levels.size(), 2u);
  EXPECT_EQ(t.factor("subj").label(0), "s, \"one\"");
  EXPECT_EQ(*t.series_key(), "subj");
  EXPECT_EQ(kind_of([&] { read("rt,subj,trial\n1,a,1\n2,a,1\n", schema); }), ErrorKind::Spec);
}

TEST(LoadCsv, WriteRoundTripPreservesValues) {
  DataTable t;
  t.set_numeric("y", {0.1, 1.0 / 3.0, -2e-300});
  t.set_factor("g", std::vector<std::string>{"x", "y,z", "x"});
  std::ostringstream out;
  write_csv(out, t);
  auto back = read(out.str(), CsvSchema{}.numeric("y").factor("g"));
  EXPECT_TRUE(back == t);
}

TEST(FactorLevels, NumericLabelsSortNumerically) {
  auto f = make_factor({"10", "2", "1", "b", "a"});
  EXPECT_EQ(f.levels, (std::vector<std::string>{"1", "2", "10", "a", "b"}));
}

TEST(RescaleUnit, Examples) {
  DataTable t;
  t.set_numeric("x", {1, 2, 3});
  auto r = rescale_unit(t, "x");
  EXPECT_EQ(r.values("x"), (std::vector<double>{0.0, 0.5, 1.0}));
  EXPECT_DOUBLE_EQ(r.scale_map("x")->back(0.5), 2.0);

  DataTable u;
  u.set_numeric("x", {0, 1});
  EXPECT_EQ(rescale_unit(u, "x").values("x"), (std::vector<double>{0.0, 1.0}));

  DataTable c;
  c.set_numeric("x", {5, 5, 5});
  EXPECT_EQ(kind_of([&] { rescale_unit(c, "x"); }), ErrorKind::DegenerateScale);
}

TEST(RescaleUnit, Idempotent) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(3.0, 10.0);
  std::vector<double> x(200);
  for (auto& v : x) v = nd(rng);
  DataTable t;
  t.set_numeric("x", x);
  auto once = rescale_unit(t, "x");
  auto twice = rescale_unit(once, "x");
  EXPECT_EQ(once.values("x"), twice.values("x"));
  EXPECT_DOUBLE_EQ(twice.scale_map("x")->back(1.0), once.scale_map("x")->back(1.0));
}

TEST(TransformResponse, Examples) {
  DataTable t;
  t.set_numeric("rt", {500.0, std::exp(1.0)});
  auto inv = transform_response(t, "rt", {TransformKind::Neg1000Over});
  EXPECT_DOUBLE_EQ(inv.values("rt")[0], -2.0);
  auto lg = transform_response(t, "rt", {TransformKind::Log});
  EXPECT_DOUBLE_EQ(lg.values("rt")[1], 1.0);
  EXPECT_EQ(lg.transform("rt")->kind, TransformKind::Log);

  DataTable z;
  z.set_numeric("rt", {1.0, 0.0});
  EXPECT_EQ(kind_of([&] { transform_response(z, "rt", {TransformKind::Log}); }), ErrorKind::Domain);
  EXPECT_EQ(kind_of([&] { transform_response(z, "rt", {TransformKind::Neg1000Over}); }), ErrorKind::Domain);
}

TEST(TransformResponse, IdentityIsBitIdentical) {
  DataTable t;
  t.set_numeric("rt", {0.1, 0.2, -0.0});
  t.set_factor("g", std::vector<std::string>{"a", "b", "a"});
  auto same = transform_response(t, "rt", {TransformKind::Identity});
  EXPECT_TRUE(same == t);
  EXPECT_FALSE(same.transform("rt").has_value());
}

TEST(BoxCox, LogNormalPrefersLog) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> y(10000);
  for (auto& v : y) v = std::exp(nd(rng));
  auto prof = boxcox_profile(y, {-1.0, -0.5, 0.0, 0.5, 1.0});
  EXPECT_DOUBLE_EQ(prof.best_lambda, 0.0);
  EXPECT_EQ(prof.scores.size(), 5u);
}

TEST(BoxCox, ReciprocalNormalPrefersInverse) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd(5.0, 0.5);
  std::vector<double> y(10000);
  for (auto& v : y) v = 1.0 / std::abs(nd(rng));
  EXPECT_DOUBLE_EQ(boxcox_profile(y, {-1.0, -0.5, 0.0, 0.5, 1.0}).best_lambda, -1.0);
}

TEST(BoxCox, Errors) {
  std::vector<double> y{1.0, 0.0, 2.0};
  EXPECT_EQ(kind_of([&] { boxcox_profile(y); }), ErrorKind::Domain);
  std::vector<double> ok{1.0, 2.0};
  EXPECT_EQ(kind_of([&] { boxcox_profile(ok, {}); }), ErrorKind::Domain);
}

TEST(BoxCox, LambdaOneIsGaussianLikelihoodOfShiftedData) {
  std::vector<double> y{0.7, 1.3, 2.2, 0.4, 5.1, 3.3};
  const double n = static_cast<double>(y.size());
  double mean = 0.0;
  for (double v : y) mean += (v - 1.0) / n;
  double ss = 0.0;
  for (double v : y) ss += (v - 1.0 - mean) * (v - 1.0 - mean);
  const double s2 = ss / n;
  double loglik = 0.0;
  for (double v : y) loglik += -0.5 * std::log(2.0 * M_PI * s2) - (v - 1.0 - mean) * (v - 1.0 - mean) / (2.0 * s2);
  EXPECT_NEAR(boxcox_profile(y, {1.0}).scores[0], loglik, 1e-12);
}

TEST(BoxCox, DefaultGrid) {
  auto g = default_boxcox_grid();
  ASSERT_EQ(g.size(), 41u);
  EXPECT_DOUBLE_EQ(g.front(), -2.0);
  EXPECT_NEAR(g.back(), 2.0, 1e-12);
}
