#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ssnmf/error.hpp"
#include "ssnmf/evaluation.hpp"
#include "ssnmf/fit.hpp"

using namespace ssnmf;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = oracle::random_signal(rng, 1, 0.0, 1.0)[0];
  return m;
}

}  // namespace

TEST(Pearson, Examples) {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{2, 4, 6, 8};
  const std::vector<double> z{4, 3, 2, 1};
  const std::vector<double> c{5, 5, 5, 5};
  EXPECT_NEAR(pearson(x, y), 1.0, 1e-15);
  EXPECT_NEAR(pearson(x, z), -1.0, 1e-15);
  EXPECT_DOUBLE_EQ(pearson(x, c), 0.0);
}

TEST(MatchedCorrelation, IdentityAndPermutation) {
  std::mt19937_64 rng(81);
  const Matrix a = random_matrix(rng, 50, 4);
  const MatchedCorrelation same = matched_correlation(a, a);
  EXPECT_NEAR(same.mean, 1.0, 1e-12);
  EXPECT_EQ(same.permutation, (std::vector<std::size_t>{0, 1, 2, 3}));

  const std::vector<std::size_t> perm{2, 0, 3, 1};
  Matrix hat(50, 4);
  for (std::size_t i = 0; i < 4; ++i) hat.col(static_cast<Eigen::Index>(perm[i])) = a.col(static_cast<Eigen::Index>(i));
  const MatchedCorrelation m = matched_correlation(hat, a);
  EXPECT_NEAR(m.mean, 1.0, 1e-12);
  EXPECT_EQ(m.permutation, perm);
  EXPECT_THROW(matched_correlation(hat, a.leftCols(3)), InvalidInput);
}

TEST(MatchedCorrelation, IndependentNoiseIsSmall) {
  std::mt19937_64 rng(82);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix a = random_matrix(rng, 200, 2);
    const Matrix b = random_matrix(rng, 200, 2);
    EXPECT_LT(std::abs(matched_correlation(b, a).mean), 0.2);
  }
}

TEST(MatchedCorrelation, HungarianMatchesExhaustive) {
  // K = 9 goes through the assignment solver; compare against the best of
  // the 9! permutations of a small instance.
  std::mt19937_64 rng(83);
  const Matrix a = random_matrix(rng, 12, 9);
  const Matrix b = random_matrix(rng, 12, 9);
  std::vector<std::vector<double>> corr(9, std::vector<double>(9));
  for (Eigen::Index i = 0; i < 9; ++i) {
    for (Eigen::Index j = 0; j < 9; ++j) {
      const Eigen::VectorXd x = a.col(i);
      const Eigen::VectorXd y = b.col(j);
      corr[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          pearson(std::span<const double>(x.data(), 12), std::span<const double>(y.data(), 12));
    }
  }
  std::vector<std::size_t> p{0, 1, 2, 3, 4, 5, 6, 7, 8};
  double best = -1e300;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < 9; ++i) s += corr[i][p[i]];
    best = std::max(best, s / 9.0);
  } while (std::next_permutation(p.begin(), p.end()));
  EXPECT_NEAR(matched_correlation(b, a).mean, best, 1e-12);
}

namespace {

struct Exact {
  FactorModel model;
  TimeSeriesMatrix data;
  StretchLibrary library;
};

Exact exact_problem(Variant v) {
  std::mt19937_64 rng(84);
  Matrix profiles(2, 40);
  const auto s0 = oracle::gaussian_bump(40, 10.0, 2.0);
  const auto s1 = oracle::gaussian_bump(40, 22.0, 3.0);
  for (Eigen::Index t = 0; t < 40; ++t) {
    profiles(0, t) = s0[static_cast<std::size_t>(t)] + 0.01;
    profiles(1, t) = s1[static_cast<std::size_t>(t)] + 0.01;
  }
  Exact e;
  e.model = make_model(v, profiles, random_matrix(rng, 5, 2));
  if (v != Variant::PlainNMF) e.model.tau << 1, -2, 3, 0, 0, 4, -1, -1, 2, 2;
  if (v == Variant::ShiftStretch) e.model.b << 1, 0, -2, 2, 0, 0, 3, -1, 1, 1;
  e.library = build_model_library(e.model, v == Variant::ShiftStretch ? StretchRange{-3, 3} : StretchRange{0, 0}, 1);
  TimeSeriesMatrix d;
  d.values = reconstruct_all(e.model, e.library);
  d.n_original = 32;
  d.channel_ids = {0, 1, 2, 3, 4};
  e.data = d;
  return e;
}

}  // namespace

TEST(VarianceExplained, Examples) {
  Exact e = exact_problem(Variant::ShiftStretch);
  EXPECT_NEAR(variance_explained(e.model, e.data, e.library), 1.0, 1e-12);

  FactorModel zero = e.model;
  zero.a.setZero();
  EXPECT_NEAR(variance_explained(zero, e.data, e.library), 0.0, 1e-15);

  FactorModel half = e.model;
  half.a *= 0.5;
  EXPECT_NEAR(variance_explained(half, e.data, e.library), 0.75, 1e-12);
  for (double v : per_channel_variance_explained(half, e.data, e.library)) EXPECT_NEAR(v, 0.75, 1e-12);

  TimeSeriesMatrix empty = e.data;
  empty.values.setZero();
  EXPECT_THROW(variance_explained(e.model, empty, e.library), InvalidInput);
  const auto per = per_channel_variance_explained(e.model, empty, e.library);
  EXPECT_DOUBLE_EQ(per[0], 0.0);
}

TEST(Reconstruct, PlainEqualsMatrixProduct) {
  Exact e = exact_problem(Variant::PlainNMF);
  const Matrix direct = e.model.a * e.model.profiles();
  const Matrix rec = reconstruct_all(e.model, e.library);
  EXPECT_LT((rec - direct).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Reconstruct, SelectedChannelsAreTruncated) {
  Exact e = exact_problem(Variant::ShiftStretch);
  const std::vector<std::size_t> idx{3, 0};
  const Matrix r = reconstruct_channels(e.model, e.library, idx, 32);
  ASSERT_EQ(r.rows(), 2);
  ASSERT_EQ(r.cols(), 32);
  EXPECT_LT((r.row(0) - e.data.values.row(3).leftCols(32)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((r.row(1) - e.data.values.row(0).leftCols(32)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EvaluationReport, Json) {
  EvaluationReport r;
  r.has_matched_correlation = true;
  r.matched.mean = 0.5;
  r.matched.permutation = {1, 0};
  r.matched.per_component = {0.4, 0.6};
  r.variance_explained = 0.9;
  r.per_channel_ve = {0.8, 1.0};
  const auto j = to_json(r);
  EXPECT_EQ(j.at("kind"), "ssnmf.evaluation_report");
  EXPECT_DOUBLE_EQ(j.at("variance_explained").get<double>(), 0.9);
}
