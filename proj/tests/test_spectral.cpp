#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "ssnmf/error.hpp"
#include "ssnmf/spectral.hpp"

using namespace ssnmf;

namespace {

void expect_bins(const Spectrum& s, std::initializer_list<Complex> want, double tol = 1e-12) {
  ASSERT_EQ(s.bins.size(), want.size());
  std::size_t i = 0;
  for (const Complex& w : want) {
    EXPECT_NEAR(s.bins[i].real(), w.real(), tol) << "bin " << i;
    EXPECT_NEAR(s.bins[i].imag(), w.imag(), tol) << "bin " << i;
    ++i;
  }
}

double norm2(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

}  // namespace

TEST(ForwardRdft, HandExamples) {
  expect_bins(forward_rdft(std::vector<double>{1, 0, 0, 0}), {{1, 0}, {1, 0}, {1, 0}});
  expect_bins(forward_rdft(std::vector<double>{1, 1, 1, 1}), {{4, 0}, {0, 0}, {0, 0}});
  expect_bins(forward_rdft(std::vector<double>{0, 1, 0, 0}), {{1, 0}, {0, -1}, {-1, 0}});
}

TEST(ForwardRdft, RejectsShortOrNonFinite) {
  EXPECT_THROW(forward_rdft(std::vector<double>{1.0}), InvalidInput);
  EXPECT_THROW(forward_rdft(std::vector<double>{1.0, NAN}), InvalidInput);
}

TEST(ForwardRdft, MatchesDirectSum) {
  std::mt19937_64 rng(11);
  for (std::size_t n : {2u, 3u, 7u, 16u, 33u, 64u, 101u}) {
    const auto x = oracle::random_signal(rng, n);
    const Spectrum s = forward_rdft(x);
    const auto ref = oracle::dft(x);
    EXPECT_LT(oracle::max_abs_diff(ref, s.bins), 1e-10 * (1.0 + oracle::max_abs(ref))) << "n=" << n;
  }
}

TEST(InverseRdft, HandExamples) {
  Spectrum dc{{{4, 0}, {0, 0}, {0, 0}}, 4};
  const auto ones = inverse_rdft(dc);
  for (double v : ones) EXPECT_NEAR(v, 1.0, 1e-15);
  Spectrum cosine{{{0, 0}, {2, 0}, {0, 0}}, 4};
  const auto c = inverse_rdft(cosine);
  const double want[] = {1, 0, -1, 0};
  for (std::size_t t = 0; t < 4; ++t) EXPECT_NEAR(c[t], want[t], 1e-15);
}

TEST(InverseRdft, RoundTripAndDirectSum) {
  std::mt19937_64 rng(12);
  for (std::size_t n : {2u, 5u, 8u, 63u, 128u}) {
    const auto x = oracle::random_signal(rng, n);
    const auto back = inverse_rdft(forward_rdft(x));
    for (std::size_t t = 0; t < n; ++t) EXPECT_NEAR(back[t], x[t], 1e-12);
    const auto via_oracle = oracle::idft(oracle::dft(x), n);
    for (std::size_t t = 0; t < n; ++t) EXPECT_NEAR(via_oracle[t], x[t], 1e-10);
  }
}

TEST(InverseRdft, InconsistentLengthIsInvalid) {
  Spectrum bad{{{1, 0}, {0, 0}}, 4};
  EXPECT_THROW(inverse_rdft(bad), InvalidInput);
}

TEST(InverseRdft, ImaginaryDcIsInternalInconsistency) {
  Spectrum bad{{{1, 0.5}, {0, 0}, {0, 0}}, 4};
  EXPECT_THROW(inverse_rdft(bad), InternalConsistency);
  Spectrum tiny{{{1, 1e-14}, {0, 0}, {0, 0}}, 4};
  EXPECT_NO_THROW(inverse_rdft(tiny));
}

TEST(ParsevalWeights, Examples) {
  const double h = 1.0 / std::sqrt(2.0);
  const auto w8 = parseval_weights(8);
  ASSERT_EQ(w8.size(), 5u);
  EXPECT_DOUBLE_EQ(w8[0], h);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_DOUBLE_EQ(w8[i], 1.0);
  EXPECT_DOUBLE_EQ(w8[4], h);
  const auto w4 = parseval_weights(4);
  ASSERT_EQ(w4.size(), 3u);
  EXPECT_DOUBLE_EQ(w4[2], h);
  const auto w5 = parseval_weights(5);
  ASSERT_EQ(w5.size(), 3u);
  EXPECT_DOUBLE_EQ(w5[0], h);
  EXPECT_DOUBLE_EQ(w5[1], 1.0);
  EXPECT_DOUBLE_EQ(w5[2], 1.0);
  EXPECT_THROW(parseval_weights(1), InvalidInput);
}

TEST(ParsevalWeights, IdentityOnRandomSignals) {
  std::mt19937_64 rng(13);
  for (std::size_t n : {2u, 3u, 5u, 8u, 99u, 256u}) {
    const auto w = parseval_weights(n);
    for (int rep = 0; rep < 20; ++rep) {
      const auto x = oracle::random_signal(rng, n);
      const Spectrum s = forward_rdft(x);
      double lhs = 0.0;
      for (std::size_t f = 0; f < s.size(); ++f) lhs += w[f] * w[f] * std::norm(s.bins[f]);
      const double rhs = static_cast<double>(n) * norm2(x);
      EXPECT_NEAR(2.0 * lhs, rhs, 1e-10 * rhs);
      EXPECT_NEAR(two_sided_energy(s.bins, n), rhs, 1e-10 * rhs);
    }
  }
}

TEST(PhaseShift, ZeroIsIdentity) {
  std::mt19937_64 rng(14);
  const Spectrum s = forward_rdft(oracle::random_signal(rng, 16));
  const Spectrum t = apply_phase_shift(s, 0.0);
  for (std::size_t f = 0; f < s.size(); ++f) EXPECT_EQ(s.bins[f], t.bins[f]);
}

TEST(PhaseShift, DeltaMovesOneSample) {
  std::vector<double> d(8, 0.0);
  d[0] = 1.0;
  const auto y = inverse_rdft(apply_phase_shift(forward_rdft(d), 1.0));
  for (std::size_t t = 0; t < 8; ++t) EXPECT_NEAR(y[t], t == 1 ? 1.0 : 0.0, 1e-12);
}

TEST(PhaseShift, HalfSampleMatchesTwoSidedSum) {
  // Half-sample shift of a delta. With N even the Nyquist bin picks up an
  // imaginary part that a real inverse discards; the oracle does the same.
  const std::size_t n = 8;
  std::vector<double> d(n, 0.0);
  d[0] = 1.0;
  Spectrum s = apply_phase_shift(forward_rdft(d), 0.5);
  std::vector<double> y(n);
  inverse_rdft(s.bins, y);
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 1.0;  // DC
    for (std::size_t f = 1; f < n / 2; ++f) {
      acc += 2.0 * std::cos(2.0 * std::numbers::pi * static_cast<double>(f) * (static_cast<double>(t) - 0.5) /
                            static_cast<double>(n));
    }
    acc += std::cos(std::numbers::pi * (static_cast<double>(t) - 0.5));
    EXPECT_NEAR(y[t], acc / static_cast<double>(n), 1e-12) << "t=" << t;
  }
  // Dirichlet kernel: symmetric about 0.5.
  EXPECT_NEAR(y[0], y[1], 1e-12);
  EXPECT_NEAR(y[7], y[2], 1e-12);
}

TEST(PhaseShift, IntegerShiftEqualsCircularShift) {
  std::mt19937_64 rng(15);
  for (std::size_t n : {7u, 16u, 31u}) {
    const auto x = oracle::random_signal(rng, n);
    const Spectrum s = forward_rdft(x);
    const long nl = static_cast<long>(n);
    for (long tau = -nl; tau <= nl; ++tau) {
      const auto y = inverse_rdft(apply_phase_shift(s, static_cast<double>(tau)));
      const auto ref = circular_shift(x, tau);
      for (std::size_t t = 0; t < n; ++t) EXPECT_NEAR(y[t], ref[t], 1e-10);
      for (std::size_t t = 0; t < n; ++t) {
        const std::size_t src = static_cast<std::size_t>(((static_cast<long>(t) - tau) % nl + nl) % nl);
        EXPECT_EQ(ref[t], x[src]);
      }
    }
  }
}

TEST(PhaseShift, Composition) {
  std::mt19937_64 rng(16);
  const Spectrum s = forward_rdft(oracle::random_signal(rng, 20));
  const Spectrum a = apply_phase_shift(apply_phase_shift(s, 1.25), 2.5);
  const Spectrum b = apply_phase_shift(s, 3.75);
  for (std::size_t f = 0; f < s.size(); ++f) EXPECT_LT(std::abs(a.bins[f] - b.bins[f]), 1e-12);
}

TEST(CrossCorrelation, MatchesDirectSum) {
  std::mt19937_64 rng(17);
  for (std::size_t n : {8u, 13u}) {
    const auto g = oracle::random_signal(rng, n);
    const auto s = oracle::random_signal(rng, n);
    const auto h = cross_correlation(forward_rdft(g), forward_rdft(s));
    for (std::size_t l = 0; l < n; ++l) {
      double acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) acc += g[t] * s[(t + l) % n];
      EXPECT_NEAR(h[l], acc, 1e-12);
    }
  }
}

TEST(CrossCorrelation, AutocorrelationPeaksAtZero) {
  std::mt19937_64 rng(18);
  for (int rep = 0; rep < 20; ++rep) {
    const auto x = oracle::random_signal(rng, 32);
    const Spectrum s = forward_rdft(x);
    const auto h = cross_correlation(s, s);
    for (std::size_t l = 1; l < h.size(); ++l) EXPECT_LE(h[l], h[0] + 1e-12);
  }
}

TEST(CrossCorrelation, ShiftedCopyPeaksAtNegatedIndex) {
  const auto s = oracle::gaussian_bump(64, 20.0, 3.0);
  const auto g = circular_shift(s, 3);
  const auto h = cross_correlation(forward_rdft(g), forward_rdft(s));
  const auto peak = std::max_element(h.begin(), h.end()) - h.begin();
  EXPECT_EQ(peak, 64 - 3);
}

TEST(CrossCorrelation, DisjointSupportsHaveZeroInnerProduct) {
  std::vector<double> a(32, 0.0), b(32, 0.0);
  a[0] = 1.0;
  a[1] = 1.0;
  b[10] = 1.0;
  const auto h = cross_correlation(forward_rdft(a), forward_rdft(b));
  EXPECT_NEAR(h[0], 0.0, 1e-14);
  EXPECT_THROW(cross_correlation(forward_rdft(a), forward_rdft(std::vector<double>(16, 1.0))), InvalidInput);
}

TEST(WeightedResidualNorm, Examples) {
  const std::vector<double> x{1, 1, 1, 1};
  const Spectrum sx = forward_rdft(x);
  const Spectrum zero{{{0, 0}, {0, 0}, {0, 0}}, 4};
  const auto w = parseval_weights(4);
  EXPECT_NEAR(weighted_residual_norm(sx, zero, w), 8.0, 1e-12);
  EXPECT_EQ(weighted_residual_norm(sx, sx, w), 0.0);
  EXPECT_THROW(weighted_residual_norm(sx, forward_rdft(std::vector<double>(6, 0.0)), w), InvalidInput);
}

TEST(WeightedResidualNorm, HalfTimeDomainParseval) {
  std::mt19937_64 rng(19);
  for (std::size_t n : {9u, 10u, 64u}) {
    const auto x = oracle::random_signal(rng, n);
    const auto y = oracle::random_signal(rng, n);
    std::vector<double> d(n);
    for (std::size_t t = 0; t < n; ++t) d[t] = x[t] - y[t];
    const double lhs = weighted_residual_norm(forward_rdft(x), forward_rdft(y), parseval_weights(n));
    const double rhs = static_cast<double>(n) / 2.0 * norm2(d);
    EXPECT_NEAR(lhs, rhs, 1e-10 * rhs);
  }
}

TEST(Adjoints, DotProductTest) {
  std::mt19937_64 rng(20);
  for (std::size_t n : {6u, 7u, 32u}) {
    const std::size_t nb = bin_count(n);
    const auto x = oracle::random_signal(rng, n);
    std::vector<Complex> gy(nb);
    for (auto& c : gy) c = {oracle::random_signal(rng, 1)[0], oracle::random_signal(rng, 1)[0]};
    // <F x, gy>_R = <x, F^T gy>
    std::vector<Complex> fx(nb);
    forward_rdft(x, fx);
    double lhs = 0.0;
    for (std::size_t f = 0; f < nb; ++f) lhs += fx[f].real() * gy[f].real() + fx[f].imag() * gy[f].imag();
    std::vector<double> adj(n);
    forward_rdft_adjoint(gy, adj);
    double rhs = 0.0;
    for (std::size_t t = 0; t < n; ++t) rhs += x[t] * adj[t];
    EXPECT_NEAR(lhs, rhs, 1e-10 * (1.0 + std::abs(lhs)));

    // <G X, gx> = <X, G^T gx> on the coordinates the inverse reads.
    std::vector<Complex> xb(nb);
    for (auto& c : xb) c = {oracle::random_signal(rng, 1)[0], oracle::random_signal(rng, 1)[0]};
    const auto gx = oracle::random_signal(rng, n);
    std::vector<double> ix(n);
    inverse_rdft(xb, ix);
    double lhs2 = 0.0;
    for (std::size_t t = 0; t < n; ++t) lhs2 += ix[t] * gx[t];
    std::vector<Complex> adj2(nb);
    inverse_rdft_adjoint(gx, adj2);
    double rhs2 = 0.0;
    for (std::size_t f = 0; f < nb; ++f) rhs2 += xb[f].real() * adj2[f].real() + xb[f].imag() * adj2[f].imag();
    EXPECT_NEAR(lhs2, rhs2, 1e-10 * (1.0 + std::abs(lhs2)));
  }
}
