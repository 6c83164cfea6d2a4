#include "ssnmf/initialization.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <limits>
#include <random>
#include <string>

#include "ssnmf/error.hpp"
#include "ssnmf/estimation.hpp"
#include "ssnmf/spectral.hpp"

namespace ssnmf {

namespace {

struct BestLag {
  double ncc = -std::numeric_limits<double>::infinity();
  std::size_t index = 0;
};

// Max normalized cross-correlation between unit-norm spectra of x and y and
// the index at which it occurs.
BestLag best_lag(std::span<const Complex> x, std::span<const Complex> y, std::size_t n) {
  thread_local std::vector<Complex> scratch;
  thread_local std::vector<double> h;
  scratch.resize(x.size());
  h.resize(n);
  cross_correlation(x, y, scratch, h);
  BestLag best;
  for (std::size_t l = 0; l < n; ++l) {
    if (h[l] > best.ncc) best = {h[l], l};
  }
  return best;
}

std::vector<double> unit(std::span<const double> x) {
  double norm = 0.0;
  for (double v : x) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw InvalidInput("ncc_distance: zero-norm signal");
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v /= norm;
  return out;
}

}  // namespace

double ncc_distance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidInput("ncc_distance: length mismatch");
  const auto ux = unit(x);
  const auto uy = unit(y);
  const Spectrum fx = forward_rdft(ux);
  const Spectrum fy = forward_rdft(uy);
  const double ncc = best_lag(fx.bins, fy.bins, x.size()).ncc;
  return std::clamp(1.0 - ncc, 0.0, 2.0);
}

InitResult kshape_init(const Matrix& data, std::size_t k, std::uint64_t seed, std::size_t max_iter) {
  const std::size_t p = static_cast<std::size_t>(data.rows());
  const std::size_t n = static_cast<std::size_t>(data.cols());
  if (k < 1) throw InvalidInput("kshape_init: K must be at least 1");
  if (p < k) throw InvalidInput("kshape_init: need at least K channels");
  const std::size_t nb = bin_count(n);

  // Unit-normalized channels and their spectra.
  Matrix x(data.rows(), data.cols());
  std::vector<Complex> spectra(p * nb);
  for (std::size_t j = 0; j < p; ++j) {
    const auto row = static_cast<Eigen::Index>(j);
    const auto u = unit(std::span<const double>(data.row(row).data(), n));
    std::copy(u.begin(), u.end(), x.row(row).data());
    forward_rdft(u, std::span<Complex>(spectra.data() + j * nb, nb));
  }
  auto channel_spec = [&](std::size_t j) { return std::span<const Complex>(spectra.data() + j * nb, nb); };

  // Initial centroids: partial Fisher-Yates draw of K channels.
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(p);
  for (std::size_t j = 0; j < p; ++j) order[j] = j;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, p - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  Matrix centroids(static_cast<Eigen::Index>(k), data.cols());
  for (std::size_t c = 0; c < k; ++c) centroids.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(order[c]));

  std::vector<std::size_t> assign(p, k);
  std::vector<BestLag> fit(p);
  std::vector<Complex> centroid_spec(k * nb);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    for (std::size_t c = 0; c < k; ++c) {
      forward_rdft(std::span<const double>(centroids.row(static_cast<Eigen::Index>(c)).data(), n),
                   std::span<Complex>(centroid_spec.data() + c * nb, nb));
    }
    // Assignment: nearest centroid, ties to the lower index.
    bool changed = false;
    for (std::size_t j = 0; j < p; ++j) {
      std::size_t best_c = 0;
      BestLag best;
      for (std::size_t c = 0; c < k; ++c) {
        const BestLag bl = best_lag(channel_spec(j), std::span<const Complex>(centroid_spec.data() + c * nb, nb), n);
        if (bl.ncc > best.ncc) {
          best = bl;
          best_c = c;
        }
      }
      if (assign[j] != best_c) changed = true;
      assign[j] = best_c;
      fit[j] = best;
    }

    // Repair empty clusters by stealing the worst-fitting channel.
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t j = 0; j < p; ++j) ++sizes[assign[j]];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) continue;
      std::size_t worst = p;
      for (std::size_t j = 0; j < p; ++j) {
        if (sizes[assign[j]] <= 1) continue;
        if (worst == p || fit[j].ncc < fit[worst].ncc) worst = j;
      }
      if (worst == p) throw DegenerateInit("kshape_init: cannot repair empty cluster");
      --sizes[assign[worst]];
      assign[worst] = c;
      ++sizes[c];
      fit[worst] = {1.0, 0};
      centroids.row(static_cast<Eigen::Index>(c)) = x.row(static_cast<Eigen::Index>(worst));
      forward_rdft(std::span<const double>(centroids.row(static_cast<Eigen::Index>(c)).data(), n),
                   std::span<Complex>(centroid_spec.data() + c * nb, nb));
      changed = true;
    }
    if (!changed && iter > 0) break;

    // Update: align members to their centroid and average.
    Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(k), data.cols());
    for (std::size_t j = 0; j < p; ++j) {
      const std::size_t c = assign[j];
      const BestLag bl = best_lag(channel_spec(j), std::span<const Complex>(centroid_spec.data() + c * nb, nb), n);
      // h(l) = sum_t x(t) c(t + l) peaks where c(t) ~ x(t - l).
      const auto aligned = circular_shift(std::span<const double>(x.row(static_cast<Eigen::Index>(j)).data(), n),
                                          static_cast<long>(bl.index));
      for (std::size_t t = 0; t < n; ++t) sums(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) += aligned[t];
    }
    for (std::size_t c = 0; c < k; ++c) {
      auto row = sums.row(static_cast<Eigen::Index>(c));
      row = row.cwiseMax(0.0);
      const double norm = row.norm();
      if (norm > 0.0) centroids.row(static_cast<Eigen::Index>(c)) = row / norm;
    }
  }

  InitResult out;
  out.s_init = centroids;
  out.assignments = assign;
  try {
    out.a_init = least_squares_a(data, centroids);
  } catch (const DegenerateInit&) {
    // Coincident centroids: project each channel on its own centroid only.
    out.a_init = Matrix::Zero(data.rows(), static_cast<Eigen::Index>(k));
    for (Eigen::Index j = 0; j < data.rows(); ++j) {
      const auto c = static_cast<Eigen::Index>(out.assignments[static_cast<std::size_t>(j)]);
      out.a_init(j, c) = std::max(0.0, data.row(j).dot(centroids.row(c)));
    }
  }
  return out;
}

Matrix least_squares_a(const Matrix& data, const Matrix& profiles) {
  if (data.cols() != profiles.cols()) throw InvalidInput("least_squares_a: data and profile lengths differ");
  const Eigen::MatrixXd st = profiles.transpose();  // N x K
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(st);
  if (qr.rank() < profiles.rows()) {
    throw DegenerateInit("least_squares_a: profiles are rank deficient (rank " + std::to_string(qr.rank()) + " < " +
                         std::to_string(profiles.rows()) + ")");
  }
  const Eigen::MatrixXd coeffs = qr.solve(Eigen::MatrixXd(data.transpose()));  // K x P
  Matrix a = coeffs.transpose();
  return a.cwiseMax(0.0);
}

}  // namespace ssnmf
