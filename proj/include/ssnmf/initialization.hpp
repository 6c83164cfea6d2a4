#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ssnmf/types.hpp"

namespace ssnmf {

struct InitResult {
  Matrix s_init;  // K x N, nonnegative, unit norm rows
  Matrix a_init;  // P x K, nonnegative
  std::vector<std::size_t> assignments;
};

/// 1 - max over circular lags of the normalized cross-correlation; in [0, 2].
/// Throws InvalidInput for a zero-norm input or length mismatch.
double ncc_distance(std::span<const double> x, std::span<const double> y);

/// K-means under the cross-correlation distance (simplified K-shape).
///
/// Centroids start from K distinct channels drawn with the seeded RNG. Each
/// round assigns channels to the nearest centroid, then replaces every
/// centroid by the mean of its members aligned at their best lag, clipped to
/// nonnegative values and unit-normalized. Empty clusters take the
/// worst-fitting channel of a cluster with more than one member. A comes from
/// least_squares_a, or from projecting each channel on its own centroid when
/// the centroids are linearly dependent.
InitResult kshape_init(const Matrix& data, std::size_t k, std::uint64_t seed, std::size_t max_iter = 100);

/// Per-channel least squares of x_j on the rows of S, negatives clipped to
/// zero. Throws DegenerateInit when S is rank deficient.
Matrix least_squares_a(const Matrix& data, const Matrix& profiles);

}  // namespace ssnmf
