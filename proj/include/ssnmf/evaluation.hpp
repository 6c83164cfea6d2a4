#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssnmf/data.hpp"
#include "ssnmf/factor_model.hpp"
#include "ssnmf/stretch.hpp"

namespace ssnmf {

/// Pearson correlation; 0 when either input has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

struct MatchedCorrelation {
  double mean = 0.0;
  /// permutation[i] is the column of A_hat matched to column i of A_true.
  std::vector<std::size_t> permutation;
  std::vector<double> per_component;
};

/// Column matching maximizing the mean per-column Pearson correlation.
/// Exhaustive for K <= 8, Hungarian assignment above. Throws InvalidInput on
/// shape mismatch.
MatchedCorrelation matched_correlation(const Matrix& a_hat, const Matrix& a_true);

/// Time-domain reconstructions of the requested channels, truncated to the
/// first n_original samples (rows follow `indices`).
Matrix reconstruct_channels(const FactorModel& model, const StretchLibrary& library,
                            std::span<const std::size_t> indices, std::size_t n_original);

/// Reconstruction of every channel over the full padded length.
Matrix reconstruct_all(const FactorModel& model, const StretchLibrary& library);

/// 1 - ||x_j - x_hat_j||^2 / ||x_j||^2 per channel over the unpadded region.
/// Channels with zero energy report 0.
std::vector<double> per_channel_variance_explained(const FactorModel& model, const TimeSeriesMatrix& data,
                                                   const StretchLibrary& library);

/// 1 - sum_j ||x_j - x_hat_j||^2 / sum_j ||x_j||^2 over the unpadded region.
/// Throws InvalidInput when the data has zero energy.
double variance_explained(const FactorModel& model, const TimeSeriesMatrix& data, const StretchLibrary& library);

struct EvaluationReport {
  bool has_matched_correlation = false;
  MatchedCorrelation matched;
  double variance_explained = 0.0;
  std::vector<double> per_channel_ve;
};

nlohmann::json to_json(const EvaluationReport& report);

}  // namespace ssnmf
