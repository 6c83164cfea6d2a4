#include "ssnmf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ssnmf/error.hpp"
#include "ssnmf/fit.hpp"
#include "ssnmf/spectral.hpp"

namespace ssnmf {

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw InvalidInput("pearson: length mismatch");
  const std::size_t n = x.size();
  if (n == 0) return 0.0;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

// Minimum-cost assignment on a square matrix (Kuhn-Munkres with potentials).
// Returns row -> column.
std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

std::vector<double> column(const Matrix& m, Eigen::Index c) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(r)] = m(r, c);
  return out;
}

}  // namespace

MatchedCorrelation matched_correlation(const Matrix& a_hat, const Matrix& a_true) {
  if (a_hat.rows() != a_true.rows() || a_hat.cols() != a_true.cols()) {
    throw InvalidInput("matched_correlation: A_hat and A_true shapes differ");
  }
  const std::size_t k = static_cast<std::size_t>(a_true.cols());
  MatchedCorrelation out;
  if (k == 0) return out;

  // corr[i][c]: true column i against estimated column c.
  std::vector<std::vector<double>> corr(k, std::vector<double>(k));
  for (std::size_t i = 0; i < k; ++i) {
    const auto t = column(a_true, static_cast<Eigen::Index>(i));
    for (std::size_t c = 0; c < k; ++c) corr[i][c] = pearson(t, column(a_hat, static_cast<Eigen::Index>(c)));
  }

  std::vector<std::size_t> best(k);
  std::iota(best.begin(), best.end(), 0);
  if (k <= 8) {
    std::vector<std::size_t> perm = best;
    double best_sum = -std::numeric_limits<double>::infinity();
    do {
      double sum = 0.0;
      for (std::size_t i = 0; i < k; ++i) sum += corr[i][perm[i]];
      if (sum > best_sum) {
        best_sum = sum;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    std::vector<std::vector<double>> cost(k, std::vector<double>(k));
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t c = 0; c < k; ++c) cost[i][c] = -corr[i][c];
    }
    best = hungarian(cost);
  }

  out.permutation = best;
  out.per_component.resize(k);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    out.per_component[i] = corr[i][best[i]];
    sum += out.per_component[i];
  }
  out.mean = sum / static_cast<double>(k);
  return out;
}

Matrix reconstruct_all(const FactorModel& model, const StretchLibrary& library) {
  const std::size_t n = model.length();
  Matrix out(static_cast<Eigen::Index>(model.channels()), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < model.channels(); ++j) {
    const Spectrum s = reconstruct_channel_spectrum(model, j, library);
    inverse_rdft(s.bins, std::span<double>(out.row(static_cast<Eigen::Index>(j)).data(), n));
  }
  return out;
}

Matrix reconstruct_channels(const FactorModel& model, const StretchLibrary& library,
                            std::span<const std::size_t> indices, std::size_t n_original) {
  const std::size_t n = model.length();
  if (n_original > n) throw InvalidInput("reconstruct_channels: n_original exceeds the model length");
  Matrix out(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(n_original));
  std::vector<double> full(n);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= model.channels()) throw InvalidInput("reconstruct_channels: channel index out of range");
    const Spectrum s = reconstruct_channel_spectrum(model, indices[i], library);
    inverse_rdft(s.bins, full);
    for (std::size_t t = 0; t < n_original; ++t) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = full[t];
  }
  return out;
}

namespace {

struct Energies {
  std::vector<double> residual;
  std::vector<double> data;
};

Energies channel_energies(const FactorModel& model, const TimeSeriesMatrix& data, const StretchLibrary& library) {
  if (model.channels() != data.channels() || model.length() != data.n_pad()) {
    throw InvalidInput("variance_explained: model and data dimensions differ");
  }
  const std::size_t n0 = data.n_original == 0 ? data.n_pad() : data.n_original;
  const Matrix xhat = reconstruct_all(model, library);
  Energies e;
  e.residual.assign(data.channels(), 0.0);
  e.data.assign(data.channels(), 0.0);
  for (std::size_t j = 0; j < data.channels(); ++j) {
    const auto row = static_cast<Eigen::Index>(j);
    for (std::size_t t = 0; t < n0; ++t) {
      const auto col = static_cast<Eigen::Index>(t);
      const double x = data.values(row, col);
      const double d = x - xhat(row, col);
      e.residual[j] += d * d;
      e.data[j] += x * x;
    }
  }
  return e;
}

}  // namespace

std::vector<double> per_channel_variance_explained(const FactorModel& model, const TimeSeriesMatrix& data,
                                                   const StretchLibrary& library) {
  const Energies e = channel_energies(model, data, library);
  std::vector<double> out(e.data.size(), 0.0);
  for (std::size_t j = 0; j < out.size(); ++j) {
    if (e.data[j] > 0.0) out[j] = 1.0 - e.residual[j] / e.data[j];
  }
  return out;
}

double variance_explained(const FactorModel& model, const TimeSeriesMatrix& data, const StretchLibrary& library) {
  const Energies e = channel_energies(model, data, library);
  const double res = std::accumulate(e.residual.begin(), e.residual.end(), 0.0);
  const double tot = std::accumulate(e.data.begin(), e.data.end(), 0.0);
  if (!(tot > 0.0)) throw InvalidInput("variance_explained: data has zero energy");
  return 1.0 - res / tot;
}

nlohmann::json to_json(const EvaluationReport& report) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "ssnmf.evaluation_report";
  j["variance_explained"] = report.variance_explained;
  j["per_channel_ve"] = report.per_channel_ve;
  if (report.has_matched_correlation) {
    j["matched_correlation"] = report.matched.mean;
    j["permutation"] = report.matched.permutation;
    j["per_component_correlation"] = report.matched.per_component;
  } else {
    j["matched_correlation"] = nullptr;
  }
  return j;
}

}  // namespace ssnmf
