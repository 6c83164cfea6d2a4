#include "ssnmf/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>

#include "ssnmf/error.hpp"
#include "ssnmf/parallel.hpp"

namespace ssnmf {

namespace {

constexpr double kTieTolerance = 1e-12;

bool all_zero(std::span<const Complex> v) {
  return std::all_of(v.begin(), v.end(), [](const Complex& c) { return c == Complex{}; });
}

// Residual of channel j against every component except `skip`, using the
// given row parameters.
void residual_row(std::span<const Complex> x, const StretchLibrary& library, std::size_t skip,
                  std::span<const double> a_row, std::span<const double> tau_row,
                  std::span<const int> b_row, std::span<Complex> out) {
  const std::size_t nb = x.size();
  const std::size_t n = library.origin_length();
  std::copy(x.begin(), x.end(), out.begin());
  thread_local std::vector<Complex> phase;
  phase.resize(nb);
  for (std::size_t k = 0; k < a_row.size(); ++k) {
    if (k == skip || a_row[k] == 0.0) continue;
    const auto s = library.slice(k, b_row[k]);
    phase_factors(n, tau_row[k], phase);
    for (std::size_t f = 0; f < nb; ++f) out[f] -= a_row[k] * phase[f] * s[f];
  }
}

// Rethrows the active exception with `prefix` prepended, keeping its type.
[[noreturn]] void rethrow_with_context(const std::string& prefix) {
  try {
    throw;
  } catch (const UndefinedShift& e) {
    throw UndefinedShift(prefix + e.what());
  } catch (const DegenerateComponent& e) {
    throw DegenerateComponent(prefix + e.what());
  } catch (const InvalidInput& e) {
    throw InvalidInput(prefix + e.what());
  }
}

}  // namespace

long index_to_lag(std::size_t l, std::size_t n) {
  const std::size_t m = (n - (l % n)) % n;
  return 2 * m >= n ? static_cast<long>(m) - static_cast<long>(n) : static_cast<long>(m);
}

ShiftStretchEstimate estimate_shift_stretch(std::span<const Complex> g,
                                            std::span<const std::span<const Complex>> slices,
                                            std::span<const int> b_values, std::size_t origin_length) {
  if (slices.empty() || slices.size() != b_values.size()) {
    throw InvalidInput("estimate_shift_stretch: need a nonempty, labelled set of slices");
  }
  const std::size_t n = origin_length;
  const std::size_t nb = bin_count(n);
  if (g.size() != nb) throw InvalidInput("estimate_shift_stretch: residual length mismatch");
  if (all_zero(g)) throw UndefinedShift("residual spectrum is all zero; shift is undefined");

  thread_local std::vector<double> h;
  thread_local std::vector<double> inv_norm;
  thread_local std::vector<Complex> scratch;
  h.resize(slices.size() * n);
  inv_norm.assign(slices.size(), 0.0);
  scratch.resize(nb);

  double best = -std::numeric_limits<double>::infinity();
  double scale = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    if (slices[i].size() != nb) throw InvalidInput("estimate_shift_stretch: slice length mismatch");
    const double energy = two_sided_energy(slices[i], n) / static_cast<double>(n);
    if (!(energy > 0.0)) continue;
    any = true;
    inv_norm[i] = 1.0 / std::sqrt(energy);
    std::span<double> hi(h.data() + i * n, n);
    cross_correlation(g, slices[i], scratch, hi);
    for (double v : hi) {
      const double score = v * inv_norm[i];
      best = std::max(best, score);
      scale = std::max(scale, std::abs(score));
    }
  }
  if (!any) throw UndefinedShift("all candidate profiles are zero; shift is undefined");

  const double threshold = best - kTieTolerance * scale;
  ShiftStretchEstimate out;
  std::tuple<long, int, int, long> best_key{std::numeric_limits<long>::max(), 0, 0, 0};
  bool found = false;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    if (inv_norm[i] == 0.0) continue;
    const int b = b_values[i];
    for (std::size_t l = 0; l < n; ++l) {
      const double v = h[i * n + l];
      if (v * inv_norm[i] < threshold) continue;
      const long tau = index_to_lag(l, n);
      const std::tuple<long, int, int, long> key{std::labs(tau), std::abs(b), b, tau};
      if (!found || key < best_key) {
        found = true;
        best_key = key;
        out.lag_index = l;
        out.b = b;
        out.tau = static_cast<double>(tau);
        out.h_peak = v;
      }
    }
  }
  return out;
}

ShiftStretchEstimate estimate_shift_stretch(const Spectrum& g, const StretchLibrary& library,
                                            std::size_t k, StretchRange window) {
  if (g.origin_length != library.origin_length()) {
    throw InvalidInput("estimate_shift_stretch: residual and library lengths differ");
  }
  const int lo = std::max(window.lo, library.range().lo);
  const int hi = std::min(window.hi, library.range().hi);
  if (lo > hi) throw InvalidInput("estimate_shift_stretch: search window does not intersect the library");
  thread_local std::vector<std::span<const Complex>> slices;
  thread_local std::vector<int> labels;
  slices.clear();
  labels.clear();
  for (int b = lo; b <= hi; ++b) {
    slices.push_back(library.slice(k, b));
    labels.push_back(b);
  }
  return estimate_shift_stretch(g.bins, slices, labels, g.origin_length);
}

ShiftEstimate estimate_shift(const Spectrum& g, const Spectrum& s) {
  if (g.origin_length != s.origin_length || g.bins.size() != s.bins.size()) {
    throw InvalidInput("estimate_shift: spectra have different lengths");
  }
  if (all_zero(s.bins)) throw UndefinedShift("profile spectrum is all zero; shift is undefined");
  const std::span<const Complex> slice(s.bins);
  const int zero = 0;
  const auto est = estimate_shift_stretch(g.bins, std::span<const std::span<const Complex>>(&slice, 1),
                                          std::span<const int>(&zero, 1), g.origin_length);
  return {est.lag_index, est.tau, est.h_peak};
}

double closed_form_a(double h_peak, std::span<const Complex> s, std::size_t origin_length) {
  const double energy = two_sided_energy(s, origin_length) / static_cast<double>(origin_length);
  if (!(energy > 0.0)) throw DegenerateComponent("component profile has zero energy");
  return std::max(0.0, h_peak / energy);
}

double closed_form_a(double h_peak, const Spectrum& s) { return closed_form_a(h_peak, s.bins, s.origin_length); }

Spectrum residual_spectrum(std::size_t j, std::size_t k, const FactorModel& model, const SpectrumMatrix& data,
                           const StretchLibrary& library) {
  if (j >= data.channels || j >= model.channels()) throw InvalidInput("residual_spectrum: channel index out of range");
  if (k >= model.components() || k >= library.components()) {
    throw InvalidInput("residual_spectrum: component index out of range");
  }
  const std::size_t kk = model.components();
  std::vector<double> a_row(model.a.row(static_cast<Eigen::Index>(j)).begin(),
                            model.a.row(static_cast<Eigen::Index>(j)).end());
  std::vector<double> tau_row(model.tau.row(static_cast<Eigen::Index>(j)).begin(),
                              model.tau.row(static_cast<Eigen::Index>(j)).end());
  std::vector<int> b_row(kk, 0);
  if (model.variant == Variant::ShiftStretch) {
    for (std::size_t c = 0; c < kk; ++c) b_row[c] = model.b(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c));
  }
  Spectrum g;
  g.origin_length = data.origin_length;
  g.bins.resize(data.n_fft);
  residual_row(data.row(j), library, k, a_row, tau_row, b_row, g.bins);
  return g;
}

ChannelUpdate update_channel(std::size_t j, const FactorModel& model, const SpectrumMatrix& data,
                             const StretchLibrary& library, const ChannelSweepOptions& options) {
  const std::size_t kk = model.components();
  const auto row = static_cast<Eigen::Index>(j);
  ChannelUpdate u;
  u.a.assign(model.a.row(row).begin(), model.a.row(row).end());
  u.tau.assign(model.tau.row(row).begin(), model.tau.row(row).end());
  u.b.assign(kk, 0);
  const bool stretch = model.variant == Variant::ShiftStretch;
  if (stretch) u.b.assign(model.b.row(row).begin(), model.b.row(row).end());

  thread_local std::vector<Complex> g;
  g.resize(data.n_fft);
  Spectrum g_spec;
  g_spec.origin_length = data.origin_length;
  for (std::size_t k = 0; k < kk; ++k) {
    try {
      residual_row(data.row(j), library, k, u.a, u.tau, u.b, g);
      g_spec.bins.assign(g.begin(), g.end());
      StretchRange window{0, 0};
      if (stretch) {
        window = library.range();
        if (options.local_window) {
          window = {u.b[k] - *options.local_window, u.b[k] + *options.local_window};
        }
      }
      if (all_zero(g)) {
        // Nothing left to explain: the least-squares weight is zero.
        u.a[k] = 0.0;
        continue;
      }
      const auto est = estimate_shift_stretch(g_spec, library, k, window);
      u.tau[k] = est.tau;
      u.b[k] = est.b;
      u.a[k] = closed_form_a(est.h_peak, library.slice(k, est.b), data.origin_length);
    } catch (const Error&) {
      rethrow_with_context("channel " + std::to_string(j) + ", component " + std::to_string(k) + ": ");
    }
  }
  return u;
}

void sweep_channels(FactorModel& model, const SpectrumMatrix& data, const StretchLibrary& library,
                    const ChannelSweepOptions& options, std::size_t threads) {
  if (data.channels != model.channels() || data.origin_length != model.length()) {
    throw InvalidInput("sweep_channels: model and data dimensions differ");
  }
  parallel_for(model.channels(), threads, [&](std::size_t j) {
    ChannelUpdate u = update_channel(j, model, data, library, options);
    const auto row = static_cast<Eigen::Index>(j);
    for (std::size_t k = 0; k < u.a.size(); ++k) {
      const auto col = static_cast<Eigen::Index>(k);
      model.a(row, col) = u.a[k];
      model.tau(row, col) = u.tau[k];
      model.b(row, col) = u.b[k];
    }
  });
}

}  // namespace ssnmf
