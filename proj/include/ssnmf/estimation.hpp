#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ssnmf/factor_model.hpp"
#include "ssnmf/spectral.hpp"
#include "ssnmf/stretch.hpp"

namespace ssnmf {

/// Signed lag of cross_correlation index l, in [-N/2, N/2).
///
/// cross_correlation(G, S)(l) = sum_t g(t) s(t + l) peaks at l = -tau (mod N)
/// when g(t) = s(t - tau), so the index is negated before wrapping.
long index_to_lag(std::size_t l, std::size_t n);

struct ShiftEstimate {
  std::size_t lag_index = 0;
  double tau = 0.0;
  double h_peak = 0.0;
};

struct ShiftStretchEstimate {
  std::size_t lag_index = 0;
  int b = 0;
  double tau = 0.0;
  double h_peak = 0.0;
};

/// Integer delay of g relative to s from the argmax of their cross-correlation.
/// Ties (within 1e-12 of the peak) resolve to the smallest |tau|, then the
/// smaller tau. Throws UndefinedShift if either input is all zero.
ShiftEstimate estimate_shift(const Spectrum& g, const Spectrum& s);

/// Joint (lag, stretch) search over library slices of component k restricted
/// to `window`.
///
/// Candidates are ranked by h^(b)(t) / ||s^(b)||, the cross-correlation
/// normalized by the slice norm, which is the least-squares optimal choice
/// when slices differ in energy; for a single slice it is the plain argmax.
/// Ties resolve to the smallest |tau|, then smallest |b|, then smallest b,
/// then smallest tau. h_peak is the raw cross-correlation at the winner.
ShiftStretchEstimate estimate_shift_stretch(const Spectrum& g, const StretchLibrary& library,
                                            std::size_t k, StretchRange window);

/// Same search over an explicit set of candidate spectra; b_values[i] labels
/// slices[i]. Used by estimate_shift_stretch and by tests.
ShiftStretchEstimate estimate_shift_stretch(std::span<const Complex> g,
                                            std::span<const std::span<const Complex>> slices,
                                            std::span<const int> b_values, std::size_t origin_length);

/// a = h_peak / ||s||^2 with both terms in two-sided accounting (h_peak as
/// returned by cross_correlation), clipped at zero. Throws
/// DegenerateComponent for a zero-energy profile.
double closed_form_a(double h_peak, const Spectrum& s);
double closed_form_a(double h_peak, std::span<const Complex> s, std::size_t origin_length);

/// g_jk = x_j - sum_{k' != k} a_jk' phase(tau_jk') s_k'^(b_jk'). Shift-only
/// variants always use b = 0.
Spectrum residual_spectrum(std::size_t j, std::size_t k, const FactorModel& model,
                           const SpectrumMatrix& data, const StretchLibrary& library);

struct ChannelSweepOptions {
  /// When set, the stretch search for channel j, component k is limited to
  /// [b_jk - window, b_jk + window] intersected with the library range.
  std::optional<int> local_window;
};

struct ChannelUpdate {
  std::vector<double> tau;
  std::vector<int> b;
  std::vector<double> a;
};

/// Gauss-Seidel pass over components 0..K-1 of channel j: residual, shift (and
/// stretch) search, closed-form a. An all-zero residual sets a to zero and
/// keeps the previous shift and stretch. Errors are rethrown with (j, k)
/// context.
ChannelUpdate update_channel(std::size_t j, const FactorModel& model, const SpectrumMatrix& data,
                             const StretchLibrary& library, const ChannelSweepOptions& options = {});

/// update_channel for every channel, written back into `model`. Channels are
/// independent and processed over `threads` workers.
void sweep_channels(FactorModel& model, const SpectrumMatrix& data, const StretchLibrary& library,
                    const ChannelSweepOptions& options = {}, std::size_t threads = 0);

}  // namespace ssnmf
