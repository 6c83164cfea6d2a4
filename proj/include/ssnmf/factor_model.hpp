#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ssnmf/spectral.hpp"
#include "ssnmf/types.hpp"

namespace ssnmf {

enum class Variant {
  PlainNMF,         // x_j = sum_k a_jk s_k
  IntegerShift,     // closed-form integer shifts and A
  NonIntegerShift,  // gradient-refined real shifts and A
  ShiftStretch,     // closed-form integer shifts, stretches and A
};

std::string_view to_string(Variant v);
/// Accepts "plain", "int-shift", "nonint-shift", "shift-stretch".
Variant parse_variant(std::string_view name);

/// True for variants whose A (and tau) come from gradient steps on an
/// unconstrained parameterization instead of the closed-form sweep.
constexpr bool optimizes_a_by_gradient(Variant v) {
  return v == Variant::PlainNMF || v == Variant::NonIntegerShift;
}
constexpr bool uses_closed_form_sweep(Variant v) {
  return v == Variant::IntegerShift || v == Variant::ShiftStretch;
}

/// One-sided spectra of every channel plus the Parseval weights.
struct SpectrumMatrix {
  std::size_t channels = 0;
  std::size_t n_fft = 0;
  std::size_t origin_length = 0;
  std::vector<Complex> bins;  // channels x n_fft
  std::vector<double> weights;

  std::span<const Complex> row(std::size_t j) const { return {bins.data() + j * n_fft, n_fft}; }
  Spectrum spectrum(std::size_t j) const;
};

SpectrumMatrix to_spectra(const Matrix& x);

/// Full parameter set of a shift/stretch-invariant factorization.
///
/// `a` is always the effective nonnegative channel map. For gradient-A
/// variants it is softplus(a_raw) and must be refreshed with sync_channel_map()
/// after a_raw changes.
struct FactorModel {
  Variant variant = Variant::PlainNMF;
  Matrix a;      // P x K
  Matrix a_raw;  // P x K, gradient-A variants only
  Matrix s_raw;  // K x N_pad, unconstrained
  Matrix tau;    // P x K, samples
  IntMatrix b;   // P x K, stretch indices

  std::size_t channels() const { return static_cast<std::size_t>(a.rows()); }
  std::size_t components() const { return static_cast<std::size_t>(s_raw.rows()); }
  std::size_t length() const { return static_cast<std::size_t>(s_raw.cols()); }
  std::size_t n_fft() const { return bin_count(length()); }

  /// softplus(s_raw), elementwise positive.
  Matrix profiles() const;
  void sync_channel_map();
  /// Throws InvalidInput when shapes are inconsistent.
  void validate() const;
};

/// Builds a model from nonnegative initial profiles and channel map.
/// Entries below `floor` are raised to it before the inverse softplus.
FactorModel make_model(Variant variant, const Matrix& profiles, const Matrix& a,
                       double floor = 1e-6);

/// Copies parameters of `from` into a model of `variant` (tau, b and S kept,
/// a_raw derived from a when the target optimizes A by gradient).
FactorModel convert_model(const FactorModel& from, Variant variant, double floor = 1e-6);

double softplus(double x);
/// ln(exp(y) - 1); throws InvalidInput for y <= 0.
double softplus_inverse(double y);
double sigmoid(double x);

}  // namespace ssnmf
