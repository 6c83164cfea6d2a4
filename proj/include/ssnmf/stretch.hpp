#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssnmf/spectral.hpp"
#include "ssnmf/types.hpp"

namespace ssnmf {

/// Inclusive interval of integer stretch indices.
struct StretchRange {
  int lo = 0;
  int hi = 0;

  std::size_t size() const { return static_cast<std::size_t>(hi - lo + 1); }
  bool contains(int b) const { return b >= lo && b <= hi; }
};

/// Time-scaling factor r = 1 + b / n_fft.
double b_to_r(int b, std::size_t n_fft);

/// Full search range [-n_fft/2 + 1, n_fft/2 - 1].
StretchRange default_stretch_range(std::size_t n_fft);

/// Largest |b| accepted by stretch_profile for a given bin count (2|b| < n_fft).
int max_stretch_index(std::size_t n_fft);

/// Scales the retained coefficients so their energy equals energy_before.
/// Throws DegenerateProfile when the retained energy is zero.
std::vector<double> energy_rescale(std::span<const double> coeffs, double energy_before);
std::vector<Complex> energy_rescale(std::span<const Complex> coeffs, double energy_before);

/// Diagnostics of the single truncation step of a stretch.
struct StretchTrace {
  double energy_before = 0.0;
  double energy_after_truncation = 0.0;
  double scale = 1.0;
  std::size_t intermediate_length = 0;
};

/// Stretched one-sided spectrum of profile `s` for stretch index `b`.
///
/// b > 0: zero-pad the spectrum by b bins, invert at length N + 2b, keep the
/// first N samples and restore the pre-truncation energy, transform back.
/// b < 0: truncate the spectrum by |b| bins and restore its energy, invert at
/// length N + 2b, zero-pad to N samples, transform back.
/// b == 0 returns forward_rdft(s).
///
/// Length-changing inverses are multiplied by N'/N so a constant profile keeps
/// its amplitude.
Spectrum stretch_profile(std::span<const double> s, int b, StretchTrace* trace = nullptr);

/// Vector-Jacobian product of stretch_profile: given dL/dout (dRe + i dIm per
/// bin) writes dL/ds into grad_s. The energy-rescale factor is differentiated
/// as a function of s.
void stretch_profile_adjoint(std::span<const double> s, int b,
                             std::span<const Complex> grad_out, std::span<double> grad_s);

/// Precomputed stretched spectra for K profiles over a range of b.
class StretchLibrary {
 public:
  StretchLibrary() = default;

  std::size_t components() const { return components_; }
  std::size_t n_fft() const { return n_fft_; }
  std::size_t origin_length() const { return origin_length_; }
  const StretchRange& range() const { return range_; }
  std::vector<int> b_values() const;

  bool has(int b) const { return range_.contains(b); }
  std::size_t slot(int b) const;

  std::span<const Complex> slice(std::size_t k, int b) const;
  std::span<Complex> slice(std::size_t k, int b);

  /// Time-domain energy ||s_k^(b)||^2 of the stretched profile.
  double energy(std::size_t k, int b) const { return energies_[k * range_.size() + slot(b)]; }

 private:
  friend StretchLibrary build_library(const Matrix& profiles, StretchRange range, std::size_t threads);

  std::size_t components_ = 0;
  std::size_t n_fft_ = 0;
  std::size_t origin_length_ = 0;
  StretchRange range_;
  std::vector<Complex> profiles_;  // K x B x n_fft
  std::vector<double> energies_;   // K x B
};

/// Builds profiles[k][b] = stretch_profile(S.row(k), b) for every k and b in
/// range. Each (k, b) slice is independent; work is spread over `threads`
/// (0 = default). Degenerate slices raise DegenerateProfile naming (k, b).
StretchLibrary build_library(const Matrix& profiles, StretchRange range, std::size_t threads = 0);

}  // namespace ssnmf
