#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace ssnmf {

using Complex = std::complex<double>;

/// Number of one-sided bins for a real signal of length n: floor(n/2) + 1.
constexpr std::size_t bin_count(std::size_t n) { return n / 2 + 1; }

/// One-sided DFT coefficients of a real signal of length `origin_length`.
struct Spectrum {
  std::vector<Complex> bins;
  std::size_t origin_length = 0;

  std::size_t size() const { return bins.size(); }
};

// ---------------------------------------------------------------------------
// Transform engine
//
// Forward transforms are unnormalized; inverse transforms carry the 1/N
// factor, so inverse(forward(x)) == x. The span-based overloads write into
// caller-owned storage and are what the hot loops use; the value-returning
// overloads validate their inputs.
// ---------------------------------------------------------------------------

/// out.size() must equal bin_count(x.size()).
void forward_rdft(std::span<const double> x, std::span<Complex> out);

/// Inverse of forward_rdft at length out.size(). bins.size() must equal
/// bin_count(out.size()). The imaginary parts of the DC bin and, for even
/// lengths, the Nyquist bin are ignored.
void inverse_rdft(std::span<const Complex> bins, std::span<double> out);

Spectrum forward_rdft(std::span<const double> x);

/// Throws InvalidInput on a bin count inconsistent with origin_length and
/// InternalConsistency when the DC/Nyquist bins carry imaginary parts above
/// 1e-9 relative to the largest bin magnitude.
std::vector<double> inverse_rdft(const Spectrum& spectrum);

/// Adjoint of forward_rdft: given dL/dX (as dRe + i dIm per bin) returns
/// dL/dx for a signal of length n.
void forward_rdft_adjoint(std::span<const Complex> grad_bins, std::span<double> grad_x);

/// Adjoint of inverse_rdft at length grad_x.size(): given dL/dx returns dL/dX.
void inverse_rdft_adjoint(std::span<const double> grad_x, std::span<Complex> grad_bins);

/// Per-bin weights making 2 * ||w .* X||^2 == n * ||x||^2 for real x.
std::vector<double> parseval_weights(std::size_t n_pad);

/// Multiplies bin f by exp(-i 2 pi f tau / N); for integer tau the inverse
/// transform is the circular shift x(t - tau).
Spectrum apply_phase_shift(const Spectrum& spectrum, double tau);

/// In-place variant over raw bins with explicit origin length.
void apply_phase_shift(std::span<Complex> bins, std::size_t origin_length, double tau);

/// exp(-i 2 pi f tau / N) for f in [0, out.size()).
void phase_factors(std::size_t origin_length, double tau, std::span<Complex> out);

/// Circular cross-correlation h = inverse_rdft(conj(G) .* S), i.e.
/// h(l) = sum_t g(t) s(t + l).
std::vector<double> cross_correlation(const Spectrum& g, const Spectrum& s);

/// Scratch-buffer variant used by the estimators; `out` has origin length.
void cross_correlation(std::span<const Complex> g, std::span<const Complex> s,
                       std::span<Complex> scratch, std::span<double> out);

/// ||w .* (x - x_hat)||^2.
double weighted_residual_norm(const Spectrum& x, const Spectrum& x_hat,
                              std::span<const double> weights);

/// Two-sided-equivalent energy: |X0|^2 + 2 sum_interior |Xf|^2 (+ |X_nyq|^2
/// for even N). Equals N * ||x||^2 for real x.
double two_sided_energy(std::span<const Complex> bins, std::size_t origin_length);

/// Circularly shifts x by an integer number of samples: y(t) = x(t - shift).
std::vector<double> circular_shift(std::span<const double> x, long shift);

}  // namespace ssnmf
