#include "ssnmf/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

#include "ssnmf/error.hpp"

namespace ssnmf {

namespace {

// FFTW planning is not thread safe; execution with the new-array interface is.
// Plans are created once per length and live for the process lifetime.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan forward(std::size_t n) { return get(n, true); }
  fftw_plan inverse(std::size_t n) { return get(n, false); }

 private:
  fftw_plan get(std::size_t n, bool forward) {
    std::lock_guard lock(mutex_);
    auto& plans = forward ? forward_ : inverse_;
    if (auto it = plans.find(n); it != plans.end()) return it->second;
    const std::size_t nb = bin_count(n);
    double* real = fftw_alloc_real(n);
    fftw_complex* cplx = fftw_alloc_complex(nb);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fftw_plan plan = forward
                         ? fftw_plan_dft_r2c_1d(static_cast<int>(n), real, cplx, flags)
                         : fftw_plan_dft_c2r_1d(static_cast<int>(n), cplx, real, flags);
    fftw_free(real);
    fftw_free(cplx);
    if (plan == nullptr) throw InternalConsistency("fftw planning failed for n=" + std::to_string(n));
    plans.emplace(n, plan);
    return plan;
  }

  std::mutex mutex_;
  std::map<std::size_t, fftw_plan> forward_;
  std::map<std::size_t, fftw_plan> inverse_;
};

fftw_complex* as_fftw(Complex* p) { return reinterpret_cast<fftw_complex*>(p); }

void require_length(std::size_t n) {
  if (n < 2) throw InvalidInput("signal length must be at least 2, got " + std::to_string(n));
}

}  // namespace

void forward_rdft(std::span<const double> x, std::span<Complex> out) {
  require_length(x.size());
  if (out.size() != bin_count(x.size())) throw InvalidInput("forward_rdft: output bin count mismatch");
  fftw_plan plan = PlanCache::instance().forward(x.size());
  // r2c does not modify its input.
  fftw_execute_dft_r2c(plan, const_cast<double*>(x.data()), as_fftw(out.data()));
}

void inverse_rdft(std::span<const Complex> bins, std::span<double> out) {
  const std::size_t n = out.size();
  require_length(n);
  if (bins.size() != bin_count(n)) throw InvalidInput("inverse_rdft: bin count inconsistent with length");
  // c2r destroys its input.
  thread_local std::vector<Complex> scratch;
  scratch.assign(bins.begin(), bins.end());
  fftw_plan plan = PlanCache::instance().inverse(n);
  fftw_execute_dft_c2r(plan, as_fftw(scratch.data()), out.data());
  const double scale = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= scale;
}

Spectrum forward_rdft(std::span<const double> x) {
  require_length(x.size());
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidInput("forward_rdft: non-finite sample");
  }
  Spectrum s;
  s.origin_length = x.size();
  s.bins.resize(bin_count(x.size()));
  forward_rdft(x, s.bins);
  return s;
}

std::vector<double> inverse_rdft(const Spectrum& spectrum) {
  const std::size_t n = spectrum.origin_length;
  require_length(n);
  if (spectrum.bins.size() != bin_count(n)) {
    throw InvalidInput("inverse_rdft: " + std::to_string(spectrum.bins.size()) +
                       " bins inconsistent with origin length " + std::to_string(n));
  }
  double peak = 0.0;
  for (const Complex& c : spectrum.bins) peak = std::max(peak, std::abs(c));
  const double tol = 1e-9 * peak;
  auto check_real = [&](std::size_t f) {
    if (std::abs(spectrum.bins[f].imag()) > tol) {
      throw InternalConsistency("inverse_rdft: bin " + std::to_string(f) +
                                " of a real signal has imaginary residue");
    }
  };
  check_real(0);
  if (n % 2 == 0) check_real(spectrum.bins.size() - 1);
  std::vector<double> out(n);
  inverse_rdft(spectrum.bins, out);
  return out;
}

void forward_rdft_adjoint(std::span<const Complex> grad_bins, std::span<double> grad_x) {
  // dL/dx_t = sum_f Re(G_f e^{+i 2 pi f t / N}); an unnormalized c2r computes
  // the two-sided sum, so interior bins are halved first.
  const std::size_t n = grad_x.size();
  const std::size_t nb = bin_count(n);
  if (grad_bins.size() != nb) throw InvalidInput("forward_rdft_adjoint: bin count mismatch");
  thread_local std::vector<Complex> scratch;
  scratch.assign(grad_bins.begin(), grad_bins.end());
  const std::size_t last_interior = (n % 2 == 0) ? nb - 1 : nb;
  for (std::size_t f = 1; f < last_interior; ++f) scratch[f] *= 0.5;
  fftw_plan plan = PlanCache::instance().inverse(n);
  fftw_execute_dft_c2r(plan, as_fftw(scratch.data()), grad_x.data());
}

void inverse_rdft_adjoint(std::span<const double> grad_x, std::span<Complex> grad_bins) {
  const std::size_t n = grad_x.size();
  const std::size_t nb = bin_count(n);
  if (grad_bins.size() != nb) throw InvalidInput("inverse_rdft_adjoint: bin count mismatch");
  forward_rdft(grad_x, grad_bins);
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t last_interior = (n % 2 == 0) ? nb - 1 : nb;
  grad_bins[0] = Complex(grad_bins[0].real() * inv_n, 0.0);
  for (std::size_t f = 1; f < last_interior; ++f) grad_bins[f] *= 2.0 * inv_n;
  if (n % 2 == 0) grad_bins[nb - 1] = Complex(grad_bins[nb - 1].real() * inv_n, 0.0);
}

std::vector<double> parseval_weights(std::size_t n_pad) {
  require_length(n_pad);
  std::vector<double> w(bin_count(n_pad), 1.0);
  w.front() = std::numbers::sqrt2 / 2.0;
  if (n_pad % 2 == 0) w.back() = std::numbers::sqrt2 / 2.0;
  return w;
}

void phase_factors(std::size_t origin_length, double tau, std::span<Complex> out) {
  const double n = static_cast<double>(origin_length);
  for (std::size_t f = 0; f < out.size(); ++f) {
    // Reduce f * tau modulo N first; exact for integer shifts.
    const double cycles = std::fmod(static_cast<double>(f) * tau, n);
    out[f] = std::polar(1.0, -2.0 * std::numbers::pi * cycles / n);
  }
}

void apply_phase_shift(std::span<Complex> bins, std::size_t origin_length, double tau) {
  if (tau == 0.0) return;
  thread_local std::vector<Complex> phase;
  phase.resize(bins.size());
  phase_factors(origin_length, tau, phase);
  for (std::size_t f = 0; f < bins.size(); ++f) bins[f] *= phase[f];
}

Spectrum apply_phase_shift(const Spectrum& spectrum, double tau) {
  Spectrum out = spectrum;
  apply_phase_shift(out.bins, out.origin_length, tau);
  return out;
}

void cross_correlation(std::span<const Complex> g, std::span<const Complex> s,
                       std::span<Complex> scratch, std::span<double> out) {
  for (std::size_t f = 0; f < g.size(); ++f) scratch[f] = std::conj(g[f]) * s[f];
  inverse_rdft(scratch, out);
}

std::vector<double> cross_correlation(const Spectrum& g, const Spectrum& s) {
  if (g.origin_length != s.origin_length || g.bins.size() != s.bins.size()) {
    throw InvalidInput("cross_correlation: spectra have different lengths");
  }
  require_length(g.origin_length);
  if (g.bins.size() != bin_count(g.origin_length)) throw InvalidInput("cross_correlation: malformed spectrum");
  std::vector<Complex> scratch(g.bins.size());
  std::vector<double> out(g.origin_length);
  cross_correlation(g.bins, s.bins, scratch, out);
  return out;
}

double weighted_residual_norm(const Spectrum& x, const Spectrum& x_hat,
                              std::span<const double> weights) {
  if (x.bins.size() != x_hat.bins.size() || x.bins.size() != weights.size()) {
    throw InvalidInput("weighted_residual_norm: length mismatch");
  }
  double acc = 0.0;
  for (std::size_t f = 0; f < x.bins.size(); ++f) {
    acc += weights[f] * weights[f] * std::norm(x.bins[f] - x_hat.bins[f]);
  }
  return acc;
}

double two_sided_energy(std::span<const Complex> bins, std::size_t origin_length) {
  const std::size_t nb = bins.size();
  double acc = 0.0;
  for (std::size_t f = 0; f < nb; ++f) {
    const bool single = f == 0 || (origin_length % 2 == 0 && f == nb - 1);
    acc += (single ? 1.0 : 2.0) * std::norm(bins[f]);
  }
  return acc;
}

std::vector<double> circular_shift(std::span<const double> x, long shift) {
  const long n = static_cast<long>(x.size());
  std::vector<double> y(x.size());
  if (n == 0) return y;
  const long s = ((shift % n) + n) % n;
  for (long t = 0; t < n; ++t) y[static_cast<std::size_t>((t + s) % n)] = x[static_cast<std::size_t>(t)];
  return y;
}

}  // namespace ssnmf
