#include "ssnmf/stretch.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "ssnmf/error.hpp"
#include "ssnmf/parallel.hpp"

namespace ssnmf {

namespace {

// Truncate-and-rescale on a flat real coordinate vector. Coordinates with
// keep[i] == false are removed; retained coordinates are scaled by alpha so
// their energy matches the full vector's.
struct Rescale {
  double alpha = 1.0;
  double energy_before = 0.0;
  double energy_after = 0.0;
};

Rescale compute_rescale(std::span<const double> full, const std::vector<bool>& keep) {
  Rescale r;
  for (std::size_t i = 0; i < full.size(); ++i) {
    const double sq = full[i] * full[i];
    r.energy_before += sq;
    if (keep[i]) r.energy_after += sq;
  }
  if (!(r.energy_after > 0.0)) throw DegenerateProfile("all retained coefficients are zero after truncation");
  r.alpha = std::sqrt(r.energy_before / r.energy_after);
  return r;
}

// dL/dfull given dL/d(alpha * kept) where alpha depends on `full`.
void rescale_adjoint(std::span<const double> full, const std::vector<bool>& keep, const Rescale& r,
                     std::span<const double> grad_scaled, std::span<double> grad_full) {
  double dot = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) {
    if (keep[i]) dot += grad_scaled[i] * full[i];
  }
  const double coef = dot / (r.alpha * r.energy_after);
  const double a2 = r.alpha * r.alpha;
  for (std::size_t i = 0; i < full.size(); ++i) {
    if (keep[i]) {
      grad_full[i] = r.alpha * grad_scaled[i] + coef * full[i] * (1.0 - a2);
    } else {
      grad_full[i] = coef * full[i];
    }
  }
}

std::span<const double> as_reals(std::span<const Complex> c) {
  return {reinterpret_cast<const double*>(c.data()), 2 * c.size()};
}
std::span<double> as_reals(std::span<Complex> c) {
  return {reinterpret_cast<double*>(c.data()), 2 * c.size()};
}

void check_stretch(std::size_t n, int b) {
  const std::size_t nb = bin_count(n);
  if (2 * static_cast<std::size_t>(std::abs(b)) >= nb) {
    throw InvalidInput("stretch index " + std::to_string(b) + " outside |b| < " + std::to_string(nb) + "/2");
  }
}

// Real-coordinate mask for truncating a one-sided spectrum of length N
// (nb bins) to the bin count of N' = N + 2b (b < 0). The new last bin is the
// Nyquist bin of N' when N' is even; its imaginary part is dropped so the
// implied two-sided spectrum stays conjugate symmetric.
std::vector<bool> spectral_keep_mask(std::size_t nb, std::size_t nb_short, std::size_t n_short) {
  std::vector<bool> keep(2 * nb, false);
  for (std::size_t i = 0; i < 2 * nb_short; ++i) keep[i] = true;
  if (n_short % 2 == 0) keep[2 * (nb_short - 1) + 1] = false;
  keep[1] = false;  // DC imaginary part is zero for a real signal
  return keep;
}

}  // namespace

double b_to_r(int b, std::size_t n_fft) {
  if (n_fft == 0) throw InvalidInput("b_to_r: n_fft must be positive");
  return 1.0 + static_cast<double>(b) / static_cast<double>(n_fft);
}

StretchRange default_stretch_range(std::size_t n_fft) {
  const int half = static_cast<int>(n_fft / 2);
  const int bound = std::max(0, half - 1);
  return {-bound, bound};
}

int max_stretch_index(std::size_t n_fft) {
  // largest integer with 2|b| < n_fft
  return n_fft == 0 ? 0 : static_cast<int>((n_fft - 1) / 2);
}

std::vector<double> energy_rescale(std::span<const double> coeffs, double energy_before) {
  double after = 0.0;
  for (double c : coeffs) after += c * c;
  if (!(after > 0.0)) throw DegenerateProfile("energy_rescale: retained coefficients have zero energy");
  const double alpha = std::sqrt(energy_before / after);
  std::vector<double> out(coeffs.begin(), coeffs.end());
  for (double& c : out) c *= alpha;
  return out;
}

std::vector<Complex> energy_rescale(std::span<const Complex> coeffs, double energy_before) {
  double after = 0.0;
  for (const Complex& c : coeffs) after += std::norm(c);
  if (!(after > 0.0)) throw DegenerateProfile("energy_rescale: retained coefficients have zero energy");
  const double alpha = std::sqrt(energy_before / after);
  std::vector<Complex> out(coeffs.begin(), coeffs.end());
  for (Complex& c : out) c *= alpha;
  return out;
}

Spectrum stretch_profile(std::span<const double> s, int b, StretchTrace* trace) {
  const std::size_t n = s.size();
  if (n < 2) throw InvalidInput("stretch_profile: profile length must be at least 2");
  check_stretch(n, b);
  Spectrum base = forward_rdft(s);
  if (b == 0) {
    if (trace != nullptr) *trace = StretchTrace{0.0, 0.0, 1.0, n};
    return base;
  }

  const std::size_t nb = bin_count(n);
  const std::size_t n_alt = static_cast<std::size_t>(static_cast<long>(n) + 2L * b);
  const std::size_t nb_alt = bin_count(n_alt);
  const double amplitude = static_cast<double>(n_alt) / static_cast<double>(n);

  std::vector<double> time(n, 0.0);
  Rescale r;
  if (b > 0) {
    std::vector<Complex> padded(nb_alt, Complex{});
    std::copy(base.bins.begin(), base.bins.end(), padded.begin());
    // The old Nyquist bin becomes an interior bin and gets mirrored.
    if (n % 2 == 0) padded[nb - 1] *= 0.5;
    std::vector<double> longer(n_alt);
    inverse_rdft(padded, longer);
    for (double& v : longer) v *= amplitude;
    std::vector<bool> keep(n_alt, false);
    for (std::size_t t = 0; t < n; ++t) keep[t] = true;
    r = compute_rescale(longer, keep);
    for (std::size_t t = 0; t < n; ++t) time[t] = r.alpha * longer[t];
  } else {
    const std::vector<bool> keep = spectral_keep_mask(nb, nb_alt, n_alt);
    r = compute_rescale(as_reals(std::span<const Complex>(base.bins)), keep);
    std::vector<Complex> truncated(base.bins.begin(), base.bins.begin() + static_cast<long>(nb_alt));
    auto flat = as_reals(std::span<Complex>(truncated));
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = keep[i] ? r.alpha * flat[i] : 0.0;
    std::vector<double> shorter(n_alt);
    inverse_rdft(truncated, shorter);
    for (std::size_t t = 0; t < n_alt; ++t) time[t] = amplitude * shorter[t];
  }
  if (trace != nullptr) *trace = StretchTrace{r.energy_before, r.energy_after, r.alpha, n_alt};
  Spectrum out;
  out.origin_length = n;
  out.bins.resize(nb);
  forward_rdft(time, out.bins);
  return out;
}

void stretch_profile_adjoint(std::span<const double> s, int b, std::span<const Complex> grad_out,
                             std::span<double> grad_s) {
  const std::size_t n = s.size();
  check_stretch(n, b);
  const std::size_t nb = bin_count(n);
  if (grad_out.size() != nb || grad_s.size() != n) throw InvalidInput("stretch_profile_adjoint: size mismatch");
  if (b == 0) {
    forward_rdft_adjoint(grad_out, grad_s);
    return;
  }

  const std::size_t n_alt = static_cast<std::size_t>(static_cast<long>(n) + 2L * b);
  const std::size_t nb_alt = bin_count(n_alt);
  const double amplitude = static_cast<double>(n_alt) / static_cast<double>(n);

  // Recompute the forward intermediates.
  std::vector<Complex> base(nb);
  forward_rdft(s, base);

  std::vector<double> grad_time(n);
  forward_rdft_adjoint(grad_out, grad_time);

  std::vector<Complex> grad_base(nb, Complex{});
  if (b > 0) {
    std::vector<Complex> padded(nb_alt, Complex{});
    std::copy(base.begin(), base.end(), padded.begin());
    if (n % 2 == 0) padded[nb - 1] *= 0.5;
    std::vector<double> longer(n_alt);
    inverse_rdft(padded, longer);
    for (double& v : longer) v *= amplitude;
    std::vector<bool> keep(n_alt, false);
    for (std::size_t t = 0; t < n; ++t) keep[t] = true;
    const Rescale r = compute_rescale(longer, keep);

    std::vector<double> grad_scaled(n_alt, 0.0);
    std::copy(grad_time.begin(), grad_time.end(), grad_scaled.begin());
    std::vector<double> grad_longer(n_alt);
    rescale_adjoint(longer, keep, r, grad_scaled, grad_longer);
    for (double& v : grad_longer) v *= amplitude;
    std::vector<Complex> grad_padded(nb_alt);
    inverse_rdft_adjoint(grad_longer, grad_padded);
    std::copy(grad_padded.begin(), grad_padded.begin() + static_cast<long>(nb), grad_base.begin());
    if (n % 2 == 0) grad_base[nb - 1] *= 0.5;
  } else {
    const std::vector<bool> keep = spectral_keep_mask(nb, nb_alt, n_alt);
    const Rescale r = compute_rescale(as_reals(std::span<const Complex>(base)), keep);
    std::vector<double> grad_shorter(n_alt);
    for (std::size_t t = 0; t < n_alt; ++t) grad_shorter[t] = amplitude * grad_time[t];
    std::vector<Complex> grad_truncated(nb, Complex{});
    inverse_rdft_adjoint(grad_shorter, std::span<Complex>(grad_truncated).first(nb_alt));
    rescale_adjoint(as_reals(std::span<const Complex>(base)), keep, r,
                    as_reals(std::span<const Complex>(grad_truncated)),
                    as_reals(std::span<Complex>(grad_base)));
  }
  forward_rdft_adjoint(grad_base, grad_s);
}

std::vector<int> StretchLibrary::b_values() const {
  std::vector<int> out;
  out.reserve(range_.size());
  for (int b = range_.lo; b <= range_.hi; ++b) out.push_back(b);
  return out;
}

std::size_t StretchLibrary::slot(int b) const {
  if (!range_.contains(b)) {
    throw InvalidInput("stretch index " + std::to_string(b) + " not in library range [" +
                       std::to_string(range_.lo) + ", " + std::to_string(range_.hi) + "]");
  }
  return static_cast<std::size_t>(b - range_.lo);
}

std::span<const Complex> StretchLibrary::slice(std::size_t k, int b) const {
  const std::size_t offset = (k * range_.size() + slot(b)) * n_fft_;
  return {profiles_.data() + offset, n_fft_};
}

std::span<Complex> StretchLibrary::slice(std::size_t k, int b) {
  const std::size_t offset = (k * range_.size() + slot(b)) * n_fft_;
  return {profiles_.data() + offset, n_fft_};
}

StretchLibrary build_library(const Matrix& profiles, StretchRange range, std::size_t threads) {
  if (range.lo > range.hi) throw InvalidInput("build_library: empty stretch range");
  const std::size_t n = static_cast<std::size_t>(profiles.cols());
  const std::size_t k_count = static_cast<std::size_t>(profiles.rows());
  if (k_count == 0 || n < 2) throw InvalidInput("build_library: need at least one profile of length >= 2");
  const std::size_t nb = bin_count(n);
  const int bound = max_stretch_index(nb);
  if (range.lo < -bound || range.hi > bound) {
    throw InvalidInput("build_library: stretch range exceeds |b| < n_fft/2");
  }

  StretchLibrary lib;
  lib.components_ = k_count;
  lib.n_fft_ = nb;
  lib.origin_length_ = n;
  lib.range_ = range;
  lib.profiles_.assign(k_count * range.size() * nb, Complex{});
  lib.energies_.assign(k_count * range.size(), 0.0);

  const std::size_t slices = k_count * range.size();
  parallel_for(slices, threads, [&](std::size_t idx) {
    const std::size_t k = idx / range.size();
    const int b = range.lo + static_cast<int>(idx % range.size());
    const std::span<const double> row(profiles.row(static_cast<Eigen::Index>(k)).data(), n);
    Spectrum spec;
    try {
      spec = stretch_profile(row, b);
    } catch (const DegenerateProfile& e) {
      throw DegenerateProfile("component " + std::to_string(k) + ", b=" + std::to_string(b) + ": " + e.what());
    }
    std::copy(spec.bins.begin(), spec.bins.end(), lib.profiles_.begin() + static_cast<long>(idx * nb));
    lib.energies_[idx] = two_sided_energy(spec.bins, n) / static_cast<double>(n);
  });
  return lib;
}

}  // namespace ssnmf
