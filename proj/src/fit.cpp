#include "ssnmf/fit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ssnmf/estimation.hpp"
#include "ssnmf/evaluation.hpp"
#include "ssnmf/parallel.hpp"

namespace ssnmf {

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::Converged:
      return "converged";
    case StopReason::LossIncreasing:
      return "loss_increasing";
    case StopReason::MaxIterations:
      return "max_iterations";
  }
  return "unknown";
}

void FitConfig::validate() const {
  if (components < 1) throw ConfigError("number of components K must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
  if (stop_window < 2) throw ConfigError("stop window must be at least 2");
  if (!(stop_rel_tol >= 0.0)) throw ConfigError("stop tolerance must be nonnegative");
}

StretchRange stretch_range_for(const FitConfig& config, Variant variant, std::size_t n) {
  if (variant != Variant::ShiftStretch) return {0, 0};
  StretchRange full = default_stretch_range(bin_count(n));
  if (config.stretch_max >= 0) {
    const int m = std::min(config.stretch_max, full.hi);
    full = {-m, m};
  }
  return full;
}

StretchLibrary build_model_library(const FactorModel& model, StretchRange range, std::size_t threads) {
  return build_library(model.profiles(), range, threads);
}

namespace {

int stretch_of(const FactorModel& model, Eigen::Index j, Eigen::Index k) {
  return model.variant == Variant::ShiftStretch ? model.b(j, k) : 0;
}

void reconstruct_into(const FactorModel& model, std::size_t j, const StretchLibrary& library,
                      std::span<Complex> out, std::span<Complex> phase) {
  std::fill(out.begin(), out.end(), Complex{});
  const auto row = static_cast<Eigen::Index>(j);
  for (std::size_t k = 0; k < model.components(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    const double a = model.a(row, col);
    if (a == 0.0) continue;
    const auto s = library.slice(k, stretch_of(model, row, col));
    phase_factors(model.length(), model.tau(row, col), phase);
    for (std::size_t f = 0; f < out.size(); ++f) out[f] += a * phase[f] * s[f];
  }
}

// A non-integer shift leaves an imaginary Nyquist bin that no real signal
// carries; the loss measures only its real part. Returns nb for odd n.
std::size_t nyquist_bin(std::size_t n) { return n % 2 == 0 ? n / 2 : bin_count(n); }

void check_dims(const FactorModel& model, const SpectrumMatrix& data, const StretchLibrary& library) {
  model.validate();
  if (data.channels != model.channels() || data.origin_length != model.length()) {
    throw InvalidInput("model and data dimensions differ");
  }
  if (library.components() != model.components() || library.origin_length() != model.length()) {
    throw InvalidInput("library does not match the model");
  }
}

}  // namespace

Spectrum reconstruct_channel_spectrum(const FactorModel& model, std::size_t j, const StretchLibrary& library) {
  if (j >= model.channels()) throw InvalidInput("reconstruct_channel_spectrum: channel index out of range");
  Spectrum out;
  out.origin_length = model.length();
  out.bins.resize(model.n_fft());
  std::vector<Complex> phase(model.n_fft());
  reconstruct_into(model, j, library, out.bins, phase);
  return out;
}

double loss(const FactorModel& model, const SpectrumMatrix& data, const StretchLibrary& library,
            std::size_t threads) {
  check_dims(model, data, library);
  const std::size_t nb = data.n_fft;
  const std::size_t nyquist = nyquist_bin(data.origin_length);
  std::vector<double> per_channel(data.channels, 0.0);
  parallel_for(data.channels, threads, [&](std::size_t j) {
    thread_local std::vector<Complex> xhat;
    thread_local std::vector<Complex> phase;
    xhat.resize(nb);
    phase.resize(nb);
    reconstruct_into(model, j, library, xhat, phase);
    const auto x = data.row(j);
    double acc = 0.0;
    for (std::size_t f = 0; f < nb; ++f) {
      Complex r = x[f] - xhat[f];
      if (f == nyquist) r = r.real();
      acc += data.weights[f] * data.weights[f] * std::norm(r);
    }
    per_channel[j] = acc;
  });
  double total = 0.0;
  for (double v : per_channel) total += v;
  return total / static_cast<double>(data.origin_length);
}

LossAndGradient loss_and_gradient(const FactorModel& model, const SpectrumMatrix& data,
                                  const StretchLibrary& library, std::size_t threads) {
  check_dims(model, data, library);
  const std::size_t p = model.channels();
  const std::size_t kk = model.components();
  const std::size_t n = model.length();
  const std::size_t nb = data.n_fft;
  const double c = 1.0 / static_cast<double>(n);
  const bool grad_a = optimizes_a_by_gradient(model.variant);
  const bool grad_tau = model.variant == Variant::NonIntegerShift;
  const std::size_t nyquist = nyquist_bin(n);

  std::vector<double> w2(nb);
  for (std::size_t f = 0; f < nb; ++f) w2[f] = data.weights[f] * data.weights[f];

  LossAndGradient out;
  out.grad.s_raw = Matrix::Zero(static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(n));
  if (grad_a) out.grad.a_raw = Matrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(kk));
  if (grad_tau) out.grad.tau = Matrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(kk));

  // Residuals, per-channel loss and the per-(j, k) scalar gradients.
  std::vector<Complex> residuals(p * nb);
  std::vector<double> per_channel(p, 0.0);
  parallel_for(p, threads, [&](std::size_t j) {
    thread_local std::vector<Complex> phase;
    phase.resize(nb);
    const std::span<Complex> r(residuals.data() + j * nb, nb);
    reconstruct_into(model, j, library, r, phase);
    const auto x = data.row(j);
    double acc = 0.0;
    for (std::size_t f = 0; f < nb; ++f) {
      r[f] = x[f] - r[f];
      if (f == nyquist) r[f] = r[f].real();
      acc += w2[f] * std::norm(r[f]);
    }
    per_channel[j] = acc;
    if (!grad_a && !grad_tau) return;
    const auto row = static_cast<Eigen::Index>(j);
    for (std::size_t k = 0; k < kk; ++k) {
      const auto col = static_cast<Eigen::Index>(k);
      const auto s = library.slice(k, stretch_of(model, row, col));
      phase_factors(n, model.tau(row, col), phase);
      const double a = model.a(row, col);
      double da = 0.0;
      double dtau = 0.0;
      for (std::size_t f = 0; f < nb; ++f) {
        const Complex y = phase[f] * s[f];
        const Complex cr = std::conj(r[f]);
        da += w2[f] * (cr * y).real();
        const double omega = 2.0 * std::numbers::pi * static_cast<double>(f) / static_cast<double>(n);
        dtau += w2[f] * (cr * Complex(0.0, -omega) * y).real();
      }
      if (grad_a) out.grad.a_raw(row, col) = -2.0 * c * da * sigmoid(model.a_raw(row, col));
      if (grad_tau) out.grad.tau(row, col) = -2.0 * c * a * dtau;
    }
  });
  for (double v : per_channel) out.loss += v;
  out.loss *= c;

  // Adjoint with respect to each used library slice, accumulated in channel
  // order per component.
  const std::size_t slots = library.range().size();
  std::vector<std::vector<Complex>> slice_grad(kk * slots);
  parallel_for(kk, threads, [&](std::size_t k) {
    thread_local std::vector<Complex> phase;
    phase.resize(nb);
    const auto col = static_cast<Eigen::Index>(k);
    for (std::size_t j = 0; j < p; ++j) {
      const auto row = static_cast<Eigen::Index>(j);
      const double a = model.a(row, col);
      if (a == 0.0) continue;
      auto& g = slice_grad[k * slots + library.slot(stretch_of(model, row, col))];
      if (g.empty()) g.assign(nb, Complex{});
      phase_factors(n, model.tau(row, col), phase);
      const std::span<const Complex> r(residuals.data() + j * nb, nb);
      for (std::size_t f = 0; f < nb; ++f) g[f] += (-2.0 * c * w2[f] * a) * std::conj(phase[f]) * r[f];
    }
  });

  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < slice_grad.size(); ++i) {
    if (!slice_grad[i].empty()) used.push_back(i);
  }
  const Matrix profiles = model.profiles();
  std::vector<std::vector<double>> profile_grad(used.size(), std::vector<double>(n));
  parallel_for(used.size(), threads, [&](std::size_t u) {
    const std::size_t k = used[u] / slots;
    const int b = library.range().lo + static_cast<int>(used[u] % slots);
    const std::span<const double> s(profiles.row(static_cast<Eigen::Index>(k)).data(), n);
    stretch_profile_adjoint(s, b, slice_grad[used[u]], profile_grad[u]);
  });
  for (std::size_t u = 0; u < used.size(); ++u) {
    const auto k = static_cast<Eigen::Index>(used[u] / slots);
    for (std::size_t t = 0; t < n; ++t) out.grad.s_raw(k, static_cast<Eigen::Index>(t)) += profile_grad[u][t];
  }
  for (Eigen::Index k = 0; k < out.grad.s_raw.rows(); ++k) {
    for (Eigen::Index t = 0; t < out.grad.s_raw.cols(); ++t) out.grad.s_raw(k, t) *= sigmoid(model.s_raw(k, t));
  }
  return out;
}

void Adam::step(std::span<double> param, std::span<const double> grad, std::size_t block) {
  if (param.size() != grad.size()) throw InvalidInput("Adam::step: parameter and gradient sizes differ");
  if (t_ == 0) throw InvalidInput("Adam::step: call tick() before the first step");
  if (moments_.size() <= block) moments_.resize(block + 1);
  auto& mo = moments_[block];
  if (mo.m.size() != param.size()) {
    mo.m.assign(param.size(), 0.0);
    mo.v.assign(param.size(), 0.0);
  }
  const double t = static_cast<double>(t_);
  const double bc1 = 1.0 - std::pow(beta1_, t);
  const double bc2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    mo.m[i] = beta1_ * mo.m[i] + (1.0 - beta1_) * grad[i];
    mo.v[i] = beta2_ * mo.v[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double m_hat = mo.m[i] / bc1;
    const double v_hat = mo.v[i] / bc2;
    param[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
  }
}

std::optional<StopReason> should_stop(std::span<const double> trace, std::size_t window, double rel_tol) {
  if (window < 2 || trace.size() < window) return std::nullopt;
  const auto recent = trace.last(window);
  bool increasing = true;
  for (std::size_t i = 1; i < recent.size(); ++i) {
    if (!(recent[i] > recent[i - 1])) {
      increasing = false;
      break;
    }
  }
  if (increasing) return StopReason::LossIncreasing;
  double lowest = std::numeric_limits<double>::infinity();
  double second = std::numeric_limits<double>::infinity();
  for (double v : recent) {
    if (v < lowest) {
      second = lowest;
      lowest = v;
    } else if (v < second) {
      second = v;
    }
  }
  if (lowest == 0.0) return second == 0.0 ? std::optional(StopReason::Converged) : std::nullopt;
  if (std::abs(second - lowest) / std::abs(lowest) < rel_tol) return StopReason::Converged;
  return std::nullopt;
}

namespace {

std::span<double> flat(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }

double wrap_shift(double tau, double n) {
  double w = std::fmod(tau + n / 2.0, n);
  if (w < 0.0) w += n;
  return w - n / 2.0;
}

}  // namespace

FitResult fit(const TimeSeriesMatrix& data, const FitConfig& config, const FactorModel& initial) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  FactorModel model = initial.variant == config.variant ? initial : convert_model(initial, config.variant);
  model.validate();
  if (model.components() != config.components) {
    throw ConfigError("initial model has " + std::to_string(model.components()) + " components, config asks for " +
                      std::to_string(config.components));
  }
  if (model.channels() != data.channels() || model.length() != data.n_pad()) {
    throw InvalidInput("initial model does not match the data dimensions");
  }
  model.sync_channel_map();

  const SpectrumMatrix spectra = to_spectra(data.values);
  const std::size_t n = data.n_pad();
  const StretchRange range = stretch_range_for(config, config.variant, n);
  ChannelSweepOptions sweep_options;
  const int window = config.stretch_window >= 0 ? config.stretch_window
                                                : std::max(1, static_cast<int>(bin_count(n) / 16));

  Adam adam(config.learning_rate);
  FitResult best;
  best.report.seed = config.seed;
  double best_loss = std::numeric_limits<double>::infinity();
  auto& trace = best.report.loss_trace;
  bool swept = false;

  auto finish = [&](StopReason reason) {
    best.report.stop_reason = reason;
    best.report.final_loss = best_loss;
    const StretchLibrary lib = build_model_library(best.model, range, config.threads);
    best.report.variance_explained = variance_explained(best.model, data, lib);
    best.report.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  for (std::size_t it = 0; it < config.max_iterations; ++it) {
    const StretchLibrary library = build_model_library(model, range, config.threads);
    if (uses_closed_form_sweep(config.variant)) {
      if (config.variant == Variant::ShiftStretch && config.local_stretch_search && swept) {
        sweep_options.local_window = window;
      }
      sweep_channels(model, spectra, library, sweep_options, config.threads);
      swept = true;
    }
    LossAndGradient lg = loss_and_gradient(model, spectra, library, config.threads);
    if (!std::isfinite(lg.loss)) {
      if (best_loss < std::numeric_limits<double>::infinity()) finish(StopReason::MaxIterations);
      throw FitDivergence("non-finite loss at iteration " + std::to_string(it), it, best);
    }
    trace.push_back(lg.loss);
    if (lg.loss < best_loss) {
      best_loss = lg.loss;
      best.model = model;
      best.report.best_iteration = it;
    }
    if (auto reason = should_stop(trace, config.stop_window, config.stop_rel_tol)) {
      finish(*reason);
      return best;
    }

    adam.tick();
    adam.step(flat(model.s_raw), flat(lg.grad.s_raw), 0);
    if (optimizes_a_by_gradient(config.variant)) {
      adam.step(flat(model.a_raw), flat(lg.grad.a_raw), 1);
      model.sync_channel_map();
    }
    if (config.variant == Variant::NonIntegerShift) {
      adam.step(flat(model.tau), flat(lg.grad.tau), 2);
      const double nd = static_cast<double>(n);
      model.tau = model.tau.unaryExpr([nd](double v) { return wrap_shift(v, nd); });
    }
  }
  finish(StopReason::MaxIterations);
  return best;
}

}  // namespace ssnmf
