#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ssnmf/data.hpp"
#include "ssnmf/error.hpp"
#include "ssnmf/factor_model.hpp"
#include "ssnmf/stretch.hpp"

namespace ssnmf {

enum class StopReason { Converged, LossIncreasing, MaxIterations };

std::string_view to_string(StopReason r);

struct FitConfig {
  std::size_t components = 1;
  Variant variant = Variant::ShiftStretch;
  double learning_rate = 0.1;
  std::size_t max_iterations = 10000;
  std::size_t stop_window = 50;
  double stop_rel_tol = 1e-10;
  std::uint64_t seed = 0;
  /// Largest |b| searched; negative selects the full range |b| <= n_fft/2 - 1.
  int stretch_max = -1;
  /// Half-width of the warm-started stretch search after the first sweep;
  /// negative selects n_fft/16. Ignored when local_stretch_search is false.
  int stretch_window = -1;
  bool local_stretch_search = true;
  std::size_t threads = 0;

  /// Throws ConfigError on K < 1, non-positive learning rate, etc.
  void validate() const;
};

struct FitReport {
  std::vector<double> loss_trace;
  double final_loss = 0.0;
  double variance_explained = 0.0;
  StopReason stop_reason = StopReason::MaxIterations;
  double elapsed_seconds = 0.0;
  std::uint64_t seed = 0;
  std::size_t best_iteration = 0;
};

struct FitResult {
  FactorModel model;
  FitReport report;
};

/// Raised on a non-finite loss; carries the best state reached so far.
class FitDivergence : public Divergence {
 public:
  FitDivergence(const std::string& what, std::size_t iteration, FitResult partial)
      : Divergence(what, iteration), partial_(std::move(partial)) {}
  const FitResult& partial() const noexcept { return partial_; }

 private:
  FitResult partial_;
};

/// Stretch range used by a fit of `variant` on series of length n.
StretchRange stretch_range_for(const FitConfig& config, Variant variant, std::size_t n);

/// Library of the model's current profiles over `range`.
StretchLibrary build_model_library(const FactorModel& model, StretchRange range, std::size_t threads = 0);

/// sum_k a_jk phase(tau_jk) s_k^(b_jk); b is ignored for shift-only variants.
Spectrum reconstruct_channel_spectrum(const FactorModel& model, std::size_t j, const StretchLibrary& library);

/// (1/N) sum_j ||w .* (x_j - x_hat_j)||^2 with N the padded length. For even
/// N only the real part of the Nyquist residual counts, so the loss equals half
/// the time-domain squared residual for non-integer shifts too.
double loss(const FactorModel& model, const SpectrumMatrix& data, const StretchLibrary& library,
            std::size_t threads = 0);

struct Gradients {
  Matrix s_raw;  // K x N
  Matrix a_raw;  // P x K, gradient-A variants only
  Matrix tau;    // P x K, NonIntegerShift only
};

struct LossAndGradient {
  double loss = 0.0;
  Gradients grad;
};

/// Loss and its exact gradient with respect to the active continuous
/// parameters, with shifts, stretch indices and (for closed-form variants) A
/// held fixed. The channel reduction runs in channel order so results do not
/// depend on the thread count.
LossAndGradient loss_and_gradient(const FactorModel& model, const SpectrumMatrix& data,
                                  const StretchLibrary& library, std::size_t threads = 0);

/// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Updates `param` in place. Each parameter block keeps its own moments;
  /// the step counter is shared and advanced by tick().
  void step(std::span<double> param, std::span<const double> grad, std::size_t block);
  void tick() { ++t_; }
  std::size_t steps() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::size_t t_ = 0;
  std::vector<Moments> moments_;
};

/// Stopping rule over the latest `window` losses: LossIncreasing when the
/// window is strictly increasing; Converged when the two smallest losses in
/// the window differ by less than rel_tol relative to the smaller. Returns
/// nullopt while the trace is shorter than the window.
std::optional<StopReason> should_stop(std::span<const double> trace, std::size_t window = 50,
                                      double rel_tol = 1e-10);

/// Alternating fit of `initial` to `data`.
///
/// Each iteration: build the stretch library from softplus(S_raw); for
/// closed-form variants run the channel sweep (tau, b, A); evaluate loss and
/// gradient; take an Adam step on the continuous parameters; test the stopping
/// rule. Returns the state with the lowest observed loss.
FitResult fit(const TimeSeriesMatrix& data, const FitConfig& config, const FactorModel& initial);

}  // namespace ssnmf
