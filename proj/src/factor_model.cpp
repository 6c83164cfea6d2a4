#include "ssnmf/factor_model.hpp"

#include <algorithm>
#include <cmath>

#include "ssnmf/error.hpp"

namespace ssnmf {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::PlainNMF:
      return "plain";
    case Variant::IntegerShift:
      return "int-shift";
    case Variant::NonIntegerShift:
      return "nonint-shift";
    case Variant::ShiftStretch:
      return "shift-stretch";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "plain" || name == "nmf") return Variant::PlainNMF;
  if (name == "int-shift") return Variant::IntegerShift;
  if (name == "nonint-shift") return Variant::NonIntegerShift;
  if (name == "shift-stretch") return Variant::ShiftStretch;
  throw ConfigError("unknown variant '" + std::string(name) +
                    "' (expected plain, int-shift, nonint-shift or shift-stretch)");
}

Spectrum SpectrumMatrix::spectrum(std::size_t j) const {
  Spectrum s;
  s.origin_length = origin_length;
  const auto r = row(j);
  s.bins.assign(r.begin(), r.end());
  return s;
}

SpectrumMatrix to_spectra(const Matrix& x) {
  SpectrumMatrix out;
  out.channels = static_cast<std::size_t>(x.rows());
  out.origin_length = static_cast<std::size_t>(x.cols());
  if (out.origin_length < 2) throw InvalidInput("to_spectra: series length must be at least 2");
  out.n_fft = bin_count(out.origin_length);
  out.bins.resize(out.channels * out.n_fft);
  for (std::size_t j = 0; j < out.channels; ++j) {
    forward_rdft(std::span<const double>(x.row(static_cast<Eigen::Index>(j)).data(), out.origin_length),
                 std::span<Complex>(out.bins.data() + j * out.n_fft, out.n_fft));
  }
  out.weights = parseval_weights(out.origin_length);
  return out;
}

double softplus(double x) {
  if (x > 35.0) return x;
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw InvalidInput("softplus_inverse: argument must be positive");
  if (y > 35.0) return y + std::log1p(-std::exp(-y));
  return std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix FactorModel::profiles() const { return s_raw.unaryExpr([](double v) { return softplus(v); }); }

void FactorModel::sync_channel_map() {
  if (optimizes_a_by_gradient(variant)) a = a_raw.unaryExpr([](double v) { return softplus(v); });
}

void FactorModel::validate() const {
  const auto p = a.rows();
  const auto k = s_raw.rows();
  if (k < 1 || p < 1) throw InvalidInput("model must have at least one channel and one component");
  if (a.cols() != k || tau.rows() != p || tau.cols() != k || b.rows() != p || b.cols() != k) {
    throw InvalidInput("model parameter shapes are inconsistent");
  }
  if (optimizes_a_by_gradient(variant) && (a_raw.rows() != p || a_raw.cols() != k)) {
    throw InvalidInput("gradient-A variant requires a_raw of shape P x K");
  }
  if (s_raw.cols() < 2) throw InvalidInput("profiles must have length >= 2");
}

namespace {

Matrix inverse_softplus_floored(const Matrix& m, double floor) {
  return m.unaryExpr([floor](double v) { return softplus_inverse(std::max(v, floor)); });
}

}  // namespace

FactorModel make_model(Variant variant, const Matrix& profiles, const Matrix& a, double floor) {
  if (a.cols() != profiles.rows()) throw InvalidInput("make_model: A columns must match profile count");
  FactorModel m;
  m.variant = variant;
  m.s_raw = inverse_softplus_floored(profiles, floor);
  m.a = a.cwiseMax(0.0);
  m.tau = Matrix::Zero(a.rows(), a.cols());
  m.b = IntMatrix::Zero(a.rows(), a.cols());
  if (optimizes_a_by_gradient(variant)) {
    m.a_raw = inverse_softplus_floored(m.a, floor);
    m.sync_channel_map();
  }
  return m;
}

FactorModel convert_model(const FactorModel& from, Variant variant, double floor) {
  FactorModel m = from;
  m.variant = variant;
  if (variant != Variant::ShiftStretch) m.b.setZero();
  if (variant == Variant::PlainNMF) m.tau.setZero();
  if (optimizes_a_by_gradient(variant)) {
    m.a_raw = inverse_softplus_floored(from.a, floor);
    m.sync_channel_map();
  } else {
    m.a_raw.resize(0, 0);
  }
  return m;
}

}  // namespace ssnmf
