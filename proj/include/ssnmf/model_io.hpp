#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssnmf/data.hpp"
#include "ssnmf/factor_model.hpp"
#include "ssnmf/fit.hpp"

namespace ssnmf {

inline constexpr int kSchemaVersion = 1;

/// Model parameters at full double precision (raw parameters included so a
/// reloaded model continues a fit exactly).
nlohmann::json to_json(const FactorModel& model);
FactorModel model_from_json(const nlohmann::json& j);

/// FitReport schema (kind "ssnmf.fit_report"):
///   schema_version, seed, variant, stop_reason, final_loss,
///   variance_explained, best_iteration, iterations, elapsed_seconds.
/// The loss trace is written separately as CSV.
nlohmann::json to_json(const FitReport& report, Variant variant);

nlohmann::json to_json(const PreprocessOptions& options);
PreprocessOptions preprocess_from_json(const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// A.csv, S.csv (softplus profiles), tau.csv and r.csv (r = 1 + b/N_FFT) in `dir`.
void write_model_csvs(const std::filesystem::path& dir, const FactorModel& model);

void write_loss_trace_csv(const std::filesystem::path& path, std::span<const double> trace);

struct SvgSeries {
  std::string label;
  std::vector<double> y;
};

/// Static line plot of one or more series against their index.
void write_svg_plot(const std::filesystem::path& path, const std::string& title, std::span<const SvgSeries> series,
                    bool log_y = false);

}  // namespace ssnmf
