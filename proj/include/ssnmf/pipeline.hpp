#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssnmf/data.hpp"
#include "ssnmf/factor_model.hpp"
#include "ssnmf/fit.hpp"

namespace ssnmf {

/// K-shape profiles and least-squares channel map shared by every variant.
struct InitialState {
  Matrix profiles;  // K x N_pad
  Matrix a;         // P x K
  std::uint64_t seed = 0;
};

InitialState initialize(const TimeSeriesMatrix& data, std::size_t components, std::uint64_t seed);

FactorModel initial_model(const InitialState& init, Variant variant);

/// Fits config.variant from `init`. NonIntegerShift and ShiftStretch start
/// from an IntegerShift fit, taken from `int_shift_prefit` when given and
/// computed otherwise.
FitResult run_variant(const TimeSeriesMatrix& data, const FitConfig& config, const InitialState& init,
                      const FitResult* int_shift_prefit = nullptr);

struct SweepConfig {
  std::vector<std::size_t> components{1, 2, 3, 4, 5};
  std::vector<Variant> variants{Variant::PlainNMF, Variant::IntegerShift, Variant::NonIntegerShift,
                                Variant::ShiftStretch};
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
  FitConfig fit;  // components, variant, seed and threads are overridden per cell
  std::size_t threads = 0;
  /// JSONL file of completed cells; existing rows are reused and new rows
  /// appended as cells finish.
  std::optional<std::filesystem::path> ledger;
};

struct SweepRow {
  Variant variant = Variant::PlainNMF;
  std::size_t components = 0;
  std::size_t repeat = 0;
  double variance_explained = 0.0;
  double loss = 0.0;
  double seconds = 0.0;
  std::uint64_t seed = 0;
  std::string status = "ok";
  std::string stop_reason;
  std::size_t iterations = 0;
};

/// Seed of the (K, repeat) cell; all variants of a cell share it.
std::uint64_t cell_seed(std::uint64_t seed, std::size_t components, std::size_t repeat);

/// Fits every (variant, K, repeat) cell. Variants of one (K, repeat) share
/// the initialization and the IntegerShift prefit. Failed fits become rows
/// with an error status. Rows are ordered by variant (as listed), K, repeat.
std::vector<SweepRow> model_order_sweep(const TimeSeriesMatrix& data, const SweepConfig& config);

nlohmann::json to_json(const SweepRow& row);
SweepRow sweep_row_from_json(const nlohmann::json& j);
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);
void write_sweep_json(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

}  // namespace ssnmf
