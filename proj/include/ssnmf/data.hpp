#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssnmf/stretch.hpp"
#include "ssnmf/types.hpp"

namespace ssnmf {

/// Channels x time data. `values` holds the padded series (P x N_pad); the
/// first n_original samples of each row are data, the rest zero padding.
struct TimeSeriesMatrix {
  Matrix values;
  std::size_t n_original = 0;
  double pad_fraction = 0.0;
  std::vector<std::size_t> channel_ids;
  bool unit_normalized = false;

  std::size_t channels() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t n_pad() const { return static_cast<std::size_t>(values.cols()); }
};

/// Wraps an unpadded matrix with identity channel ids.
TimeSeriesMatrix from_matrix(Matrix values);

enum class MatrixFormat { Csv, RawBin };

/// `.csv` selects Csv, anything else RawBin.
MatrixFormat format_from_path(const std::filesystem::path& path);

// rawbin layout, little-endian: "SSNM", u32 version (1), u64 P, u64 N, then
// P*N float64 row-major.
inline constexpr std::uint32_t kRawBinVersion = 1;

/// Throws IoError if the file cannot be read, ParseError (with line or byte
/// offset) on malformed content and DataError on non-finite entries.
TimeSeriesMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format);
TimeSeriesMatrix load_matrix(const std::filesystem::path& path);

void save_rawbin(const std::filesystem::path& path, const Matrix& values);
void save_csv(const std::filesystem::path& path, const Matrix& values);

/// Reads a channel mask: whitespace/comma separated 0/1 values, one per
/// channel; 1 keeps the channel.
std::vector<bool> load_mask(const std::filesystem::path& path);

struct PreprocessOptions {
  double threshold = 0.0;       // channels with summed counts <= threshold are dropped
  double pad_fraction = 0.2;    // zero padding appended, as a fraction of N
  bool unit_norm = true;
  std::optional<std::vector<bool>> mask;  // false excludes the channel
};

/// Drops sub-threshold and masked channels, unit-normalizes and zero-pads.
/// Throws EmptyData when no channel survives.
TimeSeriesMatrix preprocess(const TimeSeriesMatrix& raw, const PreprocessOptions& options);

/// Number of padding samples for a series of length n.
std::size_t padding_length(std::size_t n, double pad_fraction);

// ---------------------------------------------------------------------------
// Synthetic benchmark
// ---------------------------------------------------------------------------

enum class Renderer {
  Spectral,  // stretch_profile + phase shift, the model's own operators
  Spline,    // time-domain cubic B-spline resampling at t / r, then integer shift
};

struct SyntheticConfig {
  std::size_t n = 128;          // base profile domain; sets support n/4 and Laplace scale n/40
  std::size_t n_total = 256;    // rendered series length (zero margins included)
  std::size_t channels_per_component = 100;
  StretchRange shift_range{-32, 32};
  StretchRange stretch_range{-32, 32};
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
  Renderer renderer = Renderer::Spectral;
};

/// Two components (half cosine, Laplace hump), 100 channels each, shifts and
/// stretches drawn from [-n/4, n/4] with n = 128.
SyntheticConfig benchmark_preset();

struct SyntheticGroundTruth {
  Matrix a_true;      // P x 2, binary membership
  Matrix s_true;      // 2 x n_total base profiles in the margin layout
  IntMatrix tau;      // P x 2 (zero for the non-owning component)
  IntMatrix b;        // P x 2
  std::vector<std::size_t> assignment;
  std::size_t profile_offset = 0;
  SyntheticConfig config;
};

struct SyntheticDataset {
  TimeSeriesMatrix data;
  SyntheticGroundTruth truth;
};

/// Throws ConfigError when the configuration is empty or the ranges push a
/// rendered profile outside the series.
SyntheticDataset generate_synthetic(const SyntheticConfig& config);

/// Base profiles (half cosine, Laplace) of the given config in the margin
/// layout, plus the offset at which their support starts.
Matrix synthetic_base_profiles(const SyntheticConfig& config, std::size_t* offset = nullptr);

nlohmann::json to_json(const SyntheticGroundTruth& truth);
SyntheticGroundTruth truth_from_json(const nlohmann::json& j);

}  // namespace ssnmf
