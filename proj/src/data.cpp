#include "ssnmf/data.hpp"

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "ssnmf/error.hpp"
#include "ssnmf/spectral.hpp"

namespace ssnmf {

static_assert(std::endian::native == std::endian::little, "rawbin I/O assumes a little-endian host");

TimeSeriesMatrix from_matrix(Matrix values) {
  TimeSeriesMatrix m;
  m.n_original = static_cast<std::size_t>(values.cols());
  m.channel_ids.resize(static_cast<std::size_t>(values.rows()));
  for (std::size_t j = 0; j < m.channel_ids.size(); ++j) m.channel_ids[j] = j;
  m.values = std::move(values);
  return m;
}

MatrixFormat format_from_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".csv" ? MatrixFormat::Csv : MatrixFormat::RawBin;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

// Parses a full cell as a double. Accepts "nan"/"inf" spellings so they can be
// reported as data errors rather than parse errors.
bool parse_double(const std::string& cell, double& out) {
  if (cell.empty()) return false;
  const char* begin = cell.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end == begin + cell.size();
}

TimeSeriesMatrix load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    std::vector<double> row;
    row.reserve(cells.size());
    bool numeric = true;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      if (!parse_double(cells[c], v)) {
        numeric = false;
        break;
      }
      if (!std::isfinite(v)) {
        throw DataError(path.string() + ": non-finite value '" + cells[c] + "' at line " +
                        std::to_string(line_no) + ", column " + std::to_string(c + 1));
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (rows.empty() && line_no == 1) continue;  // header
      throw ParseError(path.string() + ": malformed number at line " + std::to_string(line_no));
    }
    if (width == 0) width = row.size();
    if (row.size() != width) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + " has " + std::to_string(row.size()) +
                       " values, expected " + std::to_string(width));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path.string() + ": no data rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (std::size_t t = 0; t < width; ++t) m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(t)) = rows[j][t];
  }
  return from_matrix(std::move(m));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path, std::size_t& offset) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError(path.string() + ": truncated header at byte offset " + std::to_string(offset));
  offset += sizeof(T);
  return v;
}

TimeSeriesMatrix load_rawbin(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::size_t offset = 0;
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SSNM", 4) != 0) throw ParseError(path.string() + ": bad magic at byte offset 0");
  offset = 4;
  const auto version = read_pod<std::uint32_t>(in, path, offset);
  if (version != kRawBinVersion) {
    throw ParseError(path.string() + ": unsupported version " + std::to_string(version) + " at byte offset 4");
  }
  const auto p = read_pod<std::uint64_t>(in, path, offset);
  const auto n = read_pod<std::uint64_t>(in, path, offset);
  if (p == 0 || n == 0 || p > (1ULL << 32) || n > (1ULL << 32)) {
    throw ParseError(path.string() + ": implausible dimensions " + std::to_string(p) + " x " + std::to_string(n));
  }
  Matrix m(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n));
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(p * n * sizeof(double)));
  if (static_cast<std::uint64_t>(in.gcount()) != p * n * sizeof(double)) {
    throw ParseError(path.string() + ": truncated payload at byte offset " +
                     std::to_string(offset + static_cast<std::size_t>(in.gcount())));
  }
  in.peek();
  if (!in.eof()) throw ParseError(path.string() + ": trailing bytes after payload");
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i])) {
      throw DataError(path.string() + ": non-finite value at row " + std::to_string(i / m.cols()) + ", column " +
                      std::to_string(i % m.cols()));
    }
  }
  return from_matrix(std::move(m));
}

}  // namespace

TimeSeriesMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  return format == MatrixFormat::Csv ? load_csv(path) : load_rawbin(path);
}

TimeSeriesMatrix load_matrix(const std::filesystem::path& path) { return load_matrix(path, format_from_path(path)); }

void save_rawbin(const std::filesystem::path& path, const Matrix& values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const std::uint32_t version = kRawBinVersion;
  const std::uint64_t p = static_cast<std::uint64_t>(values.rows());
  const std::uint64_t n = static_cast<std::uint64_t>(values.cols());
  out.write("SSNM", 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&p), sizeof p);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(p * n * sizeof(double)));
  if (!out) throw IoError("failed writing " + path.string());
}

void save_csv(const std::filesystem::path& path, const Matrix& values) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[32];
  for (Eigen::Index j = 0; j < values.rows(); ++j) {
    for (Eigen::Index t = 0; t < values.cols(); ++t) {
      std::snprintf(buf, sizeof buf, "%.17g", values(j, t));
      if (t > 0) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<bool> load_mask(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mask " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream tokens(text);
  std::vector<bool> mask;
  std::string tok;
  while (tokens >> tok) {
    if (tok == "1") {
      mask.push_back(true);
    } else if (tok == "0") {
      mask.push_back(false);
    } else {
      throw ParseError(path.string() + ": mask entry " + std::to_string(mask.size() + 1) + " is '" + tok +
                       "', expected 0 or 1");
    }
  }
  return mask;
}

std::size_t padding_length(std::size_t n, double pad_fraction) {
  return static_cast<std::size_t>(std::llround(pad_fraction * static_cast<double>(n)));
}

TimeSeriesMatrix preprocess(const TimeSeriesMatrix& raw, const PreprocessOptions& options) {
  if (options.pad_fraction < 0.0) throw ConfigError("pad fraction must be nonnegative");
  const std::size_t p = raw.channels();
  const std::size_t n = raw.n_original == 0 ? raw.n_pad() : raw.n_original;
  if (options.mask && options.mask->size() != p) {
    throw ConfigError("mask has " + std::to_string(options.mask->size()) + " entries for " + std::to_string(p) +
                      " channels");
  }
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < p; ++j) {
    if (options.mask && !(*options.mask)[j]) continue;
    const double total = raw.values.row(static_cast<Eigen::Index>(j)).head(static_cast<Eigen::Index>(n)).sum();
    if (!(total > options.threshold)) continue;
    kept.push_back(j);
  }
  if (kept.empty()) throw EmptyData("no channel survives thresholding and masking");

  const std::size_t pad = padding_length(n, options.pad_fraction);
  TimeSeriesMatrix out;
  out.n_original = n;
  out.pad_fraction = options.pad_fraction;
  out.unit_normalized = options.unit_norm;
  out.values = Matrix::Zero(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(n + pad));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const std::size_t j = kept[i];
    auto src = raw.values.row(static_cast<Eigen::Index>(j)).head(static_cast<Eigen::Index>(n));
    auto dst = out.values.row(static_cast<Eigen::Index>(i)).head(static_cast<Eigen::Index>(n));
    if (options.unit_norm) {
      const double norm = src.norm();
      if (!(norm > 0.0)) throw DataError("channel " + std::to_string(j) + " has zero norm");
      dst = src / norm;
    } else {
      dst = src;
    }
    out.channel_ids.push_back(raw.channel_ids.empty() ? j : raw.channel_ids[j]);
  }
  return out;
}

// ---------------------------------------------------------------------------

SyntheticConfig benchmark_preset() {
  SyntheticConfig c;
  c.n = 128;
  c.n_total = 256;
  c.channels_per_component = 100;
  c.shift_range = {-32, 32};
  c.stretch_range = {-32, 32};
  return c;
}

namespace {

std::size_t support_length(const SyntheticConfig& c) { return c.n / 4; }

// Time scaling actually realized by stretch index b on a series of length n.
double effective_scale(int b, std::size_t n) {
  return static_cast<double>(static_cast<long>(n) + 2L * b) / static_cast<double>(n);
}

void validate(const SyntheticConfig& c) {
  if (c.channels_per_component == 0) throw ConfigError("channels per component must be positive");
  if (c.n < 8) throw ConfigError("synthetic base length n must be at least 8");
  if (c.n_total < c.n) throw ConfigError("n_total must be at least n");
  if (c.shift_range.lo > c.shift_range.hi || c.stretch_range.lo > c.stretch_range.hi) {
    throw ConfigError("shift/stretch ranges must satisfy lo <= hi");
  }
  if (c.noise_sd < 0.0) throw ConfigError("noise_sd must be nonnegative");
  const int bound = max_stretch_index(bin_count(c.n_total));
  if (c.stretch_range.lo < -bound || c.stretch_range.hi > bound) {
    throw ConfigError("stretch range exceeds |b| < n_fft/2 for n_total=" + std::to_string(c.n_total));
  }
}

}  // namespace

Matrix synthetic_base_profiles(const SyntheticConfig& c, std::size_t* offset_out) {
  validate(c);
  const std::size_t len = support_length(c);
  const double r_min = effective_scale(c.stretch_range.lo, c.n_total);
  const double r_max = effective_scale(c.stretch_range.hi, c.n_total);
  // Leading margin so that the most compressed, most negatively shifted copy
  // still starts inside the series; one guard sample on each side.
  const double lead = std::max(0.0, -static_cast<double>(c.shift_range.lo)) / r_min;
  const std::size_t offset = static_cast<std::size_t>(std::ceil(lead)) + 1;
  const double tail = r_max * static_cast<double>(offset + len) + std::max(0, c.shift_range.hi) + 1.0;
  if (tail > static_cast<double>(c.n_total)) {
    throw ConfigError("shift/stretch ranges exceed the zero margins: need n_total >= " +
                      std::to_string(static_cast<long>(std::ceil(tail))) + ", have " + std::to_string(c.n_total));
  }

  Matrix s = Matrix::Zero(2, static_cast<Eigen::Index>(c.n_total));
  const double l = static_cast<double>(len);
  const double beta = static_cast<double>(c.n) / 40.0;
  for (std::size_t t = 0; t <= len; ++t) {
    const auto col = static_cast<Eigen::Index>(offset + t);
    s(0, col) = std::sin(std::numbers::pi * static_cast<double>(t) / l);
    if (t < len) s(1, col) = std::exp(-std::abs(static_cast<double>(t) - l / 2.0) / beta);
  }
  if (offset_out != nullptr) *offset_out = offset;
  return s;
}

namespace {

std::vector<double> render_spectral(std::span<const double> profile, int b, int tau) {
  Spectrum spec = stretch_profile(profile, b);
  apply_phase_shift(spec.bins, spec.origin_length, static_cast<double>(tau));
  std::vector<double> out(profile.size());
  inverse_rdft(spec.bins, out);
  return out;
}

std::vector<double> render_spline(std::span<const double> profile, int b, int tau) {
  const std::size_t n = profile.size();
  const double r = b_to_r(b, bin_count(n));
  boost::math::interpolators::cardinal_cubic_b_spline<double> spline(profile.begin(), profile.end(), 0.0, 1.0);
  std::vector<double> stretched(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const double u = static_cast<double>(t) / r;
    if (u <= static_cast<double>(n - 1)) stretched[t] = spline(u);
  }
  return circular_shift(stretched, tau);
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
  std::size_t offset = 0;
  const Matrix base = synthetic_base_profiles(config, &offset);
  const std::size_t k_count = 2;
  const std::size_t p = k_count * config.channels_per_component;
  const std::size_t n = config.n_total;

  SyntheticDataset ds;
  auto& truth = ds.truth;
  truth.config = config;
  truth.s_true = base;
  truth.profile_offset = offset;
  truth.a_true = Matrix::Zero(static_cast<Eigen::Index>(p), 2);
  truth.tau = IntMatrix::Zero(static_cast<Eigen::Index>(p), 2);
  truth.b = IntMatrix::Zero(static_cast<Eigen::Index>(p), 2);
  truth.assignment.resize(p);

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> shift_dist(config.shift_range.lo, config.shift_range.hi);
  std::uniform_int_distribution<int> stretch_dist(config.stretch_range.lo, config.stretch_range.hi);
  for (std::size_t j = 0; j < p; ++j) {
    const std::size_t k = j / config.channels_per_component;
    const auto row = static_cast<Eigen::Index>(j);
    truth.assignment[j] = k;
    truth.a_true(row, static_cast<Eigen::Index>(k)) = 1.0;
    truth.tau(row, static_cast<Eigen::Index>(k)) = shift_dist(rng);
    truth.b(row, static_cast<Eigen::Index>(k)) = stretch_dist(rng);
  }

  Matrix x(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < p; ++j) {
    const auto row = static_cast<Eigen::Index>(j);
    const auto k = static_cast<Eigen::Index>(truth.assignment[j]);
    const std::span<const double> profile(base.row(k).data(), n);
    const int b = truth.b(row, k);
    const int tau = truth.tau(row, k);
    const auto curve = config.renderer == Renderer::Spectral ? render_spectral(profile, b, tau)
                                                             : render_spline(profile, b, tau);
    for (std::size_t t = 0; t < n; ++t) x(row, static_cast<Eigen::Index>(t)) = curve[t];
  }
  if (config.noise_sd > 0.0) {
    std::normal_distribution<double> noise(0.0, config.noise_sd);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = std::max(0.0, x.data()[i] + noise(rng));
  }
  ds.data = from_matrix(std::move(x));
  return ds;
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index j = 0; j < m.rows(); ++j) {
    std::vector<double> r(m.row(j).begin(), m.row(j).end());
    rows.push_back(r);
  }
  return rows;
}

nlohmann::json int_matrix_json(const IntMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index j = 0; j < m.rows(); ++j) {
    std::vector<int> r(m.row(j).begin(), m.row(j).end());
    rows.push_back(r);
  }
  return rows;
}

template <typename M>
M matrix_from_json(const nlohmann::json& j) {
  using Scalar = typename M::Scalar;
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j.at(0).size());
  M m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ParseError("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<Scalar>();
  }
  return m;
}

}  // namespace

nlohmann::json to_json(const SyntheticGroundTruth& truth) {
  const auto& c = truth.config;
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "ssnmf.synthetic_ground_truth";
  j["seed"] = c.seed;
  j["config"] = {{"n", c.n},
                 {"n_total", c.n_total},
                 {"channels_per_component", c.channels_per_component},
                 {"shift_range", {c.shift_range.lo, c.shift_range.hi}},
                 {"stretch_range", {c.stretch_range.lo, c.stretch_range.hi}},
                 {"noise_sd", c.noise_sd},
                 {"renderer", c.renderer == Renderer::Spectral ? "spectral" : "spline"}};
  j["profile_offset"] = truth.profile_offset;
  j["assignment"] = truth.assignment;
  j["a_true"] = matrix_json(truth.a_true);
  j["tau"] = int_matrix_json(truth.tau);
  j["b"] = int_matrix_json(truth.b);
  j["s_true"] = matrix_json(truth.s_true);
  return j;
}

SyntheticGroundTruth truth_from_json(const nlohmann::json& j) {
  try {
    SyntheticGroundTruth t;
    const auto& c = j.at("config");
    t.config.n = c.at("n").get<std::size_t>();
    t.config.n_total = c.at("n_total").get<std::size_t>();
    t.config.channels_per_component = c.at("channels_per_component").get<std::size_t>();
    t.config.shift_range = {c.at("shift_range").at(0).get<int>(), c.at("shift_range").at(1).get<int>()};
    t.config.stretch_range = {c.at("stretch_range").at(0).get<int>(), c.at("stretch_range").at(1).get<int>()};
    t.config.noise_sd = c.at("noise_sd").get<double>();
    t.config.renderer = c.at("renderer").get<std::string>() == "spline" ? Renderer::Spline : Renderer::Spectral;
    t.config.seed = j.at("seed").get<std::uint64_t>();
    t.profile_offset = j.at("profile_offset").get<std::size_t>();
    t.assignment = j.at("assignment").get<std::vector<std::size_t>>();
    t.a_true = matrix_from_json<Matrix>(j.at("a_true"));
    t.tau = matrix_from_json<IntMatrix>(j.at("tau"));
    t.b = matrix_from_json<IntMatrix>(j.at("b"));
    t.s_true = matrix_from_json<Matrix>(j.at("s_true"));
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("ground truth JSON: ") + e.what());
  }
}

}  // namespace ssnmf
