#include "ssnmf/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "ssnmf/error.hpp"
#include "ssnmf/stretch.hpp"

namespace ssnmf {

namespace {

template <typename M>
nlohmann::json rows_of(const M& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

template <typename M>
M matrix_of(const nlohmann::json& j, const char* name) {
  if (!j.is_array()) throw ParseError(std::string("model: '") + name + "' is not an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(j[0].size());
  M m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParseError(std::string("model: '") + name + "' has ragged rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<typename M::Scalar>();
  }
  return m;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (f == nullptr) throw IoError("cannot write " + path.string());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) std::fprintf(f, c == 0 ? "%.17g" : ",%.17g", m(r, c));
    std::fputc('\n', f);
  }
  if (std::fclose(f) != 0) throw IoError("cannot write " + path.string());
}

}  // namespace

nlohmann::json to_json(const FactorModel& model) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "ssnmf.model";
  j["variant"] = std::string(to_string(model.variant));
  j["channels"] = model.channels();
  j["components"] = model.components();
  j["length"] = model.length();
  j["s_raw"] = rows_of(model.s_raw);
  j["a"] = rows_of(model.a);
  if (optimizes_a_by_gradient(model.variant)) j["a_raw"] = rows_of(model.a_raw);
  j["tau"] = rows_of(model.tau);
  j["b"] = rows_of(model.b);
  return j;
}

FactorModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind").get<std::string>() != "ssnmf.model") throw ParseError("not a model file");
    if (j.at("schema_version").get<int>() != kSchemaVersion) throw ParseError("unsupported model schema_version");
    FactorModel m;
    m.variant = parse_variant(j.at("variant").get<std::string>());
    m.s_raw = matrix_of<Matrix>(j.at("s_raw"), "s_raw");
    m.a = matrix_of<Matrix>(j.at("a"), "a");
    if (optimizes_a_by_gradient(m.variant)) m.a_raw = matrix_of<Matrix>(j.at("a_raw"), "a_raw");
    m.tau = matrix_of<Matrix>(j.at("tau"), "tau");
    m.b = matrix_of<IntMatrix>(j.at("b"), "b");
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
}

nlohmann::json to_json(const FitReport& report, Variant variant) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "ssnmf.fit_report";
  j["seed"] = report.seed;
  j["variant"] = std::string(to_string(variant));
  j["stop_reason"] = std::string(to_string(report.stop_reason));
  j["final_loss"] = std::isfinite(report.final_loss) ? nlohmann::json(report.final_loss) : nlohmann::json(nullptr);
  j["variance_explained"] = report.variance_explained;
  j["best_iteration"] = report.best_iteration;
  j["iterations"] = report.loss_trace.size();
  j["elapsed_seconds"] = report.elapsed_seconds;
  return j;
}

nlohmann::json to_json(const PreprocessOptions& options) {
  nlohmann::json j;
  j["threshold"] = options.threshold;
  j["pad_fraction"] = options.pad_fraction;
  j["unit_norm"] = options.unit_norm;
  if (options.mask) {
    std::vector<int> mask(options.mask->size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (*options.mask)[i] ? 1 : 0;
    j["mask"] = mask;
  }
  return j;
}

PreprocessOptions preprocess_from_json(const nlohmann::json& j) {
  PreprocessOptions o;
  o.threshold = j.at("threshold").get<double>();
  o.pad_fraction = j.at("pad_fraction").get<double>();
  o.unit_norm = j.at("unit_norm").get<bool>();
  if (j.contains("mask")) {
    std::vector<bool> mask;
    for (const auto& v : j.at("mask")) mask.push_back(v.get<int>() != 0);
    o.mask = std::move(mask);
  }
  return o;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + path.string());
}

void write_model_csvs(const std::filesystem::path& dir, const FactorModel& model) {
  write_matrix_csv(dir / "A.csv", model.a);
  write_matrix_csv(dir / "S.csv", model.profiles());
  write_matrix_csv(dir / "tau.csv", model.tau);
  Matrix r(model.b.rows(), model.b.cols());
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    for (Eigen::Index k = 0; k < r.cols(); ++k) r(i, k) = b_to_r(model.b(i, k), model.n_fft());
  }
  write_matrix_csv(dir / "r.csv", r);
}

void write_loss_trace_csv(const std::filesystem::path& path, std::span<const double> trace) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (f == nullptr) throw IoError("cannot write " + path.string());
  std::fprintf(f, "iteration,loss\n");
  for (std::size_t i = 0; i < trace.size(); ++i) std::fprintf(f, "%zu,%.17g\n", i, trace[i]);
  if (std::fclose(f) != 0) throw IoError("cannot write " + path.string());
}

void write_svg_plot(const std::filesystem::path& path, const std::string& title, std::span<const SvgSeries> series,
                    bool log_y) {
  constexpr double width = 640, height = 400, margin = 50;
  static constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  auto tr = [log_y](double v) { return log_y ? std::log10(std::max(v, 1e-300)) : v; };

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  std::size_t n_max = 1;
  for (const auto& s : series) {
    n_max = std::max(n_max, s.y.size());
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, tr(v));
      hi = std::max(hi, tr(v));
    }
  }
  if (!(hi > lo)) {
    lo = std::isfinite(lo) ? lo - 1.0 : 0.0;
    hi = lo + 2.0;
  }
  const double xs = (width - 2 * margin) / static_cast<double>(std::max<std::size_t>(n_max - 1, 1));
  const double ys = (height - 2 * margin) / (hi - lo);

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\">" << title
      << "</text>\n";
  svg << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << width - 2 * margin << "\" height=\""
      << height - 2 * margin << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = colors[i % std::size(colors)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (std::size_t t = 0; t < series[i].y.size(); ++t) {
      if (!std::isfinite(series[i].y[t])) continue;
      svg << margin + static_cast<double>(t) * xs << ',' << height - margin - (tr(series[i].y[t]) - lo) * ys << ' ';
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << width - margin + 5 << "\" y=\"" << margin + 15 * static_cast<double>(i + 1)
        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << color << "\">" << series[i].label << "</text>\n";
  }
  svg << "</svg>\n";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << svg.str();
}

}  // namespace ssnmf
