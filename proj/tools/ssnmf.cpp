// ssnmf: generate synthetic data, fit shift/stretch-invariant NMF models,
// evaluate them and sweep model orders.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ssnmf/data.hpp"
#include "ssnmf/error.hpp"
#include "ssnmf/evaluation.hpp"
#include "ssnmf/fit.hpp"
#include "ssnmf/model_io.hpp"
#include "ssnmf/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ssnmf;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  fs::path output = "ssnmf_out";
};

struct DataOptions {
  fs::path data;
  bool raw = false;
  double threshold = 0.0;
  double pad_fraction = 0.2;
  bool no_unit_norm = false;
  std::optional<fs::path> mask;
};

struct FitOptions {
  std::string variant = "shift-stretch";
  int components = 1;
  double learning_rate = 0.1;
  std::size_t max_iterations = 10000;
  std::size_t stop_window = 50;
  double stop_tol = 1e-10;
  int stretch_max = -1;
  int stretch_window = -1;
  bool full_stretch_search = false;
};

void add_data_options(CLI::App* cmd, DataOptions& d) {
  cmd->add_option("data", d.data, "Data matrix (.csv or rawbin)")->required();
  cmd->add_flag("--raw", d.raw, "Use the data as-is (no threshold, normalization or padding)");
  cmd->add_option("--threshold", d.threshold, "Drop channels whose summed values are <= threshold");
  cmd->add_option("--pad-fraction", d.pad_fraction, "Zero padding as a fraction of the series length");
  cmd->add_flag("--no-unit-norm", d.no_unit_norm, "Skip per-channel unit normalization");
  cmd->add_option("--mask", d.mask, "Channel mask file (0/1 per channel)");
}

void add_fit_options(CLI::App* cmd, FitOptions& f, bool with_variant) {
  if (with_variant) {
    cmd->add_option("--variant", f.variant, "plain | int-shift | nonint-shift | shift-stretch");
    cmd->add_option("-K,--components", f.components, "Number of components");
  }
  cmd->add_option("--lr", f.learning_rate, "Adam learning rate");
  cmd->add_option("--max-iter", f.max_iterations, "Iteration cap");
  cmd->add_option("--stop-window", f.stop_window, "Window of the stopping rule");
  cmd->add_option("--stop-tol", f.stop_tol, "Relative tolerance of the stopping rule");
  cmd->add_option("--stretch-max", f.stretch_max, "Largest |b| searched (default: full range)");
  cmd->add_option("--stretch-window", f.stretch_window, "Local stretch window after the first sweep (default N_FFT/16)");
  cmd->add_flag("--full-stretch-search", f.full_stretch_search, "Search the full stretch range every iteration");
}

PreprocessOptions preprocess_options(const DataOptions& d) {
  PreprocessOptions o;
  o.threshold = d.threshold;
  o.pad_fraction = d.pad_fraction;
  o.unit_norm = !d.no_unit_norm;
  if (d.mask) o.mask = load_mask(*d.mask);
  return o;
}

TimeSeriesMatrix load_data(const DataOptions& d, nlohmann::json& run_info) {
  TimeSeriesMatrix raw = load_matrix(d.data);
  run_info["data"] = d.data.string();
  run_info["raw_shape"] = {raw.channels(), raw.n_pad()};
  if (d.raw) {
    run_info["preprocess"] = nullptr;
    return raw;
  }
  const PreprocessOptions o = preprocess_options(d);
  run_info["preprocess"] = to_json(o);
  return preprocess(raw, o);
}

FitConfig fit_config(const FitOptions& f, const GlobalOptions& g) {
  FitConfig c;
  if (f.components < 1) throw ConfigError("number of components K must be at least 1");
  c.components = static_cast<std::size_t>(f.components);
  c.variant = parse_variant(f.variant);
  c.learning_rate = f.learning_rate;
  c.max_iterations = f.max_iterations;
  c.stop_window = f.stop_window;
  c.stop_rel_tol = f.stop_tol;
  c.seed = g.seed;
  c.stretch_max = f.stretch_max;
  c.stretch_window = f.stretch_window;
  c.local_stretch_search = !f.full_stretch_search;
  c.threads = g.threads;
  c.validate();
  return c;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

std::vector<std::size_t> parse_index_list(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto dots = item.find("..");
    try {
      if (dots == std::string::npos) {
        out.push_back(std::stoul(item));
      } else {
        const std::size_t lo = std::stoul(item.substr(0, dots));
        const std::size_t hi = std::stoul(item.substr(dots + 2));
        if (hi < lo) throw ConfigError(std::string("empty range in ") + what + ": " + item);
        for (std::size_t v = lo; v <= hi; ++v) out.push_back(v);
      }
    } catch (const std::logic_error&) {
      throw ConfigError(std::string("cannot parse ") + what + ": '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError(std::string("empty ") + what);
  return out;
}

std::vector<Variant> parse_variant_list(const std::string& text) {
  std::vector<Variant> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_variant(item));
  }
  if (out.empty()) throw ConfigError("empty variant list");
  return out;
}

// ---------------------------------------------------------------------------

struct GenerateOptions {
  std::string preset = "paper-synthetic";
  int channels = 100;
  double noise_sd = 0.0;
  std::string renderer = "spectral";
  std::string format = "rawbin";
};

int cmd_generate(const GenerateOptions& o, const GlobalOptions& g) {
  if (o.preset != "paper-synthetic") throw ConfigError("unknown preset '" + o.preset + "'");
  if (o.channels < 1) throw ConfigError("--channels must be at least 1");
  SyntheticConfig cfg = benchmark_preset();
  cfg.channels_per_component = static_cast<std::size_t>(o.channels);
  cfg.noise_sd = o.noise_sd;
  cfg.seed = g.seed;
  if (o.renderer == "spectral") {
    cfg.renderer = Renderer::Spectral;
  } else if (o.renderer == "spline") {
    cfg.renderer = Renderer::Spline;
  } else {
    throw ConfigError("unknown renderer '" + o.renderer + "'");
  }
  const SyntheticDataset ds = generate_synthetic(cfg);
  ensure_dir(g.output);
  if (o.format == "rawbin") {
    save_rawbin(g.output / "data.bin", ds.data.values);
  } else if (o.format == "csv") {
    save_csv(g.output / "data.csv", ds.data.values);
  } else {
    throw ConfigError("unknown format '" + o.format + "'");
  }
  write_json(g.output / "truth.json", to_json(ds.truth));
  std::printf("generated P=%zu N=%zu seed=%llu -> %s\n", ds.data.channels(), ds.data.n_pad(),
              static_cast<unsigned long long>(cfg.seed), g.output.string().c_str());
  return 0;
}

// ---------------------------------------------------------------------------

void write_fit_outputs(const fs::path& dir, const FitResult& r, Variant variant, const nlohmann::json& run_info,
                       bool svg) {
  write_json(dir / "model.json", to_json(r.model));
  write_model_csvs(dir, r.model);
  write_json(dir / "report.json", to_json(r.report, variant));
  write_loss_trace_csv(dir / "loss_trace.csv", r.report.loss_trace);
  write_json(dir / "run.json", run_info);
  if (svg) {
    const SvgSeries trace{"loss", r.report.loss_trace};
    write_svg_plot(dir / "loss_trace.svg", "loss", std::span(&trace, 1), true);
    const Matrix s = r.model.profiles();
    std::vector<SvgSeries> profiles;
    for (Eigen::Index k = 0; k < s.rows(); ++k) {
      profiles.push_back({"S" + std::to_string(k), std::vector<double>(s.row(k).begin(), s.row(k).end())});
    }
    write_svg_plot(dir / "profiles.svg", "profiles", profiles);
  }
}

int cmd_fit(const DataOptions& d, const FitOptions& f, const std::optional<fs::path>& init_from, bool svg,
            const GlobalOptions& g) {
  const FitConfig cfg = fit_config(f, g);
  nlohmann::json run_info;
  run_info["schema_version"] = kSchemaVersion;
  run_info["kind"] = "ssnmf.run";
  const TimeSeriesMatrix data = load_data(d, run_info);
  run_info["channel_ids"] = data.channel_ids;
  run_info["n_original"] = data.n_original;
  run_info["fit_config"] = {
      {"variant", std::string(to_string(cfg.variant))},
      {"components", cfg.components},
      {"learning_rate", cfg.learning_rate},
      {"max_iterations", cfg.max_iterations},
      {"stop_window", cfg.stop_window},
      {"stop_rel_tol", cfg.stop_rel_tol},
      {"seed", cfg.seed},
      {"stretch_max", cfg.stretch_max},
      {"stretch_window", cfg.stretch_window},
      {"local_stretch_search", cfg.local_stretch_search},
  };
  ensure_dir(g.output);

  FitResult result;
  try {
    if (init_from) {
      const FactorModel start = model_from_json(read_json(*init_from));
      run_info["init_from"] = init_from->string();
      result = fit(data, cfg, start);
    } else {
      const InitialState init = initialize(data, cfg.components, cfg.seed);
      result = run_variant(data, cfg, init);
    }
  } catch (const FitDivergence& e) {
    if (e.partial().model.channels() > 0) write_fit_outputs(g.output, e.partial(), cfg.variant, run_info, svg);
    throw;
  }
  write_fit_outputs(g.output, result, cfg.variant, run_info, svg);
  std::printf("fit %s K=%zu: loss=%.6g VE=%.6f stop=%s iterations=%zu\n", std::string(to_string(cfg.variant)).c_str(),
              cfg.components, result.report.final_loss, result.report.variance_explained,
              std::string(to_string(result.report.stop_reason)).c_str(), result.report.loss_trace.size());
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateOptions {
  fs::path model;
  std::optional<fs::path> data;
  std::optional<fs::path> truth;
  bool matched = false;
  std::string channels;
  std::optional<fs::path> sweep;
  bool svg = false;
};

void write_ve_vs_k(const fs::path& path, const nlohmann::json& table) {
  struct Acc {
    double sum = 0, sum2 = 0;
    std::size_t n = 0, errors = 0;
  };
  std::map<std::pair<std::string, std::size_t>, Acc> acc;
  std::vector<std::pair<std::string, std::size_t>> order;
  for (const auto& row : table.at("rows")) {
    const SweepRow r = sweep_row_from_json(row);
    const auto key = std::make_pair(std::string(to_string(r.variant)), r.components);
    if (!acc.contains(key)) order.push_back(key);
    Acc& a = acc[key];
    if (r.status != "ok") {
      ++a.errors;
      continue;
    }
    a.sum += r.variance_explained;
    a.sum2 += r.variance_explained * r.variance_explained;
    ++a.n;
  }
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (f == nullptr) throw IoError("cannot write " + path.string());
  std::fprintf(f, "variant,K,n,mean_ve,sd_ve,errors\n");
  for (const auto& key : order) {
    const Acc& a = acc[key];
    const double mean = a.n ? a.sum / static_cast<double>(a.n) : 0.0;
    const double var = a.n > 1 ? (a.sum2 - a.sum * mean) / static_cast<double>(a.n - 1) : 0.0;
    std::fprintf(f, "%s,%zu,%zu,%.17g,%.17g,%zu\n", key.first.c_str(), key.second, a.n, mean,
                 std::sqrt(std::max(var, 0.0)), a.errors);
  }
  std::fclose(f);
}

int cmd_evaluate(const EvaluateOptions& o, const GlobalOptions& g) {
  if (o.matched && !o.truth) throw ConfigError("--matched-correlation requires --truth");
  ensure_dir(g.output);
  if (o.sweep) {
    write_ve_vs_k(g.output / "ve_vs_k.csv", read_json(*o.sweep));
    std::printf("wrote %s\n", (g.output / "ve_vs_k.csv").string().c_str());
    if (o.model.empty()) return 0;
  }
  if (o.model.empty()) throw ConfigError("--model is required");
  if (!o.data) throw ConfigError("a data file is required to evaluate a model");

  const FactorModel model = model_from_json(read_json(o.model));
  const fs::path run_path = o.model.parent_path() / "run.json";
  std::optional<PreprocessOptions> prep;
  if (fs::exists(run_path)) {
    const nlohmann::json run = read_json(run_path);
    if (!run.at("preprocess").is_null()) prep = preprocess_from_json(run.at("preprocess"));
  }
  TimeSeriesMatrix data = load_matrix(*o.data);
  if (prep) data = preprocess(data, *prep);
  if (data.channels() != model.channels() || data.n_pad() != model.length()) {
    throw DataError("data shape " + std::to_string(data.channels()) + "x" + std::to_string(data.n_pad()) +
                    " does not match the model " + std::to_string(model.channels()) + "x" +
                    std::to_string(model.length()));
  }

  const StretchRange range = model.variant == Variant::ShiftStretch
                                 ? StretchRange{model.b.minCoeff(), model.b.maxCoeff()}
                                 : StretchRange{0, 0};
  const StretchLibrary library = build_model_library(model, range, g.threads);

  EvaluationReport report;
  report.variance_explained = variance_explained(model, data, library);
  report.per_channel_ve = per_channel_variance_explained(model, data, library);
  if (o.truth) {
    const SyntheticGroundTruth truth = truth_from_json(read_json(*o.truth));
    if (truth.a_true.rows() != model.a.rows() || truth.a_true.cols() != model.a.cols()) {
      throw ConfigError("ground truth A shape does not match the model (K must equal the true component count)");
    }
    report.matched = matched_correlation(model.a, truth.a_true);
    report.has_matched_correlation = true;
  }
  write_json(g.output / "evaluation.json", to_json(report));

  {
    const Matrix s = model.profiles();
    std::FILE* f = std::fopen((g.output / "profiles.csv").string().c_str(), "w");
    if (f == nullptr) throw IoError("cannot write profiles.csv");
    std::fprintf(f, "t");
    for (Eigen::Index k = 0; k < s.rows(); ++k) std::fprintf(f, ",S%ld", static_cast<long>(k));
    std::fputc('\n', f);
    for (Eigen::Index t = 0; t < s.cols(); ++t) {
      std::fprintf(f, "%ld", static_cast<long>(t));
      for (Eigen::Index k = 0; k < s.rows(); ++k) std::fprintf(f, ",%.17g", s(k, t));
      std::fputc('\n', f);
    }
    std::fclose(f);
  }

  if (!o.channels.empty()) {
    const std::vector<std::size_t> idx = parse_index_list(o.channels, "channel list");
    for (std::size_t j : idx) {
      if (j >= model.channels()) throw ConfigError("channel " + std::to_string(j) + " out of range");
    }
    const Matrix rec = reconstruct_channels(model, library, idx, data.n_original);
    std::FILE* f = std::fopen((g.output / "reconstruction.csv").string().c_str(), "w");
    if (f == nullptr) throw IoError("cannot write reconstruction.csv");
    std::fprintf(f, "t");
    for (std::size_t j : idx) std::fprintf(f, ",x%zu,xhat%zu", j, j);
    std::fputc('\n', f);
    for (Eigen::Index t = 0; t < rec.cols(); ++t) {
      std::fprintf(f, "%ld", static_cast<long>(t));
      for (std::size_t i = 0; i < idx.size(); ++i) {
        std::fprintf(f, ",%.17g,%.17g", data.values(static_cast<Eigen::Index>(idx[i]), t),
                     rec(static_cast<Eigen::Index>(i), t));
      }
      std::fputc('\n', f);
    }
    std::fclose(f);
    if (o.svg) {
      std::vector<SvgSeries> series;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto row = data.values.row(static_cast<Eigen::Index>(idx[i])).head(rec.cols());
        series.push_back({"x" + std::to_string(idx[i]), std::vector<double>(row.begin(), row.end())});
        const auto r = rec.row(static_cast<Eigen::Index>(i));
        series.push_back({"xhat" + std::to_string(idx[i]), std::vector<double>(r.begin(), r.end())});
      }
      write_svg_plot(g.output / "reconstruction.svg", "reconstruction", series);
    }
  }

  const fs::path trace = o.model.parent_path() / "loss_trace.csv";
  if (fs::exists(trace) && fs::absolute(trace.parent_path()) != fs::absolute(g.output)) {
    fs::copy_file(trace, g.output / "loss_trace.csv", fs::copy_options::overwrite_existing);
  }

  std::printf("VE=%.6f", report.variance_explained);
  if (report.has_matched_correlation) std::printf(" matched_correlation=%.6f", report.matched.mean);
  std::printf("\n");
  return 0;
}

// ---------------------------------------------------------------------------

struct SweepOptionsCli {
  std::string components = "1..5";
  int repeats = 1;
  std::string variants = "plain,int-shift,nonint-shift,shift-stretch";
  bool fresh = false;
};

int cmd_sweep(const DataOptions& d, const FitOptions& f, const SweepOptionsCli& s, const GlobalOptions& g) {
  if (s.repeats < 1) throw ConfigError("--repeats must be at least 1");
  SweepConfig cfg;
  cfg.components = parse_index_list(s.components, "K list");
  cfg.variants = parse_variant_list(s.variants);
  cfg.repeats = static_cast<std::size_t>(s.repeats);
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  FitOptions base = f;
  base.components = 1;
  cfg.fit = fit_config(base, g);

  nlohmann::json run_info;
  const TimeSeriesMatrix data = load_data(d, run_info);
  ensure_dir(g.output);
  cfg.ledger = g.output / "sweep_ledger.jsonl";
  if (s.fresh) fs::remove(*cfg.ledger);

  const std::vector<SweepRow> rows = model_order_sweep(data, cfg);
  write_sweep_csv(g.output / "sweep.csv", rows);
  write_sweep_json(g.output / "sweep.json", rows);
  std::size_t errors = 0;
  for (const SweepRow& r : rows) errors += r.status == "ok" ? 0 : 1;
  std::printf("sweep: %zu rows (%zu failed) -> %s\n", rows.size(), errors, (g.output / "sweep.csv").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shift- and stretch-invariant NMF in the frequency domain"};
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "TOML configuration file");
  app.require_subcommand(1);

  GlobalOptions global;
  app.add_option("--seed", global.seed, "Random seed")->default_val(0);
  app.add_option("--threads", global.threads, "Worker threads (0: SSNMF_THREADS or all cores)");
  app.add_option("-o,--output", global.output, "Output directory");

  GenerateOptions gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic benchmark dataset and its ground truth");
  generate->add_option("--preset", gen.preset, "Dataset preset");
  generate->add_option("--channels", gen.channels, "Channels per component");
  generate->add_option("--noise-sd", gen.noise_sd, "Std. deviation of additive noise (clipped at zero)");
  generate->add_option("--renderer", gen.renderer, "spectral | spline");
  generate->add_option("--format", gen.format, "rawbin | csv");

  DataOptions fit_data;
  FitOptions fit_opts;
  std::optional<fs::path> init_from;
  bool fit_svg = false;
  auto* fitcmd = app.add_subcommand("fit", "Fit one model variant");
  add_data_options(fitcmd, fit_data);
  add_fit_options(fitcmd, fit_opts, true);
  fitcmd->add_option("--init-from", init_from, "Start from a saved model.json instead of K-shape initialization");
  fitcmd->add_flag("--svg", fit_svg, "Also write SVG plots of the loss trace and profiles");

  EvaluateOptions eval;
  auto* evaluate = app.add_subcommand("evaluate", "Metrics, reconstructions and plot data for a fitted model");
  evaluate->add_option("data", eval.data, "Data matrix the model was fitted on");
  evaluate->add_option("--model", eval.model, "model.json written by fit");
  evaluate->add_option("--truth", eval.truth, "Ground-truth JSON written by generate");
  evaluate->add_flag("--matched-correlation", eval.matched, "Report matched correlation against --truth");
  evaluate->add_option("--channels", eval.channels, "Channels to reconstruct, e.g. 3,17 or 0..4");
  evaluate->add_option("--sweep", eval.sweep, "sweep.json to summarize as VE-vs-K");
  evaluate->add_flag("--svg", eval.svg, "Also write SVG plots");

  DataOptions sweep_data;
  FitOptions sweep_fit;
  SweepOptionsCli sweep_opts;
  auto* sweep = app.add_subcommand("sweep", "Model-order sweep over K, variants and repeats");
  add_data_options(sweep, sweep_data);
  add_fit_options(sweep, sweep_fit, false);
  sweep->add_option("-K,--components", sweep_opts.components, "K values, e.g. 1..5 or 1,2,4");
  sweep->add_option("--repeats", sweep_opts.repeats, "Repeats per (variant, K)");
  sweep->add_option("--variants", sweep_opts.variants, "Comma-separated variants");
  sweep->add_flag("--fresh", sweep_opts.fresh, "Ignore an existing sweep ledger");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*generate) return cmd_generate(gen, global);
    if (*fitcmd) return cmd_fit(fit_data, fit_opts, init_from, fit_svg, global);
    if (*evaluate) return cmd_evaluate(eval, global);
    if (*sweep) return cmd_sweep(sweep_data, sweep_fit, sweep_opts, global);
  } catch (const FitDivergence& e) {
    std::fprintf(stderr, "error: %s (partial results written)\n", e.what());
    return 3;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
