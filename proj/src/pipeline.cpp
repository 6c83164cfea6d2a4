#include "ssnmf/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <tuple>

#include "ssnmf/error.hpp"
#include "ssnmf/initialization.hpp"
#include "ssnmf/parallel.hpp"

namespace ssnmf {

InitialState initialize(const TimeSeriesMatrix& data, std::size_t components, std::uint64_t seed) {
  const InitResult r = kshape_init(data.values, components, seed);
  return {r.s_init, r.a_init, seed};
}

FactorModel initial_model(const InitialState& init, Variant variant) {
  return make_model(variant, init.profiles, init.a);
}

FitResult run_variant(const TimeSeriesMatrix& data, const FitConfig& config, const InitialState& init,
                      const FitResult* int_shift_prefit) {
  if (config.variant != Variant::NonIntegerShift && config.variant != Variant::ShiftStretch) {
    return fit(data, config, initial_model(init, config.variant));
  }
  FitResult computed;
  if (int_shift_prefit == nullptr) {
    FitConfig pre = config;
    pre.variant = Variant::IntegerShift;
    computed = fit(data, pre, initial_model(init, Variant::IntegerShift));
    int_shift_prefit = &computed;
  }
  return fit(data, config, convert_model(int_shift_prefit->model, config.variant));
}

std::uint64_t cell_seed(std::uint64_t seed, std::size_t components, std::size_t repeat) {
  return seed + 1000003ULL * static_cast<std::uint64_t>(components) + static_cast<std::uint64_t>(repeat);
}

namespace {

using CellKey = std::tuple<int, std::size_t, std::size_t, std::uint64_t>;

CellKey key_of(const SweepRow& r) {
  return {static_cast<int>(r.variant), r.components, r.repeat, r.seed};
}

std::map<CellKey, SweepRow> read_ledger(const std::filesystem::path& path) {
  std::map<CellKey, SweepRow> done;
  std::ifstream in(path);
  if (!in) return done;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // A partially written last line from an interrupted run is skipped.
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;
    try {
      const SweepRow row = sweep_row_from_json(j);
      done[key_of(row)] = row;
    } catch (const std::exception&) {
      continue;
    }
  }
  return done;
}

SweepRow row_from_result(Variant v, std::size_t k, std::size_t rep, std::uint64_t seed, const FitResult& r) {
  SweepRow row;
  row.variant = v;
  row.components = k;
  row.repeat = rep;
  row.seed = seed;
  row.variance_explained = r.report.variance_explained;
  row.loss = r.report.final_loss;
  row.seconds = r.report.elapsed_seconds;
  row.stop_reason = std::string(to_string(r.report.stop_reason));
  row.iterations = r.report.loss_trace.size();
  return row;
}

SweepRow error_row(Variant v, std::size_t k, std::size_t rep, std::uint64_t seed, const std::string& what) {
  SweepRow row;
  row.variant = v;
  row.components = k;
  row.repeat = rep;
  row.seed = seed;
  row.variance_explained = std::numeric_limits<double>::quiet_NaN();
  row.loss = std::numeric_limits<double>::quiet_NaN();
  row.status = "error: " + what;
  return row;
}

}  // namespace

std::vector<SweepRow> model_order_sweep(const TimeSeriesMatrix& data, const SweepConfig& config) {
  if (config.components.empty() || config.variants.empty() || config.repeats == 0) {
    throw ConfigError("sweep needs at least one K, one variant and one repeat");
  }
  for (std::size_t k : config.components) {
    if (k < 1) throw ConfigError("sweep: K must be at least 1");
  }

  std::map<CellKey, SweepRow> done;
  if (config.ledger) done = read_ledger(*config.ledger);
  std::ofstream ledger_out;
  if (config.ledger) {
    ledger_out.open(*config.ledger, std::ios::app);
    if (!ledger_out) throw IoError("cannot open sweep ledger " + config.ledger->string());
  }
  std::mutex writer;

  struct Group {
    std::size_t components;
    std::size_t repeat;
  };
  std::vector<Group> groups;
  for (std::size_t k : config.components) {
    for (std::size_t rep = 0; rep < config.repeats; ++rep) groups.push_back({k, rep});
  }

  const std::size_t outer = groups.size() > 1 ? config.threads : 1;
  const std::size_t inner = groups.size() > 1 ? 1 : config.threads;

  parallel_for(groups.size(), outer, [&](std::size_t g) {
    const std::size_t k = groups[g].components;
    const std::size_t rep = groups[g].repeat;
    const std::uint64_t seed = cell_seed(config.seed, k, rep);

    std::vector<Variant> pending;
    std::unique_lock probe_lock(writer);
    for (Variant v : config.variants) {
      SweepRow probe;
      probe.variant = v;
      probe.components = k;
      probe.repeat = rep;
      probe.seed = seed;
      if (!done.contains(key_of(probe))) pending.push_back(v);
    }
    probe_lock.unlock();
    if (pending.empty()) return;

    auto record = [&](const SweepRow& row) {
      std::lock_guard lock(writer);
      done[key_of(row)] = row;
      if (ledger_out.is_open()) {
        ledger_out << to_json(row).dump() << '\n';
        ledger_out.flush();
      }
    };

    FitConfig cfg = config.fit;
    cfg.components = k;
    cfg.seed = seed;
    cfg.threads = inner;

    std::optional<InitialState> init;
    try {
      init = initialize(data, k, seed);
    } catch (const Error& e) {
      for (Variant v : pending) record(error_row(v, k, rep, seed, e.what()));
      return;
    }

    std::optional<FitResult> prefit;
    std::string prefit_error;
    auto need_prefit = [](Variant v) {
      return v == Variant::IntegerShift || v == Variant::NonIntegerShift || v == Variant::ShiftStretch;
    };
    for (Variant v : pending) {
      if (need_prefit(v) && !prefit && prefit_error.empty()) {
        FitConfig pre = cfg;
        pre.variant = Variant::IntegerShift;
        try {
          prefit = fit(data, pre, initial_model(*init, Variant::IntegerShift));
        } catch (const Error& e) {
          prefit_error = e.what();
        }
      }
      if (need_prefit(v) && !prefit) {
        record(error_row(v, k, rep, seed, prefit_error));
        continue;
      }
      if (v == Variant::IntegerShift) {
        record(row_from_result(v, k, rep, seed, *prefit));
        continue;
      }
      FitConfig c = cfg;
      c.variant = v;
      try {
        const FitResult r = run_variant(data, c, *init, prefit ? &*prefit : nullptr);
        record(row_from_result(v, k, rep, seed, r));
      } catch (const Error& e) {
        record(error_row(v, k, rep, seed, e.what()));
      }
    }
  });

  std::vector<SweepRow> rows;
  for (Variant v : config.variants) {
    for (std::size_t k : config.components) {
      for (std::size_t rep = 0; rep < config.repeats; ++rep) {
        SweepRow probe;
        probe.variant = v;
        probe.components = k;
        probe.repeat = rep;
        probe.seed = cell_seed(config.seed, k, rep);
        rows.push_back(done.at(key_of(probe)));
      }
    }
  }
  return rows;
}

namespace {

nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

double number_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

nlohmann::json to_json(const SweepRow& row) {
  return {
      {"variant", std::string(to_string(row.variant))},
      {"K", row.components},
      {"repeat", row.repeat},
      {"variance_explained", finite_or_null(row.variance_explained)},
      {"loss", finite_or_null(row.loss)},
      {"seconds", row.seconds},
      {"seed", row.seed},
      {"status", row.status},
      {"stop_reason", row.stop_reason},
      {"iterations", row.iterations},
  };
}

SweepRow sweep_row_from_json(const nlohmann::json& j) {
  SweepRow row;
  row.variant = parse_variant(j.at("variant").get<std::string>());
  row.components = j.at("K").get<std::size_t>();
  row.repeat = j.at("repeat").get<std::size_t>();
  row.variance_explained = number_or_nan(j.at("variance_explained"));
  row.loss = number_or_nan(j.at("loss"));
  row.seconds = j.at("seconds").get<double>();
  row.seed = j.at("seed").get<std::uint64_t>();
  row.status = j.at("status").get<std::string>();
  row.stop_reason = j.value("stop_reason", "");
  row.iterations = j.value("iterations", std::size_t{0});
  return row;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (f == nullptr) throw IoError("cannot write " + path.string());
  std::fprintf(f, "variant,K,repeat,variance_explained,loss,seconds,seed,status,stop_reason,iterations\n");
  for (const SweepRow& r : rows) {
    std::string status = r.status;
    for (char& c : status) {
      if (c == ',' || c == '"' || c == '\n') c = ' ';
    }
    std::fprintf(f, "%s,%zu,%zu,%.17g,%.17g,%.6f,%llu,%s,%s,%zu\n", std::string(to_string(r.variant)).c_str(),
                 r.components, r.repeat, r.variance_explained, r.loss, r.seconds,
                 static_cast<unsigned long long>(r.seed), status.c_str(), r.stop_reason.c_str(), r.iterations);
  }
  if (std::fclose(f) != 0) throw IoError("cannot write " + path.string());
}

void write_sweep_json(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kind"] = "ssnmf.sweep_table";
  j["rows"] = nlohmann::json::array();
  for (const SweepRow& r : rows) j["rows"].push_back(to_json(r));
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace ssnmf
