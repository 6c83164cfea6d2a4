#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ssnmf/data.hpp"
#include "ssnmf/error.hpp"
#include "ssnmf/pipeline.hpp"

using namespace ssnmf;
namespace fs = std::filesystem;

namespace {

TimeSeriesMatrix small_synthetic(std::uint64_t seed) {
  SyntheticConfig c;
  c.n = 32;
  c.n_total = 64;
  c.channels_per_component = 5;
  c.shift_range = {-4, 4};
  c.stretch_range = {-4, 4};
  c.seed = seed;
  return generate_synthetic(c).data;
}

SweepConfig small_sweep() {
  SweepConfig s;
  s.components = {1, 2};
  s.repeats = 2;
  s.seed = 3;
  s.fit.max_iterations = 6;
  s.fit.stop_window = 5;
  return s;
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "ssnmf_test_pipeline";
  fs::create_directories(d);
  const fs::path p = d / name;
  fs::remove(p);
  return p;
}

}  // namespace

TEST(CellSeed, DistinctPerCell) {
  EXPECT_NE(cell_seed(0, 1, 0), cell_seed(0, 1, 1));
  EXPECT_NE(cell_seed(0, 1, 0), cell_seed(0, 2, 0));
  EXPECT_EQ(cell_seed(7, 3, 2), cell_seed(7, 3, 2));
}

TEST(RunVariant, PrefitIsReusedOrRecomputedIdentically) {
  const TimeSeriesMatrix data = small_synthetic(1);
  const InitialState init = initialize(data, 2, 5);
  FitConfig cfg;
  cfg.components = 2;
  cfg.max_iterations = 5;
  cfg.threads = 1;
  cfg.variant = Variant::IntegerShift;
  const FitResult prefit = run_variant(data, cfg, init);
  cfg.variant = Variant::ShiftStretch;
  const FitResult a = run_variant(data, cfg, init, &prefit);
  const FitResult b = run_variant(data, cfg, init);
  EXPECT_EQ(a.report.loss_trace, b.report.loss_trace);
  EXPECT_EQ(a.model.b, b.model.b);
  EXPECT_LE(a.report.final_loss, prefit.report.final_loss * (1.0 + 1e-9));
}

TEST(Sweep, RowCountOrderAndStatus) {
  const TimeSeriesMatrix data = small_synthetic(2);
  SweepConfig s = small_sweep();
  s.threads = 2;
  const auto rows = model_order_sweep(data, s);
  ASSERT_EQ(rows.size(), 16u);
  std::size_t i = 0;
  for (Variant v : s.variants) {
    for (std::size_t k : s.components) {
      for (std::size_t rep = 0; rep < 2; ++rep, ++i) {
        EXPECT_EQ(rows[i].variant, v);
        EXPECT_EQ(rows[i].components, k);
        EXPECT_EQ(rows[i].repeat, rep);
        EXPECT_EQ(rows[i].seed, cell_seed(3, k, rep));
        EXPECT_EQ(rows[i].status, "ok");
        EXPECT_LE(rows[i].variance_explained, 1.0);
      }
    }
  }
}

TEST(Sweep, ThreadCountDoesNotChangeResults) {
  const TimeSeriesMatrix data = small_synthetic(3);
  SweepConfig s = small_sweep();
  s.threads = 1;
  const auto a = model_order_sweep(data, s);
  s.threads = 4;
  const auto b = model_order_sweep(data, s);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].variance_explained, b[i].variance_explained);
    EXPECT_EQ(a[i].loss, b[i].loss);
  }
}

TEST(Sweep, LedgerResumesAfterInterruption) {
  const TimeSeriesMatrix data = small_synthetic(4);
  SweepConfig s = small_sweep();
  s.threads = 1;
  s.ledger = scratch("ledger.jsonl");
  const auto full = model_order_sweep(data, s);

  // Keep the first three records and a torn fourth line.
  std::ifstream in(*s.ledger);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  in.close();
  ASSERT_EQ(lines.size(), 16u);
  {
    std::ofstream out(*s.ledger, std::ios::trunc);
    for (std::size_t i = 0; i < 3; ++i) out << lines[i] << '\n';
    out << lines[3].substr(0, lines[3].size() / 2);
  }
  const SweepRow kept = sweep_row_from_json(nlohmann::json::parse(lines[0]));

  std::ofstream(*s.ledger, std::ios::app) << '\n';
  const auto resumed = model_order_sweep(data, s);
  ASSERT_EQ(resumed.size(), full.size());
  for (std::size_t i = 0; i < full.size(); ++i) {
    EXPECT_EQ(resumed[i].variance_explained, full[i].variance_explained) << i;
    EXPECT_EQ(resumed[i].loss, full[i].loss) << i;
  }
  bool reused = false;
  for (const auto& r : resumed) {
    if (r.variant == kept.variant && r.components == kept.components && r.repeat == kept.repeat) {
      reused = r.seconds == kept.seconds;
    }
  }
  EXPECT_TRUE(reused);

  // A complete ledger answers without refitting.
  const auto again = model_order_sweep(data, s);
  for (std::size_t i = 0; i < again.size(); ++i) EXPECT_EQ(again[i].seconds, resumed[i].seconds);
}

TEST(Sweep, ErrorsBecomeRows) {
  const TimeSeriesMatrix data = small_synthetic(5);
  SweepConfig s = small_sweep();
  s.components = {11};
  s.repeats = 1;
  s.variants = {Variant::PlainNMF, Variant::ShiftStretch};
  const auto rows = model_order_sweep(data, s);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.status.rfind("error: ", 0), 0u) << r.status;
    EXPECT_TRUE(std::isnan(r.variance_explained));
  }
  s.components = {};
  EXPECT_THROW(model_order_sweep(data, s), ConfigError);
}

TEST(SweepRow, JsonRoundTripAndCsv) {
  SweepRow r;
  r.variant = Variant::NonIntegerShift;
  r.components = 3;
  r.repeat = 1;
  r.variance_explained = 0.123456789012345678;
  r.loss = std::numeric_limits<double>::quiet_NaN();
  r.seed = 99;
  r.status = "ok";
  r.stop_reason = "converged";
  r.iterations = 17;
  const SweepRow back = sweep_row_from_json(to_json(r));
  EXPECT_EQ(back.variant, r.variant);
  EXPECT_EQ(back.components, 3u);
  EXPECT_EQ(back.variance_explained, r.variance_explained);
  EXPECT_TRUE(std::isnan(back.loss));
  EXPECT_EQ(back.iterations, 17u);

  const fs::path p = scratch("sweep.csv");
  write_sweep_csv(p, {r, r});
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  std::size_t lines = 0;
  for (char c : ss.str()) lines += c == '\n';
  EXPECT_EQ(lines, 3u);
  EXPECT_NE(ss.str().find("nonint-shift"), std::string::npos);
}
