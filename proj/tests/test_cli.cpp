#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kCli = SSNMF_CLI_PATH;

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "ssnmf_test_cli" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = kCli + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  std::size_t n = 0;
  for (char c : slurp(p)) n += c == '\n';
  return n;
}

// Small synthetic dataset: 2 x `per` channels of length 256.
fs::path generate(const fs::path& dir, int per = 5) {
  const fs::path log = dir / "generate.log";
  EXPECT_EQ(run("--seed 4 -o " + dir.string() + " generate --channels " + std::to_string(per), log), 0) << slurp(log);
  return dir / "data.bin";
}

}  // namespace

TEST(Cli, FitTwiceGivesByteIdenticalParameters) {
  const fs::path dir = fresh_dir("determinism");
  const fs::path data = generate(dir);
  for (const char* out : {"a", "b"}) {
    const fs::path o = dir / out;
    ASSERT_EQ(run("--seed 7 -o " + o.string() + " fit " + data.string() + " --variant shift-stretch -K 2 --max-iter 8",
                  dir / "fit.log"),
              0)
        << slurp(dir / "fit.log");
  }
  for (const char* f : {"model.json", "A.csv", "S.csv", "tau.csv", "r.csv", "loss_trace.csv"}) {
    const std::string a = slurp(dir / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir / "b" / f)) << f;
  }
  const auto report = nlohmann::json::parse(slurp(dir / "a" / "report.json"));
  EXPECT_EQ(report.at("kind"), "ssnmf.fit_report");
  EXPECT_EQ(report.at("seed"), 7);
}

TEST(Cli, NonIntegerShiftFitsAndEvaluates) {
  const fs::path dir = fresh_dir("evaluate");
  const fs::path data = generate(dir);
  const fs::path out = dir / "fit";
  ASSERT_EQ(run("-o " + out.string() + " fit " + data.string() + " --variant nonint-shift -K 2 --max-iter 5",
                dir / "fit.log"),
            0)
      << slurp(dir / "fit.log");
  const fs::path ev = dir / "eval";
  ASSERT_EQ(run("-o " + ev.string() + " evaluate " + data.string() + " --model " + (out / "model.json").string() +
                    " --truth " + (dir / "truth.json").string() + " --matched-correlation --channels 0..2",
                dir / "eval.log"),
            0)
      << slurp(dir / "eval.log");
  const auto j = nlohmann::json::parse(slurp(ev / "evaluation.json"));
  EXPECT_TRUE(j.at("matched_correlation").is_number());
  EXPECT_LE(j.at("variance_explained").get<double>(), 1.0);
  EXPECT_TRUE(fs::exists(ev / "reconstruction.csv"));
  EXPECT_TRUE(fs::exists(ev / "profiles.csv"));
}

TEST(Cli, ConfigErrorsExitWithCodeTwo) {
  const fs::path dir = fresh_dir("errors");
  const fs::path data = generate(dir);
  const fs::path log = dir / "err.log";
  EXPECT_EQ(run("-o " + (dir / "x").string() + " fit " + data.string() + " -K 0", log), 2) << slurp(log);
  EXPECT_EQ(run("-o " + (dir / "x").string() + " fit " + data.string() + " --variant wobble", log), 2) << slurp(log);
  EXPECT_EQ(run("-o " + (dir / "x").string() + " generate --channels 0", log), 2) << slurp(log);
  EXPECT_EQ(run("-o " + (dir / "x").string() + " fit " + (dir / "missing.bin").string(), log), 1) << slurp(log);

  std::ofstream(dir / "bad.toml") << "seed = 3\nnot_an_option = 1\n";
  EXPECT_NE(run("--config " + (dir / "bad.toml").string() + " -o " + (dir / "x").string() + " fit " + data.string(),
                log),
            0);
  std::ofstream(dir / "good.toml") << "seed = 3\n[fit]\nvariant = \"int-shift\"\ncomponents = 1\nmax-iter = 2\n";
  EXPECT_EQ(run("--config " + (dir / "good.toml").string() + " -o " + (dir / "y").string() + " fit " + data.string(),
                log),
            0)
      << slurp(log);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "y" / "model.json")).at("variant"), "int-shift");
}

TEST(Cli, SweepProducesSixtyRowsAndResumes) {
  const fs::path dir = fresh_dir("sweep");
  const fs::path data = generate(dir, 4);
  const fs::path out = dir / "sweep";
  const std::string args = "--seed 2 -o " + out.string() + " sweep " + data.string() + " -K 1..5 --repeats 3 --max-iter 3";
  ASSERT_EQ(run(args, dir / "sweep.log"), 0) << slurp(dir / "sweep.log");
  EXPECT_EQ(line_count(out / "sweep.csv"), 61u);
  const auto table = nlohmann::json::parse(slurp(out / "sweep.json"));
  EXPECT_EQ(table.at("rows").size(), 60u);
  const std::string first_csv = slurp(out / "sweep.csv");

  // Interrupt: keep 10 ledger lines plus half of the eleventh.
  const fs::path ledger = out / "sweep_ledger.jsonl";
  ASSERT_EQ(line_count(ledger), 60u);
  std::vector<std::string> lines;
  {
    std::ifstream in(ledger);
    std::string l;
    while (std::getline(in, l)) lines.push_back(l);
  }
  {
    std::ofstream o(ledger, std::ios::trunc);
    for (std::size_t i = 0; i < 10; ++i) o << lines[i] << '\n';
    o << lines[10].substr(0, 7);
  }
  fs::remove(out / "sweep.csv");
  ASSERT_EQ(run(args, dir / "resume.log"), 0) << slurp(dir / "resume.log");
  EXPECT_EQ(line_count(out / "sweep.csv"), 61u);

  // Row values match the uninterrupted run apart from timings.
  const auto strip_seconds = [](const std::string& csv) {
    std::stringstream in(csv);
    std::string line, out;
    std::getline(in, line);
    std::vector<std::string> header;
    {
      std::stringstream h(line);
      std::string cell;
      while (std::getline(h, cell, ',')) header.push_back(cell);
    }
    while (std::getline(in, line)) {
      std::stringstream r(line);
      std::string cell;
      for (std::size_t c = 0; std::getline(r, cell, ','); ++c) {
        if (header[c] != "seconds") out += cell + ",";
      }
      out += "\n";
    }
    return out;
  };
  EXPECT_EQ(strip_seconds(slurp(out / "sweep.csv")), strip_seconds(first_csv));
}
