#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "neurocal/cli/app.hpp"
#include "oracles.hpp"

using namespace neurocal;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("neurocal_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

  void write(const std::string& rel, const std::string& text) const {
    fs::create_directories((dir_ / rel).parent_path());
    std::ofstream(dir_ / rel) << text;
  }

  fs::path dir_;
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

QoIMatrix table(const std::string& p) {
  std::ifstream in(p);
  return read_csv(in);
}

std::vector<std::string> listing(const fs::path& root) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root).string());
  std::sort(out.begin(), out.end());
  return out;
}

std::string qoi_csv(const QoIMatrix& m) {
  std::ostringstream s;
  write_csv(s, m);
  return s.str();
}

} // namespace

TEST_F(Cli, SimulateWritesOneSwcPerNeuronPlusTableAndManifest) {
  const auto r = invoke({"simulate", "--count", "3", "--seed", "7", "--workers", "1", "--out", path("run")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::vector<std::string> expected{"config.resolved.json", "manifest.json",         "qoi.csv",
                                          "summary.csv",          "swc/neuron_00000.swc", "swc/neuron_00001.swc",
                                          "swc/neuron_00002.swc"};
  EXPECT_EQ(listing(path("run")), expected);
  const auto q = table(path("run/qoi.csv"));
  EXPECT_EQ(q.rows(), 3);
  EXPECT_EQ(q.columns, (std::vector<std::string>{"M1", "M2", "M3", "M4"}));
  const auto manifest = nlohmann::json::parse(slurp(path("run/manifest.json")));
  EXPECT_EQ(manifest["seed"], 7);
  EXPECT_EQ(manifest["outputs"].size(), expected.size());
}

TEST_F(Cli, SimulateMatchesTheLibraryModel) {
  ASSERT_EQ(invoke({"simulate", "--count", "4", "--seed", "3", "--no-swc", "--out", path("run")}).code, 0);
  const GrowthModel model(ModelKind::model2);
  const std::vector<double> theta{0.038, 0.71e-3, 100.0};
  EXPECT_EQ(slurp(path("run/qoi.csv")), qoi_csv(model.simulate(theta, 4, 3)));
  EXPECT_FALSE(fs::exists(path("run/swc")));
}

TEST_F(Cli, RerunIsByteIdenticalAndWorkerCountDoesNotMatter) {
  ASSERT_EQ(invoke({"simulate", "--count", "5", "--workers", "1", "--out", path("a")}).code, 0);
  ASSERT_EQ(invoke({"simulate", "--count", "5", "--workers", "1", "--out", path("b")}).code, 0);
  ASSERT_EQ(invoke({"simulate", "--count", "5", "--workers", "3", "--out", path("c")}).code, 0);
  for (const auto& f : listing(path("a"))) {
    EXPECT_EQ(slurp(path("a/" + f)), slurp(path("b/" + f))) << f;
    if (f != "manifest.json" && f != "config.resolved.json") EXPECT_EQ(slurp(path("a/" + f)), slurp(path("c/" + f))) << f;
  }
}

TEST_F(Cli, SummaryTableHasQuartiles) {
  ASSERT_EQ(invoke({"simulate", "--count", "4", "--no-swc", "--out", path("run")}).code, 0);
  const auto q = table(path("run/qoi.csv"));
  std::istringstream in(slurp(path("run/summary.csv")));
  std::string header, line;
  std::getline(in, header);
  EXPECT_EQ(header, "qoi,count,mean,std,min,q25,median,q75,max");
  std::getline(in, line);
  const auto cells = neurocal::detail::split_csv_line(line);
  ASSERT_EQ(cells.size(), 9u);
  std::vector<double> m1(q.values.col(0).data(), q.values.col(0).data() + 4);
  std::sort(m1.begin(), m1.end());
  EXPECT_EQ(cells[0], "M1");
  EXPECT_DOUBLE_EQ(std::stod(cells[4]), m1[0]);
  EXPECT_DOUBLE_EQ(std::stod(cells[6]), 0.5 * (m1[1] + m1[2]));
  EXPECT_DOUBLE_EQ(std::stod(cells[8]), m1[3]);
  // q25 with linear interpolation: position 0.75 between the first two order statistics.
  EXPECT_DOUBLE_EQ(std::stod(cells[5]), m1[0] + 0.75 * (m1[1] - m1[0]));
}

TEST_F(Cli, MorphometricsOfSimulatedSwcReproducesTheSimulatorTable) {
  ASSERT_EQ(invoke({"simulate", "--count", "4", "--out", path("sim")}).code, 0);
  const auto r = invoke({"morphometrics", path("sim/swc"), "--out", path("m")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto a = table(path("sim/qoi.csv")), b = table(path("m/qoi.csv"));
  ASSERT_EQ(a.columns, b.columns);
  ASSERT_EQ(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    EXPECT_EQ(a.values(i, 0), b.values(i, 0));
    // SWC coordinates carry 4 decimals.
    for (Eigen::Index j = 1; j < a.cols(); ++j) EXPECT_NEAR(a.values(i, j), b.values(i, j), 1e-5 * a.values(i, j));
  }
}

TEST_F(Cli, ApicalSelectionKeepsFewerSections) {
  write("mixed.json", R"({"model": {"kind": "model2", "soma": {"neurites": [
      {"direction": [0, 0, 1], "type": 4}, {"direction": [0, 0, -1], "type": 3}]}}})");
  ASSERT_EQ(invoke({"simulate", "--config", path("mixed.json"), "--count", "2", "--out", path("sim")}).code, 0);
  ASSERT_EQ(invoke({"morphometrics", path("sim/swc"), "--out", path("all")}).code, 0);
  ASSERT_EQ(invoke({"morphometrics", path("sim/swc"), "--subtree", "4", "--out", path("apical")}).code, 0);
  const auto all = table(path("all/qoi.csv")), apical = table(path("apical/qoi.csv"));
  ASSERT_EQ(all.rows(), 2);
  for (Eigen::Index i = 0; i < 2; ++i) {
    EXPECT_LT(apical.values(i, 0), all.values(i, 0));
    EXPECT_LT(apical.values(i, 3), all.values(i, 3));
  }
}

TEST_F(Cli, CorruptFileIsReportedAndSkipped) {
  ASSERT_EQ(invoke({"simulate", "--count", "3", "--out", path("sim")}).code, 0);
  std::ofstream(path("sim/swc/neuron_00001.swc")) << "1 1 0 0 0 10 -1\n2 3 0 0 x 1 1\n3 3 0 0 30 1 7\n";
  const auto r = invoke({"morphometrics", path("sim/swc"), "--out", path("m")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(table(path("m/qoi.csv")).rows(), 2);
  const std::string report = slurp(path("m/report.csv"));
  EXPECT_NE(report.find("neuron_00001.swc,rejected"), std::string::npos);
  EXPECT_NE(report.find("line 2"), std::string::npos);
  EXPECT_NE(report.find("line 3"), std::string::npos);
  EXPECT_NE(r.err.find("neuron_00001.swc"), std::string::npos);
}

TEST_F(Cli, AllFilesRejectedIsAnError) {
  write("bad/a.swc", "garbage\n");
  write("bad/b.swc", "");
  const auto r = invoke({"morphometrics", path("bad"), "--out", path("m")});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(path("m/qoi.csv")));
  EXPECT_NE(slurp(path("m/report.csv")).find("b.swc,rejected"), std::string::npos);
}

TEST_F(Cli, ConfigValidation) {
  write("typo.json", R"({"simulate": {"cuont": 3}})");
  auto r = invoke({"simulate", "--config", path("typo.json"), "--out", path("o")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("simulate.cuont"), std::string::npos);
  write("type.json", R"({"seed": -4})");
  r = invoke({"simulate", "--config", path("type.json"), "--out", path("o")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("seed"), std::string::npos);
  write("params.json", R"({"model": {"params": {"p_bra": 2.0}}})");
  EXPECT_EQ(invoke({"simulate", "--config", path("params.json"), "--out", path("o")}).code, 1);
  EXPECT_EQ(invoke({"simulate", "--config", path("missing.json"), "--out", path("o")}).code, 1);
  EXPECT_EQ(invoke({"simulate", "--model", "model3", "--out", path("o")}).code, 1);
  EXPECT_EQ(invoke({"simulate", "--bogus"}).code, 1);
  EXPECT_EQ(invoke({}).code, 1);
  EXPECT_EQ(invoke({"--help"}).code, 0);
  EXPECT_FALSE(fs::exists(path("o")));
}

TEST_F(Cli, FlagsWinOverTheConfigFile) {
  write("c.json", R"({"seed": 11, "simulate": {"count": 5, "write_swc": false}})");
  ASSERT_EQ(invoke({"simulate", "--config", path("c.json"), "--count", "2", "--out", path("o")}).code, 0);
  const auto resolved = nlohmann::json::parse(slurp(path("o/config.resolved.json")));
  EXPECT_EQ(resolved["seed"], 11);
  EXPECT_EQ(resolved["simulate"]["count"], 2);
  EXPECT_EQ(resolved["simulate"]["write_swc"], false);
  EXPECT_EQ(table(path("o/qoi.csv")).rows(), 2);
  // The resolved config reproduces the run.
  ASSERT_EQ(invoke({"simulate", "--config", path("o/config.resolved.json"), "--out", path("again")}).code, 0);
  EXPECT_EQ(slurp(path("o/qoi.csv")), slurp(path("again/qoi.csv")));
}

TEST_F(Cli, UnwritableOutputIsARuntimeFailure) {
  write("file", "x");
  const auto r = invoke({"simulate", "--count", "1", "--out", path("file/sub")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("output directory"), std::string::npos);
}

TEST_F(Cli, PairIdenticalTablesGivesZeroDistances) {
  ASSERT_EQ(invoke({"simulate", "--count", "6", "--no-swc", "--out", path("sim")}).code, 0);
  ASSERT_EQ(invoke({"pair", path("sim/qoi.csv"), path("sim/qoi.csv"), "--out", path("p")}).code, 0);
  std::istringstream in(slurp(path("p/pairs.csv")));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "data_id,sim_id,distance");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto c = neurocal::detail::split_csv_line(line);
    EXPECT_EQ(c[0], c[1]);
    EXPECT_EQ(std::stod(c[2]), 0.0);
    ++rows;
  }
  EXPECT_EQ(rows, 6u);
}

TEST_F(Cli, PairMatchesBruteForce) {
  const std::vector<std::vector<double>> data{{1, 10}, {2, 30}, {3, 20}};
  const std::vector<std::vector<double>> sim{{0, 0}, {2, 25}, {3, 21}, {1.5, 11}, {9, 9}};
  std::string d = "a,b\n", s = "a,b\n";
  for (const auto& r : data) d += std::to_string(r[0]) + "," + std::to_string(r[1]) + "\n";
  for (const auto& r : sim) s += std::to_string(r[0]) + "," + std::to_string(r[1]) + "\n";
  write("d.csv", d);
  write("s.csv", s);
  ASSERT_EQ(invoke({"pair", path("d.csv"), path("s.csv"), "--out", path("p")}).code, 0);
  // Data column std (population): a -> sqrt(2/3), b -> 10 sqrt(2/3).
  const double sa = std::sqrt(2.0 / 3.0), sb = 10.0 * sa;
  std::istringstream in(slurp(path("p/pairs.csv")));
  std::string line;
  std::getline(in, line);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::size_t best = 0;
    double bd = 1e300;
    for (std::size_t j = 0; j < sim.size(); ++j) {
      const double da = (data[i][0] - sim[j][0]) / sa, db = (data[i][1] - sim[j][1]) / sb;
      if (da * da + db * db < bd) {
        bd = da * da + db * db;
        best = j;
      }
    }
    ASSERT_TRUE(std::getline(in, line));
    const auto c = neurocal::detail::split_csv_line(line);
    EXPECT_EQ(std::stoul(c[0]), i);
    EXPECT_EQ(std::stoul(c[1]), best);
    EXPECT_NEAR(std::stod(c[2]), std::sqrt(bd), 1e-12);
  }
}

TEST_F(Cli, PairHeaderMismatchNamesColumns) {
  write("d.csv", "M1,M2\n1,2\n3,4\n");
  write("s.csv", "M1,M4\n1,2\n");
  const auto r = invoke({"pair", path("d.csv"), path("s.csv"), "--out", path("p")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("[M1,M2]"), std::string::npos);
  EXPECT_NE(r.err.find("[M1,M4]"), std::string::npos);
}

TEST_F(Cli, SensitivityIshigamiMatchesAnalyticIndices) {
  ASSERT_EQ(invoke({"sensitivity", "--target", "ishigami", "--base-samples", "4096", "--out", path("s")}).code, 0);
  const auto ref = oracle::ishigami_indices();
  const double s1[] = {ref.s1, ref.s2, ref.s3}, st[] = {ref.st1, ref.st2, ref.st3};
  std::istringstream in(slurp(path("s/indices.csv")));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "parameter,qoi,defined,S1,S1_ci95,S_tot,S_tot_ci95");
  for (int i = 0; i < 3; ++i) {
    ASSERT_TRUE(std::getline(in, line));
    const auto c = neurocal::detail::split_csv_line(line);
    EXPECT_EQ(c[0], "x" + std::to_string(i + 1));
    EXPECT_NEAR(std::stod(c[3]), s1[i], 0.05) << line;
    EXPECT_NEAR(std::stod(c[5]), st[i], 0.05) << line;
  }
}

TEST_F(Cli, SensitivitySmokeRunIsReproducible) {
  for (const char* o : {"a", "b"})
    ASSERT_EQ(invoke({"sensitivity", "--base-samples", "2", "--sims-per-param", "2", "--seed", "5", "--out", path(o)}).code, 0);
  EXPECT_EQ(slurp(path("a/indices.csv")), slurp(path("b/indices.csv")));
  EXPECT_EQ(slurp(path("a/raw.csv")), slurp(path("b/raw.csv")));
  // 2 base samples x (2*3 + 2) rows x 4 QoIs, plus the header.
  std::istringstream in(slurp(path("a/raw.csv")));
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 1u + 2 * 8 * 4);
}

TEST_F(Cli, WassersteinStudyWritesSamplesAndSummary) {
  ASSERT_EQ(invoke({"wasserstein-study", "--dims", "1", "2", "--sizes", "10", "20", "--repetitions", "3", "--out",
                 path("w")})
                .code,
            0);
  std::istringstream in(slurp(path("w/summary.csv")));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "dim,n,median_relative_error");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 4u);
  std::istringstream s(slurp(path("w/samples.csv")));
  rows = 0;
  while (std::getline(s, line)) ++rows;
  EXPECT_EQ(rows, 1u + 4 * 3);
}

namespace {

// Observed toy data: 100 rows from the model at mean (1, -0.5).
void write_toy_data(const std::string& p) {
  const ToyGaussianModel model(2, 0.2);
  const std::vector<double> mu{1.0, -0.5};
  std::ofstream(p) << qoi_csv(model.simulate(mu, 100, 2024));
}

std::string toy_config(std::uint64_t budget) {
  return R"({"calibrate": {"target": "toy", "smc": {"particles": 64, "sims_per_param": 20, "budget": )" +
         std::to_string(budget) + R"(}, "predictive": {"sims_per_param": 5}}})";
}

} // namespace

TEST_F(Cli, CalibrateToyRecoversTheDataMean) {
  write_toy_data(path("obs.csv"));
  write("c.json", R"({"calibrate": {"target": "toy", "smc": {"particles": 256, "sims_per_param": 50,
      "budget": 5000000}}})");
  const auto r = invoke({"calibrate", "--config", path("c.json"), "--observed", path("obs.csv"), "--out", path("cal")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto obs = table(path("obs.csv"));
  std::istringstream in(slurp(path("cal/posterior_summary.csv")));
  std::string line;
  std::getline(in, line);
  for (Eigen::Index j = 0; j < 2; ++j) {
    ASSERT_TRUE(std::getline(in, line));
    const auto c = neurocal::detail::split_csv_line(line);
    EXPECT_NEAR(std::stod(c[1]), obs.values.col(j).mean(), 0.1) << line;
  }
  for (const char* f : {"trace.jsonl", "checkpoint.json", "particles.csv", "kde.csv", "predictive_kde.csv",
                        "predictive_hist.csv", "predictive_summary.csv", "predictive_sims.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(path(std::string("cal/") + f))) << f;
  const auto manifest = nlohmann::json::parse(slurp(path("cal/manifest.json")));
  EXPECT_NE(manifest["stop"], "wall_clock");
}

TEST_F(Cli, CalibrateTraceIsOneJsonRecordPerIteration) {
  write_toy_data(path("obs.csv"));
  write("c.json", toy_config(6000));
  ASSERT_EQ(invoke({"calibrate", "--config", path("c.json"), "--observed", path("obs.csv"), "--out", path("cal")}).code, 0);
  std::istringstream in(slurp(path("cal/trace.jsonl")));
  std::size_t i = 0;
  for (std::string line; std::getline(in, line); ++i) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["iteration"], i);
    EXPECT_TRUE(j.contains("epsilon") && j.contains("ess") && j.contains("cumulative_simulations"));
  }
  const auto manifest = nlohmann::json::parse(slurp(path("cal/manifest.json")));
  EXPECT_EQ(manifest["iterations"], i);
  EXPECT_GT(i, 2u);
}

TEST_F(Cli, KilledRunResumesToTheSameTrace) {
  write_toy_data(path("obs.csv"));
  write("c.json", toy_config(6000));
  const std::vector<std::string> base{"calibrate", "--config", path("c.json"), "--observed", path("obs.csv")};
  auto with = [&](std::vector<std::string> extra) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return invoke(a);
  };
  ASSERT_EQ(with({"--out", path("full"), "--workers", "1"}).code, 0);

  // A wall-clock stop after the first iteration is a partial, resumable result.
  EXPECT_EQ(with({"--out", path("part"), "--wall-clock", "1e-9", "--workers", "1"}).code, 3);
  // Simulate a crash in the middle of writing the next record.
  std::ofstream(path("part/trace.jsonl"), std::ios::app) << "{\"iteration\": 1, \"eps";
  const auto r = with({"--out", path("part"), "--resume", "--workers", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(path("full/trace.jsonl")), slurp(path("part/trace.jsonl")));
  EXPECT_EQ(slurp(path("full/particles.csv")), slurp(path("part/particles.csv")));
  EXPECT_EQ(slurp(path("full/predictive_sims.csv")), slurp(path("part/predictive_sims.csv")));
}

TEST_F(Cli, ResumeRejectsADifferentConfiguration) {
  write_toy_data(path("obs.csv"));
  write("c.json", toy_config(6000));
  ASSERT_EQ(invoke({"calibrate", "--config", path("c.json"), "--observed", path("obs.csv"), "--out", path("cal"),
                 "--wall-clock", "1e-9"})
                .code,
            3);
  const auto r = invoke({"calibrate", "--config", path("c.json"), "--observed", path("obs.csv"), "--out", path("cal"),
                      "--resume", "--seed", "99"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("different configuration"), std::string::npos);
}

TEST_F(Cli, CalibrateNeedsMatchingColumns) {
  write("obs.csv", "M1,M2\n1,2\n3,4\n");
  const auto r = invoke({"calibrate", "--observed", path("obs.csv"), "--out", path("cal")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("no column 'M3'"), std::string::npos);
}

TEST(CliLog, LevelFiltersMessages) {
  std::ostringstream s;
  const cli::Logger quiet(s, cli::LogLevel::error);
  quiet.info("hidden");
  quiet.error("shown");
  EXPECT_EQ(s.str(), "neurocal: error: shown\n");
}
