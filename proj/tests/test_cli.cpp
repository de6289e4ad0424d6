#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "sbl/problem_io.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p)
{
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override
  {
    dir_ = fs::temp_directory_path() /
           ("sbl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Outcome run(const std::string& args) const
  {
    const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd =
        std::string(SBL_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpExitsZero)
{
  const auto r = run("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("experiment"), std::string::npos);
  EXPECT_NE(r.out.find("solve"), std::string::npos);
  EXPECT_NE(r.out.find("gen"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo)
{
  auto r = run("solve --estimator fast2l --bogus 1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("solve --estimator lasso").code, 2);
  EXPECT_EQ(run("solve").code, 2);
  EXPECT_EQ(run("experiment").code, 2);
  EXPECT_EQ(run("experiment --preset smoke --config x.json").code, 2);
  EXPECT_EQ(run("gen --field octonion").code, 2);
}

TEST_F(Cli, GenThenSolve)
{
  const auto prob = dir_ / "p.txt";
  ASSERT_EQ(run("gen --M 30 --L 60 --K 4 --snr 30 --field real --seed 5 --out " + prob.string()).code, 0);
  const auto any = sbl::load_problem(prob.string());
  ASSERT_TRUE(std::holds_alternative<sbl::ProblemInstance<double>>(any));
  const auto& p = std::get<sbl::ProblemInstance<double>>(any);
  EXPECT_EQ(p.H.rows(), 30);
  EXPECT_EQ(p.H.cols(), 60);

  const auto est = dir_ / "est.csv";
  const auto r = run("solve --problem " + prob.string() + " --estimator fast2l --epsilon 0 --eta 1 --out " +
                     est.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("k_hat "), std::string::npos);
  EXPECT_NE(r.out.find("mse "), std::string::npos);
  EXPECT_NE(r.out.find("(known)"), std::string::npos);
  EXPECT_NE(r.out.find("kind=fast2l;layers=2;epsilon=0;eta=1"), std::string::npos);

  std::ifstream is(est);
  std::string line;
  int rows = 0, nonzero = 0;
  while (std::getline(is, line)) {
    const auto comma = line.find(',');
    ASSERT_NE(comma, std::string::npos);
    EXPECT_EQ(std::stoi(line.substr(0, comma)), rows);
    if (std::stod(line.substr(comma + 1)) != 0.0) ++nonzero;
    ++rows;
  }
  EXPECT_EQ(rows, 60);
  EXPECT_NE(r.out.find("k_hat " + std::to_string(nonzero) + "\n"), std::string::npos);

  const auto r2 = run("solve --problem " + prob.string() + " --estimator emrvm --estimate-lambda");
  ASSERT_EQ(r2.code, 0) << r2.err;
  EXPECT_NE(r2.out.find("(estimated)"), std::string::npos);
  EXPECT_NE(r2.out.find("estimate (index,value):"), std::string::npos);
}

TEST_F(Cli, SolveGeneratedInstanceIsSeeded)
{
  const auto a = run("solve --estimator fastrvm --seed 3");
  const auto b = run("solve --estimator fastrvm --seed 3");
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out, run("solve --estimator fastrvm --seed 4").out);
}

TEST_F(Cli, SolveReportsBadProblemFile)
{
  const auto bad = dir_ / "bad.txt";
  std::ofstream(bad) << "not a problem\n";
  const auto r = run("solve --problem " + bad.string() + " --estimator fast2l");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST_F(Cli, ExperimentWritesCsv)
{
  const auto cfg = dir_ / "c.json";
  std::ofstream(cfg) << R"({"sweep": {"snr": [20, 30]}, "base": {"M": 20, "L": 40, "K": 3},
                            "trials": 2, "base_seed": 4,
                            "estimators": [{"kind": "fast2l"}, {"kind": "fastrvm"}]})";
  const auto out = dir_ / "res";
  const auto r = run("experiment --config " + cfg.string() + " --out " + out.string() + " --threads 2");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto agg = slurp(out / "aggregate.csv");
  const auto tr = slurp(out / "trials.csv");
  EXPECT_EQ(agg.rfind("sweep_name,sweep_value,estimator,mean_mse,mean_k_hat,mean_iters,mean_oracle_mse,trials,", 0),
            0u);
  auto count = [](const std::string& s) {
    std::size_t n = 0;
    for (std::size_t p = s.find("\r\n"); p != std::string::npos; p = s.find("\r\n", p + 2)) ++n;
    return n;
  };
  EXPECT_EQ(count(agg), 1u + 2 * 2);
  EXPECT_EQ(count(tr), 1u + 2 * 2 * 2);

  const auto out2 = dir_ / "res2";
  ASSERT_EQ(run("experiment --config " + cfg.string() + " --out " + out2.string() + " --threads 1").code, 0);
  EXPECT_EQ(agg, slurp(out2 / "aggregate.csv"));
  EXPECT_EQ(tr, slurp(out2 / "trials.csv"));
}

TEST_F(Cli, ExperimentConfigErrors)
{
  const auto cfg = dir_ / "c.json";
  std::ofstream(cfg) << R"({"sweep": {"snr": [20]}, "estimators": [{"kind": "fast2l", "colour": 1}]})";
  auto r = run("experiment --config " + cfg.string() + " --out " + (dir_ / "o").string());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("unknown key 'colour'"), std::string::npos);
  EXPECT_EQ(run("experiment --preset nope").code, 2);
}

TEST_F(Cli, ExperimentTrialFailuresExitThree)
{
  const auto cfg = dir_ / "c.json";
  std::ofstream(cfg) << R"({"sweep": {"snr": [20]}, "base": {"M": 20, "L": 40, "K": 3}, "trials": 1,
                            "estimators": [{"kind": "em3l", "epsilon": 0}]})";
  const auto out = dir_ / "res";
  const auto r = run("experiment --config " + cfg.string() + " --out " + out.string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("failed"), std::string::npos);
  EXPECT_NE(slurp(out / "trials.csv").find("failed: "), std::string::npos);
}
