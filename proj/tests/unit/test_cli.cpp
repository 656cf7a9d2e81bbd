#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cli_app.hpp"

namespace {

const std::string data = PPT_TEST_DATA;

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(std::initializer_list<std::string> args) {
  std::vector<std::string> store{"ppt_cli"};
  store.insert(store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : store) argv.push_back(s.data());
  std::ostringstream out, err;
  const int code = ppt::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("ppt_cli_test_" + name);
}

std::vector<nlohmann::json> json_lines(const std::string& text) {
  std::vector<nlohmann::json> v;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) v.push_back(nlohmann::json::parse(line));
  return v;
}

}  // namespace

TEST(Cli, SimulatePoissonIsDeterministic) {
  const auto a = run({"simulate", "poisson", "--rate", "3", "--T", "2", "--n", "20", "--seed", "9"});
  const auto b = run({"simulate", "poisson", "--rate", "3", "--T", "2", "--n", "20", "--seed", "9"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  const auto lines = json_lines(a.out);
  ASSERT_EQ(lines.size(), 20u);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    EXPECT_EQ(lines[i]["sample"], i);
    for (const auto& p : lines[i]["points"]) {
      EXPECT_GE(p[0].get<double>(), 0.0);
      EXPECT_LE(p[0].get<double>(), 2.0);
    }
  }
  const auto c = run({"simulate", "poisson", "--rate", "3", "--T", "2", "--n", "20", "--seed", "10"});
  EXPECT_NE(a.out, c.out);
}

TEST(Cli, SimulateMmppWritesPaths) {
  const auto r = run({"simulate", "mmpp", "--model", data + "/mmpp_two_state.json", "--T", "5", "--n", "3",
                      "--seed", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = json_lines(r.out);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_TRUE(lines[0]["path"].contains("jump_times"));
  EXPECT_EQ(r.out, run({"simulate", "mmpp", "--model", data + "/mmpp_two_state.json", "--T", "5", "--n", "3",
                        "--seed", "4"}).out);
}

TEST(Cli, MissingSeedIsUsageError) {
  EXPECT_EQ(run({"simulate", "poisson", "--rate", "1"}).code, 1);
  EXPECT_EQ(run({"estimate", "--coupled", "--rate-a", "1", "--rate-b", "2"}).code, 1);
  EXPECT_EQ(run({"bound", "resolvent", "--engine", data + "/engine_m1.json", "--h", "1.5", "--mc", "10"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"no-such-command"}).code, 1);
}

TEST(Cli, ModelDiagnosticsAreRepeatedVerbatim) {
  const auto r = run({"stationary", "--model", data + "/mmpp_bad_rows.json"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("RowSumNonzero(0)", 0), 0u) << r.err;
}

TEST(Cli, Stationary) {
  const auto r = run({"stationary", "--model", data + "/mmpp_two_state.json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j["pi"][0].get<double>(), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(j["mean_rate"].get<double>(), 2.0, 1e-12);
  EXPECT_NEAR(j["second_moment_rate"].get<double>(), 6.0, 1e-12);
}

TEST(Cli, BoundPoissonClosedForm) {
  const auto r = run({"bound", "poisson", "--h", "2", "--ref", "1", "--T", "1", "--variant", "derived"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j["value"].get<double>(), std::exp(0.5), 1e-12);
  EXPECT_EQ(run({"bound", "poisson", "--h", "2", "--C", "0"}).code, 1);
}

TEST(Cli, BoundMmppIsDeterministic) {
  const std::initializer_list<std::string> args{"bound", "mmpp", "--model", data + "/mmpp_two_state.json",
                                                "--lambda", "2", "--T", "1", "--paths", "2000", "--seed", "5"};
  const auto a = run(args), b = run(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_TRUE(nlohmann::json::parse(a.out).contains("std_error"));
}

TEST(Cli, BoundResolventExactAndMc) {
  const auto e = run({"bound", "resolvent", "--engine", data + "/engine_m2.json", "--h", "1,1"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NEAR(nlohmann::json::parse(e.out)["value"].get<double>(), 0.0, 1e-12);
  const auto m = run({"bound", "resolvent", "--engine", data + "/engine_m1.json", "--h", "1.5", "--mc", "200",
                      "--seed", "3"});
  ASSERT_EQ(m.code, 0) << m.err;
}

TEST(Cli, OptimizeReportsCandidates) {
  const auto r = run({"optimize", "--model", data + "/mmpp_two_state.json", "--T", "10"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j["argmin"].get<double>(), std::sqrt(6.0), 1e-6);
  EXPECT_TRUE(j["candidates"].contains("mean_rate"));
  EXPECT_TRUE(j["candidates"].contains("sqrt_second_moment"));
  EXPECT_TRUE(j.contains("asymptotic_bound"));
  EXPECT_EQ(run({"optimize", "--model", data + "/mmpp_two_state.json", "--T", "1", "--mode", "finite_T_mc"}).code,
            1);
}

TEST(Cli, EstimateFromSampleFiles) {
  const auto pa = temp_path("a.jsonl"), pb = temp_path("b.jsonl"), pc = temp_path("cost.csv");
  {
    std::ofstream(pa) << run({"simulate", "poisson", "--rate", "1", "--n", "60", "--seed", "1"}).out;
    std::ofstream(pb) << run({"simulate", "poisson", "--rate", "2", "--n", "60", "--seed", "2"}).out;
  }
  const std::initializer_list<std::string> args{"estimate", "--a", pa.string(), "--b", pb.string(), "--seed", "8",
                                                "--cost-out", pc.string()};
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["method"], "assignment");
  EXPECT_EQ(j["n"], 60);
  EXPECT_GT(j["estimate"].get<double>(), 0.0);
  EXPECT_EQ(run(args).out, r.out);
  std::ifstream cost(pc);
  EXPECT_EQ(ppt::read_cost_csv(cost).rows(), 60);
  std::filesystem::remove(pa);
  std::filesystem::remove(pb);
  std::filesystem::remove(pc);
}

TEST(Cli, EstimateCoupledAndExact) {
  const auto c = run({"estimate", "--coupled", "--rate-a", "1", "--rate-b", "1.5", "--n", "100", "--seed", "2"});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(nlohmann::json::parse(c.out)["n_bootstrap"], 50);
  EXPECT_EQ(run({"estimate", "--coupled", "--n", "10", "--seed", "2", "--bootstrap", "10"}).code, 1);

  const auto e = run({"estimate", "--engine", data + "/engine_m1.json", "--h", "1.5"});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto j = nlohmann::json::parse(e.out);
  EXPECT_EQ(j["method"], "exact");
  EXPECT_LE(j["gap"].get<double>(), 1e-9);
}

TEST(Cli, ValidateExitCodes) {
  const auto gen = temp_path("gen.mtx"), res = temp_path("res.csv");
  const auto r = run({"validate", "--engine", data + "/engine_m1.json", "--generator-out", gen.string(),
                      "--residuals-out", res.string()});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_TRUE(std::filesystem::exists(gen));
  std::ifstream in(res);
  std::string header;
  std::getline(in, header);
  EXPECT_NE(header.find("residual"), std::string::npos);
  std::filesystem::remove(gen);
  std::filesystem::remove(res);

  // K = 8 is far too coarse for weight 2: truncation breaks commutation even
  // on the interior, and the chaos suite is skipped.
  const auto small = temp_path("small.json");
  std::ofstream(small) << R"({"weights": [2.0], "K": 8})";
  const auto s = run({"validate", "--engine", small.string()});
  EXPECT_EQ(s.code, 2) << s.err;
  const auto j = nlohmann::json::parse(s.out);
  EXPECT_FALSE(j["ok"].get<bool>());
  std::map<std::string, std::string> status;
  for (const auto& suite : j["suites"]) status[suite["name"]] = suite["status"];
  EXPECT_EQ(status["commutation"], "fail");
  EXPECT_EQ(status["chaos_eigencheck"], "skipped");
  std::filesystem::remove(small);
  EXPECT_EQ(run({"validate", "--engine", data + "/missing.json"}).code, 1);
}
