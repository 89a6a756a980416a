#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "wdl/model_io.hpp"

namespace fs = std::filesystem;
using wdl::cli::kExitInvalid;
using wdl::cli::kExitOk;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("wdl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "wdl");
    std::ostringstream out, err;
    const int code = wdl::cli::run(args, out, err);
    last_err_ = err.str();
    return code;
  }

  void simulate(const std::string& tag, const std::string& seed = "3") {
    ASSERT_EQ(run({"--quiet", "simulate", "--n-samples", "40", "--points", "60", "--seed", seed, "--out-x",
                   path(tag + "_x.csv"), "--out-q", path(tag + "_q.csv"), "--out-points", path(tag + "_p.csv")}),
              kExitOk)
        << last_err_;
  }

  std::vector<std::string> fit_args(const std::string& tag, const std::string& model) {
    return {"--quiet", "fit", "--x", path(tag + "_x.csv"), "--q", path(tag + "_q.csv"), "--model", path(model),
            "--max-iters", "5", "--eta", "0.3"};
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }

  static std::size_t line_count(const std::string& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
  }

  void write(const std::string& name, const std::string& text) {
    std::ofstream(path(name)) << text;
  }

  fs::path dir_;
  std::string last_err_;
};

}  // namespace

TEST_F(CliTest, SimulateWritesExpectedShapes) {
  simulate("a");
  EXPECT_EQ(line_count(path("a_x.csv")), 41u);
  EXPECT_EQ(line_count(path("a_q.csv")), 41u);
  EXPECT_EQ(line_count(path("a_p.csv")), 1u + 40u * 60u);
  const auto q = slurp(path("a_q.csv"));
  EXPECT_EQ(q.rfind("q_0.01,", 0), 0u);
}

TEST_F(CliTest, SimulateIsDeterministic) {
  simulate("a");
  simulate("b");
  simulate("c", "4");
  EXPECT_EQ(slurp(path("a_q.csv")), slurp(path("b_q.csv")));
  EXPECT_EQ(slurp(path("a_p.csv")), slurp(path("b_p.csv")));
  EXPECT_NE(slurp(path("a_q.csv")), slurp(path("c_q.csv")));
}

TEST_F(CliTest, FitPredictEvaluatePipeline) {
  simulate("a");
  auto args = fit_args("a", "m.json");
  args.insert(args.end(), {"--trace", path("trace.csv")});
  ASSERT_EQ(run(args), kExitOk) << last_err_;
  ASSERT_EQ(run({"predict", "--model", path("m.json"), "--x", path("a_x.csv"), "--out-q", path("pred.csv"),
                 "--out-params", path("params.csv")}),
            kExitOk)
      << last_err_;
  EXPECT_EQ(line_count(path("pred.csv")), 41u);
  EXPECT_EQ(line_count(path("params.csv")), 41u);
  ASSERT_EQ(run({"evaluate", "--observed", path("a_q.csv"), "--predicted", path("pred.csv"), "--out",
                 path("report.json"), "--out-csv", path("report.csv")}),
            kExitOk)
      << last_err_;
  const auto report = slurp(path("report.json"));
  EXPECT_NE(report.find("\"mean_loss\""), std::string::npos);
  EXPECT_NE(report.find("\"r_squared\""), std::string::npos);
  EXPECT_EQ(line_count(path("report.csv")), 41u);
  const auto trace = slurp(path("trace.csv"));
  EXPECT_NE(trace.find("\nfinal,"), std::string::npos);
}

TEST_F(CliTest, FitIsDeterministic) {
  simulate("a");
  ASSERT_EQ(run(fit_args("a", "m1.json")), kExitOk) << last_err_;
  ASSERT_EQ(run(fit_args("a", "m2.json")), kExitOk) << last_err_;
  EXPECT_EQ(slurp(path("m1.json")), slurp(path("m2.json")));
}

TEST_F(CliTest, FitFromRawPoints) {
  simulate("a");
  ASSERT_EQ(run({"--quiet", "fit", "--x", path("a_x.csv"), "--points", path("a_p.csv"), "--model", path("m.json"),
                 "--max-iters", "3"}),
            kExitOk)
      << last_err_;
  EXPECT_EQ(wdl::load_model(path("m.json")).input_dim(), 3u);
}

TEST_F(CliTest, ConfigFileFillsUnsetFlagsOnly) {
  simulate("a");
  write("fit.cfg", "# tuning\nk = 3\nmax-iters = 2\nzero-init = true\n");
  auto args = fit_args("a", "m.json");
  args.insert(args.end(), {"--config", path("fit.cfg")});
  ASSERT_EQ(run(args), kExitOk) << last_err_;
  auto model = wdl::load_model(path("m.json"));
  EXPECT_EQ(model.config().components, 3u);
  EXPECT_EQ(model.config().max_boost_iters, 5u);  // explicit flag wins
  EXPECT_TRUE(model.config().zero_init);

  write("bad.cfg", "k 3\n");
  args = fit_args("a", "m2.json");
  args.insert(args.end(), {"--config", path("bad.cfg")});
  EXPECT_EQ(run(args), kExitInvalid);
}

TEST_F(CliTest, PdpModes) {
  simulate("a");
  ASSERT_EQ(run(fit_args("a", "m.json")), kExitOk) << last_err_;
  const std::vector<std::string> base{"pdp", "--model", path("m.json"), "--x", path("a_x.csv"), "--feature", "2"};
  auto with = [&](std::vector<std::string> extra) {
    auto a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return run(a);
  };
  ASSERT_EQ(with({"--out", path("pdp.csv")}), kExitOk) << last_err_;
  EXPECT_EQ(line_count(path("pdp.csv")), 22u);
  ASSERT_EQ(with({"--values", "-0.5,0,0.5", "--mode", "params", "--out", path("par.csv")}), kExitOk) << last_err_;
  EXPECT_EQ(line_count(path("par.csv")), 4u);
  ASSERT_EQ(with({"--grid-points", "5", "--mode", "ice", "--out", path("ice.csv")}), kExitOk) << last_err_;
  EXPECT_GE(line_count(path("ice.csv")), 2u);
  EXPECT_EQ(with({"--rho", "1.5", "--out", path("x.csv")}), kExitInvalid);
  EXPECT_EQ(with({"--mode", "other", "--out", path("x.csv")}), kExitInvalid);
  EXPECT_EQ(run({"pdp", "--model", path("m.json"), "--x", path("a_x.csv"), "--feature", "4", "--out", path("x.csv")}),
            kExitInvalid);
}

TEST_F(CliTest, EvaluateReportsUndefinedRSquared) {
  write("obs.csv", "q_0.25,q_0.5,q_0.75\n1,2,3\n1,2,3\n");
  write("pred.csv", "q_0.25,q_0.5,q_0.75\n1,2,4\n0,2,3\n");
  EXPECT_EQ(run({"evaluate", "--observed", path("obs.csv"), "--predicted", path("pred.csv"), "--out",
                 path("r.json")}),
            kExitInvalid);
  const auto report = slurp(path("r.json"));
  EXPECT_NE(report.find("\"r_squared\": null"), std::string::npos) << report;
}

TEST_F(CliTest, RejectsInvalidArguments) {
  EXPECT_EQ(run({"simulate", "--omega", "-1", "--out-x", path("x.csv"), "--out-q", path("q.csv")}), kExitInvalid);
  EXPECT_EQ(run({"simulate", "--scenario", "other", "--out-x", path("x.csv"), "--out-q", path("q.csv")}),
            kExitInvalid);
  EXPECT_EQ(run({"frobnicate"}), kExitInvalid);
  EXPECT_EQ(run({"fit", "--x", path("missing.csv"), "--q", path("missing.csv"), "--model", path("m.json")}),
            kExitInvalid);
  simulate("a");
  auto args = fit_args("a", "m.json");
  args.insert(args.end(), {"--k", "0"});
  EXPECT_EQ(run(args), kExitInvalid);
  args = fit_args("a", "m.json");
  args.insert(args.end(), {"--pi-update", "newton"});
  EXPECT_EQ(run(args), kExitInvalid);
}

TEST_F(CliTest, RejectsMalformedInputFiles) {
  write("empty.csv", "");
  write("nan.csv", "x1,x2,x3\n0,nan,1\n");
  write("q.csv", "q_0.5\n1\n");
  EXPECT_EQ(run({"fit", "--x", path("empty.csv"), "--q", path("q.csv"), "--model", path("m.json")}), kExitInvalid);
  EXPECT_EQ(run({"fit", "--x", path("nan.csv"), "--q", path("q.csv"), "--model", path("m.json")}), kExitInvalid);
  write("model.json", "{\"schema_version\": 1");
  EXPECT_EQ(run({"predict", "--model", path("model.json"), "--x", path("nan.csv"), "--out-q", path("o.csv")}),
            kExitInvalid);
  simulate("a");
  ASSERT_EQ(run(fit_args("a", "m.json")), kExitOk);
  EXPECT_EQ(run({"predict", "--model", path("m.json"), "--x", path("a_x.csv"), "--out-q", path("o.csv")}), kExitOk);
  write("x2.csv", "x1,x2\n0,1\n");
  EXPECT_EQ(run({"predict", "--model", path("m.json"), "--x", path("x2.csv"), "--out-q", path("o.csv")}),
            kExitInvalid);
  auto broken = slurp(path("m.json"));
  broken.replace(broken.find("\"schema_version\": 1"), 19, "\"schema_version\": 9");
  write("v9.json", broken);
  EXPECT_EQ(run({"predict", "--model", path("v9.json"), "--x", path("a_x.csv"), "--out-q", path("o.csv")}),
            kExitInvalid);
  EXPECT_NE(last_err_.find("schema_version"), std::string::npos);
}

TEST_F(CliTest, HelpExitsCleanly) { EXPECT_EQ(run({"--help"}), kExitOk); }

namespace {

std::vector<std::vector<std::string>> read_cells(const std::string& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_F(CliTest, PredictOnEmptyInputWritesHeaderOnly) {
  simulate("a");
  ASSERT_EQ(run(fit_args("a", "m.json")), kExitOk) << last_err_;
  write("empty.csv", "");
  write("header.csv", "x1,x2,x3\n");
  for (const char* input : {"empty.csv", "header.csv"}) {
    ASSERT_EQ(run({"predict", "--model", path("m.json"), "--x", path(input), "--out-q", path("o.csv")}), kExitOk)
        << last_err_;
    EXPECT_EQ(line_count(path("o.csv")), 1u);
  }
}

TEST_F(CliTest, EvaluatingTrainingPredictionsReproducesFinalTraceLoss) {
  simulate("a");
  auto args = fit_args("a", "m.json");
  args.insert(args.end(), {"--trace", path("trace.csv")});
  ASSERT_EQ(run(args), kExitOk) << last_err_;
  ASSERT_EQ(run({"predict", "--model", path("m.json"), "--x", path("a_x.csv"), "--out-q", path("pred.csv")}), kExitOk);
  ASSERT_EQ(run({"evaluate", "--observed", path("a_q.csv"), "--predicted", path("pred.csv"), "--out",
                 path("r.json")}),
            kExitOk);
  const auto trace = read_cells(path("trace.csv"));
  ASSERT_EQ(trace.back().at(0), "final");
  const double final_loss = std::stod(trace.back().at(1));
  const auto report = slurp(path("r.json"));
  const auto pos = report.find("\"mean_loss\":");
  ASSERT_NE(pos, std::string::npos);
  const double mean_loss = std::stod(report.substr(pos + 12));
  EXPECT_NEAR(mean_loss, final_loss, 1e-9);
}

TEST_F(CliTest, EvaluateRejectsGridMismatch) {
  write("obs.csv", "q_0.25,q_0.5,q_0.75\n1,2,3\n2,3,4\n");
  write("pred.csv", "q_0.2,q_0.5,q_0.8\n1,2,3\n2,3,4\n");
  EXPECT_EQ(run({"evaluate", "--observed", path("obs.csv"), "--predicted", path("pred.csv"), "--out",
                 path("r.json")}),
            kExitInvalid);
}

TEST_F(CliTest, IdenticalPredictionsScoreOne) {
  simulate("a");
  ASSERT_EQ(run({"evaluate", "--observed", path("a_q.csv"), "--predicted", path("a_q.csv"), "--out",
                 path("r.json")}),
            kExitOk);
  EXPECT_NE(slurp(path("r.json")).find("\"r_squared\": 1.0"), std::string::npos);
}

TEST_F(CliTest, ConstantModelGivesConstantPdp) {
  std::string x = "x1,x2\n", q = "q_0.25,q_0.5,q_0.75\n";
  for (int i = 0; i < 40; ++i) {
    x += std::to_string(i % 7) + "," + std::to_string((i * 3) % 11) + "\n";
    q += "-1,0.5,2\n";
  }
  write("x.csv", x);
  write("q.csv", q);
  ASSERT_EQ(run({"--quiet", "fit", "--x", path("x.csv"), "--q", path("q.csv"), "--model", path("m.json"),
                 "--max-iters", "5"}),
            kExitOk)
      << last_err_;
  ASSERT_EQ(run({"pdp", "--model", path("m.json"), "--x", path("x.csv"), "--feature", "1", "--out", path("p.csv")}),
            kExitOk);
  const auto rows = read_cells(path("p.csv"));
  ASSERT_GT(rows.size(), 2u);
  for (std::size_t r = 2; r < rows.size(); ++r) EXPECT_EQ(rows[r][1], rows[1][1]);
}

TEST_F(CliTest, SingleRowPdpEqualsIce) {
  simulate("a");
  ASSERT_EQ(run(fit_args("a", "m.json")), kExitOk) << last_err_;
  const auto xrows = read_cells(path("a_x.csv"));
  write("one.csv", "x1,x2,x3\n" + xrows[1][0] + "," + xrows[1][1] + "," + xrows[1][2] + "\n");
  const std::vector<std::string> common{"--model", path("m.json"), "--x", path("one.csv"), "--feature", "2",
                                        "--values", "-1,-0.5,0,0.5,1"};
  auto pdp = std::vector<std::string>{"pdp"};
  pdp.insert(pdp.end(), common.begin(), common.end());
  auto ice = pdp;
  pdp.insert(pdp.end(), {"--out", path("pdp.csv")});
  ice.insert(ice.end(), {"--mode", "ice", "--out", path("ice.csv")});
  ASSERT_EQ(run(pdp), kExitOk) << last_err_;
  ASSERT_EQ(run(ice), kExitOk) << last_err_;
  const auto a = read_cells(path("pdp.csv"));
  const auto b = read_cells(path("ice.csv"));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t r = 1; r < a.size(); ++r) {
    EXPECT_EQ(b[r][0], "0");
    EXPECT_EQ(a[r][0], b[r][1]);
    EXPECT_EQ(a[r][1], b[r][2]);
  }
}
