#include <cstdlib>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <sys/wait.h>

#include "llpfc/bag_model.hpp"
#include "llpfc/trainer.hpp"
#include "test_util.hpp"

namespace {

struct CliResult {
  int exit_code;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  testutil::TempFile out("cli_out.txt");
  const std::string cmd =
      std::string(LLPFC_CLI_PATH) + " " + args + " > " + out.path() + " 2>&1";
  const int status = std::system(cmd.c_str());
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return CliResult{code, testutil::slurp(out.path())};
}

/// Small labeled CSV: 2-D blobs, two classes.
void write_blob_csv(const std::string& path, int per_class, std::uint64_t seed) {
  llpfc::Rng rng(seed);
  llpfc::Dataset ds;
  ds.d = 2;
  ds.C = 2;
  ds.n = 2 * per_class;
  for (int i = 0; i < ds.n; ++i) {
    const int label = i % 2;
    ds.features.push_back((label == 0 ? -2.0 : 2.0) + 0.4 * rng.normal());
    ds.features.push_back(0.4 * rng.normal());
    ds.labels.push_back(label);
  }
  llpfc::write_dataset_csv(path, ds);
}

}  // namespace

TEST(CliMakeBags, WritesDeterministicFileAndSummary) {
  testutil::TempFile csv("train.csv"), bags1("bags1.jsonl"), bags2("bags2.jsonl");
  write_blob_csv(csv.path(), 64, 1);

  const CliResult r1 = run_cli("make-bags --dataset " + csv.path() + " --out " +
                               bags1.path() + " --n-bags 6 --bag-size 16 --seed 42");
  ASSERT_EQ(r1.exit_code, 0) << r1.output;
  const nlohmann::json summary = nlohmann::json::parse(r1.output);
  EXPECT_EQ(summary.at("n_bags").get<int>(), 6);
  EXPECT_TRUE(summary.contains("sigma_hat"));
  EXPECT_TRUE(summary.contains("config_hash"));

  const CliResult r2 = run_cli("make-bags --dataset " + csv.path() + " --out " +
                               bags2.path() + " --n-bags 6 --bag-size 16 --seed 42");
  ASSERT_EQ(r2.exit_code, 0);
  EXPECT_EQ(testutil::slurp(bags1.path()), testutil::slurp(bags2.path()));

  const llpfc::BagsFile file = llpfc::read_bags_jsonl(bags1.path());
  EXPECT_EQ(file.n_bags, 6);
  EXPECT_EQ(file.seed, 42u);
}

TEST(CliMakeBags, MalformedCsvNamesRow) {
  testutil::TempFile csv("bad.csv"), bags("bags.jsonl");
  testutil::spit(csv.path(), "1.0,2.0,0\nbroken,4.0,1\n");
  const CliResult r = run_cli("make-bags --dataset " + csv.path() + " --out " + bags.path() +
                              " --n-bags 1 --bag-size 1 --seed 0");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.output.find("row 2"), std::string::npos);
}

TEST(CliTrain, ProducesMetricsAndModelDeterministically) {
  testutil::TempFile csv("train.csv"), test_csv("test.csv"), bags("bags.jsonl");
  testutil::TempFile metrics1("m1.jsonl"), metrics2("m2.jsonl"), model("model.txt");
  write_blob_csv(csv.path(), 64, 2);
  write_blob_csv(test_csv.path(), 32, 3);
  ASSERT_EQ(run_cli("make-bags --dataset " + csv.path() + " --out " + bags.path() +
                    " --n-bags 6 --bag-size 16 --seed 1")
                .exit_code,
            0);

  const std::string train_args = "train --dataset " + csv.path() + " --bags " + bags.path() +
                                 " --test-dataset " + test_csv.path() +
                                 " --mode uniform --epochs 6 --batch-size 16 --lr 0.2 " +
                                 "--regroup-every 2 --seed 9 --model-out " + model.path();
  const CliResult r1 = run_cli(train_args + " --out " + metrics1.path());
  ASSERT_EQ(r1.exit_code, 0) << r1.output;
  const nlohmann::json summary = nlohmann::json::parse(r1.output);
  EXPECT_TRUE(summary.contains("config_hash"));
  EXPECT_TRUE(summary.contains("final_test_acc"));

  const CliResult r2 = run_cli(train_args + " --out " + metrics2.path());
  ASSERT_EQ(r2.exit_code, 0);
  EXPECT_EQ(testutil::slurp(metrics1.path()), testutil::slurp(metrics2.path()));

  // saved model evaluates to the same accuracy the metrics reported
  const CliResult ev = run_cli("eval --model " + model.path() + " --dataset " + test_csv.path());
  ASSERT_EQ(ev.exit_code, 0) << ev.output;
  const nlohmann::json ev_json = nlohmann::json::parse(ev.output);
  EXPECT_NEAR(ev_json.at("accuracy").get<double>(), summary.at("final_test_acc").get<double>(),
              1e-12);
}

TEST(CliTrain, IdealModeRequiresSigmaAndGammaTrue) {
  testutil::TempFile csv("train.csv"), bags("bags.jsonl"), metrics("m.jsonl");
  write_blob_csv(csv.path(), 32, 4);
  ASSERT_EQ(run_cli("make-bags --dataset " + csv.path() + " --out " + bags.path() +
                    " --n-bags 4 --bag-size 8 --seed 2")
                .exit_code,
            0);

  // no --sigma: config error
  const CliResult no_sigma = run_cli("train --dataset " + csv.path() + " --bags " + bags.path() +
                                     " --out " + metrics.path() + " --mode ideal --epochs 2");
  EXPECT_EQ(no_sigma.exit_code, 2);

  // strip gamma_true from the bags file: data error
  const llpfc::BagsFile file = llpfc::read_bags_jsonl(bags.path());
  std::string stripped;
  {
    std::istringstream in(testutil::slurp(bags.path()));
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (!first) {
        nlohmann::json rec = nlohmann::json::parse(line);
        rec["gamma_true"] = nullptr;
        line = rec.dump();
      }
      first = false;
      stripped += line + "\n";
    }
  }
  testutil::TempFile stripped_bags("stripped.jsonl");
  testutil::spit(stripped_bags.path(), stripped);
  const CliResult no_truth =
      run_cli("train --dataset " + csv.path() + " --bags " + stripped_bags.path() + " --out " +
              metrics.path() + " --mode ideal --sigma 0.5,0.5 --epochs 2");
  EXPECT_EQ(no_truth.exit_code, 3);
  (void)file;
}

TEST(CliTrain, ConfigFileWithFlagOverride) {
  testutil::TempFile csv("train.csv"), bags("bags.jsonl"), metrics("m.jsonl"), cfg("run.ini");
  write_blob_csv(csv.path(), 32, 5);
  ASSERT_EQ(run_cli("make-bags --dataset " + csv.path() + " --out " + bags.path() +
                    " --n-bags 4 --bag-size 8 --seed 3")
                .exit_code,
            0);
  testutil::spit(cfg.path(), "[train]\ndataset=" + csv.path() + "\nbags=" + bags.path() +
                                 "\nout=" + metrics.path() + "\nepochs=3\nseed=5\n");

  const CliResult from_cfg = run_cli("--config " + cfg.path() + " train");
  ASSERT_EQ(from_cfg.exit_code, 0) << from_cfg.output;
  EXPECT_EQ(nlohmann::json::parse(from_cfg.output).at("epochs").get<int>(), 3);

  const CliResult overridden = run_cli("--config " + cfg.path() + " train --epochs 2");
  ASSERT_EQ(overridden.exit_code, 0) << overridden.output;
  EXPECT_EQ(nlohmann::json::parse(overridden.output).at("epochs").get<int>(), 2);

  const CliResult bad_key = run_cli("--config " + cfg.path() + " eval");
  EXPECT_EQ(bad_key.exit_code, 2);  // sections for other subcommands do not leak
}

TEST(CliVerify, PassesAndFailsAsExpected) {
  const CliResult ok = run_cli("verify --trials 300 --seed 11");
  ASSERT_EQ(ok.exit_code, 0) << ok.output;
  const nlohmann::json report = nlohmann::json::parse(ok.output);
  EXPECT_TRUE(report.at("pass").get<bool>());

  const CliResult zero = run_cli("verify --trials 0");
  EXPECT_EQ(zero.exit_code, 2);

  const CliResult injected = run_cli("verify --trials 100 --inject-norm-error 1e-3");
  EXPECT_EQ(injected.exit_code, 5);
}

TEST(CliBaselineKl, RunsAndWritesMetrics) {
  testutil::TempFile csv("train.csv"), bags("bags.jsonl"), metrics("m.jsonl");
  write_blob_csv(csv.path(), 64, 6);
  ASSERT_EQ(run_cli("make-bags --dataset " + csv.path() + " --out " + bags.path() +
                    " --n-bags 6 --bag-size 16 --seed 4")
                .exit_code,
            0);
  const CliResult r = run_cli("baseline-kl --dataset " + csv.path() + " --bags " + bags.path() +
                              " --out " + metrics.path() + " --epochs 5 --lr 0.3 --seed 6");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const std::string text = testutil::slurp(metrics.path());
  EXPECT_NE(text.find("config_hash"), std::string::npos);
  EXPECT_NE(text.find("objective"), std::string::npos);
}

TEST(CliGeneral, UnknownSubcommandIsConfigError) {
  const CliResult r = run_cli("frobnicate");
  EXPECT_EQ(r.exit_code, 2);
}
