// Command-line front end: bag generation, LLPFC training, evaluation, the
// numerical verification suite, and the proportion-matching baseline.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "llpfc/llpfc.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitAssumption = 4;
constexpr int kExitVerification = 5;

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::string cur;
  for (char ch : text + ",") {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(std::stod(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (double v : parse_double_list(text)) out.push_back(static_cast<int>(v));
  return out;
}

llpfc::ReductionMode parse_mode(const std::string& name) {
  if (name == "ideal") return llpfc::ReductionMode::Ideal;
  if (name == "uniform") return llpfc::ReductionMode::Uniform;
  if (name == "approx") return llpfc::ReductionMode::Approx;
  throw llpfc::ConfigError("unknown mode: " + name);
}

struct MakeBagsArgs {
  std::string dataset, out;
  int n_bags = 0, bag_size = 0;
  std::uint64_t seed = 0;
};

int cmd_make_bags(const MakeBagsArgs& args) {
  if (args.n_bags < 1 || args.bag_size < 1)
    throw llpfc::ConfigError("make-bags: --n-bags and --bag-size must be >= 1");
  llpfc::Dataset ds = llpfc::load_dataset_csv(args.dataset);
  llpfc::LLPInstance inst =
      llpfc::generate_bags(std::move(ds), args.bag_size, args.n_bags, args.seed);

  std::string canonical = "bag_size=" + std::to_string(args.bag_size) +
                          "\nn_bags=" + std::to_string(args.n_bags) +
                          "\nseed=" + std::to_string(args.seed) + "\n";
  const std::string hash = llpfc::fnv1a64_hex(canonical);
  llpfc::write_bags_jsonl(args.out, inst, hash);

  const llpfc::ProbVector sigma = llpfc::pooled_prior(inst);
  json summary{{"n_bags", args.n_bags},
               {"bag_size", args.bag_size},
               {"seed", args.seed},
               {"sigma_hat", sigma.values()},
               {"config_hash", hash},
               {"out", args.out}};
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string dataset, bags, out, model_out, test_dataset;
  std::string mode = "uniform";
  std::string weights = "uniform";
  std::string sigma;
  std::string hidden;
  int regroup_every = 20;
  int epochs = 100;
  int batch_size = 128;
  double lr = 0.01;
  std::string lr_decay_epochs;
  double lr_decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  bool no_eval = false;
};

llpfc::LLPInstance assemble_instance(const std::string& dataset_path,
                                     const std::string& bags_path) {
  llpfc::Dataset ds = llpfc::load_dataset_csv(dataset_path);
  llpfc::BagsFile bags = llpfc::read_bags_jsonl(bags_path);
  if (bags.C != ds.C)
    throw llpfc::DataError("bags file has C=" + std::to_string(bags.C) +
                           " but dataset implies C=" + std::to_string(ds.C));
  for (const llpfc::Bag& b : bags.bags)
    for (int idx : b.indices)
      if (idx < 0 || idx >= ds.n)
        throw llpfc::DataError("bags file references index " + std::to_string(idx) +
                               " outside the dataset");
  return llpfc::LLPInstance{std::move(ds), std::move(bags.bags), bags.seed};
}

int cmd_train(const TrainArgs& args) {
  llpfc::LLPInstance inst = assemble_instance(args.dataset, args.bags);

  llpfc::TrainConfig cfg;
  cfg.epochs = args.epochs;
  cfg.batch_size = args.batch_size;
  cfg.learning_rate = args.lr;
  if (!args.lr_decay_epochs.empty()) cfg.lr_decay_epochs = parse_int_list(args.lr_decay_epochs);
  cfg.lr_decay_factor = args.lr_decay_factor;
  cfg.momentum = args.momentum;
  cfg.weight_decay = args.weight_decay;
  cfg.regroup_every = args.regroup_every;
  cfg.mode = parse_mode(args.mode);
  if (args.weights == "uniform")
    cfg.weights = llpfc::WeightScheme::Uniform;
  else if (args.weights == "harmonic")
    cfg.weights = llpfc::WeightScheme::HarmonicMean;
  else
    throw llpfc::ConfigError("unknown weight scheme: " + args.weights);
  cfg.seed = args.seed;
  cfg.eval_each_epoch = !args.no_eval;
  if (!args.sigma.empty()) cfg.clean_sigma = llpfc::ProbVector(parse_double_list(args.sigma));
  if (cfg.mode == llpfc::ReductionMode::Ideal && !cfg.clean_sigma.has_value())
    throw llpfc::ConfigError("ideal mode requires --sigma with the clean prior");

  std::vector<int> widths{inst.dataset.d};
  if (!args.hidden.empty())
    for (int w : parse_int_list(args.hidden)) widths.push_back(w);
  widths.push_back(inst.dataset.C);
  cfg.model = llpfc::ClassifierSpec{widths};

  std::optional<llpfc::Dataset> test_ds;
  if (!args.test_dataset.empty()) test_ds = llpfc::load_dataset_csv(args.test_dataset);

  llpfc::TrainResult result =
      llpfc::train(inst, cfg, test_ds.has_value() ? &*test_ds : nullptr);
  llpfc::write_metrics_jsonl(args.out, result.log);
  if (!args.model_out.empty()) llpfc::save_classifier(args.model_out, result.classifier);

  json summary{{"config_hash", result.log.config_hash},
               {"seed", cfg.seed},
               {"epochs", cfg.epochs},
               {"assumption_retries", result.assumption_retries},
               {"final_objective", result.log.epochs.back().objective},
               {"metrics", args.out}};
  if (result.log.epochs.back().train_acc.has_value())
    summary["final_train_acc"] = *result.log.epochs.back().train_acc;
  if (result.log.epochs.back().test_acc.has_value())
    summary["final_test_acc"] = *result.log.epochs.back().test_acc;
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string model, dataset;
};

int cmd_eval(const EvalArgs& args) {
  const llpfc::Classifier clf = llpfc::load_classifier(args.model);
  const llpfc::Dataset ds = llpfc::load_dataset_csv(args.dataset);
  const double acc = llpfc::evaluate(clf, ds);
  json out{{"accuracy", acc}, {"n", ds.n}};
  std::cout << out.dump() << '\n';
  return kExitOk;
}

struct VerifyArgs {
  long trials = 10000;
  std::uint64_t seed = 7;
  double inject_norm_error = 0.0;
};

int cmd_verify(const VerifyArgs& args) {
  if (args.trials < 1) throw llpfc::ConfigError("verify: --trials must be >= 1");

  json report;
  bool ok = true;

  const llpfc::ClosedFormNormCheck norm_check =
      llpfc::check_closed_form_norm(args.inject_norm_error);
  report["closed_form_norm"] = {{"checks", norm_check.checks},
                                {"max_abs_error", norm_check.max_abs_error},
                                {"pass", norm_check.pass}};
  ok = ok && norm_check.pass;

  json calibration = json::array();
  for (int c : {2, 3, 10}) {
    llpfc::Rng rng(llpfc::mix_seed(args.seed, 0xca11ULL, static_cast<std::uint64_t>(c)));
    const llpfc::CalibrationReport r = llpfc::verify_inner_risk_inequality(c, args.trials, rng);
    calibration.push_back({{"C", r.C},
                           {"trials", r.trials},
                           {"violations", r.violations},
                           {"violations_calibration", r.violations_calibration},
                           {"violations_pinsker", r.violations_pinsker},
                           {"violations_norm_chain", r.violations_norm_chain},
                           {"violations_zero_one", r.violations_zero_one},
                           {"max_t_inv_one_norm", r.t_inv_one_norm},
                           {"bound_coeff", r.bound_coeff}});
    ok = ok && r.violations == 0;
  }
  report["calibration"] = calibration;

  const llpfc::LipschitzCheck lipschitz =
      llpfc::check_lipschitz_bound(std::min<long>(args.trials * 10, 100000), args.seed);
  report["lipschitz"] = {{"samples", lipschitz.samples},
                         {"max_gradient_norm", lipschitz.max_gradient_norm},
                         {"pass", lipschitz.pass}};
  ok = ok && lipschitz.pass;

  const llpfc::GradientCheck fc_grad = llpfc::check_fc_gradient(1000, args.seed);
  report["fc_gradient"] = {{"instances", fc_grad.instances},
                           {"max_relative_error", fc_grad.max_relative_error},
                           {"pass", fc_grad.pass}};
  ok = ok && fc_grad.pass;

  const llpfc::GradientCheck kl_grad = llpfc::check_kl_gradient(100, args.seed);
  report["kl_gradient"] = {{"instances", kl_grad.instances},
                           {"max_relative_error", kl_grad.max_relative_error},
                           {"pass", kl_grad.pass}};
  ok = ok && kl_grad.pass;

  const llpfc::UnbiasednessCheck unbiased =
      llpfc::check_unbiasedness(args.trials, args.seed);
  report["unbiasedness"] = {{"resamples", unbiased.resamples},
                            {"exact_risk", unbiased.exact_risk},
                            {"monte_carlo_mean", unbiased.monte_carlo_mean},
                            {"standard_error", unbiased.standard_error},
                            {"pass", unbiased.pass}};
  ok = ok && unbiased.pass;

  report["seed"] = args.seed;
  report["pass"] = ok;
  std::cout << report.dump(2) << '\n';
  return ok ? kExitOk : kExitVerification;
}

struct BaselineArgs {
  std::string dataset, bags, out, model_out, test_dataset, hidden;
  int epochs = 100;
  int batch_size = 2;  // bags per minibatch
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  bool no_eval = false;
};

int cmd_baseline_kl(const BaselineArgs& args) {
  llpfc::LLPInstance inst = assemble_instance(args.dataset, args.bags);

  llpfc::KLBaselineConfig cfg;
  cfg.bags_per_minibatch = args.batch_size;
  cfg.epochs = args.epochs;
  cfg.learning_rate = args.lr;
  cfg.momentum = args.momentum;
  cfg.weight_decay = args.weight_decay;
  cfg.seed = args.seed;
  cfg.eval_each_epoch = !args.no_eval;

  std::vector<int> widths{inst.dataset.d};
  if (!args.hidden.empty())
    for (int w : parse_int_list(args.hidden)) widths.push_back(w);
  widths.push_back(inst.dataset.C);
  cfg.model = llpfc::ClassifierSpec{widths};

  std::optional<llpfc::Dataset> test_ds;
  if (!args.test_dataset.empty()) test_ds = llpfc::load_dataset_csv(args.test_dataset);

  llpfc::TrainResult result =
      llpfc::train_kl(inst, cfg, test_ds.has_value() ? &*test_ds : nullptr);
  llpfc::write_metrics_jsonl(args.out, result.log);
  if (!args.model_out.empty()) llpfc::save_classifier(args.model_out, result.classifier);

  json summary{{"config_hash", result.log.config_hash},
               {"seed", cfg.seed},
               {"final_objective", result.log.epochs.back().objective},
               {"metrics", args.out}};
  if (result.log.epochs.back().test_acc.has_value())
    summary["final_test_acc"] = *result.log.epochs.back().test_acc;
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning from label proportions via forward-corrected label noise"};
  app.set_config("--config", "", "Config file: key=value lines with [subcommand] sections");
  app.require_subcommand(1);

  MakeBagsArgs mb;
  CLI::App* make_bags = app.add_subcommand("make-bags", "Generate bags from a labeled CSV");
  make_bags->add_option("--dataset", mb.dataset, "Dataset CSV")->required();
  make_bags->add_option("--out", mb.out, "Bags JSONL output")->required();
  make_bags->add_option("--n-bags", mb.n_bags, "Number of bags")->required();
  make_bags->add_option("--bag-size", mb.bag_size, "Points per bag")->required();
  make_bags->add_option("--seed", mb.seed, "RNG seed");

  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "Train with the LLPFC reduction");
  train->add_option("--dataset", tr.dataset, "Dataset CSV")->required();
  train->add_option("--bags", tr.bags, "Bags JSONL")->required();
  train->add_option("--out", tr.out, "Metrics JSONL output")->required();
  train->add_option("--model-out", tr.model_out, "Serialized classifier output");
  train->add_option("--test-dataset", tr.test_dataset, "Held-out CSV for test accuracy");
  train->add_option("--mode", tr.mode, "ideal|uniform|approx");
  train->add_option("--weights", tr.weights, "uniform|harmonic");
  train->add_option("--sigma", tr.sigma, "Clean prior (comma list, ideal mode)");
  train->add_option("--hidden", tr.hidden, "Hidden layer widths (comma list)");
  train->add_option("--regroup-every", tr.regroup_every, "Epochs between regroupings");
  train->add_option("--epochs", tr.epochs, "Training epochs");
  train->add_option("--batch-size", tr.batch_size, "Minibatch size in points");
  train->add_option("--lr", tr.lr, "Initial learning rate");
  train->add_option("--lr-decay-epochs", tr.lr_decay_epochs, "Decay boundaries (comma list)");
  train->add_option("--lr-decay-factor", tr.lr_decay_factor, "Decay factor");
  train->add_option("--momentum", tr.momentum, "SGD momentum");
  train->add_option("--weight-decay", tr.weight_decay, "Weight decay");
  train->add_option("--seed", tr.seed, "RNG seed");
  train->add_flag("--no-eval", tr.no_eval, "Skip per-epoch accuracy evaluation");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a saved classifier");
  eval_cmd->add_option("--model", ev.model, "Serialized classifier")->required();
  eval_cmd->add_option("--dataset", ev.dataset, "Labeled CSV")->required();

  VerifyArgs vf;
  CLI::App* verify = app.add_subcommand("verify", "Run the numerical verification suite");
  verify->add_option("--trials", vf.trials, "Monte-Carlo trials per check");
  verify->add_option("--seed", vf.seed, "RNG seed");
  verify
      ->add_option("--inject-norm-error", vf.inject_norm_error,
                   "Testing hook: perturb the closed-form norm reference")
      ->group("");

  BaselineArgs bl;
  CLI::App* baseline = app.add_subcommand("baseline-kl", "Train the KL proportion-matching baseline");
  baseline->add_option("--dataset", bl.dataset, "Dataset CSV")->required();
  baseline->add_option("--bags", bl.bags, "Bags JSONL")->required();
  baseline->add_option("--out", bl.out, "Metrics JSONL output")->required();
  baseline->add_option("--model-out", bl.model_out, "Serialized classifier output");
  baseline->add_option("--test-dataset", bl.test_dataset, "Held-out CSV for test accuracy");
  baseline->add_option("--hidden", bl.hidden, "Hidden layer widths (comma list)");
  baseline->add_option("--epochs", bl.epochs, "Training epochs");
  baseline->add_option("--batch-size", bl.batch_size, "Bags per minibatch");
  baseline->add_option("--lr", bl.lr, "Initial learning rate");
  baseline->add_option("--momentum", bl.momentum, "SGD momentum");
  baseline->add_option("--weight-decay", bl.weight_decay, "Weight decay");
  baseline->add_option("--seed", bl.seed, "RNG seed");
  baseline->add_flag("--no-eval", bl.no_eval, "Skip per-epoch accuracy evaluation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (make_bags->parsed()) return cmd_make_bags(mb);
    if (train->parsed()) return cmd_train(tr);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (verify->parsed()) return cmd_verify(vf);
    if (baseline->parsed()) return cmd_baseline_kl(bl);
    std::cerr << "no subcommand\n";
    return kExitConfig;
  } catch (const llpfc::AssumptionViolation& e) {
    std::cerr << "assumption violation: " << e.what() << '\n';
    return kExitAssumption;
  } catch (const llpfc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const llpfc::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const llpfc::ConvergenceFailure& e) {
    std::cerr << "convergence failure: " << e.what() << '\n';
    return kExitData;
  } catch (const llpfc::SingularMatrixError& e) {
    std::cerr << "singular matrix: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}
