#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpsearch/runner.hpp"

namespace {

dps::Vector parse_reals(const std::string& text) {
  dps::Vector out;
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

void add_data_options(CLI::App* cmd, dps::DataSource& data) {
  cmd->add_option("--data", data.manifest, "dataset manifest path");
  cmd->add_option("--synth-n", data.synth_n, "synthetic rows");
  cmd->add_option("--base-dim", data.synth_base_dim, "synthetic base features");
  cmd->add_option("--expansion", data.synth_expansion, "synthetic expansion factor");
  cmd->add_option("--train-frac", data.train_frac, "train fraction");
  cmd->add_option("--val-frac", data.val_frac, "validation fraction");
  cmd->add_option("--test-frac", data.test_frac, "test fraction");
}

int finish(const dps::ExperimentConfig& config) {
  dps::RunReport report = dps::run(config);
  nlohmann::json j = report.to_json();
  std::filesystem::create_directories(config.out_dir);
  std::string path =
      (std::filesystem::path(config.out_dir) /
       ("report_" + report.config_hash + ".json"))
          .string();
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  j["artifacts"].push_back(path);
  std::cout << j.dump(2) << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"privacy-aware feature selection and architecture search toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  app.set_config("--config")->configurable(false);
  app.allow_config_extras(false);  // unknown config keys are rejected

  dps::ExperimentConfig config;
  app.add_option("--seed", config.seed, "master seed")->configurable(true);
  app.add_option("--workers", config.workers, "worker cap (0 = all cores)");
  app.add_option("--out", config.out_dir, "output directory");

  dps::TrainTask train;
  auto* train_cmd = app.add_subcommand("train", "train one model (SGD or DP-SGD)");
  add_data_options(train_cmd, train.data);
  train_cmd->add_option("--layers", train.layers, "units:act[:frozen] comma list");
  train_cmd->add_flag("--regression", train.regression, "regression task");
  train_cmd->add_option("--dropout", train.dropout, "dropout after hidden layers");
  std::size_t rwt = 0;
  auto* rwt_opt = train_cmd->add_option("--rwt-last", rwt,
                                        "train only the last N layers");
  train_cmd->add_option("--lr", train.learning_rate, "learning rate");
  train_cmd->add_option("--batch", train.batch, "batch size");
  train_cmd->add_option("--epochs", train.epochs, "epochs");
  train_cmd->add_option("--l2", train.l2_reg, "L2 regularization");
  train_cmd->add_flag("--dp", train.dp, "train with DP-SGD");
  train_cmd->add_option("--noise", train.noise_multiplier, "noise multiplier z");
  train_cmd->add_option("--clip", train.clip_l2, "clipping norm C");
  train_cmd->add_option("--delta", train.delta, "target delta");
  double target_eps = 0.0;
  auto* te_opt = train_cmd->add_option("--target-eps", target_eps,
                                       "calibrate z for this epsilon");

  dps::FselectTask fselect;
  auto* fselect_cmd = app.add_subcommand("fselect", "feature selection");
  add_data_options(fselect_cmd, fselect.data);
  fselect_cmd->add_option("--method", fselect.method,
                          "cfs-greedy | cfs-ga | pafs | random");
  fselect_cmd->add_option("--k", fselect.k, "target subset size");
  double eps_h = 0.0;
  auto* eps_h_opt = fselect_cmd->add_option(
      "--eps-h", eps_h, "per-entropy Laplace budget for a DP SUC table");
  fselect_cmd->add_option("--pop", fselect.ga.pop_k, "GA population size");
  fselect_cmd->add_option("--gens", fselect.ga.gens_l, "GA generations");
  fselect_cmd->add_option("--alpha", fselect.ga.alpha, "GA parent proportion");
  fselect_cmd->add_option("--p-co", fselect.ga.p_co, "crossover probability");
  fselect_cmd->add_option("--p-mu", fselect.ga.p_mu, "mutation probability");
  fselect_cmd->add_option("--eps", fselect.pafs_config.eps_per_training,
                          "PAFS per-training epsilon");
  fselect_cmd->add_option("--delta-prime", fselect.pafs_config.delta_prime,
                          "PAFS advanced-composition delta'");
  fselect_cmd->add_option("--pafs-pop", fselect.pafs_config.pop_k,
                          "PAFS population size");
  fselect_cmd->add_option("--pafs-gens", fselect.pafs_config.gens_l,
                          "PAFS generations");
  fselect_cmd->add_option("--lr", fselect.learning_rate, "fitness learning rate");
  fselect_cmd->add_option("--batch", fselect.batch, "fitness batch size");
  fselect_cmd->add_option("--epochs", fselect.epochs, "fitness epochs");

  dps::AsearchTask asearch;
  auto* asearch_cmd = app.add_subcommand("asearch", "architecture search");
  add_data_options(asearch_cmd, asearch.data);
  asearch_cmd->add_option("--space", asearch.space_file, "search space file")
      ->required();
  asearch_cmd->add_option("--method", asearch.method, "paas | rs | mgrs");
  asearch_cmd->add_option("--pop", asearch.paas_config.pop_k, "PAAS population");
  asearch_cmd->add_option("--gens", asearch.paas_config.gens_l, "PAAS generations");
  asearch_cmd->add_option("--alpha", asearch.paas_config.alpha, "top proportion");
  asearch_cmd->add_option("--beta", asearch.paas_config.beta, "random proportion");
  asearch_cmd->add_option("--p-mu", asearch.paas_config.p_mu, "mutation probability");
  asearch_cmd->add_option("--k", asearch.rs_config.k, "RS sample count");
  asearch_cmd->add_option("--gen-sizes", asearch.mgrs_config.gen_sizes,
                          "MGRS generation sizes");
  asearch_cmd->add_option("--p-mutate", asearch.mgrs_config.p_mutate,
                          "MGRS mutation probability");
  double search_x = 0.0;
  auto* x_opt = asearch_cmd->add_option(
      "--x", search_x, "acceptable loss proportion for the RS budget");
  asearch_cmd->add_option("--delta-fail", asearch.rs_config.delta_fail,
                          "RS budget failure probability");
  asearch_cmd->add_option("--eps-prime", asearch.eps_prime,
                          "fitness noise budget (inf disables)");
  bool sgd_fitness = false;
  asearch_cmd->add_flag("--sgd-fitness", sgd_fitness,
                        "rank candidates by non-private training (STW)");
  asearch_cmd->add_flag("--compare", asearch.compare, "run STW and PAW");
  asearch_cmd->add_option("--dropout", asearch.dropout, "dropout rate");
  asearch_cmd->add_option("--lr", asearch.learning_rate, "learning rate");
  asearch_cmd->add_option("--lr-grid", asearch.lr_grid,
                          "per-candidate learning-rate grid");
  bool tune_lr = false;
  asearch_cmd->add_flag("--tune-lr", tune_lr,
                        "use the default learning-rate tuning grid");
  asearch_cmd->add_option("--batch", asearch.batch, "batch size");
  asearch_cmd->add_option("--epochs", asearch.epochs, "epochs per training");
  asearch_cmd->add_option("--noise", asearch.noise_multiplier, "noise multiplier");
  asearch_cmd->add_option("--clip", asearch.clip_l2, "clipping norm");
  asearch_cmd->add_option("--delta", asearch.delta, "delta");

  dps::CrossoverTask crossover;
  auto* crossover_cmd =
      app.add_subcommand("crossover", "crossover epsilon from two curve CSVs");
  crossover_cmd->add_option("--simple", crossover.simple_csv, "simple model curve")
      ->required();
  crossover_cmd
      ->add_option("--complex", crossover.complex_csv, "complex model curve")
      ->required();

  dps::LemmaTask lemma;
  auto* lemma_cmd =
      app.add_subcommand("lemma", "linear-model DP error bounds + MC check");
  std::string theta_text = "1,1", x_text = "1,1";
  lemma_cmd->add_option("--theta", theta_text, "coefficients, comma separated");
  lemma_cmd->add_option("--x", x_text, "data point, comma separated");
  lemma_cmd->add_option("--y", lemma.y, "label");
  lemma_cmd->add_option("--sigma", lemma.sigma, "full-model noise std");
  lemma_cmd->add_option("--sigma-prime", lemma.sigma_prime, "reduced-model noise std");
  lemma_cmd->add_option("--trials", lemma.trials, "MC trials");
  lemma_cmd->add_flag("--emit-curves", lemma.emit_curves,
                      "emit per-epsilon error curves for both models");
  lemma_cmd->add_option("--sensitivity", lemma.sensitivity,
                        "L2 sensitivity for the per-epsilon calibration");
  lemma_cmd->add_option("--delta", lemma.delta, "delta for the calibration");

  dps::AccountantTask accountant;
  auto* accountant_cmd =
      app.add_subcommand("accountant", "privacy budget accounting");
  accountant_cmd->add_option("--mode", accountant.mode, "dpsgd | pafs | rs | mgrs");
  accountant_cmd->add_option("--n", accountant.dpsgd.n, "dataset size");
  accountant_cmd->add_option("--batch", accountant.dpsgd.batch, "batch size");
  accountant_cmd->add_option("--epochs", accountant.dpsgd.epochs, "epochs");
  accountant_cmd->add_option("--noise", accountant.dpsgd.noise_multiplier,
                             "noise multiplier z");
  accountant_cmd->add_option("--delta", accountant.dpsgd.delta, "delta");
  accountant_cmd->add_option("--eps-train", accountant.eps_train,
                             "per-training epsilon");
  accountant_cmd->add_option("--trainings", accountant.unique_trainings,
                             "unique training count");
  accountant_cmd->add_option("--delta-prime", accountant.delta_prime, "delta'");
  accountant_cmd->add_option("--eps-prime", accountant.eps_prime,
                             "selection budget eps'");
  accountant_cmd->add_option("--x", accountant.x, "acceptable loss proportion");
  accountant_cmd->add_option("--vsize", accountant.validation_size,
                             "validation size");
  accountant_cmd->add_option("--k", accountant.k, "candidates evaluated");
  accountant_cmd->add_option("--gen-sizes", accountant.gen_sizes,
                             "MGRS generation sizes");
  accountant_cmd->add_option("--delta-fail", accountant.delta_fail,
                             "failure probability bound");

  dps::SynthTask synth;
  auto* synth_cmd =
      app.add_subcommand("synth", "generate the summation dataset + manifest");
  synth_cmd->add_option("--n", synth.n, "rows");
  synth_cmd->add_option("--base-dim", synth.base_dim, "base features");
  synth_cmd->add_option("--expansion", synth.expansion, "expansion factor");
  synth_cmd->add_option("--train-frac", synth.train_frac, "train fraction");
  synth_cmd->add_option("--val-frac", synth.val_frac, "validation fraction");
  synth_cmd->add_option("--test-frac", synth.test_frac, "test fraction");
  synth_cmd->add_option("--name", synth.name, "output base name");

  dps::FitcurveTask fitcurve;
  auto* fitcurve_cmd =
      app.add_subcommand("fitcurve", "fit eps = ln(alpha + beta/n)");
  fitcurve_cmd->add_option("--points", fitcurve.points_csv, "CSV with n,epsilon")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) {
      if (*rwt_opt) train.rwt_last_trainable = rwt;
      if (*te_opt) train.target_epsilon = target_eps;
      config.task = train;
    } else if (fselect_cmd->parsed()) {
      if (*eps_h_opt) fselect.eps_h = eps_h;
      config.task = fselect;
    } else if (asearch_cmd->parsed()) {
      asearch.dp_fitness = !sgd_fitness;
      if (tune_lr && asearch.lr_grid.empty()) {
        asearch.lr_grid = dps::default_learning_rate_grid();
      }
      if (*x_opt) {
        asearch.rs_config.x = search_x;
        asearch.mgrs_config.x = search_x;
      }
      config.task = asearch;
    } else if (crossover_cmd->parsed()) {
      config.task = crossover;
    } else if (lemma_cmd->parsed()) {
      lemma.theta = parse_reals(theta_text);
      lemma.x = parse_reals(x_text);
      config.task = lemma;
    } else if (accountant_cmd->parsed()) {
      config.task = accountant;
    } else if (synth_cmd->parsed()) {
      config.task = synth;
    } else if (fitcurve_cmd->parsed()) {
      config.task = fitcurve;
    }
  } catch (const std::exception& e) {
    std::cerr << "configuration error: " << e.what() << std::endl;
    return 2;
  }

  try {
    return finish(config);
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  }
}
