#include "dpsearch/runner.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "dpsearch/fselect.hpp"
#include "dpsearch/mechanisms.hpp"
#include "dpsearch/parallel.hpp"

namespace dps {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string hash_hex(const std::string& text) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(text)));
  return buf;
}

json data_source_echo(const DataSource& d) {
  if (!d.manifest.empty()) return {{"manifest", d.manifest}};
  return {{"synth_n", d.synth_n},
          {"synth_base_dim", d.synth_base_dim},
          {"synth_expansion", d.synth_expansion},
          {"train_frac", d.train_frac},
          {"val_frac", d.val_frac},
          {"test_frac", d.test_frac}};
}

Dataset load_data(const DataSource& d, std::uint64_t seed) {
  if (!d.manifest.empty()) return load_from_manifest(d.manifest);
  RngStream synth_rng = derive_stream(seed, "data/synth");
  Dataset ds = synthetic_sum_dataset(d.synth_n, d.synth_base_dim,
                                     d.synth_expansion, synth_rng);
  RngStream split_rng = derive_stream(seed, "data/split");
  return split_dataset(ds, {d.train_frac, d.val_frac, d.test_frac}, split_rng);
}

json ledger_entry_json(const std::string& label, double epsilon, double delta,
                       bool training, bool counted = true) {
  return {{"label", label},
          {"epsilon", epsilon},
          {"delta", delta},
          {"training", training},
          {"counted", counted}};
}

json privacy_none() {
  return {{"composition", "none"},
          {"entries", json::array()},
          {"unique_trainings", 0},
          {"total_epsilon", 0.0}};
}

json arch_to_json(const Architecture& arch) {
  json layers = json::array();
  for (const auto& l : arch.layers) {
    layers.push_back({{"units", l.units},
                      {"activation", activation_name(l.activation)},
                      {"dropout_after", l.dropout_after},
                      {"trainable", l.trainable}});
  }
  auto pc = param_count(arch);
  return {{"input_dim", arch.input_dim},
          {"task", arch.task == Task::Regression ? "regression" : "classification"},
          {"layers", layers},
          {"params_total", pc.total},
          {"params_trainable", pc.trainable}};
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  }
};

}  // namespace

json RunReport::to_json() const {
  return {{"config", config_echo},
          {"metrics", metrics},
          {"privacy", privacy},
          {"wall_clock_s", wall_clock_s},
          {"artifacts", artifacts},
          {"config_hash", config_hash}};
}

double recompute_privacy_total(const json& privacy) {
  const std::string rule = privacy.at("composition").get<std::string>();
  if (rule == "none") return 0.0;
  if (rule == "sequential") {
    double total = 0.0;
    for (const auto& e : privacy.at("entries")) {
      if (e.value("counted", true)) total += e.at("epsilon").get<double>();
    }
    return total;
  }
  if (rule == "advanced") {
    return advanced_composition(privacy.at("eps_per_training").get<double>(),
                                privacy.at("unique_trainings").get<std::size_t>(),
                                privacy.at("delta_prime").get<double>());
  }
  throw std::invalid_argument("recompute_privacy_total: unknown rule " + rule);
}

std::vector<std::string> emit_curves(
    const std::map<std::string, AccuracyCurve>& series,
    const std::string& out_dir, const std::string& config_hash) {
  if (series.empty()) throw std::invalid_argument("emit_curves: no series");
  fs::create_directories(out_dir);
  std::vector<std::string> paths;
  for (const auto& [name, curve] : series) {
    std::string path =
        (fs::path(out_dir) / ("curve_" + name + "_" + config_hash + ".csv"))
            .string();
    save_curve_csv(curve, path);
    paths.push_back(path);
  }
  return paths;
}

Dataset load_from_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("manifest: cannot open " + manifest_path);
  json j;
  in >> j;
  std::vector<ColumnKind> kinds;
  for (const auto& k : j.at("kinds")) {
    kinds.push_back(k.get<std::string>() == "categorical"
                        ? ColumnKind::Categorical
                        : ColumnKind::Numeric);
  }
  fs::path csv = j.at("csv").get<std::string>();
  if (csv.is_relative()) csv = fs::path(manifest_path).parent_path() / csv;
  Dataset ds = load_csv(csv.string(), kinds, j.at("label").get<std::size_t>());
  SplitFractions fr{j.at("splits").at("train").get<double>(),
                    j.at("splits").at("validation").get<double>(),
                    j.at("splits").at("test").get<double>()};
  RngStream rng = derive_stream(j.at("seed").get<std::uint64_t>(), "data/split");
  return split_dataset(ds, fr, rng);
}

void write_manifest(const std::string& manifest_path, const std::string& csv,
                    const std::vector<ColumnKind>& kinds, std::size_t label,
                    const SplitFractions& fractions, std::uint64_t seed) {
  json j;
  j["csv"] = csv;
  for (const auto& k : kinds) {
    j["kinds"].push_back(k == ColumnKind::Categorical ? "categorical" : "numeric");
  }
  j["label"] = label;
  j["splits"] = {{"train", fractions.train},
                 {"validation", fractions.validation},
                 {"test", fractions.test}};
  j["seed"] = seed;
  std::ofstream out(manifest_path);
  if (!out) throw std::runtime_error("manifest: cannot write " + manifest_path);
  out << j.dump(2);
}

Architecture parse_layers(const std::string& text, std::size_t input_dim,
                          bool regression, double dropout) {
  Architecture arch;
  arch.input_dim = input_dim;
  arch.task = regression ? Task::Regression : Task::Classification;
  std::istringstream in(text);
  std::string token;
  while (std::getline(in, token, ',')) {
    std::istringstream parts(token);
    std::string units, act, flag;
    std::getline(parts, units, ':');
    std::getline(parts, act, ':');
    std::getline(parts, flag, ':');
    if (units.empty() || act.empty()) {
      throw std::invalid_argument("parse_layers: bad layer token '" + token + "'");
    }
    LayerSpec spec;
    spec.units = std::stoul(units);
    spec.activation = activation_from_name(act);
    spec.trainable = flag != "frozen";
    arch.layers.push_back(spec);
  }
  if (arch.layers.empty()) throw std::invalid_argument("parse_layers: no layers");
  for (std::size_t i = 0; i + 1 < arch.layers.size(); ++i) {
    arch.layers[i].dropout_after = dropout;
  }
  arch.validate();
  return arch;
}

namespace {

TrainConfig make_train_config(double lr, std::size_t batch, std::size_t epochs,
                              double l2, bool dp, double z, double clip,
                              double delta, bool classification) {
  TrainConfig cfg;
  cfg.learning_rate = lr;
  cfg.batch = batch;
  cfg.epochs = epochs;
  cfg.l2_reg = l2;
  cfg.loss = classification ? Loss::CategoricalXent : Loss::Squared;
  cfg.delta = delta;
  if (dp) {
    cfg.clip_l2 = clip;
    cfg.noise_multiplier = z;
  }
  return cfg;
}

RunReport run_train(const TrainTask& task, const ExperimentConfig& config,
                    const std::string& hash) {
  Timer timer;
  RunReport report;
  Dataset ds = load_data(task.data, config.seed);
  Dataset train = ds.subset(Split::Train);
  Dataset val = ds.subset(Split::Validation);
  Dataset test = ds.subset(Split::Test);

  Architecture arch =
      parse_layers(task.layers, ds.cols(), task.regression, task.dropout);
  if (task.rwt_last_trainable) {
    arch = rwt_freeze(arch, *task.rwt_last_trainable);
  }

  double z = task.noise_multiplier;
  if (task.dp && task.target_epsilon) {
    DpSgdSetting setting{train.rows(), task.batch, task.epochs, 1.0,
                         task.clip_l2, task.delta};
    z = noise_multiplier_for_epsilon(setting, *task.target_epsilon);
  }
  TrainConfig cfg = make_train_config(task.learning_rate, task.batch,
                                      task.epochs, task.l2_reg, task.dp, z,
                                      task.clip_l2, task.delta,
                                      !task.regression);

  Model model = init_model(arch, derive_stream(config.seed, "train/init"));
  RngStream train_rng = derive_stream(config.seed, "train/sgd");
  double epsilon = 0.0;
  if (task.dp) {
    auto result = dpsgd_train(model, train, cfg, train_rng);
    model = std::move(result.model);
    epsilon = result.epsilon;
  } else {
    model = sgd_train(model, train, cfg, train_rng);
  }

  auto pc = param_count(arch);
  report.metrics = {{"architecture", arch_to_json(arch)},
                    {"train_metric", evaluate(model, train)},
                    {"epsilon", epsilon},
                    {"noise_multiplier", task.dp ? z : 0.0},
                    {"params_total", pc.total},
                    {"params_trainable", pc.trainable}};
  if (val.rows() > 0) report.metrics["val_metric"] = evaluate(model, val);
  if (test.rows() > 0) report.metrics["test_metric"] = evaluate(model, test);

  if (task.dp && std::isinf(epsilon)) {
    report.metrics["epsilon_note"] =
        "zero noise multiplier: the run carries no privacy guarantee";
  }
  if (task.dp) {
    report.privacy = {{"composition", "sequential"},
                      {"entries",
                       json::array({ledger_entry_json("final-training", epsilon,
                                                      task.delta, true)})},
                      {"unique_trainings", 1},
                      {"total_epsilon", epsilon}};
  } else {
    report.privacy = privacy_none();
  }

  if (task.save_checkpoint) {
    fs::create_directories(config.out_dir);
    std::string path =
        (fs::path(config.out_dir) / ("model_" + hash + ".json")).string();
    save_model(model, path, epsilon, task.delta, config.seed);
    report.artifacts.push_back(path);
  }
  report.wall_clock_s = timer.seconds();
  return report;
}

RunReport run_fselect(const FselectTask& task, const ExperimentConfig& config) {
  Timer timer;
  RunReport report;
  Dataset ds = load_data(task.data, config.seed);
  Dataset train = ds.subset(Split::Train);
  Dataset val = ds.subset(Split::Validation);

  FeatureSet candidates(ds.cols());
  for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i] = i;

  report.privacy = privacy_none();
  if (task.method == "random") {
    RngStream rng = derive_stream(config.seed, "fselect/random");
    FeatureSet picked = random_subset(candidates, task.k, rng);
    report.metrics = {{"method", "random"}, {"selected", picked}};
  } else if (task.method == "cfs-greedy" || task.method == "cfs-ga") {
    RngStream table_rng = derive_stream(config.seed, "fselect/suc");
    SucTable table =
        build_suc_table(train.rows() ? train : ds, task.eps_h, table_rng);
    FeatureSet picked;
    if (task.method == "cfs-greedy") {
      picked = cfs_greedy(candidates, task.k, table);
    } else {
      RngStream ga_rng = derive_stream(config.seed, "fselect/ga");
      picked = cfs_ga(candidates, task.ga, table, ga_rng);
    }
    report.metrics = {{"method", task.method},
                      {"selected", picked},
                      {"merit", merit(picked, table)},
                      {"dp_noised_table", table.dp_noised}};
    if (task.eps_h) {
      double total = *task.eps_h * static_cast<double>(table.entropy_queries);
      report.privacy = {
          {"composition", "sequential"},
          {"entries",
           json::array({ledger_entry_json(
               "suc-table(" + std::to_string(table.entropy_queries) +
                   " entropy queries x eps_h=" + std::to_string(*task.eps_h) + ")",
               total, 0.0, false)})},
          {"unique_trainings", 0},
          {"total_epsilon", total}};
    }
  } else if (task.method == "pafs") {
    if (train.rows() == 0 || val.rows() == 0) {
      throw std::invalid_argument("pafs: needs train and validation splits");
    }
    if (!ds.classification()) {
      throw std::invalid_argument("pafs: classification dataset required");
    }
    DpSgdSetting base{train.rows(), task.batch, task.epochs, 1.0, task.clip_l2,
                      task.delta};
    double z = noise_multiplier_for_epsilon(base, task.pafs_config.eps_per_training);
    base.noise_multiplier = z;
    double eps_actual = dpsgd_epsilon(base);
    PafsConfig pafs_cfg = task.pafs_config;
    pafs_cfg.eps_per_training = eps_actual;

    TrainConfig cfg = make_train_config(task.learning_rate, task.batch,
                                        task.epochs, 0.0, true, z, task.clip_l2,
                                        task.delta, ds.classification());
    std::uint64_t seed = config.seed;
    auto fitness = [&train, &val, cfg, seed](const FeatureSet& s) {
      std::string key;
      for (std::size_t f : s) key += std::to_string(f) + ",";
      Dataset tr = train.select_features(s);
      Dataset va = val.select_features(s);
      Architecture arch;
      arch.input_dim = tr.cols();
      arch.task = Task::Classification;
      arch.layers.push_back(
          {tr.num_classes() ? tr.num_classes() : 2, Activation::Softmax, 0.0, true});
      RngStream init = derive_stream(seed, "pafs/init/" + key);
      RngStream sgd = derive_stream(seed, "pafs/train/" + key);
      auto trained = dpsgd_train(init_model(arch, init), tr, cfg, sgd);
      return evaluate(trained.model, va);
    };
    RngStream rng = derive_stream(config.seed, "fselect/pafs");
    PafsResult result = pafs(candidates, pafs_cfg, fitness, rng);
    report.metrics = {{"method", "pafs"},
                      {"selected", result.features},
                      {"dp_accuracy", result.fitness},
                      {"unique_trainings", result.unique_trainings},
                      {"eps_per_training", eps_actual}};
    json entries = json::array();
    entries.push_back(ledger_entry_json(
        "pafs(" + std::to_string(result.unique_trainings) + " unique trainings)",
        result.total_epsilon, pafs_cfg.delta_prime, true));
    report.privacy = {{"composition", "advanced"},
                      {"eps_per_training", eps_actual},
                      {"delta_prime", pafs_cfg.delta_prime},
                      {"entries", entries},
                      {"unique_trainings", result.unique_trainings},
                      {"total_epsilon", result.total_epsilon}};
  } else {
    throw std::invalid_argument("fselect: unknown method " + task.method);
  }
  report.metrics["total_epsilon"] = report.privacy.at("total_epsilon");
  report.wall_clock_s = timer.seconds();
  report.metrics["runtime_s"] = report.wall_clock_s;
  return report;
}

struct SearchDataBundle {
  Dataset train;
  Dataset val;
  Dataset test;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
};

RunReport run_asearch(const AsearchTask& task, const ExperimentConfig& config) {
  Timer timer;
  RunReport report;
  Dataset ds = load_data(task.data, config.seed);
  SearchDataBundle bundle{ds.subset(Split::Train), ds.subset(Split::Validation),
                          ds.subset(Split::Test), ds.cols(),
                          ds.classification() ? ds.num_classes() : 0};
  if (bundle.train.rows() == 0 || bundle.val.rows() == 0) {
    throw std::invalid_argument("asearch: needs train and validation splits");
  }
  if (bundle.num_classes < 2) {
    throw std::invalid_argument("asearch: classification dataset required");
  }
  SearchSpace space = SearchSpace::load(task.space_file);

  std::vector<double> lr_grid = task.lr_grid;
  if (lr_grid.empty()) lr_grid = {task.learning_rate};

  auto make_oracle = [&](bool dp_fitness) {
    FitnessOracle oracle;
    oracle.validation_size = bundle.val.rows();
    oracle.eps_prime = task.eps_prime;
    oracle.delta_train = task.delta;
    if (dp_fitness) {
      DpSgdSetting setting{bundle.train.rows(), task.batch, task.epochs,
                           task.noise_multiplier, task.clip_l2, task.delta};
      oracle.eps_train = dpsgd_epsilon(setting);
    } else {
      oracle.eps_train = 0.0;
    }
    oracle.train_and_score = [&bundle, &space, &task, lr_grid, dp_fitness](
                                 const Individual& ind, RngStream rng) {
      Architecture arch = realize_fcn(space, ind.genes, bundle.input_dim,
                                      bundle.num_classes, task.dropout);
      double best = -kInf;
      for (std::size_t li = 0; li < lr_grid.size(); ++li) {
        TrainConfig cfg = make_train_config(
            lr_grid[li], task.batch, task.epochs, 0.0, dp_fitness,
            task.noise_multiplier, task.clip_l2, task.delta, true);
        Model model = init_model(arch, rng.child(li, 1));
        RngStream sgd = rng.child(li, 2);
        Model trained = dp_fitness
                            ? dpsgd_train(model, bundle.train, cfg, sgd).model
                            : sgd_train(model, bundle.train, cfg, sgd);
        best = std::max(best, evaluate(trained, bundle.val));
      }
      return best;
    };
    return oracle;
  };

  auto run_method = [&](bool dp_fitness, RngStream rng) {
    FitnessOracle oracle = make_oracle(dp_fitness);
    if (task.method == "paas") return paas(space, task.paas_config, oracle, rng);
    if (task.method == "rs") return rs_search(space, task.rs_config, oracle, rng);
    if (task.method == "mgrs") return mgrs(space, task.mgrs_config, oracle, rng);
    throw std::invalid_argument("asearch: unknown method " + task.method);
  };

  auto final_training = [&](const Individual& ind, const char* label) {
    Architecture arch = realize_fcn(space, ind.genes, bundle.input_dim,
                                    bundle.num_classes, task.dropout);
    TrainConfig cfg = make_train_config(task.learning_rate, task.batch,
                                        task.epochs, 0.0, true,
                                        task.noise_multiplier, task.clip_l2,
                                        task.delta, true);
    RngStream init = derive_stream(config.seed, std::string("asearch/final/init/") + label);
    RngStream sgd = derive_stream(config.seed, std::string("asearch/final/sgd/") + label);
    auto trained = dpsgd_train(init_model(arch, init), bundle.train, cfg, sgd);
    json out = {{"architecture", arch_to_json(arch)},
                {"epsilon", trained.epsilon},
                {"val_accuracy", evaluate(trained.model, bundle.val)}};
    if (bundle.test.rows() > 0) {
      out["test_accuracy"] = evaluate(trained.model, bundle.test);
    }
    return out;
  };

  auto fill_privacy = [&](const SearchResult& result, bool dp_fitness) {
    if (!dp_fitness) {
      json p = privacy_none();
      p["note"] =
          "search fitness used non-private training; the workflow as a whole "
          "is not covered by the reported budget";
      return p;
    }
    FitnessOracle oracle = make_oracle(true);
    json entries = json::array();
    std::size_t grid_mult = lr_grid.size();
    std::size_t c = result.unique_trainings * grid_mult;
    for (const auto& e : result.ledger.entries()) {
      entries.push_back(
          ledger_entry_json(e.label, e.epsilon, e.delta, e.training,
                            task.method != "paas" ? false : true));
    }
    if (task.method == "paas") {
      double total = advanced_composition(oracle.eps_train, c,
                                          task.paas_config.delta_prime);
      return json{{"composition", "advanced"},
                  {"eps_per_training", oracle.eps_train},
                  {"delta_prime", task.paas_config.delta_prime},
                  {"entries", entries},
                  {"unique_trainings", c},
                  {"total_epsilon", total}};
    }
    // rs / mgrs: candidate trainings are not summed (randomized-selection
    // argument); the budget is eps_train + 8 eps' per generation.
    std::vector<std::size_t> gen_sizes = task.method == "rs"
                                             ? std::vector<std::size_t>{task.rs_config.k}
                                             : task.mgrs_config.gen_sizes;
    double x = task.method == "rs" ? task.rs_config.x : task.mgrs_config.x;
    double delta_fail = task.method == "rs" ? task.rs_config.delta_fail
                                            : task.mgrs_config.delta_fail;
    double total = 0.0;
    for (std::size_t gi = 0; gi < gen_sizes.size(); ++gi) {
      double ep = x > 0.0 ? rs_epsilon_prime(x, oracle.validation_size,
                                             gen_sizes[gi], delta_fail)
                          : (std::isinf(task.eps_prime) ? 0.0 : task.eps_prime);
      double gen_budget = rs_total_budget(oracle.eps_train, ep);
      entries.push_back(ledger_entry_json(
          "generation" + std::to_string(gi) + "(k=" +
              std::to_string(gen_sizes[gi]) + ", eps'=" + std::to_string(ep) + ")",
          gen_budget, oracle.delta_train, false, true));
      total += gen_budget;
    }
    return json{{"composition", "sequential"},
                {"entries", entries},
                {"unique_trainings", c},
                {"total_epsilon", total}};
  };

  if (task.compare) {
    // STW: non-private fitness during search; PAW: DP fitness. Both final
    // models are trained with the same DP budget.
    SearchResult stw =
        run_method(false, derive_stream(config.seed, "asearch/stw"));
    SearchResult paw =
        run_method(true, derive_stream(config.seed, "asearch/paw"));
    json stw_final = final_training(stw.best, "stw");
    json paw_final = final_training(paw.best, "paw");
    double gap = paw_final.value("test_accuracy", 0.0) -
                 stw_final.value("test_accuracy", 0.0);
    report.metrics = {{"method", task.method},
                      {"mode", "compare"},
                      {"stw", {{"best_key", stw.best.key},
                               {"fitness_trace", stw.fitness_trace},
                               {"unique_trainings", stw.unique_trainings},
                               {"final", stw_final}}},
                      {"paw", {{"best_key", paw.best.key},
                               {"fitness_trace", paw.fitness_trace},
                               {"unique_trainings", paw.unique_trainings},
                               {"final", paw_final}}},
                      {"gap_dp_test_accuracy", gap}};
    report.privacy = fill_privacy(paw, true);
  } else {
    SearchResult result =
        run_method(task.dp_fitness, derive_stream(config.seed, "asearch/run"));
    json final = final_training(result.best, "single");
    report.metrics = {{"method", task.method},
                      {"best_key", result.best.key},
                      {"best_fitness", result.best_fitness},
                      {"fitness_trace", result.fitness_trace},
                      {"unique_trainings", result.unique_trainings},
                      {"final", final}};
    report.privacy = fill_privacy(result, task.dp_fitness);
  }
  report.metrics["total_epsilon"] = report.privacy.at("total_epsilon");
  report.wall_clock_s = timer.seconds();
  report.metrics["runtime_s"] = report.wall_clock_s;
  return report;
}

RunReport run_crossover(const CrossoverTask& task, const ExperimentConfig&) {
  Timer timer;
  RunReport report;
  AccuracyCurve simple = load_curve_csv(task.simple_csv);
  AccuracyCurve complex_curve = load_curve_csv(task.complex_csv);
  CrossoverResult r = crossover_epsilon(simple, complex_curve);
  std::string kind = r.kind == CrossoverResult::Kind::Value      ? "value"
                     : r.kind == CrossoverResult::Kind::Infinity ? "infinity"
                                                                 : "none";
  report.metrics = {{"kind", kind}, {"sign_changes", r.sign_changes}};
  if (r.kind == CrossoverResult::Kind::Value) {
    report.metrics["crossover_epsilon"] = r.grid_epsilon;
    report.metrics["refined_epsilon"] = r.refined_epsilon;
  }
  if (r.kind == CrossoverResult::Kind::None) {
    report.metrics["note"] =
        "the simple model never wins on this grid; the literal definition "
        "would return infinity only when it wins somewhere";
  }
  report.privacy = privacy_none();
  report.wall_clock_s = timer.seconds();
  return report;
}

RunReport run_lemma(const LemmaTask& task, const ExperimentConfig& config,
                    const std::string& hash) {
  Timer timer;
  RunReport report;
  LinearInstance inst{task.theta, task.x, task.y, task.sigma, task.sigma_prime};
  double full = expected_dp_error_full(inst);
  double reduced = expected_dp_error_reduced(inst);
  double threshold = lemma1_threshold(inst);
  RngStream rng = derive_stream(config.seed, "lemma/mc");
  McResult mc_full =
      mc_expected_error(NoiseModel::Full, inst, task.trials, rng.child(0));
  McResult mc_reduced =
      mc_expected_error(NoiseModel::Reduced, inst, task.trials, rng.child(1));
  report.metrics = {
      {"closed_form",
       {{"expected_error_full", full},
        {"expected_error_reduced", reduced},
        {"lemma1_threshold", threshold},
        {"clean_error", squared_error(task.theta, task.x, task.y)}}},
      {"monte_carlo",
       {{"trials", task.trials},
        {"full", {{"mean", mc_full.mean}, {"stderr", mc_full.stderr_of_mean}}},
        {"reduced",
         {{"mean", mc_reduced.mean}, {"stderr", mc_reduced.stderr_of_mean}}}}},
      {"privacy_cost_full_vs_clean",
       privacy_cost(full, squared_error(task.theta, task.x, task.y))}};
  report.privacy = privacy_none();

  if (task.emit_curves) {
    // Per-epsilon calibration of the output-perturbation noise; higher metric
    // is better, so curves carry the negated expected error.
    AccuracyCurve full_curve, reduced_curve;
    for (int i = 0; i < 25; ++i) {
      double eps = 0.05 * std::pow(2000.0, i / 24.0);  // 0.05 .. 100
      double sigma = gaussian_sigma(task.sensitivity, eps, task.delta);
      LinearInstance at_eps = inst;
      at_eps.sigma = sigma;
      at_eps.sigma_prime = sigma;
      full_curve.epsilons.push_back(eps);
      full_curve.metrics.push_back(-expected_dp_error_full(at_eps));
      reduced_curve.epsilons.push_back(eps);
      reduced_curve.metrics.push_back(-expected_dp_error_reduced(at_eps));
    }
    auto paths = emit_curves({{"lemma_full", full_curve},
                              {"lemma_reduced", reduced_curve}},
                             config.out_dir, hash);
    report.artifacts.insert(report.artifacts.end(), paths.begin(), paths.end());
  }
  report.wall_clock_s = timer.seconds();
  return report;
}

RunReport run_accountant(const AccountantTask& task, const ExperimentConfig&) {
  Timer timer;
  RunReport report;
  report.privacy = privacy_none();
  if (task.mode == "dpsgd") {
    auto r = dpsgd_epsilon_report(task.dpsgd);
    report.metrics = {{"epsilon", r.epsilon},
                      {"best_order", r.best_order},
                      {"steps", r.steps},
                      {"q", r.q}};
    if (r.epsilon > 1.0) {
      report.metrics["over_unit_epsilon"] = true;
    }
  } else if (task.mode == "pafs") {
    double total = pafs_total_budget(task.eps_train, task.unique_trainings,
                                     task.delta_prime);
    report.metrics = {{"epsilon", total},
                      {"unique_trainings", task.unique_trainings},
                      {"delta_prime", task.delta_prime}};
  } else if (task.mode == "rs") {
    double ep = task.eps_prime > 0.0
                    ? task.eps_prime
                    : rs_epsilon_prime(task.x, task.validation_size, task.k,
                                       task.delta_fail);
    report.metrics = {{"epsilon", rs_total_budget(task.eps_train, ep)},
                      {"eps_prime", ep}};
  } else if (task.mode == "mgrs") {
    std::vector<double> budgets;
    json gens = json::array();
    for (std::size_t k : task.gen_sizes) {
      double ep = rs_epsilon_prime(task.x, task.validation_size, k,
                                   task.delta_fail);
      budgets.push_back(rs_total_budget(task.eps_train, ep));
      gens.push_back({{"k", k}, {"eps_prime", ep}, {"budget", budgets.back()}});
    }
    report.metrics = {{"epsilon", mgrs_total_budget(budgets)},
                      {"generations", gens}};
  } else {
    throw std::invalid_argument("accountant: unknown mode " + task.mode);
  }
  report.wall_clock_s = timer.seconds();
  return report;
}

RunReport run_synth(const SynthTask& task, const ExperimentConfig& config) {
  Timer timer;
  RunReport report;
  RngStream rng = derive_stream(config.seed, "data/synth");
  Dataset ds = synthetic_sum_dataset(task.n, task.base_dim, task.expansion, rng);
  fs::create_directories(config.out_dir);
  std::string csv = (fs::path(config.out_dir) / (task.name + ".csv")).string();
  save_csv(ds, csv);
  std::vector<ColumnKind> kinds(ds.cols(), ColumnKind::Numeric);
  kinds.push_back(ColumnKind::Categorical);  // label column, written last
  std::string manifest =
      (fs::path(config.out_dir) / (task.name + ".manifest.json")).string();
  write_manifest(manifest, task.name + ".csv", kinds, ds.cols(),
                 {task.train_frac, task.val_frac, task.test_frac}, config.seed);
  report.metrics = {{"rows", ds.rows()},
                    {"features", ds.cols()},
                    {"base_dim", task.base_dim},
                    {"expansion", task.expansion}};
  report.artifacts = {csv, manifest};
  report.privacy = privacy_none();
  report.wall_clock_s = timer.seconds();
  return report;
}

RunReport run_fitcurve(const FitcurveTask& task, const ExperimentConfig&) {
  Timer timer;
  RunReport report;
  std::ifstream in(task.points_csv);
  if (!in) throw std::runtime_error("fitcurve: cannot open " + task.points_csv);
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::pair<double, double>> points;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string n, e;
    std::getline(cells, n, ',');
    std::getline(cells, e);
    points.emplace_back(std::stod(n), std::stod(e));
  }
  EpsVsNFit fit = fit_eps_vs_n(points);
  report.metrics = {{"alpha", fit.alpha},
                    {"beta", fit.beta},
                    {"residual", fit.residual},
                    {"alpha_clamped", fit.alpha_clamped},
                    {"points", points.size()}};
  report.privacy = privacy_none();
  report.wall_clock_s = timer.seconds();
  return report;
}

json config_echo_json(const ExperimentConfig& config) {
  json echo;
  echo["seed"] = config.seed;
  echo["workers"] = config.workers;
  echo["out_dir"] = config.out_dir;
  std::visit(
      [&](const auto& task) {
        using T = std::decay_t<decltype(task)>;
        if constexpr (std::is_same_v<T, TrainTask>) {
          echo["task"] = "train";
          echo["data"] = data_source_echo(task.data);
          echo["layers"] = task.layers;
          echo["regression"] = task.regression;
          echo["dropout"] = task.dropout;
          echo["learning_rate"] = task.learning_rate;
          echo["batch"] = task.batch;
          echo["epochs"] = task.epochs;
          echo["l2_reg"] = task.l2_reg;
          echo["dp"] = task.dp;
          if (task.dp) {
            echo["noise_multiplier"] = task.noise_multiplier;
            echo["clip_l2"] = task.clip_l2;
            echo["delta"] = task.delta;
          }
          if (task.rwt_last_trainable) {
            echo["rwt_last_trainable"] = *task.rwt_last_trainable;
          }
          if (task.target_epsilon) echo["target_epsilon"] = *task.target_epsilon;
        } else if constexpr (std::is_same_v<T, FselectTask>) {
          echo["task"] = "fselect";
          echo["data"] = data_source_echo(task.data);
          echo["method"] = task.method;
          echo["k"] = task.k;
          if (task.eps_h) echo["eps_h"] = *task.eps_h;
          if (task.method == "cfs-ga") {
            echo["ga"] = {{"pop_k", task.ga.pop_k},
                          {"gens_l", task.ga.gens_l},
                          {"alpha", task.ga.alpha},
                          {"p_co", task.ga.p_co},
                          {"p_mu", task.ga.p_mu}};
          }
          if (task.method == "pafs") {
            echo["pafs"] = {{"pop_k", task.pafs_config.pop_k},
                            {"gens_l", task.pafs_config.gens_l},
                            {"eps_per_training", task.pafs_config.eps_per_training},
                            {"delta_prime", task.pafs_config.delta_prime}};
          }
        } else if constexpr (std::is_same_v<T, AsearchTask>) {
          echo["task"] = "asearch";
          echo["data"] = data_source_echo(task.data);
          echo["space_file"] = task.space_file;
          echo["method"] = task.method;
          echo["eps_prime"] = task.eps_prime;
          echo["dp_fitness"] = task.dp_fitness;
          echo["compare"] = task.compare;
          echo["learning_rate"] = task.learning_rate;
          echo["batch"] = task.batch;
          echo["epochs"] = task.epochs;
          echo["noise_multiplier"] = task.noise_multiplier;
          echo["clip_l2"] = task.clip_l2;
          echo["delta"] = task.delta;
          if (!task.lr_grid.empty()) echo["lr_grid"] = task.lr_grid;
          if (task.method == "paas") {
            echo["paas"] = {{"pop_k", task.paas_config.pop_k},
                            {"gens_l", task.paas_config.gens_l},
                            {"alpha", task.paas_config.alpha},
                            {"beta", task.paas_config.beta},
                            {"p_mu", task.paas_config.p_mu}};
          } else if (task.method == "rs") {
            echo["rs"] = {{"k", task.rs_config.k}, {"x", task.rs_config.x}};
          } else {
            echo["mgrs"] = {{"gen_sizes", task.mgrs_config.gen_sizes},
                            {"p_mutate", task.mgrs_config.p_mutate},
                            {"x", task.mgrs_config.x}};
          }
        } else if constexpr (std::is_same_v<T, CrossoverTask>) {
          echo["task"] = "crossover";
          echo["simple_csv"] = task.simple_csv;
          echo["complex_csv"] = task.complex_csv;
        } else if constexpr (std::is_same_v<T, LemmaTask>) {
          echo["task"] = "lemma";
          echo["theta"] = task.theta;
          echo["x"] = task.x;
          echo["y"] = task.y;
          echo["sigma"] = task.sigma;
          echo["sigma_prime"] = task.sigma_prime;
          echo["trials"] = task.trials;
        } else if constexpr (std::is_same_v<T, AccountantTask>) {
          echo["task"] = "accountant";
          echo["mode"] = task.mode;
          if (task.mode == "dpsgd") {
            echo["n"] = task.dpsgd.n;
            echo["batch"] = task.dpsgd.batch;
            echo["epochs"] = task.dpsgd.epochs;
            echo["noise_multiplier"] = task.dpsgd.noise_multiplier;
            echo["delta"] = task.dpsgd.delta;
          }
        } else if constexpr (std::is_same_v<T, SynthTask>) {
          echo["task"] = "synth";
          echo["n"] = task.n;
          echo["base_dim"] = task.base_dim;
          echo["expansion"] = task.expansion;
          echo["name"] = task.name;
        } else if constexpr (std::is_same_v<T, FitcurveTask>) {
          echo["task"] = "fitcurve";
          echo["points_csv"] = task.points_csv;
        }
      },
      config.task);
  return echo;
}

}  // namespace

RunReport run(const ExperimentConfig& config) {
  if (config.workers > 0) par::set_workers(config.workers);
  json echo = config_echo_json(config);
  std::string hash = hash_hex(echo.dump());

  RunReport report = std::visit(
      [&](const auto& task) -> RunReport {
        using T = std::decay_t<decltype(task)>;
        if constexpr (std::is_same_v<T, TrainTask>) {
          return run_train(task, config, hash);
        } else if constexpr (std::is_same_v<T, FselectTask>) {
          return run_fselect(task, config);
        } else if constexpr (std::is_same_v<T, AsearchTask>) {
          return run_asearch(task, config);
        } else if constexpr (std::is_same_v<T, CrossoverTask>) {
          return run_crossover(task, config);
        } else if constexpr (std::is_same_v<T, LemmaTask>) {
          return run_lemma(task, config, hash);
        } else if constexpr (std::is_same_v<T, AccountantTask>) {
          return run_accountant(task, config);
        } else if constexpr (std::is_same_v<T, SynthTask>) {
          return run_synth(task, config);
        } else {
          return run_fitcurve(task, config);
        }
      },
      config.task);
  report.config_echo = std::move(echo);
  report.config_hash = hash;

  double recomputed = recompute_privacy_total(report.privacy);
  double stored = report.privacy.at("total_epsilon").get<double>();
  if (recomputed != stored) {
    throw std::logic_error("run: privacy ledger total does not recompute");
  }
  return report;
}

}  // namespace dps
