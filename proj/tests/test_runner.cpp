#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "dpsearch/runner.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;

namespace {

std::string scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::create_directories(p);
  return p.string();
}

}  // namespace

TEST_CASE("accountant task emits the documented json fields") {
  dps::ExperimentConfig config;
  config.task = dps::AccountantTask{};  // defaults: the 60k/200/70/z=2 setting
  dps::RunReport report = dps::run(config);
  CHECK(report.metrics.contains("epsilon"));
  CHECK(report.metrics.contains("best_order"));
  CHECK(report.metrics.contains("steps"));
  CHECK(report.metrics.contains("q"));
  double eps = report.metrics["epsilon"].get<double>();
  CHECK(eps > 0.95);
  CHECK(eps < 1.16);
  CHECK(report.metrics["steps"].get<std::size_t>() == 21000);
}

TEST_CASE("accountant workflow modes") {
  dps::ExperimentConfig config;
  SUBCASE("pafs") {
    dps::AccountantTask task;
    task.mode = "pafs";
    task.eps_train = 0.1;
    task.unique_trainings = 2300;
    task.delta_prime = 1e-6;
    config.task = task;
    auto report = dps::run(config);
    CHECK(report.metrics["epsilon"].get<double>() ==
          doctest::Approx(49.398703963779).epsilon(1e-9));
  }
  SUBCASE("rs with an explicit eps prime") {
    dps::AccountantTask task;
    task.mode = "rs";
    task.eps_train = 2.11;
    task.eps_prime = 0.175;
    config.task = task;
    auto report = dps::run(config);
    CHECK(report.metrics["epsilon"].get<double>() == 3.51);
  }
  SUBCASE("mgrs fixture") {
    dps::AccountantTask task;
    task.mode = "mgrs";
    task.eps_train = 2.11;
    task.x = 0.075106;
    task.validation_size = 5000;
    task.delta_fail = 1e-4;
    task.gen_sizes = {40, 20, 10};
    config.task = task;
    auto report = dps::run(config);
    CHECK(report.metrics["epsilon"].get<double>() ==
          doctest::Approx(8.53).epsilon(0.005));
  }
  SUBCASE("unknown mode is a configuration error") {
    dps::AccountantTask task;
    task.mode = "bogus";
    config.task = task;
    CHECK_THROWS_AS(dps::run(config), std::invalid_argument);
  }
}

TEST_CASE("synth then dp train end to end") {
  dps::ExperimentConfig synth_config;
  synth_config.seed = 11;
  synth_config.out_dir = scratch_dir("dps_runner_synth");
  dps::SynthTask synth;
  synth.n = 400;
  synth.base_dim = 10;
  synth.expansion = 2;
  synth.name = "toy";
  synth_config.task = synth;
  dps::RunReport synth_report = dps::run(synth_config);
  REQUIRE(synth_report.artifacts.size() == 2);
  CHECK(fs::exists(synth_report.artifacts[0]));
  CHECK(fs::exists(synth_report.artifacts[1]));

  dps::ExperimentConfig train_config;
  train_config.seed = 12;
  train_config.out_dir = scratch_dir("dps_runner_train");
  dps::TrainTask train;
  train.data.manifest = synth_report.artifacts[1];
  train.layers = "8:relu,2:softmax";
  train.dp = true;
  train.noise_multiplier = 1.5;
  train.clip_l2 = 1.0;
  train.epochs = 2;
  train.batch = 40;
  train_config.task = train;
  dps::RunReport report = dps::run(train_config);

  CHECK(report.metrics.contains("epsilon"));
  CHECK(report.metrics.contains("train_metric"));
  CHECK(report.metrics.contains("test_metric"));
  CHECK(report.metrics["epsilon"].get<double>() > 0.0);
  CHECK(report.privacy["total_epsilon"] == report.metrics["epsilon"]);
  REQUIRE(report.artifacts.size() == 1);
  dps::Model model = dps::load_model(report.artifacts[0]);
  CHECK(model.arch.input_dim == 20);
}

TEST_CASE("privacy ledger totals recompute from the entries") {
  nlohmann::json privacy = {
      {"composition", "sequential"},
      {"entries",
       {{{"label", "a"}, {"epsilon", 0.5}, {"delta", 0.0}, {"training", true},
         {"counted", true}},
        {{"label", "b"}, {"epsilon", 0.25}, {"delta", 0.0}, {"training", false},
         {"counted", false}},
        {{"label", "c"}, {"epsilon", 1.0}, {"delta", 0.0}, {"training", true},
         {"counted", true}}}},
      {"unique_trainings", 2},
      {"total_epsilon", 1.5}};
  CHECK(dps::recompute_privacy_total(privacy) == 1.5);
  nlohmann::json advanced = {{"composition", "advanced"},
                             {"eps_per_training", 0.1},
                             {"delta_prime", 1e-6},
                             {"unique_trainings", 2300},
                             {"entries", nlohmann::json::array()},
                             {"total_epsilon", 0.0}};
  CHECK(dps::recompute_privacy_total(advanced) ==
        doctest::Approx(49.398703963779));
}

TEST_CASE("crossover task on the bundled fixtures") {
  std::string assets = oracle::assets_dir();
  dps::ExperimentConfig config;
  dps::CrossoverTask task;
  task.simple_csv = assets + "/curves/synthetic_simple.csv";
  task.complex_csv = assets + "/curves/synthetic_complex.csv";
  config.task = task;
  dps::RunReport report = dps::run(config);
  CHECK(report.metrics["kind"] == "value");
  CHECK(report.metrics["refined_epsilon"].get<double>() ==
        doctest::Approx(5.0).epsilon(1e-9));
}

TEST_CASE("curve emission round trips and uses the config hash") {
  std::string dir = scratch_dir("dps_curves");
  dps::AccuracyCurve single{{1.0}, {0.5}};
  auto paths = dps::emit_curves({{"one", single}}, dir, "cafebabe");
  REQUIRE(paths.size() == 1);
  CHECK(paths[0].find("cafebabe") != std::string::npos);
  std::ifstream in(paths[0]);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 2);  // header + single point

  dps::AccuracyCurve curve{{0.1, 1.0, 10.0}, {0.25, 0.5, 0.75}};
  auto more = dps::emit_curves({{"roundtrip", curve}}, dir, "cafebabe");
  dps::AccuracyCurve loaded = dps::load_curve_csv(more[0]);
  CHECK(loaded.epsilons == curve.epsilons);
  CHECK(loaded.metrics == curve.metrics);
}

TEST_CASE("reports are reproducible bit for bit") {
  auto run_once = [] {
    dps::ExperimentConfig config;
    config.seed = 99;
    config.out_dir = scratch_dir("dps_repro");
    dps::TrainTask train;
    train.data.synth_n = 300;
    train.data.synth_base_dim = 5;
    train.data.synth_expansion = 2;
    train.layers = "6:relu,2:softmax";
    train.dp = true;
    train.noise_multiplier = 1.0;
    train.epochs = 2;
    train.batch = 30;
    train.save_checkpoint = false;
    config.task = train;
    return dps::run(config);
  };
  dps::RunReport a = run_once();
  dps::RunReport b = run_once();
  CHECK(a.metrics.dump() == b.metrics.dump());
  CHECK(a.config_hash == b.config_hash);
}

TEST_CASE("fselect task methods") {
  dps::ExperimentConfig config;
  config.seed = 5;
  dps::FselectTask task;
  task.data.synth_n = 300;
  task.data.synth_base_dim = 4;
  task.data.synth_expansion = 2;
  SUBCASE("greedy returns k features and a merit value") {
    task.method = "cfs-greedy";
    task.k = 3;
    config.task = task;
    auto report = dps::run(config);
    CHECK(report.metrics["selected"].size() == 3);
    CHECK(report.metrics["merit"].get<double>() >= 0.0);
    CHECK(report.metrics["total_epsilon"].get<double>() == 0.0);
  }
  SUBCASE("dp-noised table carries a sequential budget") {
    task.method = "cfs-greedy";
    task.k = 2;
    task.eps_h = 0.05;
    config.task = task;
    auto report = dps::run(config);
    CHECK(report.privacy["composition"] == "sequential");
    CHECK(report.metrics["total_epsilon"].get<double>() > 0.0);
  }
  SUBCASE("random baseline") {
    task.method = "random";
    task.k = 2;
    config.task = task;
    auto report = dps::run(config);
    CHECK(report.metrics["selected"].size() == 2);
  }
  SUBCASE("pafs reports the advanced-composition budget") {
    task.method = "pafs";
    task.pafs_config.pop_k = 6;
    task.pafs_config.gens_l = 2;
    task.pafs_config.eps_per_training = 1.0;
    task.epochs = 1;
    task.batch = 60;
    config.task = task;
    auto report = dps::run(config);
    CHECK(report.privacy["composition"] == "advanced");
    std::size_t unique = report.metrics["unique_trainings"].get<std::size_t>();
    CHECK(unique >= 1);
    CHECK(report.metrics["total_epsilon"].get<double>() ==
          doctest::Approx(dps::advanced_composition(
              report.metrics["eps_per_training"].get<double>(), unique, 1e-6)));
  }
  SUBCASE("unknown method rejected") {
    task.method = "what";
    config.task = task;
    CHECK_THROWS_AS(dps::run(config), std::invalid_argument);
  }
}

TEST_CASE("asearch task with a small space") {
  std::string assets = oracle::assets_dir();
  dps::ExperimentConfig config;
  config.seed = 3;

  dps::AsearchTask task;
  task.data.synth_n = 240;
  task.data.synth_base_dim = 4;
  task.data.synth_expansion = 1;
  task.space_file = assets + "/spaces/fcn_rwt.space";
  task.method = "paas";
  task.paas_config.pop_k = 4;
  task.paas_config.gens_l = 2;
  task.epochs = 1;
  task.batch = 24;
  task.noise_multiplier = 1.0;
  config.task = task;

  dps::RunReport report = dps::run(config);
  CHECK(report.metrics["fitness_trace"].size() == 2);
  CHECK(report.metrics["unique_trainings"].get<std::size_t>() >= 1);
  CHECK(report.metrics["final"].contains("test_accuracy"));
  CHECK(report.privacy["composition"] == "advanced");
  CHECK(report.metrics["total_epsilon"].get<double>() > 0.0);
}

TEST_CASE("asearch compare mode reports both workflows") {
  std::string assets = oracle::assets_dir();
  dps::ExperimentConfig config;
  config.seed = 4;
  dps::AsearchTask task;
  task.data.synth_n = 240;
  task.data.synth_base_dim = 4;
  task.data.synth_expansion = 1;
  task.space_file = assets + "/spaces/fcn_rwt.space";
  task.method = "rs";
  task.rs_config.k = 3;
  task.epochs = 1;
  task.batch = 24;
  task.compare = true;
  config.task = task;
  dps::RunReport report = dps::run(config);
  CHECK(report.metrics["stw"]["final"].contains("epsilon"));
  CHECK(report.metrics["paw"]["final"].contains("epsilon"));
  // same final-training budget on both sides of the comparison
  CHECK(report.metrics["stw"]["final"]["epsilon"] ==
        report.metrics["paw"]["final"]["epsilon"]);
}

TEST_CASE("lemma task") {
  dps::ExperimentConfig config;
  dps::LemmaTask task;
  task.trials = 20000;
  config.task = task;
  auto report = dps::run(config);
  CHECK(report.metrics["closed_form"]["expected_error_full"].get<double>() ==
        doctest::Approx(3.0));
  CHECK(report.metrics["closed_form"]["lemma1_threshold"].get<double>() ==
        doctest::Approx(std::sqrt(2.0) - 1.0));
  CHECK(report.metrics["monte_carlo"]["full"]["mean"].get<double>() ==
        doctest::Approx(3.0).epsilon(0.1));
}

TEST_CASE("fitcurve task") {
  std::string dir = scratch_dir("dps_fitcurve");
  std::string path = dir + "/points.csv";
  {
    std::ofstream out(path);
    out.precision(17);
    out << "n,epsilon\n";
    for (double n : {5000.0, 20000.0, 80000.0, 320000.0}) {
      out << n << "," << std::log(1.1 + 8922.4 / n) << "\n";
    }
  }
  dps::ExperimentConfig config;
  config.task = dps::FitcurveTask{path};
  auto report = dps::run(config);
  CHECK(report.metrics["alpha"].get<double>() == doctest::Approx(1.1).epsilon(1e-9));
  CHECK(report.metrics["beta"].get<double>() ==
        doctest::Approx(8922.4).epsilon(1e-9));
}
