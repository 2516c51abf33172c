#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dpsearch/asearch.hpp"
#include "dpsearch/dataset.hpp"
#include "dpsearch/fselect.hpp"
#include "dpsearch/model.hpp"
#include "dpsearch/theory.hpp"
#include "json.hpp"

namespace dps {

// Dataset source: a manifest file, or inline synthetic-sum parameters.
struct DataSource {
  std::string manifest;  // empty when synthetic
  std::size_t synth_n = 5000;
  std::size_t synth_base_dim = 10;
  std::size_t synth_expansion = 1;
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;
};

struct TrainTask {
  DataSource data;
  std::string layers = "16:relu,2:softmax";  // units:act[:frozen], comma list
  bool regression = false;
  double dropout = 0.0;
  std::optional<std::size_t> rwt_last_trainable;
  double learning_rate = 0.1;
  std::size_t batch = 100;
  std::size_t epochs = 10;
  double l2_reg = 0.0;
  bool dp = false;
  double noise_multiplier = 2.0;
  double clip_l2 = 1.0;
  double delta = 1e-5;
  std::optional<double> target_epsilon;  // calibrates z when set
  bool save_checkpoint = true;
};

struct FselectTask {
  DataSource data;
  std::string method = "cfs-greedy";  // cfs-greedy | cfs-ga | pafs | random
  std::size_t k = 5;                  // target size (greedy / random)
  std::optional<double> eps_h;        // DP-noised SUC table when set
  CfsGaConfig ga;
  PafsConfig pafs_config;
  // PAFS fitness training
  double learning_rate = 0.1;
  std::size_t batch = 100;
  std::size_t epochs = 5;
  double clip_l2 = 1.0;
  double delta = 1e-5;
};

struct AsearchTask {
  DataSource data;
  std::string space_file;
  std::string method = "paas";  // paas | rs | mgrs
  PaasConfig paas_config;
  RsConfig rs_config;
  MgrsConfig mgrs_config;
  double eps_prime = 0.02;
  bool dp_fitness = true;   // PAW: candidates trained with DP-SGD
  bool compare = false;     // run both STW and PAW and report the gap
  double dropout = 0.2;
  double learning_rate = 0.1;
  std::size_t batch = 100;
  std::size_t epochs = 5;
  double noise_multiplier = 2.0;
  double clip_l2 = 1.0;
  double delta = 1e-5;
  std::vector<double> lr_grid;  // optional per-candidate tuning grid
};

struct CrossoverTask {
  std::string simple_csv;
  std::string complex_csv;
};

struct LemmaTask {
  Vector theta{1.0, 1.0};
  Vector x{1.0, 1.0};
  double y = 3.0;
  double sigma = 1.0;
  double sigma_prime = 1.0;
  std::size_t trials = 1000000;
  // When set, also emits (epsilon, -expected error) curves for the full and
  // reduced models with sigma calibrated per epsilon; the two CSVs feed the
  // crossover subcommand directly.
  bool emit_curves = false;
  double sensitivity = 1.0;
  double delta = 1e-5;
};

struct AccountantTask {
  std::string mode = "dpsgd";  // dpsgd | pafs | rs | mgrs
  DpSgdSetting dpsgd{60000, 200, 70, 2.0, 1.0, 1e-5};
  double eps_train = 0.1;
  std::size_t unique_trainings = 0;
  double delta_prime = 1e-6;
  double eps_prime = 0.0;          // rs: used directly when > 0
  double x = 0.0;                  // rs/mgrs: Eq-7 derivation when > 0
  std::size_t validation_size = 5000;
  std::size_t k = 400;
  std::vector<std::size_t> gen_sizes{40, 20, 10};
  double delta_fail = 1e-4;
};

struct SynthTask {
  std::size_t n = 5000;
  std::size_t base_dim = 10;
  std::size_t expansion = 1;
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;
  std::string name = "synth";
};

struct FitcurveTask {
  std::string points_csv;  // header n,epsilon
};

using TaskSpec = std::variant<TrainTask, FselectTask, AsearchTask,
                              CrossoverTask, LemmaTask, AccountantTask,
                              SynthTask, FitcurveTask>;

struct ExperimentConfig {
  std::uint64_t seed = 42;
  int workers = 0;  // 0 = all available
  std::string out_dir = "out";
  TaskSpec task;
};

struct RunReport {
  nlohmann::json config_echo;
  nlohmann::json metrics;
  nlohmann::json privacy;  // entries + composition rule + totals
  double wall_clock_s = 0.0;
  std::vector<std::string> artifacts;
  std::string config_hash;

  nlohmann::json to_json() const;
};

RunReport run(const ExperimentConfig& config);

// Recomputes the workflow epsilon from the privacy entry list; the report's
// total must match this exactly.
double recompute_privacy_total(const nlohmann::json& privacy);

// One CSV per named curve, file names derived from the config hash.
std::vector<std::string> emit_curves(
    const std::map<std::string, AccuracyCurve>& series,
    const std::string& out_dir, const std::string& config_hash);

// Dataset loading shared by tasks and tests.
Dataset load_from_manifest(const std::string& manifest_path);
void write_manifest(const std::string& manifest_path, const std::string& csv,
                    const std::vector<ColumnKind>& kinds, std::size_t label,
                    const SplitFractions& fractions, std::uint64_t seed);

// "units:act[:frozen],..." -> architecture (dropout applied after hidden
// layers).
Architecture parse_layers(const std::string& text, std::size_t input_dim,
                          bool regression, double dropout);

}  // namespace dps
