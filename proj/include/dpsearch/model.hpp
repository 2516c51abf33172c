#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpsearch/dataset.hpp"
#include "dpsearch/linalg.hpp"
#include "dpsearch/rng.hpp"

namespace dps {

enum class Activation { ReLU, Sigmoid, TanH, Linear, Softmax };
enum class Task { Classification, Regression };
enum class Loss { Squared, Logistic, CategoricalXent };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct LayerSpec {
  std::size_t units = 0;
  Activation activation = Activation::ReLU;
  double dropout_after = 0.0;
  bool trainable = true;
};

// Fully-connected network description. The last layer is the output layer:
// Softmax with one unit per class for classification, a single Linear unit
// for regression.
struct Architecture {
  std::size_t input_dim = 0;
  std::vector<LayerSpec> layers;
  Task task = Task::Classification;

  void validate() const;
  std::size_t num_classes() const { return layers.back().units; }
};

struct ParamCount {
  std::size_t total = 0;
  std::size_t trainable = 0;
};

ParamCount param_count(const Architecture& arch);

// Marks all but the last `last_trainable` layers frozen.
Architecture rwt_freeze(Architecture arch, std::size_t last_trainable);

// Flat parameter vector; per layer the block is the row-major weight matrix
// (units x fan_in) followed by the bias (units).
struct Model {
  Architecture arch;
  Vector theta;

  std::size_t layer_offset(std::size_t layer) const;
  std::size_t layer_fan_in(std::size_t layer) const;
};

Model init_model(const Architecture& arch, RngStream rng);

// Class probabilities (classification) or a length-1 vector (regression).
// Dropout is inactive here.
Vector forward(const Model& model, const Vector& x);

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch = 32;
  std::size_t epochs = 10;
  Loss loss = Loss::CategoricalXent;
  std::optional<double> clip_l2;          // C
  std::optional<double> noise_multiplier; // z
  double l2_reg = 0.0;
  double delta = 1e-5;

  bool dp() const { return clip_l2.has_value() && noise_multiplier.has_value(); }
};

// One gradient per example, over trainable coordinates (frozen blocks stay
// zero). Dropout off. The mean equals the batch gradient.
std::vector<Vector> per_example_grads(const Model& model, const Matrix& x,
                                      const Vector& y, Loss loss);

// Shuffled mini-batch gradient descent; the final partial batch is dropped.
// Pass `epoch_snapshots` to collect theta after every epoch.
Model sgd_train(Model model, const Dataset& train, const TrainConfig& config,
                RngStream rng, std::vector<Vector>* epoch_snapshots = nullptr);

struct DpTrainResult {
  Model model;
  double epsilon = 0.0;  // +inf when the noise multiplier is zero
};

// DP-SGD: per-example clipping to L2 <= C, Gaussian noise with std z*C added
// to the clipped-gradient sum, then averaging. Epsilon comes from the
// accountant for (n, batch, epochs, z, delta).
DpTrainResult dpsgd_train(Model model, const Dataset& train,
                          const TrainConfig& config, RngStream rng,
                          std::vector<Vector>* epoch_snapshots = nullptr);

// Accuracy for classification (argmax, lowest class index on ties), MAE for
// regression.
double evaluate(const Model& model, const Dataset& ds);

double mean_loss(const Model& model, const Dataset& ds, Loss loss);

// Versioned JSON checkpoint: architecture + flat theta + training metadata.
void save_model(const Model& model, const std::string& path, double epsilon,
                double delta, std::uint64_t seed);
Model load_model(const std::string& path);

// Tuning grid used when a per-architecture learning-rate search is requested.
inline std::vector<double> default_learning_rate_grid() {
  return {0.0001, 0.001, 0.01, 0.05, 0.1, 0.2};
}

}  // namespace dps
