#include "dpsearch/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dpsearch/accountant.hpp"
#include "json.hpp"

namespace dps {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::TanH: return "tanh";
    case Activation::Linear: return "linear";
    case Activation::Softmax: return "softmax";
  }
  throw std::logic_error("activation_name: bad enum");
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "tanh") return Activation::TanH;
  if (name == "linear") return Activation::Linear;
  if (name == "softmax") return Activation::Softmax;
  throw std::invalid_argument("unknown activation: " + name);
}

void Architecture::validate() const {
  if (input_dim == 0) throw std::invalid_argument("Architecture: input_dim == 0");
  if (layers.empty()) throw std::invalid_argument("Architecture: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.units == 0) throw std::invalid_argument("Architecture: empty layer");
    if (l.dropout_after < 0.0 || l.dropout_after >= 1.0) {
      throw std::invalid_argument("Architecture: dropout outside [0,1)");
    }
    if (l.activation == Activation::Softmax && i + 1 != layers.size()) {
      throw std::invalid_argument("Architecture: softmax only on last layer");
    }
  }
  const auto& last = layers.back();
  if (task == Task::Classification) {
    if (last.activation != Activation::Softmax) {
      throw std::invalid_argument("Architecture: classification needs softmax output");
    }
  } else {
    if (last.units != 1 || last.activation != Activation::Linear) {
      throw std::invalid_argument("Architecture: regression needs one linear output unit");
    }
  }
}

ParamCount param_count(const Architecture& arch) {
  arch.validate();
  ParamCount pc;
  std::size_t fan_in = arch.input_dim;
  for (const auto& layer : arch.layers) {
    std::size_t p = fan_in * layer.units + layer.units;
    pc.total += p;
    if (layer.trainable) pc.trainable += p;
    fan_in = layer.units;
  }
  return pc;
}

Architecture rwt_freeze(Architecture arch, std::size_t last_trainable) {
  if (last_trainable < 1 || last_trainable > arch.layers.size()) {
    throw std::invalid_argument("rwt_freeze: last_trainable out of range");
  }
  std::size_t frozen = arch.layers.size() - last_trainable;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    arch.layers[i].trainable = i >= frozen;
  }
  return arch;
}

std::size_t Model::layer_offset(std::size_t layer) const {
  std::size_t off = 0;
  std::size_t fan_in = arch.input_dim;
  for (std::size_t i = 0; i < layer; ++i) {
    off += fan_in * arch.layers[i].units + arch.layers[i].units;
    fan_in = arch.layers[i].units;
  }
  return off;
}

std::size_t Model::layer_fan_in(std::size_t layer) const {
  return layer == 0 ? arch.input_dim : arch.layers[layer - 1].units;
}

Model init_model(const Architecture& arch, RngStream rng) {
  arch.validate();
  Model model{arch, Vector(param_count(arch).total, 0.0)};
  std::size_t off = 0;
  std::size_t fan_in = arch.input_dim;
  for (const auto& layer : arch.layers) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in + layer.units));
    for (std::size_t i = 0; i < fan_in * layer.units; ++i) {
      model.theta[off + i] = (2.0 * rng.next_double() - 1.0) * bound;
    }
    // biases stay zero
    off += fan_in * layer.units + layer.units;
    fan_in = layer.units;
  }
  return model;
}

namespace {

void apply_activation(Activation act, const Vector& z, Vector& a) {
  switch (act) {
    case Activation::ReLU:
      for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] > 0.0 ? z[i] : 0.0;
      break;
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < z.size(); ++i) a[i] = 1.0 / (1.0 + std::exp(-z[i]));
      break;
    case Activation::TanH:
      for (std::size_t i = 0; i < z.size(); ++i) a[i] = std::tanh(z[i]);
      break;
    case Activation::Linear:
      a = z;
      break;
    case Activation::Softmax: {
      double zmax = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        a[i] = std::exp(z[i] - zmax);
        sum += a[i];
      }
      for (double& v : a) v /= sum;
      break;
    }
  }
}

// derivative through the activation, given pre-activation z and output a
double activation_grad(Activation act, double z, double a) {
  switch (act) {
    case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Sigmoid: return a * (1.0 - a);
    case Activation::TanH: return 1.0 - a * a;
    case Activation::Linear: return 1.0;
    case Activation::Softmax:
      throw std::logic_error("softmax gradient handled with the loss");
  }
  return 0.0;
}

struct Workspace {
  std::vector<Vector> pre;      // z per layer
  std::vector<Vector> act;      // raw post-activation
  std::vector<Vector> dropped;  // post-dropout output fed to the next layer
  std::vector<Vector> mask;     // dropout mask per layer; empty when off
  std::vector<Vector> delta;    // backprop buffers

  void resize(const Architecture& arch) {
    pre.resize(arch.layers.size());
    act.resize(arch.layers.size());
    dropped.resize(arch.layers.size());
    mask.resize(arch.layers.size());
    delta.resize(arch.layers.size());
    for (std::size_t l = 0; l < arch.layers.size(); ++l) {
      pre[l].resize(arch.layers[l].units);
      act[l].resize(arch.layers[l].units);
      delta[l].resize(arch.layers[l].units);
    }
  }

  // layer output as seen by the next layer
  const Vector& out(std::size_t l) const {
    return mask[l].empty() ? act[l] : dropped[l];
  }
};

void forward_into(const Model& model, const double* x, Workspace& ws,
                  bool training, RngStream* dropout_rng) {
  const auto& arch = model.arch;
  std::size_t off = 0;
  std::size_t fan_in = arch.input_dim;
  const double* input = x;
  for (std::size_t l = 0; l < arch.layers.size(); ++l) {
    const auto& layer = arch.layers[l];
    const double* w = model.theta.data() + off;
    const double* b = w + fan_in * layer.units;
    for (std::size_t u = 0; u < layer.units; ++u) {
      const double* row = w + u * fan_in;
      double s = b[u];
      for (std::size_t j = 0; j < fan_in; ++j) s += row[j] * input[j];
      ws.pre[l][u] = s;
    }
    apply_activation(layer.activation, ws.pre[l], ws.act[l]);
    if (training && layer.dropout_after > 0.0) {
      ws.mask[l].resize(layer.units);
      ws.dropped[l].resize(layer.units);
      double keep = 1.0 - layer.dropout_after;
      for (std::size_t u = 0; u < layer.units; ++u) {
        double m = dropout_rng->next_double() < keep ? 1.0 / keep : 0.0;
        ws.mask[l][u] = m;
        ws.dropped[l][u] = ws.act[l][u] * m;
      }
    } else {
      ws.mask[l].clear();
    }
    input = ws.out(l).data();
    off += fan_in * layer.units + layer.units;
    fan_in = layer.units;
  }
}

void check_loss_arch(const Architecture& arch, Loss loss) {
  if (arch.task == Task::Regression && loss != Loss::Squared) {
    throw std::invalid_argument("regression training requires squared loss");
  }
  if (arch.task == Task::Classification && loss == Loss::Squared) {
    throw std::invalid_argument("classification training requires a cross-entropy loss");
  }
}

// Gradient of the per-example loss over trainable coordinates, written into
// grad (assumed zeroed at trainable blocks). Frozen prefix layers are skipped:
// nothing upstream of the first trainable layer is needed.
void example_grad_into(const Model& model, const double* x, double y,
                       Workspace& ws, bool training, RngStream* dropout_rng,
                       Vector& grad) {
  const auto& arch = model.arch;
  forward_into(model, x, ws, training, dropout_rng);
  std::size_t last = arch.layers.size() - 1;

  // output delta = dL/dz for the last layer
  const auto& out_layer = arch.layers[last];
  if (arch.task == Task::Classification) {
    auto target = static_cast<std::size_t>(y);
    if (target >= out_layer.units) {
      throw std::invalid_argument("example_grad: label out of range");
    }
    for (std::size_t u = 0; u < out_layer.units; ++u) {
      ws.delta[last][u] = ws.act[last][u] - (u == target ? 1.0 : 0.0);
    }
  } else {
    ws.delta[last][0] = 2.0 * (ws.act[last][0] - y);
  }

  std::size_t first_trainable = arch.layers.size();
  for (std::size_t l = 0; l < arch.layers.size(); ++l) {
    if (arch.layers[l].trainable) {
      first_trainable = l;
      break;
    }
  }

  for (std::size_t l = last + 1; l-- > 0;) {
    if (l < first_trainable) break;
    const auto& layer = arch.layers[l];
    std::size_t fan_in = model.layer_fan_in(l);
    std::size_t off = model.layer_offset(l);
    const double* input = l == 0 ? x : ws.out(l - 1).data();
    if (layer.trainable) {
      double* gw = grad.data() + off;
      double* gb = gw + fan_in * layer.units;
      for (std::size_t u = 0; u < layer.units; ++u) {
        double d = ws.delta[l][u];
        double* grow = gw + u * fan_in;
        for (std::size_t j = 0; j < fan_in; ++j) grow[j] = d * input[j];
        gb[u] = d;
      }
    }
    if (l == 0 || l == first_trainable) continue;
    const auto& below = arch.layers[l - 1];
    const double* w = model.theta.data() + off;
    for (std::size_t j = 0; j < fan_in; ++j) {
      double s = 0.0;
      for (std::size_t u = 0; u < layer.units; ++u) {
        s += w[u * fan_in + j] * ws.delta[l][u];
      }
      if (!ws.mask[l - 1].empty()) s *= ws.mask[l - 1][j];
      ws.delta[l - 1][j] = s * activation_grad(below.activation,
                                               ws.pre[l - 1][j],
                                               ws.act[l - 1][j]);
    }
  }
}

struct TrainableRange {
  std::size_t offset;
  std::size_t length;
};

std::vector<TrainableRange> trainable_ranges(const Model& model) {
  std::vector<TrainableRange> ranges;
  for (std::size_t l = 0; l < model.arch.layers.size(); ++l) {
    if (!model.arch.layers[l].trainable) continue;
    std::size_t fan_in = model.layer_fan_in(l);
    std::size_t len = fan_in * model.arch.layers[l].units + model.arch.layers[l].units;
    ranges.push_back({model.layer_offset(l), len});
  }
  return ranges;
}

}  // namespace

Vector forward(const Model& model, const Vector& x) {
  if (x.size() != model.arch.input_dim) {
    throw std::invalid_argument("forward: input dimension mismatch");
  }
  Workspace ws;
  ws.resize(model.arch);
  forward_into(model, x.data(), ws, false, nullptr);
  return ws.act.back();
}

std::vector<Vector> per_example_grads(const Model& model, const Matrix& x,
                                      const Vector& y, Loss loss) {
  if (x.rows == 0) throw std::invalid_argument("per_example_grads: empty batch");
  if (x.rows != y.size() || x.cols != model.arch.input_dim) {
    throw std::invalid_argument("per_example_grads: shape mismatch");
  }
  check_loss_arch(model.arch, loss);
  Workspace ws;
  ws.resize(model.arch);
  std::vector<Vector> grads(x.rows, Vector(model.theta.size(), 0.0));
  for (std::size_t i = 0; i < x.rows; ++i) {
    example_grad_into(model, x.row(i), y[i], ws, false, nullptr, grads[i]);
  }
  return grads;
}

namespace {

// Shared epoch/batch loop. `dp` switches between plain averaging and
// clip-sum-noise-average.
Model train_loop(Model model, const Dataset& train, const TrainConfig& config,
                 RngStream rng, bool dp,
                 std::vector<Vector>* epoch_snapshots) {
  model.arch.validate();
  check_loss_arch(model.arch, config.loss);
  if (train.rows() == 0) throw std::invalid_argument("train: empty dataset");
  if (train.cols() != model.arch.input_dim) {
    throw std::invalid_argument("train: feature count mismatch");
  }
  if (config.batch == 0) throw std::invalid_argument("train: batch == 0");

  const double clip = dp ? *config.clip_l2 : 0.0;
  const double z = dp ? *config.noise_multiplier : 0.0;
  if (dp && !(clip > 0.0)) throw std::invalid_argument("dpsgd: clip_l2 <= 0");
  if (dp && z < 0.0) throw std::invalid_argument("dpsgd: noise multiplier < 0");

  RngStream shuffle_root = rng.child(1);
  RngStream noise_root = rng.child(2);
  RngStream dropout_root = rng.child(3);

  bool has_dropout = false;
  for (const auto& l : model.arch.layers) has_dropout |= l.dropout_after > 0.0;

  const std::size_t n = train.rows();
  const std::size_t nbatches = n / config.batch;  // final partial batch dropped
  if (nbatches == 0) throw std::invalid_argument("train: batch larger than dataset");

  auto ranges = trainable_ranges(model);
  Workspace ws;
  ws.resize(model.arch);
  Vector grad(model.theta.size(), 0.0);
  Vector accum(model.theta.size(), 0.0);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    RngStream perm = shuffle_root.child(epoch);
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = perm.next_below(i);
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t b = 0; b < nbatches; ++b) {
      for (const auto& r : ranges) {
        std::fill(accum.begin() + r.offset, accum.begin() + r.offset + r.length, 0.0);
      }
      for (std::size_t k = 0; k < config.batch; ++k) {
        std::size_t row = order[b * config.batch + k];
        RngStream drop = dropout_root.child(epoch, row);
        for (const auto& r : ranges) {
          std::fill(grad.begin() + r.offset, grad.begin() + r.offset + r.length, 0.0);
        }
        example_grad_into(model, train.x.row(row), train.y[row], ws,
                          has_dropout, has_dropout ? &drop : nullptr, grad);
        double scale = 1.0;
        if (dp) {
          double sq = 0.0;
          for (const auto& r : ranges) {
            for (std::size_t i = 0; i < r.length; ++i) {
              double g = grad[r.offset + i];
              sq += g * g;
            }
          }
          double nrm = std::sqrt(sq);
          if (nrm > clip) scale = clip / nrm;
          if (nrm * scale > clip * (1.0 + 1e-12)) {
            throw std::logic_error("dpsgd: clipping contract violated");
          }
        }
        for (const auto& r : ranges) {
          for (std::size_t i = 0; i < r.length; ++i) {
            accum[r.offset + i] += scale * grad[r.offset + i];
          }
        }
      }
      if (dp && z > 0.0) {
        RngStream noise = noise_root.child(epoch, b);
        for (const auto& r : ranges) {
          for (std::size_t i = 0; i < r.length; ++i) {
            accum[r.offset + i] += sample_gaussian(noise, 0.0, z * clip);
          }
        }
      }
      const double inv_batch = 1.0 / static_cast<double>(config.batch);
      for (const auto& r : ranges) {
        for (std::size_t i = 0; i < r.length; ++i) {
          std::size_t idx = r.offset + i;
          double step = accum[idx] * inv_batch + config.l2_reg * model.theta[idx];
          model.theta[idx] -= config.learning_rate * step;
        }
      }
    }
    require_finite(model.theta, "train: parameters diverged");
    if (epoch_snapshots) epoch_snapshots->push_back(model.theta);
  }
  return model;
}

}  // namespace

Model sgd_train(Model model, const Dataset& train, const TrainConfig& config,
                RngStream rng, std::vector<Vector>* epoch_snapshots) {
  if (config.dp()) {
    throw std::invalid_argument("sgd_train: config has DP fields; use dpsgd_train");
  }
  return train_loop(std::move(model), train, config, rng, false, epoch_snapshots);
}

DpTrainResult dpsgd_train(Model model, const Dataset& train,
                          const TrainConfig& config, RngStream rng,
                          std::vector<Vector>* epoch_snapshots) {
  if (!config.dp()) {
    throw std::invalid_argument("dpsgd_train: clip_l2 and noise_multiplier required");
  }
  Model trained =
      train_loop(std::move(model), train, config, rng, true, epoch_snapshots);
  double eps = std::numeric_limits<double>::infinity();
  if (*config.noise_multiplier > 0.0) {
    DpSgdSetting setting{train.rows(), config.batch, config.epochs,
                         *config.noise_multiplier, *config.clip_l2,
                         config.delta};
    eps = dpsgd_epsilon(setting);
  }
  return {std::move(trained), eps};
}

double evaluate(const Model& model, const Dataset& ds) {
  if (ds.rows() == 0) throw std::invalid_argument("evaluate: empty dataset");
  Workspace ws;
  ws.resize(model.arch);
  if (model.arch.task == Task::Classification) {
    std::size_t hits = 0;
    for (std::size_t r = 0; r < ds.rows(); ++r) {
      forward_into(model, ds.x.row(r), ws, false, nullptr);
      const Vector& p = ws.act.back();
      std::size_t arg = 0;
      for (std::size_t u = 1; u < p.size(); ++u) {
        if (p[u] > p[arg]) arg = u;  // ties keep the lowest index
      }
      if (arg == static_cast<std::size_t>(ds.y[r])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(ds.rows());
  }
  double abs_sum = 0.0;
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    forward_into(model, ds.x.row(r), ws, false, nullptr);
    abs_sum += std::fabs(ws.act.back()[0] - ds.y[r]);
  }
  return abs_sum / static_cast<double>(ds.rows());
}

double mean_loss(const Model& model, const Dataset& ds, Loss loss) {
  if (ds.rows() == 0) throw std::invalid_argument("mean_loss: empty dataset");
  check_loss_arch(model.arch, loss);
  Workspace ws;
  ws.resize(model.arch);
  double total = 0.0;
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    forward_into(model, ds.x.row(r), ws, false, nullptr);
    const Vector& out = ws.act.back();
    if (model.arch.task == Task::Classification) {
      auto target = static_cast<std::size_t>(ds.y[r]);
      total += -std::log(std::max(out[target], 1e-300));
    } else {
      double d = out[0] - ds.y[r];
      total += d * d;
    }
  }
  return total / static_cast<double>(ds.rows());
}

void save_model(const Model& model, const std::string& path, double epsilon,
                double delta, std::uint64_t seed) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["architecture"]["input_dim"] = model.arch.input_dim;
  j["architecture"]["task"] =
      model.arch.task == Task::Classification ? "classification" : "regression";
  for (const auto& layer : model.arch.layers) {
    j["architecture"]["layers"].push_back(
        {{"units", layer.units},
         {"activation", activation_name(layer.activation)},
         {"dropout_after", layer.dropout_after},
         {"trainable", layer.trainable}});
  }
  j["theta"] = model.theta;
  j["metadata"] = {{"epsilon", epsilon}, {"delta", delta}, {"seed", seed}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out << j.dump();
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  nlohmann::json j;
  in >> j;
  if (j.at("format_version").get<int>() != 1) {
    throw std::runtime_error("load_model: unsupported format version");
  }
  Model model;
  model.arch.input_dim = j.at("architecture").at("input_dim").get<std::size_t>();
  model.arch.task = j.at("architecture").at("task").get<std::string>() == "regression"
                        ? Task::Regression
                        : Task::Classification;
  for (const auto& lj : j.at("architecture").at("layers")) {
    LayerSpec layer;
    layer.units = lj.at("units").get<std::size_t>();
    layer.activation = activation_from_name(lj.at("activation").get<std::string>());
    layer.dropout_after = lj.at("dropout_after").get<double>();
    layer.trainable = lj.at("trainable").get<bool>();
    model.arch.layers.push_back(layer);
  }
  model.theta = j.at("theta").get<Vector>();
  model.arch.validate();
  if (model.theta.size() != param_count(model.arch).total) {
    throw std::runtime_error("load_model: theta length inconsistent with architecture");
  }
  return model;
}

}  // namespace dps
