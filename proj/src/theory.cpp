#include "dpsearch/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dpsearch/parallel.hpp"

namespace dps {

double squared_error(const Vector& theta, const Vector& x, double y) {
  double r = y - dot(theta, x);
  return r * r;
}

namespace {

void check_instance(const LinearInstance& inst) {
  if (inst.theta.size() != inst.x.size()) {
    throw std::invalid_argument("LinearInstance: theta/x size mismatch");
  }
  if (inst.x.empty() || norm2_squared(inst.x) == 0.0) {
    throw std::invalid_argument("LinearInstance: x must be nonzero");
  }
  if (inst.sigma < 0.0 || inst.sigma_prime < 0.0) {
    throw std::invalid_argument("LinearInstance: negative noise std");
  }
}

double reduced_norm_squared(const Vector& x) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) s += x[i] * x[i];
  return s;
}

}  // namespace

double expected_dp_error_full(const LinearInstance& inst) {
  check_instance(inst);
  double c = inst.y - dot(inst.theta, inst.x);
  return c * c + inst.sigma * inst.sigma * norm2_squared(inst.x);
}

double expected_dp_error_reduced(const LinearInstance& inst) {
  check_instance(inst);
  if (inst.x.size() < 2) {
    throw std::invalid_argument("expected_dp_error_reduced: need m >= 2");
  }
  double c = inst.y - dot(inst.theta, inst.x);
  double tm_xm = inst.theta.back() * inst.x.back();
  return c * c + 2.0 * c * tm_xm + tm_xm * tm_xm +
         inst.sigma_prime * inst.sigma_prime * reduced_norm_squared(inst.x);
}

double lemma1_threshold(const LinearInstance& inst) {
  check_instance(inst);
  if (inst.x.back() == 0.0) {
    throw std::invalid_argument("lemma1_threshold: x_m must be nonzero");
  }
  double a2 = inst.sigma * inst.sigma * norm2_squared(inst.x);
  double b2 = inst.sigma_prime * inst.sigma_prime * reduced_norm_squared(inst.x);
  double c2 = squared_error(inst.theta, inst.x, inst.y);
  double d = a2 - b2;
  if (c2 + d < 0.0) return 0.0;
  return (std::sqrt(c2 + d) - std::sqrt(c2)) / std::fabs(inst.x.back());
}

McResult mc_expected_error(NoiseModel which, const LinearInstance& inst,
                           std::size_t trials, RngStream rng) {
  check_instance(inst);
  if (trials == 0) throw std::invalid_argument("mc_expected_error: trials == 0");
  if (which == NoiseModel::Reduced && inst.x.size() < 2) {
    throw std::invalid_argument("mc_expected_error: reduced model needs m >= 2");
  }
  const std::size_t m = inst.x.size();
  const double clean = inst.y - dot(inst.theta, inst.x);
  const double tm_xm = inst.theta.back() * inst.x.back();

  auto one_trial = [&](std::size_t t) {
    RngStream trial = rng.child(t);
    double noise_dot = 0.0;
    if (which == NoiseModel::Full) {
      for (std::size_t i = 0; i < m; ++i) {
        noise_dot += sample_gaussian(trial, 0.0, inst.sigma) * inst.x[i];
      }
      double r = clean - noise_dot;
      return r * r;
    }
    for (std::size_t i = 0; i + 1 < m; ++i) {
      noise_dot += sample_gaussian(trial, 0.0, inst.sigma_prime) * inst.x[i];
    }
    double r = clean + tm_xm - noise_dot;
    return r * r;
  };

  double sum = par::chunked_sum(trials, one_trial);
  double sum_sq = par::chunked_sum(trials, [&](std::size_t t) {
    double e = one_trial(t);
    return e * e;
  });
  double n = static_cast<double>(trials);
  double mean = sum / n;
  double var = std::max(0.0, sum_sq / n - mean * mean);
  return {mean, std::sqrt(var / n)};
}

double privacy_cost(double err_dp, double err_nonprivate) {
  return err_dp - err_nonprivate;
}

void AccuracyCurve::validate() const {
  if (epsilons.size() != metrics.size()) {
    throw std::invalid_argument("AccuracyCurve: size mismatch");
  }
  if (epsilons.empty()) throw std::invalid_argument("AccuracyCurve: empty");
  for (std::size_t i = 1; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > epsilons[i - 1])) {
      throw std::invalid_argument("AccuracyCurve: epsilons must strictly increase");
    }
  }
}

AccuracyCurve load_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_curve_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("load_curve_csv: empty file " + path);
  }
  AccuracyCurve curve;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string e, m;
    if (!std::getline(cells, e, ',') || !std::getline(cells, m)) {
      throw std::runtime_error("load_curve_csv: bad row " + std::to_string(row));
    }
    curve.epsilons.push_back(std::stod(e));
    curve.metrics.push_back(std::stod(m));
  }
  curve.validate();
  return curve;
}

void save_curve_csv(const AccuracyCurve& curve, const std::string& path) {
  curve.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_curve_csv: cannot open " + path);
  out << "epsilon,metric\n";
  char buf[96];
  for (std::size_t i = 0; i < curve.epsilons.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", curve.epsilons[i],
                  curve.metrics[i]);
    out << buf;
  }
}

CrossoverResult crossover_epsilon(const AccuracyCurve& simple,
                                  const AccuracyCurve& complex_curve) {
  simple.validate();
  complex_curve.validate();
  if (simple.epsilons != complex_curve.epsilons) {
    throw std::invalid_argument("crossover_epsilon: curves use different grids");
  }
  const auto& eps = simple.epsilons;
  std::vector<double> diff(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    diff[i] = simple.metrics[i] - complex_curve.metrics[i];
  }

  CrossoverResult result;
  for (std::size_t i = 0; i + 1 < eps.size(); ++i) {
    if ((diff[i] > 0.0) != (diff[i + 1] > 0.0) && diff[i] != diff[i + 1]) {
      double t = diff[i] / (diff[i] - diff[i + 1]);
      result.sign_changes.push_back(eps[i] + t * (eps[i + 1] - eps[i]));
    }
  }

  std::size_t wins = 0;
  std::size_t last_win = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (diff[i] > 0.0) {
      ++wins;
      last_win = i;
    }
  }
  if (wins == 0) {
    result.kind = CrossoverResult::Kind::None;
    return result;
  }
  if (wins == eps.size()) {
    result.kind = CrossoverResult::Kind::Infinity;
    return result;
  }
  result.kind = CrossoverResult::Kind::Value;
  result.grid_epsilon = eps[last_win];
  result.refined_epsilon = result.grid_epsilon;
  if (last_win + 1 < eps.size() && !result.sign_changes.empty()) {
    // refine with the crossing interpolated in the bracket above the last win
    for (double c : result.sign_changes) {
      if (c >= eps[last_win] && c <= eps[last_win + 1]) {
        result.refined_epsilon = c;
      }
    }
  }
  return result;
}

EpsVsNFit fit_eps_vs_n(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw std::invalid_argument("fit_eps_vs_n: need >= 2 points");
  std::vector<double> t(points.size()), yv(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].first > 0.0)) {
      throw std::invalid_argument("fit_eps_vs_n: n must be positive");
    }
    t[i] = 1.0 / points[i].first;
    yv[i] = std::exp(points[i].second);
  }
  double tbar = 0.0, ybar = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    tbar += t[i];
    ybar += yv[i];
  }
  tbar /= t.size();
  ybar /= t.size();
  double stt = 0.0, sty = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    stt += (t[i] - tbar) * (t[i] - tbar);
    sty += (t[i] - tbar) * (yv[i] - ybar);
  }
  if (stt == 0.0) {
    throw std::invalid_argument("fit_eps_vs_n: all n equal (degenerate design)");
  }
  EpsVsNFit fit;
  fit.beta = sty / stt;
  fit.alpha = ybar - fit.beta * tbar;
  if (fit.alpha < 1.0) {
    fit.alpha = 1.0;
    fit.alpha_clamped = true;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      num += t[i] * (yv[i] - 1.0);
      den += t[i] * t[i];
    }
    fit.beta = num / den;
  }
  double ss = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    double r = yv[i] - (fit.alpha + fit.beta * t[i]);
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / t.size());
  return fit;
}

std::vector<double> convergence_trace(const Architecture& arch,
                                      const Dataset& train,
                                      const TrainConfig& dp_config,
                                      const TrainConfig& sgd_config,
                                      std::uint64_t seed) {
  if (dp_config.epochs != sgd_config.epochs) {
    throw std::invalid_argument("convergence_trace: epoch counts must match");
  }
  if (!dp_config.dp()) {
    throw std::invalid_argument("convergence_trace: dp_config must enable DP");
  }
  Model init = init_model(arch, derive_stream(seed, "trace/init"));
  RngStream train_rng = derive_stream(seed, "trace/train");

  std::vector<Vector> sgd_snaps;
  TrainConfig plain = sgd_config;
  plain.clip_l2.reset();
  plain.noise_multiplier.reset();
  sgd_train(init, train, plain, train_rng, &sgd_snaps);

  std::vector<Vector> dp_snaps;
  dpsgd_train(init, train, dp_config, train_rng, &dp_snaps);

  std::vector<double> trace(dp_snaps.size());
  for (std::size_t e = 0; e < dp_snaps.size(); ++e) {
    trace[e] = cosine_distance(dp_snaps[e], sgd_snaps[e]);
  }
  return trace;
}

}  // namespace dps
