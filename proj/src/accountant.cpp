#include "dpsearch/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dps {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::fabs(a - b)));
}

double log_binom(long long n, long long k) {
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

// log of the subsampled-Gaussian moment A_alpha at integer alpha:
//   A = sum_k C(alpha,k) (1-q)^(alpha-k) q^k exp((k^2-k)/(2 z^2))
double log_moment_int(double q, double z, long long alpha) {
  double log_q = std::log(q);
  double log_1mq = std::log1p(-q);
  double inv2z2 = 1.0 / (2.0 * z * z);
  double acc = -kInf;
  for (long long k = 0; k <= alpha; ++k) {
    double term = log_binom(alpha, k) + k * log_q + (alpha - k) * log_1mq +
                  static_cast<double>(k * k - k) * inv2z2;
    acc = log_add(acc, term);
  }
  return acc;
}

double rdp_step(double q, double z, double order) {
  if (q == 1.0) return order / (2.0 * z * z);
  long long alpha = static_cast<long long>(std::ceil(order - 1e-12));
  if (alpha < 2) alpha = 2;
  return log_moment_int(q, z, alpha) / (order - 1.0);
}

}  // namespace

void DpSgdSetting::validate() const {
  if (n == 0 || batch == 0 || epochs == 0) {
    throw std::invalid_argument("DpSgdSetting: n, batch, epochs must be > 0");
  }
  if (batch > n) throw std::invalid_argument("DpSgdSetting: batch > n");
  if (!(noise_multiplier > 0.0)) {
    throw std::invalid_argument("DpSgdSetting: noise multiplier <= 0");
  }
  if (!(clip_l2 > 0.0)) throw std::invalid_argument("DpSgdSetting: clip <= 0");
  if (!(delta > 0.0) || delta >= 1.0) {
    throw std::invalid_argument("DpSgdSetting: delta outside (0,1)");
  }
}

std::size_t CompositionLedger::unique_trainings() const {
  std::size_t c = 0;
  for (const auto& e : entries_) {
    if (e.training) ++c;
  }
  return c;
}

double advanced_composition(double epsilon, std::size_t c,
                            double delta_prime) {
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("advanced_composition: epsilon <= 0");
  }
  if (!(delta_prime > 0.0) || delta_prime >= 1.0) {
    throw std::invalid_argument("advanced_composition: delta' outside (0,1)");
  }
  if (c == 0) return 0.0;
  double cc = static_cast<double>(c);
  return epsilon * std::sqrt(2.0 * cc * std::log(1.0 / delta_prime)) +
         cc * epsilon * std::expm1(epsilon);
}

std::vector<double> default_rdp_orders() {
  std::vector<double> orders;
  for (double a = 1.25; a < 10.0; a += 0.25) orders.push_back(a);
  for (int a = 10; a <= 64; ++a) orders.push_back(a);
  orders.push_back(128.0);
  orders.push_back(256.0);
  return orders;
}

std::vector<double> rdp_subsampled_gaussian(double q, double noise_multiplier,
                                            std::size_t steps,
                                            const std::vector<double>& orders) {
  if (!(q > 0.0) || q > 1.0) {
    throw std::invalid_argument("rdp_subsampled_gaussian: q outside (0,1]");
  }
  if (!(noise_multiplier > 0.0)) {
    throw std::invalid_argument("rdp_subsampled_gaussian: z <= 0");
  }
  if (steps == 0) {
    throw std::invalid_argument("rdp_subsampled_gaussian: steps == 0");
  }
  std::vector<double> out;
  out.reserve(orders.size());
  for (double a : orders) {
    if (!(a > 1.0)) {
      throw std::invalid_argument("rdp_subsampled_gaussian: order <= 1");
    }
    out.push_back(static_cast<double>(steps) * rdp_step(q, noise_multiplier, a));
  }
  return out;
}

RdpToDpResult rdp_to_dp(const std::vector<double>& rdp,
                        const std::vector<double>& orders, double delta) {
  if (rdp.empty() || rdp.size() != orders.size()) {
    throw std::invalid_argument("rdp_to_dp: empty or mismatched lists");
  }
  if (!(delta > 0.0) || delta >= 1.0) {
    throw std::invalid_argument("rdp_to_dp: delta outside (0,1)");
  }
  RdpToDpResult best{kInf, 0.0};
  double log_inv_delta = std::log(1.0 / delta);
  for (std::size_t i = 0; i < rdp.size(); ++i) {
    double e = rdp[i] + log_inv_delta / (orders[i] - 1.0);
    if (e < best.epsilon) best = {e, orders[i]};
  }
  return best;
}

RdpToDpResult rdp_to_dp_tight(const std::vector<double>& rdp,
                              const std::vector<double>& orders,
                              double delta) {
  if (rdp.empty() || rdp.size() != orders.size()) {
    throw std::invalid_argument("rdp_to_dp_tight: empty or mismatched lists");
  }
  if (!(delta > 0.0) || delta >= 1.0) {
    throw std::invalid_argument("rdp_to_dp_tight: delta outside (0,1)");
  }
  RdpToDpResult best{kInf, 0.0};
  for (std::size_t i = 0; i < rdp.size(); ++i) {
    double a = orders[i];
    double e = rdp[i] + std::log((a - 1.0) / a) -
               (std::log(delta) + std::log(a)) / (a - 1.0);
    if (e < 0.0) e = 0.0;
    if (e < best.epsilon) best = {e, a};
  }
  return best;
}

DpSgdEpsilonReport dpsgd_epsilon_report(const DpSgdSetting& setting) {
  setting.validate();
  auto orders = default_rdp_orders();
  double q = setting.sampling_ratio();
  std::size_t steps = setting.steps();
  auto rdp = rdp_subsampled_gaussian(q, setting.noise_multiplier, steps, orders);
  auto best = rdp_to_dp_tight(rdp, orders, setting.delta);
  return {best.epsilon, best.best_order, steps, q};
}

double dpsgd_epsilon(const DpSgdSetting& setting) {
  return dpsgd_epsilon_report(setting).epsilon;
}

double rs_epsilon_prime(double x, std::size_t v, std::size_t k,
                        double delta_fail) {
  if (!(x > 0.0) || x >= 1.0) {
    throw std::invalid_argument("rs_epsilon_prime: x outside (0,1)");
  }
  if (v == 0 || k == 0) {
    throw std::invalid_argument("rs_epsilon_prime: v and k must be >= 1");
  }
  if (!(delta_fail > 0.0) || delta_fail >= 1.0) {
    throw std::invalid_argument("rs_epsilon_prime: delta outside (0,1)");
  }
  const double xv = x * static_cast<double>(v);
  const double dk = delta_fail * static_cast<double>(k);
  auto required = [&](double eps) {  // RHS of the inequality
    return (4.0 / eps) * std::log(1.0 / (eps * dk));
  };
  double hi = 0.5 - 1e-12;
  if (required(hi) > xv) {
    std::size_t v_needed =
        static_cast<std::size_t>(std::ceil(required(hi) / x));
    throw std::runtime_error(
        "rs_epsilon_prime: no eps' < 1/2 satisfies the budget inequality; "
        "validation size of at least " + std::to_string(v_needed) +
        " would be required");
  }
  double lo = 1e-12;
  if (required(lo) <= xv) return lo;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (required(mid) > xv) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;  // satisfying endpoint, so the residual is >= 0
}

double rs_total_budget(double eps_train, double eps_prime) {
  if (!(eps_train > 0.0) || eps_prime < 0.0) {
    throw std::invalid_argument("rs_total_budget: bad arguments");
  }
  return eps_train + 8.0 * eps_prime;
}

double mgrs_total_budget(const std::vector<double>& per_generation) {
  if (per_generation.empty()) {
    throw std::invalid_argument("mgrs_total_budget: empty list");
  }
  double total = 0.0;
  for (double e : per_generation) {
    if (!(e > 0.0)) {
      throw std::invalid_argument("mgrs_total_budget: nonpositive epsilon");
    }
    total += e;
  }
  return total;
}

double pafs_total_budget(double eps, std::size_t unique_trainings,
                         double delta_prime) {
  return advanced_composition(eps, unique_trainings, delta_prime);
}

double noise_multiplier_for_epsilon(const DpSgdSetting& base,
                                    double target_epsilon) {
  if (!(target_epsilon > 0.0)) {
    throw std::invalid_argument("noise_multiplier_for_epsilon: target <= 0");
  }
  auto eps_at = [&](double z) {
    DpSgdSetting s = base;
    s.noise_multiplier = z;
    return dpsgd_epsilon(s);
  };
  double lo = 1e-3, hi = 1e4;
  if (eps_at(hi) > target_epsilon) {
    throw std::runtime_error(
        "noise_multiplier_for_epsilon: target unreachable below z=1e4");
  }
  if (eps_at(lo) <= target_epsilon) return lo;
  for (int it = 0; it < 100; ++it) {
    double mid = 0.5 * (lo + hi);
    if (eps_at(mid) > target_epsilon) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

}  // namespace dps
