#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dps {

// One DP-SGD training run, as seen by the accountant.
struct DpSgdSetting {
  std::size_t n = 0;        // dataset size
  std::size_t batch = 0;    // batch size
  std::size_t epochs = 0;
  double noise_multiplier = 2.0;
  double clip_l2 = 1.0;
  double delta = 1e-5;

  void validate() const;
  double sampling_ratio() const { return static_cast<double>(batch) / n; }
  std::size_t steps() const { return epochs * ((n + batch - 1) / batch); }
};

struct LedgerEntry {
  std::string label;
  double epsilon = 0.0;
  double delta = 0.0;
  bool training = false;
};

// Append-only record of the DP mechanisms a workflow invoked. Single-writer;
// concurrent readers are fine once writing is done.
class CompositionLedger {
 public:
  void append(LedgerEntry entry) { entries_.push_back(std::move(entry)); }
  const std::vector<LedgerEntry>& entries() const { return entries_; }
  std::size_t unique_trainings() const;

 private:
  std::vector<LedgerEntry> entries_;
};

// eps * sqrt(2 c ln(1/delta')) + c * eps * (e^eps - 1); 0 when c == 0.
double advanced_composition(double epsilon, std::size_t c,
                            double delta_prime);

// {1.25, 1.5, ..., 9.75} U {10, 11, ..., 64} U {128, 256}
std::vector<double> default_rdp_orders();

// Renyi DP of `steps` compositions of the Poisson-subsampled Gaussian
// mechanism with sampling ratio q and noise multiplier z, one value per
// order. Integer orders use the stable log-domain binomial series; fractional
// orders are rounded up to the next integer, which overstates the divergence
// and keeps the final epsilon conservative.
std::vector<double> rdp_subsampled_gaussian(double q, double noise_multiplier,
                                            std::size_t steps,
                                            const std::vector<double>& orders);

struct RdpToDpResult {
  double epsilon = 0.0;
  double best_order = 0.0;
};

// Classic conversion: eps = min over orders of rdp + ln(1/delta)/(order-1).
RdpToDpResult rdp_to_dp(const std::vector<double>& rdp,
                        const std::vector<double>& orders, double delta);

// Tighter conversion with the log((a-1)/a) - (log(delta)+log(a))/(a-1)
// correction. This is what the reference DP-SGD accounting tool applies, and
// the published epsilon anchors assume it.
RdpToDpResult rdp_to_dp_tight(const std::vector<double>& rdp,
                              const std::vector<double>& orders, double delta);

struct DpSgdEpsilonReport {
  double epsilon = 0.0;
  double best_order = 0.0;
  std::size_t steps = 0;
  double q = 0.0;
};

DpSgdEpsilonReport dpsgd_epsilon_report(const DpSgdSetting& setting);
double dpsgd_epsilon(const DpSgdSetting& setting);

// Smallest eps' in (0, 1/2) with x*v >= (4/eps') ln(1/(eps' * delta_fail * k)),
// by bisection. Throws (naming the validation size that would suffice) when no
// eps' below 1/2 satisfies the inequality.
double rs_epsilon_prime(double x, std::size_t v, std::size_t k,
                        double delta_fail);

// eps_train + 8 * eps_prime
double rs_total_budget(double eps_train, double eps_prime);

// Sequential composition over generations.
double mgrs_total_budget(const std::vector<double>& per_generation);

// Advanced composition over the unique trainings a PAFS/PAAS run performed.
double pafs_total_budget(double eps, std::size_t unique_trainings,
                         double delta_prime);

// Smallest noise multiplier whose accountant epsilon is <= target, by
// bisection; epsilon is nonincreasing in the noise multiplier.
double noise_multiplier_for_epsilon(const DpSgdSetting& base,
                                    double target_epsilon);

}  // namespace dps
