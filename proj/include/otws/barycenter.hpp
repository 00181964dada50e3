#pragma once

// Fixed-support barycenters by descent on the sum of transport costs,
// using per-step dual potentials as the (sub)gradient.

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "otws/exact_ot.hpp"
#include "otws/models.hpp"

namespace otws {

enum class PotentialSource { exact, approximator };
enum class SimplexHandling { euclidean_project, softmax_reparam };

enum class StepRule {
  constant,     // mu <- P(mu - eta * grad) every step
  // Armijo backtracking along the minimum-norm point of a bundle of recent
  // subgradients; a failed search adds a subgradient near its trial point.
  backtracking
};

struct BarycenterConfig {
  double step = 0.05;  // eta
  long max_steps = 200;
  PotentialSource source = PotentialSource::exact;
  SimplexHandling simplex = SimplexHandling::euclidean_project;
  StepRule rule = StepRule::constant;
  // Stops once the objective decreased by less than this over one accepted
  // step; 0 runs all steps.
  double tolerance = 0.0;
  int max_halvings = 40;
  const Approximator* approximator = nullptr;  // required for the approximator source
  ExactOptions exact;
  std::optional<Vector> initial;  // defaults to uniform weights

  void validate() const;
};

struct BarycenterResult {
  DiscreteMeasure mu;
  std::vector<double> objective;  // objective[k] at the k-th iterate, k = 0 is the start
  long steps = 0;
  double final_step = 0.0;
};

// Euclidean projection onto the probability simplex (sort-based).
Vector project_to_simplex(const Vector& v);

// sum_i <f_i, mu> + <f_i^C, nu_i> with f_i from the configured source, and the
// gradient sum_i f_i.
struct BarycenterObjective {
  double value = 0.0;
  Vector gradient;
};

BarycenterObjective barycenter_objective(const Vector& mu, const std::vector<DiscreteMeasure>& nus,
                                         const CostMatrix& cost, const BarycenterConfig& config);

// Throws DivergedError when the objective increases on 10 consecutive steps.
BarycenterResult barycenter_descent(const std::vector<DiscreteMeasure>& nus, const CostMatrix& cost,
                                    const BarycenterConfig& config);

struct NoiseReport {
  double reference = 0.0;       // <f, mu>
  double mean_deviation = 0.0;  // mean of <f + sigma, mu> - <f, mu>
  double standard_error = 0.0;
  long trials = 0;
  std::vector<double> deviations;

  // |mean| <= 4 standard errors (exactly zero when there is no noise).
  bool passed() const;
};

// Trial t draws sigma from N(0, noise_scale^2) i.i.d., entry by entry, from
// one mt19937_64 stream seeded with `seed`.
NoiseReport noise_cancellation_check(const Vector& f, const DiscreteMeasure& mu, double noise_scale, long trials,
                                     std::uint64_t seed = 0);

}  // namespace otws
