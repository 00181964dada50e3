#pragma once

// Sinkhorn scaling iterations with a caller-supplied initial vector v0.
//
// Two numerically distinct but mathematically equivalent implementations:
//   linear: u <- mu ./ (K v), v <- nu ./ (K^T u) with K = exp(-C / eps)
//   log:    the same updates on (phi, psi) = (eps log u, eps log v), using
//           log-sum-exp reductions so nothing overflows.

#include <cstdint>
#include <optional>
#include <vector>

#include "otws/measures.hpp"

namespace otws {

enum class SinkhornDomain { linear, log };

struct SinkhornConfig {
  double eps = 0.00025;
  long max_iters = 1000;
  long check_every = 25;
  std::optional<double> stop_mcv;
  SinkhornDomain domain = SinkhornDomain::linear;
  double clamp_lo = 1e-35;
  double clamp_hi = 1e35;

  void validate() const;
};

struct SinkhornCheckpoint {
  long iteration = 0;
  double mcv = 0.0;
  double primal_cost = 0.0;
  std::int64_t wall_time_ns = 0;
};

struct SinkhornTrace {
  std::vector<SinkhornCheckpoint> checkpoints;
  long iterations = 0;
  bool reached_stop = false;
  // Final scalings. In the log domain these are exp(potential / eps) and may
  // over- or underflow; the potentials below are always finite.
  Vector u;
  Vector v;
  DualPair potentials;  // (eps log u, eps log v), uncentered
  TransportPlan plan;
};

// Throws InvalidArgument when mu or nu has a zero entry or v0 is not strictly
// positive and finite, NumericalFailure when the linear domain produces a
// non-finite or zero scaling.
SinkhornTrace sinkhorn_run(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                           const SinkhornConfig& config, const Vector& v0);

// Overload with v0 = 1_n.
SinkhornTrace sinkhorn_run(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                           const SinkhornConfig& config);

// (f, g) = (eps log u, eps log v).
DualPair scalings_to_potentials(const Vector& u, const Vector& v, double eps);

// v0_j = clamp(exp(g_j / eps), clamp_lo, clamp_hi) with g = c_transform(f_pred).
Vector warm_start_vector(const Vector& f_pred, const CostMatrix& cost, const SinkhornConfig& config);

// |<C, Gamma_l> - exact| / exact for every checkpoint.
std::vector<double> relative_distance_error(const SinkhornTrace& trace, double exact_value);

// First checkpoint iteration with mcv <= threshold, if any.
std::optional<long> iterations_to_mcv(const SinkhornTrace& trace, double threshold);

}  // namespace otws
