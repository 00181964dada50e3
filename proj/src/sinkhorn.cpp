#include "otws/sinkhorn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace otws {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count();
}

bool all_positive_finite(const Vector& x) {
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (!(x[k] > 0.0) || !std::isfinite(x[k])) return false;
  }
  return true;
}

// out_i = logsumexp_j(b_j - a(i, j)) for row-major a.
void log_sum_exp_rows(const Matrix& a, const Vector& b, Vector& out) {
  const Eigen::Index rows = a.rows();
  const Eigen::Index cols = a.cols();
  Eigen::ArrayXd work(cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    work = b.array() - a.row(i).transpose().array();
    const double top = work.maxCoeff();
    out[i] = top + std::log((work - top).unaryExpr(&exp_flush).sum());
  }
}

bool should_check(long iteration, const SinkhornConfig& config) {
  return iteration % config.check_every == 0 || iteration == config.max_iters;
}

}  // namespace

void SinkhornConfig::validate() const {
  if (!(eps > 0.0)) throw InvalidArgument("sinkhorn: eps must be positive");
  if (max_iters < 1) throw InvalidArgument("sinkhorn: max_iters must be >= 1");
  if (check_every < 1) throw InvalidArgument("sinkhorn: check_every must be >= 1");
  if (!(clamp_lo > 0.0) || !(clamp_lo < clamp_hi)) throw InvalidArgument("sinkhorn: need 0 < clamp_lo < clamp_hi");
  if (stop_mcv && !(*stop_mcv >= 0.0)) throw InvalidArgument("sinkhorn: stop_mcv must be nonnegative");
}

SinkhornTrace sinkhorn_run(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                           const SinkhornConfig& config, const Vector& v0) {
  config.validate();
  if (cost.rows() != mu.size() || cost.cols() != nu.size())
    throw InvalidArgument("sinkhorn: cost dimensions do not match measures");
  if (!mu.strictly_positive() || !nu.strictly_positive())
    throw InvalidArgument("sinkhorn: marginals must be strictly positive");
  if (v0.size() != nu.size() || !all_positive_finite(v0))
    throw InvalidArgument("sinkhorn: v0 must be strictly positive and finite with length n");

  const auto start = Clock::now();
  const Vector& a = mu.weights();
  const Vector& b = nu.weights();
  const double eps = config.eps;
  std::vector<SinkhornCheckpoint> checkpoints;
  bool reached = false;
  long iteration = 0;

  auto record = [&](const Matrix& plan) {
    const TransportPlan current(plan, mu, nu);
    const double mcv = marginal_constraint_violation(current);
    checkpoints.push_back({iteration, mcv, primal_cost(current, cost), elapsed_ns(start)});
    return config.stop_mcv && mcv <= *config.stop_mcv;
  };

  if (config.domain == SinkhornDomain::linear) {
    const Matrix kernel = gibbs_kernel(cost, eps);
    const Matrix kernel_t = kernel.transpose();
    Vector u(a.size());
    Vector v = v0;
    Matrix plan;
    while (iteration < config.max_iters) {
      ++iteration;
      u.noalias() = kernel * v;
      u = a.cwiseQuotient(u);
      Vector ktu = kernel_t * u;
      v = b.cwiseQuotient(ktu);
      if (!all_positive_finite(u) || !all_positive_finite(v))
        throw NumericalFailure("sinkhorn: non-finite or zero scaling in the linear domain at iteration " +
                                   std::to_string(iteration),
                               iteration);
      if (should_check(iteration, config)) {
        plan = u.asDiagonal() * kernel * v.asDiagonal();
        if (record(plan)) {
          reached = true;
          break;
        }
      }
    }
    if (plan.size() == 0) plan = u.asDiagonal() * kernel * v.asDiagonal();
    DualPair potentials = scalings_to_potentials(u, v, eps);
    return SinkhornTrace{std::move(checkpoints), iteration, reached, u, v, std::move(potentials),
                         TransportPlan(std::move(plan), mu, nu)};
  }

  // Log domain on (phi, psi) = (eps log u, eps log v), scaled by 1/eps inside
  // the reductions.
  const Matrix scaled_cost = cost.entries() / eps;
  const Matrix scaled_cost_t = scaled_cost.transpose();
  const Vector log_a = a.array().log();
  const Vector log_b = b.array().log();
  Vector phi(a.size());   // phi / eps
  Vector psi = v0.array().log();  // psi / eps
  Vector reduce_rows(a.size());
  Vector reduce_cols(b.size());
  auto assemble = [&]() {
    Matrix plan(a.size(), b.size());
    for (Eigen::Index i = 0; i < plan.rows(); ++i)
      plan.row(i) = (phi[i] + psi.array() - scaled_cost.row(i).transpose().array()).unaryExpr(&exp_flush).transpose();
    return plan;
  };
  Matrix plan;
  while (iteration < config.max_iters) {
    ++iteration;
    log_sum_exp_rows(scaled_cost, psi, reduce_rows);
    phi = log_a - reduce_rows;
    log_sum_exp_rows(scaled_cost_t, phi, reduce_cols);
    psi = log_b - reduce_cols;
    if (should_check(iteration, config)) {
      plan = assemble();
      if (record(plan)) {
        reached = true;
        break;
      }
    }
  }
  if (plan.size() == 0) plan = assemble();
  DualPair potentials{phi * eps, psi * eps, Centering::none};
  Vector u = phi.array().exp();
  Vector v = psi.array().exp();
  return SinkhornTrace{std::move(checkpoints), iteration, reached, std::move(u), std::move(v),
                       std::move(potentials), TransportPlan(std::move(plan), mu, nu)};
}

SinkhornTrace sinkhorn_run(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                           const SinkhornConfig& config) {
  return sinkhorn_run(mu, nu, cost, config, Vector::Ones(nu.size()));
}

DualPair scalings_to_potentials(const Vector& u, const Vector& v, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  if (!all_positive_finite(u) || !all_positive_finite(v))
    throw InvalidArgument("scalings must be strictly positive and finite");
  return DualPair{eps * u.array().log().matrix(), eps * v.array().log().matrix(), Centering::none};
}

Vector warm_start_vector(const Vector& f_pred, const CostMatrix& cost, const SinkhornConfig& config) {
  config.validate();
  const Vector g = c_transform(f_pred, cost, TransformDirection::rows_to_cols);
  const double log_lo = std::log(config.clamp_lo);
  const double log_hi = std::log(config.clamp_hi);
  Vector v0(g.size());
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    const double exponent = g[j] / config.eps;
    if (exponent >= log_hi) {
      v0[j] = config.clamp_hi;
    } else if (exponent <= log_lo) {
      v0[j] = config.clamp_lo;
    } else {
      v0[j] = std::clamp(std::exp(exponent), config.clamp_lo, config.clamp_hi);
    }
  }
  return v0;
}

std::vector<double> relative_distance_error(const SinkhornTrace& trace, double exact_value) {
  if (!(exact_value > 0.0)) throw InvalidArgument("relative_distance_error: exact value must be positive");
  std::vector<double> out;
  out.reserve(trace.checkpoints.size());
  for (const auto& cp : trace.checkpoints) out.push_back(std::abs(cp.primal_cost - exact_value) / exact_value);
  return out;
}

std::optional<long> iterations_to_mcv(const SinkhornTrace& trace, double threshold) {
  for (const auto& cp : trace.checkpoints) {
    if (cp.mcv <= threshold) return cp.iteration;
  }
  return std::nullopt;
}

}  // namespace otws
