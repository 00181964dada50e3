#include "otws/barycenter.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace otws {

void BarycenterConfig::validate() const {
  if (!(step > 0.0)) throw InvalidArgument("barycenter: step size must be positive");
  if (max_steps < 1) throw InvalidArgument("barycenter: max_steps must be >= 1");
  if (tolerance < 0.0) throw InvalidArgument("barycenter: tolerance must be >= 0");
  if (source == PotentialSource::approximator && approximator == nullptr)
    throw InvalidArgument("barycenter: approximator source selected without a model");
}

Vector project_to_simplex(const Vector& v) {
  if (v.size() == 0) throw InvalidArgument("project_to_simplex: empty vector");
  std::vector<double> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] - candidate > 0.0) theta = candidate;
  }
  Vector out = (v.array() - theta).cwiseMax(0.0);
  // Remove the last rounding residue so the sum is 1 to working precision.
  const double total = pairwise_sum(out);
  if (total > 0.0) out /= total;
  return out;
}

BarycenterObjective barycenter_objective(const Vector& mu, const std::vector<DiscreteMeasure>& nus,
                                         const CostMatrix& cost, const BarycenterConfig& config) {
  const DiscreteMeasure current(mu, nus.front().geometry());
  std::vector<double> values(nus.size());
  std::vector<Vector> potentials(nus.size());
  parallel_for(nus.size(), [&](std::size_t k) {
    Vector f;
    if (config.source == PotentialSource::exact) {
      const ExactSolution solution = solve_exact(current, nus[k], cost, config.exact);
      f = solution.duals.f;
    } else {
      f = config.approximator->predict(current, nus[k]);
    }
    f.array() -= f.mean();
    const Vector f_c = c_transform(f, cost);
    values[k] = pairwise_dot(f, mu) + pairwise_dot(f_c, nus[k].weights());
    potentials[k] = std::move(f);
  });
  BarycenterObjective out;
  out.gradient = Vector::Zero(mu.size());
  for (std::size_t k = 0; k < nus.size(); ++k) {
    out.value += values[k];
    out.gradient += potentials[k];
  }
  return out;
}

namespace {

// Armijo test: the step must realize a fixed fraction of the decrease the
// linear model along `direction` predicts.
bool sufficient_decrease(const BarycenterObjective& current, const BarycenterObjective& candidate, const Vector& mu,
                         const Vector& next, const Vector& direction) {
  const double predicted = direction.dot(mu - next);
  return predicted > 0.0 && current.value - candidate.value >= 1e-4 * predicted;
}

// Minimum-norm point of the convex hull of the columns of p (Wolfe's
// algorithm): keeps an affinely independent corral of columns and moves to
// the affine minimizer of the corral while it stays inside the hull.
Vector min_norm_hull_point(const Matrix& p) {
  const Eigen::Index m = p.cols();
  const Vector norms = p.colwise().squaredNorm().transpose();
  const double scale = std::max(norms.maxCoeff(), 1e-300);
  std::vector<Eigen::Index> corral;
  Vector weights;
  Eigen::Index first = 0;
  norms.minCoeff(&first);
  corral.push_back(first);
  weights = Vector::Ones(1);
  Vector x = p.col(first);
  auto columns = [&] {
    Matrix out(p.rows(), static_cast<Eigen::Index>(corral.size()));
    for (std::size_t k = 0; k < corral.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = p.col(corral[k]);
    return out;
  };
  for (long major = 0; major < 10 * m + 10; ++major) {
    Eigen::Index entering = 0;
    const double lowest = (p.transpose() * x).minCoeff(&entering);
    if (x.squaredNorm() - lowest <= 1e-12 * scale) break;
    if (std::find(corral.begin(), corral.end(), entering) != corral.end()) break;
    corral.push_back(entering);
    weights.conservativeResize(weights.size() + 1);
    weights[weights.size() - 1] = 0.0;
    for (long minor = 0; minor < m + 1; ++minor) {
      const Matrix q = columns();
      const Eigen::Index size = q.cols();
      // Affine minimizer: w proportional to (Q^T Q + 1 1^T)^+ 1.
      const Matrix system = q.transpose() * q + Matrix::Constant(size, size, 1.0);
      Vector affine = system.completeOrthogonalDecomposition().solve(Vector::Ones(size));
      affine /= affine.sum();
      if ((affine.array() > 1e-14).all()) {
        weights = affine;
        break;
      }
      double theta = 1.0;
      for (Eigen::Index k = 0; k < size; ++k)
        if (affine[k] <= 1e-14) theta = std::min(theta, weights[k] / (weights[k] - affine[k]));
      weights = (1.0 - theta) * weights + theta * affine;
      std::vector<Eigen::Index> kept;
      std::vector<double> kept_weights;
      for (Eigen::Index k = 0; k < size; ++k) {
        if (weights[k] > 1e-14) {
          kept.push_back(corral[static_cast<std::size_t>(k)]);
          kept_weights.push_back(weights[k]);
        }
      }
      corral = std::move(kept);
      weights = Eigen::Map<Vector>(kept_weights.data(), static_cast<Eigen::Index>(kept_weights.size()));
      weights /= weights.sum();
    }
    x = columns() * weights;
  }
  return x;
}

}  // namespace

BarycenterResult barycenter_descent(const std::vector<DiscreteMeasure>& nus, const CostMatrix& cost,
                                    const BarycenterConfig& config) {
  config.validate();
  if (nus.empty()) throw InvalidArgument("barycenter: need at least one measure");
  const GeometryPtr& grid = nus.front().geometry();
  const int n = nus.front().size();
  for (const auto& nu : nus) {
    if (nu.size() != n || nu.geometry()->rows() != grid->rows() || nu.geometry()->cols() != grid->cols())
      throw InvalidArgument("barycenter: all measures must share one geometry");
    if (config.source == PotentialSource::approximator && !nu.strictly_positive())
      throw InvalidArgument("barycenter: approximator potentials need strictly positive measures");
  }
  if (cost.rows() != n || cost.cols() != n) throw InvalidArgument("barycenter: cost does not match the measures");

  Vector mu = config.initial ? *config.initial : Vector::Constant(n, 1.0 / n);
  if (mu.size() != n) throw InvalidArgument("barycenter: initial measure has the wrong size");
  mu = project_to_simplex(mu);
  // Softmax parametrization keeps log-weights; it needs a positive start.
  Vector theta;
  if (config.simplex == SimplexHandling::softmax_reparam) {
    mu = (mu.array() + 1e-12).matrix();
    mu /= pairwise_sum(mu);
    theta = mu.array().log();
  }

  auto advance = [&](const Vector& point, const Vector& log_point, const Vector& gradient, double eta,
                     Vector& next_log) {
    if (config.simplex == SimplexHandling::euclidean_project) return project_to_simplex(point - eta * gradient);
    // d/dtheta of <g, softmax(theta)> = mu (g - <g, mu>)
    next_log = log_point - eta * (point.array() * (gradient.array() - gradient.dot(point))).matrix();
    Vector out = (next_log.array() - next_log.maxCoeff()).exp();
    return Vector(out / pairwise_sum(out));
  };

  BarycenterResult result{DiscreteMeasure(mu, grid), {}, 0, config.step};
  BarycenterObjective current = barycenter_objective(mu, nus, cost, config);
  result.objective.push_back(current.value);
  double eta = config.step;
  int increases = 0;
  // Backtracking state: subgradients at recent points within `radius` of mu.
  Matrix bundle_points(n, 0), bundle_gradients(n, 0);
  double radius = 1e-2;
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  for (long step = 0; step < config.max_steps; ++step) {
    Vector next_log;
    Vector next = advance(mu, theta, current.gradient, eta, next_log);
    BarycenterObjective candidate = barycenter_objective(next, nus, cost, config);
    if (config.rule == StepRule::backtracking) {
      bool descended = false;
      const double initial_eta = eta;
      long null_steps = 0;
      while (!descended && radius > 1e-12) {
        // Keep the subgradients gathered within `radius` of mu.
        Eigen::Index kept = 0;
        for (Eigen::Index k = 0; k < bundle_points.cols(); ++k) {
          if ((bundle_points.col(k) - mu).norm() > radius) continue;
          bundle_points.col(kept) = bundle_points.col(k);
          bundle_gradients.col(kept) = bundle_gradients.col(k);
          ++kept;
        }
        bundle_points.conservativeResize(Eigen::NoChange, kept);
        bundle_gradients.conservativeResize(Eigen::NoChange, kept);
        Matrix gradients(n, kept + 1);
        gradients << current.gradient, bundle_gradients;
        const Vector direction = min_norm_hull_point(gradients);
        if (direction.norm() <= 1e-3 * current.gradient.norm() || null_steps > 2 * n) {
          // mu is stationary at this resolution.
          radius *= 0.1;
          null_steps = 0;
          continue;
        }
        eta = initial_eta;
        for (int halvings = 0;; ++halvings) {
          next = advance(mu, theta, direction, eta, next_log);
          candidate = barycenter_objective(next, nus, cost, config);
          descended = sufficient_decrease(current, candidate, mu, next, direction);
          if (descended || halvings == 10) break;
          eta *= 0.5;
        }
        bundle_points.conservativeResize(Eigen::NoChange, bundle_points.cols() + 2);
        bundle_gradients.conservativeResize(Eigen::NoChange, bundle_gradients.cols() + 2);
        bundle_points.rightCols(2) << mu, next;
        if (descended) {
          bundle_gradients.rightCols(2) << current.gradient, candidate.gradient;
          break;
        }
        // Null step. Points on the line from mu often share its degenerate
        // face, where the solver keeps returning the same vertex potential; a
        // tiny zero-sum jitter moves the probe to a point with unique duals.
        ++null_steps;
        Vector jitter(n);
        for (Eigen::Index k = 0; k < n; ++k) jitter[k] = unit(rng);
        jitter.array() -= jitter.mean();
        const double size = 1e-3 * (next - mu).norm() / std::max(jitter.norm(), 1e-300);
        const Vector probe = project_to_simplex(next + size * jitter);
        bundle_points.col(bundle_points.cols() - 1) = probe;
        bundle_gradients.rightCols(2) << current.gradient, barycenter_objective(probe, nus, cost, config).gradient;
      }
      if (!descended) break;  // stationary to working precision
    }
    const double decrease = current.value - candidate.value;
    increases = decrease < 0.0 ? increases + 1 : 0;
    if (increases >= 10)
      throw DivergedError("barycenter: objective increased on 10 consecutive steps; try a step size below " +
                          std::to_string(eta));
    mu = std::move(next);
    theta = std::move(next_log);
    current = std::move(candidate);
    result.objective.push_back(current.value);
    result.steps = step + 1;
    if (config.rule == StepRule::backtracking) eta *= 2.0;
    if (config.tolerance > 0.0 && decrease >= 0.0 && decrease < config.tolerance) break;
  }
  result.mu = DiscreteMeasure(mu, grid);
  result.final_step = eta;
  return result;
}

bool NoiseReport::passed() const {
  if (standard_error == 0.0) return mean_deviation == 0.0;
  return std::abs(mean_deviation) <= 4.0 * standard_error;
}

NoiseReport noise_cancellation_check(const Vector& f, const DiscreteMeasure& mu, double noise_scale, long trials,
                                     std::uint64_t seed) {
  if (trials < 1) throw InvalidArgument("noise_cancellation_check: trials must be >= 1");
  if (noise_scale < 0.0) throw InvalidArgument("noise_cancellation_check: noise scale must be >= 0");
  if (f.size() != mu.size()) throw InvalidArgument("noise_cancellation_check: dimension mismatch");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  NoiseReport report;
  report.trials = trials;
  report.reference = pairwise_dot(f, mu.weights());
  report.deviations.resize(static_cast<std::size_t>(trials));
  Vector sigma(f.size());
  for (long t = 0; t < trials; ++t) {
    for (Eigen::Index k = 0; k < sigma.size(); ++k) sigma[k] = noise_scale * normal(rng);
    // <f + sigma, mu> - <f, mu> = <sigma, mu> by linearity.
    report.deviations[static_cast<std::size_t>(t)] = pairwise_dot(sigma, mu.weights());
  }
  const Eigen::Map<const Vector> d(report.deviations.data(), trials);
  report.mean_deviation = pairwise_sum(Vector(d)) / static_cast<double>(trials);
  if (trials > 1) {
    const double variance = (d.array() - report.mean_deviation).square().sum() / static_cast<double>(trials - 1);
    report.standard_error = std::sqrt(variance / static_cast<double>(trials));
  }
  return report;
}

}  // namespace otws
