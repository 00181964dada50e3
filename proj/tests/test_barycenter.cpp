#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "otws/barycenter.hpp"

using namespace otws;

namespace {

Vector random_simplex(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Vector v(n);
  for (int k = 0; k < n; ++k) v[k] = u(rng);
  return v / v.sum();
}

// Minimizes |x - v|^2 over the simplex by bisection on the threshold tau in
// x = max(v - tau, 0).
Vector bisection_projection(const Vector& v) {
  double lo = v.minCoeff() - 1.0, hi = v.maxCoeff();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if ((v.array() - mid).max(0.0).sum() > 1.0) lo = mid;
    else hi = mid;
  }
  return (v.array() - 0.5 * (lo + hi)).max(0.0);
}

DiscreteMeasure near_dirac(int cell, int n, const GeometryPtr& grid) {
  Vector w = Vector::Constant(n, 1e-4);
  w[cell] = 1.0;
  return DiscreteMeasure(w / w.sum(), grid);
}

}  // namespace

TEST_SUITE("barycenter") {
  TEST_CASE("simplex projection") {
    std::mt19937_64 rng(81);
    std::normal_distribution<double> normal(0.0, 2.0);
    for (int t = 0; t < 50; ++t) {
      Vector v(7);
      for (int k = 0; k < 7; ++k) v[k] = normal(rng);
      const Vector p = project_to_simplex(v);
      CHECK(p.minCoeff() >= 0.0);
      CHECK(std::abs(p.sum() - 1.0) <= 1e-14);
      CHECK((p - bisection_projection(v)).cwiseAbs().maxCoeff() <= 1e-12);
    }
    const Vector inside = random_simplex(rng, 5);
    CHECK((project_to_simplex(inside) - inside).cwiseAbs().maxCoeff() <= 1e-15);
    Vector flat = Vector::Constant(4, 3.0);
    CHECK(project_to_simplex(flat) == Vector::Constant(4, 0.25));
  }

  TEST_CASE("objective equals the sum of transport costs") {
    std::mt19937_64 rng(82);
    const auto grid = make_grid(4, 4);
    const CostMatrix cost = build_cost(*grid, *grid);
    std::vector<DiscreteMeasure> nus;
    double total = 0.0;
    const Vector mu = random_simplex(rng, 16);
    for (int k = 0; k < 3; ++k) {
      nus.emplace_back(random_simplex(rng, 16), grid);
      total += solve_exact(DiscreteMeasure(mu, grid), nus.back(), cost).primal_value;
    }
    const BarycenterObjective obj = barycenter_objective(mu, nus, cost, BarycenterConfig{});
    CHECK(std::abs(obj.value - total) <= 1e-9);
    CHECK(obj.gradient.size() == 16);
  }

  TEST_CASE("identical inputs are recovered") {
    std::mt19937_64 rng(83);
    const auto grid = make_grid(4, 4);
    const CostMatrix cost = build_cost(*grid, *grid);
    const DiscreteMeasure nu(random_simplex(rng, 16), grid);
    BarycenterConfig cfg;
    cfg.rule = StepRule::backtracking;
    cfg.step = 0.05;
    cfg.max_steps = 300;
    const BarycenterResult res = barycenter_descent({nu, nu, nu}, cost, cfg);
    CHECK(std::abs(res.objective.back()) <= 1e-6);
    CHECK((res.mu.weights() - nu.weights()).cwiseAbs().sum() <= 1e-3);
    for (std::size_t k = 1; k < res.objective.size(); ++k) CHECK(res.objective[k] <= res.objective[k - 1] + 1e-12);
  }

  TEST_CASE("two near-diracs") {
    const auto grid = make_grid(5, 5);
    const CostMatrix cost = build_cost(*grid, *grid);
    const DiscreteMeasure a = near_dirac(0, 25, grid), b = near_dirac(24, 25, grid);
    BarycenterConfig cfg;
    cfg.rule = StepRule::backtracking;
    cfg.max_steps = 200;
    const BarycenterResult res = barycenter_descent({a, b}, cost, cfg);
    const double at_a = barycenter_objective(a.weights(), {a, b}, cost, cfg).value;
    const double at_b = barycenter_objective(b.weights(), {a, b}, cost, cfg).value;
    CHECK(res.objective.back() <= std::min(at_a, at_b));
    CHECK(res.objective.back() < res.objective.front());
  }

  TEST_CASE("iterates stay on the simplex") {
    std::mt19937_64 rng(84);
    const auto grid = make_grid(3, 3);
    const CostMatrix cost = build_cost(*grid, *grid);
    std::vector<DiscreteMeasure> nus;
    for (int k = 0; k < 4; ++k) nus.emplace_back(random_simplex(rng, 9), grid);
    for (SimplexHandling s : {SimplexHandling::euclidean_project, SimplexHandling::softmax_reparam}) {
      BarycenterConfig cfg;
      cfg.simplex = s;
      cfg.step = 0.01;
      cfg.max_steps = 30;
      const BarycenterResult res = barycenter_descent(nus, cost, cfg);
      CHECK(res.mu.weights().minCoeff() >= 0.0);
      CHECK(std::abs(res.mu.weights().sum() - 1.0) <= 1e-12);
      CHECK(res.objective.back() <= res.objective.front());
    }
  }

  TEST_CASE("approximator source") {
    std::mt19937_64 rng(85);
    const auto grid = make_grid(3, 3);
    const CostMatrix cost = build_cost(*grid, *grid);
    Approximator approx(ApproximatorConfig{9});
    approx.init(rng);
    BarycenterConfig cfg;
    cfg.source = PotentialSource::approximator;
    cfg.max_steps = 5;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg.approximator = &approx;
    const DiscreteMeasure nu(random_simplex(rng, 9), grid);
    const Vector mu = Vector::Constant(9, 1.0 / 9);
    const BarycenterObjective obj = barycenter_objective(mu, {nu}, cost, cfg);
    Vector f = approx.predict(DiscreteMeasure(mu, grid), nu);
    f.array() -= f.mean();
    CHECK((obj.gradient - f).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(obj.value == doctest::Approx(f.dot(mu) + c_transform(f, cost).dot(nu.weights())).epsilon(1e-12));
  }

  TEST_CASE("config validation") {
    BarycenterConfig cfg;
    cfg.step = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = BarycenterConfig{};
    cfg.max_steps = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  }

  TEST_CASE("noise cancellation") {
    std::mt19937_64 rng(87);
    const Vector f = Vector::Random(10);
    const DiscreteMeasure mu(random_simplex(rng, 10));
    const NoiseReport silent = noise_cancellation_check(f, mu, 0.0, 100, 1);
    CHECK(silent.mean_deviation == 0.0);
    CHECK(silent.passed());
    const NoiseReport noisy = noise_cancellation_check(f, mu, 0.5, 100000, 2);
    CHECK(noisy.trials == 100000);
    CHECK(noisy.passed());
    CHECK(std::abs(noisy.mean_deviation) <= 4 * noisy.standard_error);
    CHECK(noisy.reference == doctest::Approx(f.dot(mu.weights())).epsilon(1e-14));

    // Point mass: the deviation is exactly the noise entry at that atom.
    Vector point = Vector::Zero(10);
    point[3] = 1.0;
    const NoiseReport single = noise_cancellation_check(f, DiscreteMeasure(point), 1.0, 5, 3);
    std::mt19937_64 stream(3);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int t = 0; t < 5; ++t) {
      Vector sigma(10);
      for (int k = 0; k < 10; ++k) sigma[k] = normal(stream);
      CHECK(single.deviations[static_cast<std::size_t>(t)] == sigma[3]);
    }
  }
}
