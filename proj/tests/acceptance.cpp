// Acceptance checks. Usage: otws_acceptance [criterion...]; no argument runs
// all of them. Prints one PASS/FAIL line per criterion and exits nonzero when
// any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/SVD>

#include "otws/barycenter.hpp"
#include "otws/data.hpp"
#include "otws/exact_ot.hpp"
#include "otws/models.hpp"
#include "otws/nn.hpp"
#include "otws/sinkhorn.hpp"
#include "otws/train.hpp"

using namespace otws;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool passed = false;
  std::string detail;
};

Vector random_simplex(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Vector v(n);
  for (int k = 0; k < n; ++k) v[k] = u(rng);
  return v / v.sum();
}

CostMatrix random_positive_cost(std::mt19937_64& rng, int m, int n) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  Matrix c(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) c(i, j) = u(rng);
  return CostMatrix(c);
}

Tensor2 random_tensor(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Tensor2 t(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) t(i, j) = normal(rng);
  return t;
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(4);
  s << x;
  return s.str();
}

// ----------------------------------------------------------------- criterion 1

Outcome exact_certification() {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> size(1, 32);
  long failures = 0;
  double worst_gap = 0.0, worst_slack = 0.0;
  const auto start = Clock::now();
  for (int k = 0; k < 1000; ++k) {
    const int m = size(rng), n = size(rng);
    const DiscreteMeasure mu(random_simplex(rng, m)), nu(random_simplex(rng, n));
    const CostMatrix cost = random_positive_cost(rng, m, n);
    const ExactSolution sol = solve_exact(mu, nu, cost);
    const CertificateReport rep = verify_certificate(sol, mu, nu, cost);
    const bool gap_ok = std::abs(rep.gap) <= 1e-9 * std::max(1.0, std::abs(sol.primal_value));
    if (!rep.passed() || !gap_ok) ++failures;
    worst_gap = std::max(worst_gap, std::abs(rep.gap));
    worst_slack = std::max(worst_slack, rep.max_slackness);
  }
  const double elapsed = seconds_since(start);
  return {failures == 0 && elapsed < 30.0,
          std::to_string(failures) + " of 1000 certificates failed, worst gap " + fmt(worst_gap) + ", worst slackness " +
              fmt(worst_slack) + ", " + fmt(elapsed) + " s"};
}

// ----------------------------------------------------------------- criterion 2

Outcome entropic_bracket() {
  std::mt19937_64 rng(1002);
  const int m = 16, n = 16;
  long violations = 0, unconverged = 0;
  double min_diff = 1e300, max_ratio = 0.0;
  const auto start = Clock::now();
  for (const double eps : {0.1, 0.01, 0.001}) {
    for (int k = 0; k < 200; ++k) {
      const DiscreteMeasure mu(random_simplex(rng, m)), nu(random_simplex(rng, n));
      const CostMatrix cost = random_positive_cost(rng, m, n);
      const ExactSolution exact = solve_exact(mu, nu, cost);
      SinkhornConfig c;
      c.eps = eps;
      c.domain = SinkhornDomain::log;
      c.max_iters = 2000000;
      c.stop_mcv = 1e-10;
      const SinkhornTrace t = sinkhorn_run(mu, nu, cost, c);
      if (!t.reached_stop) ++unconverged;
      const double regularized = entropic_dual_value(t.potentials, mu, nu, cost, eps);
      const double lower = entropic_dual_value(exact.duals, mu, nu, cost, eps);
      const double diff = regularized - lower;
      if (!(diff >= 0.0 && diff <= m * n * eps)) ++violations;
      min_diff = std::min(min_diff, diff);
      max_ratio = std::max(max_ratio, diff / (m * n * eps));
    }
  }
  const double elapsed = seconds_since(start);
  return {violations == 0 && unconverged == 0 && elapsed < 120.0,
          std::to_string(violations) + " of 600 outside [0, mn eps], " + std::to_string(unconverged) +
              " unconverged, smallest difference " + fmt(min_diff) + ", largest difference / (mn eps) " +
              fmt(max_ratio) + ", " + fmt(elapsed) + " s"};
}

// ----------------------------------------------------------------- criterion 3

Outcome sinkhorn_correctness() {
  const auto grid = make_grid(8, 8);
  const CostMatrix cost = build_cost(*grid, *grid);
  DatasetSpec spec;
  spec.count = 200;
  spec.rows = 8;
  spec.cols = 8;
  spec.seed = 1003;
  const std::vector<DiscreteMeasure> measures = gen_random_r3(spec);
  const double eps_values[] = {0.01, 0.03, 0.1};
  double worst_domain = 0.0, worst_reconstruction = 0.0;
  long late_warm_starts = 0;
  for (int k = 0; k < 100; ++k) {
    const DiscreteMeasure& mu = measures[static_cast<std::size_t>(2 * k)];
    const DiscreteMeasure& nu = measures[static_cast<std::size_t>(2 * k + 1)];
    SinkhornConfig c;
    c.eps = eps_values[k % 3];
    c.max_iters = 400;
    const SinkhornTrace lin = sinkhorn_run(mu, nu, cost, c);
    c.domain = SinkhornDomain::log;
    const SinkhornTrace lg = sinkhorn_run(mu, nu, cost, c);
    worst_domain = std::max(worst_domain, (lin.plan.entries() - lg.plan.entries()).cwiseAbs().maxCoeff());

    const Matrix rebuilt = lin.u.asDiagonal() * gibbs_kernel(cost, c.eps) * lin.v.asDiagonal();
    worst_reconstruction = std::max(worst_reconstruction, (rebuilt - lin.plan.entries()).cwiseAbs().maxCoeff());

    SinkhornConfig converge;
    converge.eps = c.eps;
    converge.max_iters = 200000;
    converge.stop_mcv = 1e-13;
    const SinkhornTrace done = sinkhorn_run(mu, nu, cost, converge);
    SinkhornConfig warm = converge;
    warm.stop_mcv = 1e-9;
    const SinkhornTrace again = sinkhorn_run(mu, nu, cost, warm, done.v);
    const auto reached = iterations_to_mcv(again, 1e-9);
    if (!reached || *reached != warm.check_every) ++late_warm_starts;
  }
  const bool ok = worst_domain <= 1e-8 && worst_reconstruction <= 1e-12 && late_warm_starts == 0;
  return {ok, "linear vs log max entry difference " + fmt(worst_domain) + ", diag(u) K diag(v) residual " +
                  fmt(worst_reconstruction) + ", " + std::to_string(late_warm_starts) +
                  " of 100 warm starts missed the first checkpoint"};
}

// ----------------------------------------------------------------- criterion 4

// Largest error of analytic against central-difference gradients, relative
// to max(|numeric|, 1e-3 * largest |numeric| of the block).
struct FdResult {
  double worst = 0.0;
  long entries = 0;
};

void fd_block(double* value, const double* grad, Eigen::Index size, const std::function<double()>& loss,
              FdResult& out) {
  std::vector<double> numeric(static_cast<std::size_t>(size));
  double scale = 0.0;
  for (Eigen::Index k = 0; k < size; ++k) {
    const double original = value[k];
    const double h = 1e-6 * std::max(1.0, std::abs(original));
    value[k] = original + h;
    const double up = loss();
    value[k] = original - h;
    const double down = loss();
    value[k] = original;
    numeric[static_cast<std::size_t>(k)] = (up - down) / (2 * h);
    scale = std::max(scale, std::abs(numeric[static_cast<std::size_t>(k)]));
  }
  for (Eigen::Index k = 0; k < size; ++k) {
    const double num = numeric[static_cast<std::size_t>(k)];
    const double denom = std::max({std::abs(num), 1e-3 * scale, 1e-300});
    out.worst = std::max(out.worst, std::abs(num - grad[k]) / denom);
    ++out.entries;
  }
}

void fd_params(std::vector<ParamView> params, const std::function<double()>& loss, FdResult& out) {
  for (const ParamView& p : params) fd_block(p.value, p.grad, p.size, loss, out);
}

Outcome gradient_suite() {
  const auto start = Clock::now();
  FdResult linear, relu, bn_train, bn_eval, approximator, generator;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(4000 + static_cast<std::uint64_t>(seed));
    Tensor2 x = random_tensor(rng, 12, 6);

    {
      LinearLayer lin(6, 5);
      lin.init_uniform(rng);
      const Tensor2 target = random_tensor(rng, 12, 5);
      lin.zero_grad();
      Tensor2 gin = lin.backward(mse_grad(lin.forward(x), target));
      const auto loss = [&] { return mse(lin.apply(x), target); };
      fd_params(lin.parameters("lin"), loss, linear);
      fd_block(x.data(), gin.data(), x.size(), loss, linear);
    }
    {
      ReLU r;
      const Tensor2 target = random_tensor(rng, 12, 6);
      Tensor2 gin = r.backward(mse_grad(r.forward(x), target));
      fd_block(x.data(), gin.data(), x.size(), [&] { return mse(ReLU::apply(x), target); }, relu);
    }
    {
      BatchNorm1d bn(6);
      std::uniform_real_distribution<double> u(0.5, 1.5);
      for (int j = 0; j < 6; ++j) {
        bn.gamma[j] = u(rng);
        bn.beta[j] = u(rng) - 1.0;
      }
      const Tensor2 target = random_tensor(rng, 12, 6);
      bn.zero_grad();
      Tensor2 gin = bn.backward(mse_grad(bn.forward(x, Mode::train, false), target));
      const auto loss = [&] { return mse(bn.forward(x, Mode::train, false), target); };
      fd_params(bn.parameters("bn"), loss, bn_train);
      fd_block(x.data(), gin.data(), x.size(), loss, bn_train);

      for (int j = 0; j < 6; ++j) {
        bn.running_mean[j] = u(rng) - 1.0;
        bn.running_var[j] = u(rng);
      }
      bn.zero_grad();
      gin = bn.backward(mse_grad(bn.forward(x, Mode::eval), target));
      const auto eval_loss = [&] { return mse(bn.forward(x, Mode::eval), target); };
      fd_params(bn.parameters("bn"), eval_loss, bn_eval);
      fd_block(x.data(), gin.data(), x.size(), eval_loss, bn_eval);
    }
    {
      Approximator approx(ApproximatorConfig{4});
      approx.init(rng);
      Tensor2 input = random_tensor(rng, 10, 8);
      const Tensor2 target = random_tensor(rng, 10, 4);
      approx.zero_grad();
      Tensor2 gin = approx.backward(mse_grad(approx.forward(input, Mode::train, false), target));
      const auto loss = [&] { return mse(approx.forward(input, Mode::train, false), target); };
      fd_params(approx.parameters(), loss, approximator);
      fd_block(input.data(), gin.data(), input.size(), loss, approximator);
    }
    {
      const GeneratorConfig cfg = GeneratorConfig::for_grid(4, 2);
      Generator gen(cfg);
      gen.init(rng);
      Tensor2 z = random_tensor(rng, 5, cfg.latent_dim);
      const Tensor2 target = random_tensor(rng, 5, 2 * cfg.n, 0.05);
      gen.zero_grad();
      Tensor2 dz = gen.backward(mse_grad(gen.forward(z), target));
      const auto loss = [&] { return mse(gen.apply(z), target); };
      fd_params(gen.parameters(), loss, generator);
      fd_block(z.data(), dz.data(), z.size(), loss, generator);
    }
  }
  const double elapsed = seconds_since(start);
  const double worst = std::max({linear.worst, relu.worst, bn_train.worst, bn_eval.worst, approximator.worst,
                                 generator.worst});
  return {worst <= 1e-5 && elapsed < 60.0,
          "worst relative error: linear " + fmt(linear.worst) + ", relu " + fmt(relu.worst) + ", batch norm train " +
              fmt(bn_train.worst) + ", batch norm eval " + fmt(bn_eval.worst) + ", approximator " +
              fmt(approximator.worst) + ", generator " + fmt(generator.worst) + ", " + fmt(elapsed) + " s"};
}

// ----------------------------------------------------------------- criterion 5

Outcome lipschitz_bounds() {
  const int n = 64;
  GeneratorConfig cfg;
  cfg.n = n;
  cfg.latent_dim = 2 * n;
  Generator gen(cfg);
  std::mt19937_64 rng(1005);
  gen.init(rng);
  const bool identity = gen.upsampling().isIdentity(0.0);
  gen.net() = spectral_rescale(gen.net(), 0.29);
  const double sigma = Eigen::JacobiSVD<Matrix>(gen.net().weight).singularValues()[0];

  // Half the pairs are independent Gaussians, half are close neighbours.
  const PairSampler sampler = [&](std::mt19937_64& r) {
    std::normal_distribution<double> normal;
    std::bernoulli_distribution near(0.5);
    Vector x(2 * n), y(2 * n);
    for (int k = 0; k < 2 * n; ++k) x[k] = normal(r);
    const double spread = near(r) ? 1e-3 : 1.0;
    for (int k = 0; k < 2 * n; ++k) y[k] = (spread < 1.0 ? x[k] : 0.0) + spread * normal(r);
    return std::make_pair(x, y);
  };
  const LinearLayer& net = gen.net();
  const VectorMap residual = [&](const Vector& z) {
    const Tensor2 row = z.transpose();
    return Vector((row + ReLU::apply(net.apply(row))).transpose());
  };
  const VectorMap core = [&](const Vector& z) {
    const Tensor2 row = z.transpose();
    return Vector(gen.unnormalized_core(row).transpose());
  };
  const LipschitzEstimate res = lipschitz_estimate(residual, sampler, 100000, 51);
  const LipschitzEstimate lit = lipschitz_estimate(core, sampler, 100000, 52);
  const bool ok = identity && sigma <= 0.29 + 1e-9 && res.pairs == 100000 && res.max_ratio <= 1.3 &&
                  res.min_ratio >= 0.7 && lit.max_ratio <= 1.3;
  return {ok, std::string("T identity ") + (identity ? "yes" : "no") + ", Lip(net) " + fmt(sigma) +
                  ", z + net(z): ratios in [" + fmt(res.min_ratio) + ", " + fmt(res.max_ratio) +
                  "], generator core: max ratio " + fmt(lit.max_ratio) + " over " + std::to_string(res.pairs) +
                  " pairs"};
}

// ----------------------------------------------------------------- criterion 6

struct Stats {
  double mean = 0.0;
  double half_width = 0.0;  // 95% normal interval
};

Stats summarize(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, 1.96 * std::sqrt(ss / (n - 1) / n)};
}

Outcome warm_start_benchmark() {
  const int side = 14, n = side * side;
  const auto grid = make_grid(side, side);
  const CostMatrix cost = build_cost(*grid, *grid);
  Generator gen(GeneratorConfig::for_grid(side, 8));
  Approximator approx(ApproximatorConfig{n});
  TrainConfig cfg;
  cfg.total_unique_samples = 10000;
  cfg.seed = 3;
  Trainer trainer(gen, approx, cost, cfg, grid);
  trainer.init_models();

  DatasetSpec spec;
  spec.count = 400;
  spec.rows = side;
  spec.cols = side;
  spec.seed = 99;
  const std::vector<DiscreteMeasure> measures = gen_random_r3(spec);
  std::vector<DiscreteMeasure> mus, nus;
  std::vector<Vector> targets;
  for (std::size_t k = 0; k + 1 < measures.size(); k += 2) {
    mus.push_back(measures[k]);
    nus.push_back(measures[k + 1]);
    targets.push_back(potential_target(measures[k], measures[k + 1], cost).f);
  }
  const double untrained_mse = potential_mse(approx, mus, nus, targets);

  const auto start = Clock::now();
  trainer.run();
  const double train_seconds = seconds_since(start);
  const double trained_mse = potential_mse(approx, mus, nus, targets);

  SinkhornConfig sc;
  sc.eps = 0.00025;
  sc.max_iters = 10000;
  sc.stop_mcv = 1e-2;
  long fallbacks = 0, censored = 0;
  const auto run = [&](const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Vector& v0) {
    try {
      return sinkhorn_run(mu, nu, cost, sc, v0);
    } catch (const NumericalFailure&) {
      ++fallbacks;
      SinkhornConfig lg = sc;
      lg.domain = SinkhornDomain::log;
      return sinkhorn_run(mu, nu, cost, lg, v0);
    }
  };
  std::vector<double> ones, net;
  for (std::size_t k = 0; k < mus.size(); ++k) {
    const SinkhornTrace a = run(mus[k], nus[k], Vector::Ones(n));
    const SinkhornTrace b = run(mus[k], nus[k], warm_start_vector(approx.predict(mus[k], nus[k]), cost, sc));
    const auto ia = iterations_to_mcv(a, 1e-2), ib = iterations_to_mcv(b, 1e-2);
    censored += !ia + !ib;
    ones.push_back(static_cast<double>(ia.value_or(sc.max_iters)));
    net.push_back(static_cast<double>(ib.value_or(sc.max_iters)));
  }
  const Stats so = summarize(ones), sn = summarize(net);
  const double reduction = 1.0 - sn.mean / so.mean;
  const bool separated = sn.mean + sn.half_width < so.mean - so.half_width;
  return {reduction >= 0.10 && separated,
          "ones " + fmt(so.mean) + " +- " + fmt(so.half_width) + ", net " + fmt(sn.mean) + " +- " +
              fmt(sn.half_width) + ", reduction " + fmt(100 * reduction) + "%, " + std::to_string(fallbacks) +
              " log-domain fallbacks, " + std::to_string(censored) + " censored runs; held-out potential MSE " +
              fmt(untrained_mse) + " untrained, " + fmt(trained_mse) + " trained (" +
              fmt(untrained_mse / trained_mse) + "x); training " + fmt(train_seconds) + " s"};
}

// ----------------------------------------------------------------- criterion 7

Outcome loss_comparison() {
  const int side = 8, n = side * side;
  const auto grid = make_grid(side, side);
  const CostMatrix cost = build_cost(*grid, *grid);
  DatasetSpec spec;
  spec.count = 200;
  spec.rows = side;
  spec.cols = side;
  spec.seed = 1007;
  const std::vector<DiscreteMeasure> measures = gen_random_r3(spec);
  std::vector<DiscreteMeasure> mus, nus;
  std::vector<Vector> targets;
  for (std::size_t k = 0; k + 1 < measures.size(); k += 2) {
    mus.push_back(measures[k]);
    nus.push_back(measures[k + 1]);
    targets.push_back(potential_target(measures[k], measures[k + 1], cost).f);
  }
  double result[2] = {0.0, 0.0};
  for (const TrainLoss loss : {TrainLoss::potential, TrainLoss::ws}) {
    Generator gen(GeneratorConfig::for_grid(side, 8));
    Approximator approx(ApproximatorConfig{n});
    TrainConfig cfg;
    cfg.total_unique_samples = 2000;
    cfg.seed = 5;
    cfg.loss = loss;
    Trainer trainer(gen, approx, cost, cfg, grid);
    trainer.init_models();
    trainer.run();
    result[loss == TrainLoss::ws] = potential_mse(approx, mus, nus, targets);
  }
  return {result[0] < result[1],
          "held-out potential MSE: potential loss " + fmt(result[0]) + ", ws loss " + fmt(result[1])};
}

// ----------------------------------------------------------------- criterion 8

Outcome barycenter_sanity() {
  const auto grid = make_grid(8, 8);
  const CostMatrix cost = build_cost(*grid, *grid);
  bool ok = true;
  std::string detail;
  for (const std::uint64_t seed : {81u, 82u, 83u}) {
    DatasetSpec spec;
    spec.count = 1;
    spec.rows = 8;
    spec.cols = 8;
    spec.seed = seed;
    const DiscreteMeasure nu = gen_random_r3(spec).front();
    BarycenterConfig cfg;
    cfg.rule = StepRule::backtracking;
    cfg.step = 0.05;
    cfg.max_steps = 1000;
    const BarycenterResult res = barycenter_descent(std::vector<DiscreteMeasure>(5, nu), cost, cfg);
    const double distance = (res.mu.weights() - nu.weights()).cwiseAbs().sum();
    long increases = 0;
    for (std::size_t k = 1; k < res.objective.size(); ++k) increases += res.objective[k] > res.objective[k - 1];
    ok = ok && distance <= 1e-3 && std::abs(res.objective.back()) <= 1e-6 && increases == 0;
    detail += "seed " + std::to_string(seed) + ": |mu - nu|_1 " + fmt(distance) + ", objective " +
              fmt(res.objective.back()) + ", " + std::to_string(increases) + " increases; ";

    const ExactSolution sol = solve_exact(res.mu, nu, cost);
    const NoiseReport noise = noise_cancellation_check(sol.duals.f, res.mu, 0.1, 100000, seed);
    ok = ok && noise.passed() && noise.trials == 100000;
    detail += "noise mean " + fmt(noise.mean_deviation) + " (se " + fmt(noise.standard_error) + "); ";
  }
  return {ok, detail};
}

// ----------------------------------------------------------------- criterion 9

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("otws_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cli = OTWS_CLI_PATH;
  bool commands_ok = true;
  for (const char* run : {"a", "b"}) {
    const fs::path dir = root / run;
    const std::string train = "\"" + cli + "\" train --seed 11 --outer-iterations 1 --out \"" + (dir / "train").string() +
                              "\" > /dev/null";
    const std::string data = "\"" + cli + "\" gen-data --seed 11 --count 20 --out \"" + (dir / "data").string() +
                             "\" > /dev/null";
    commands_ok = commands_ok && std::system(train.c_str()) == 0 && std::system(data.c_str()) == 0;
  }
  // manifest.json and timing.csv record wall-clock times and are not compared.
  const char* artifacts[] = {"train/model.ckpt", "train/train_log.csv", "data/data.raw"};
  bool identical = commands_ok;
  std::string detail = commands_ok ? "" : "a CLI run failed; ";
  for (const char* name : artifacts) {
    const std::string a = slurp(root / "a" / name), b = slurp(root / "b" / name);
    const bool same = !a.empty() && a == b;
    identical = identical && same;
    detail += std::string(name) + " " + (same ? "identical" : "differs") + " (" + std::to_string(a.size()) + " bytes); ";
  }
  fs::remove_all(root);
  return {identical, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"exact solver certificates", exact_certification},
      {"entropic value bracket", entropic_bracket},
      {"sinkhorn correctness", sinkhorn_correctness},
      {"finite-difference gradients", gradient_suite},
      {"empirical lipschitz bounds", lipschitz_bounds},
      {"warm-start benchmark", warm_start_benchmark},
      {"potential vs ws loss", loss_comparison},
      {"barycenter of identical measures", barycenter_sanity},
      {"cli determinism", determinism},
  };
  std::vector<int> selected;
  for (int k = 1; k < argc; ++k) selected.push_back(std::atoi(argv[k]));
  if (selected.empty())
    for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) selected.push_back(k);

  int failed = 0;
  for (const int id : selected) {
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      std::cerr << "unknown criterion " << id << "\n";
      return 2;
    }
    const auto& [name, check] = criteria[static_cast<std::size_t>(id - 1)];
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << id << " (" << name << "): " << (outcome.passed ? "PASS" : "FAIL") << "  "
              << outcome.detail << std::endl;
    failed += !outcome.passed;
  }
  return failed == 0 ? 0 : 1;
}
