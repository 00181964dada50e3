#include "otws/train.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "otws/data.hpp"

namespace otws {

namespace {

Tensor2 gather_rows(const Tensor2& source, const std::vector<Eigen::Index>& rows) {
  Tensor2 out(static_cast<Eigen::Index>(rows.size()), source.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = source.row(rows[k]);
  return out;
}

// Contiguous minibatches of a permutation; a trailing single row joins the
// previous minibatch because batch statistics need at least two rows.
std::vector<std::vector<Eigen::Index>> split_minibatches(const std::vector<Eigen::Index>& order, long size) {
  std::vector<std::vector<Eigen::Index>> out;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(size)) {
    const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(size));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (out.size() > 1 && out.back().size() < 2) {
    out[out.size() - 2].insert(out[out.size() - 2].end(), out.back().begin(), out.back().end());
    out.pop_back();
  }
  return out;
}

Tensor2 swap_halves(const Tensor2& inputs) {
  const Eigen::Index n = inputs.cols() / 2;
  Tensor2 out(inputs.rows(), inputs.cols());
  out.leftCols(n) = inputs.rightCols(n);
  out.rightCols(n) = inputs.leftCols(n);
  return out;
}

std::uint64_t rng_digest(const std::mt19937_64& rng) {
  std::ostringstream state;
  state << rng;
  return fnv1a64(state.str());
}

void negate_gradients(const std::vector<ParamView>& params) {
  for (const ParamView& p : params) {
    for (Eigen::Index k = 0; k < p.size; ++k) p.grad[k] = -p.grad[k];
  }
}

// Index of the smallest entry of column j of (C - f 1^T); ties keep the first.
Eigen::Index argmin_row(const Matrix& cost, const Eigen::Ref<const Vector>& f, Eigen::Index j, double& value) {
  Eigen::Index best = 0;
  value = cost(0, j) - f[0];
  for (Eigen::Index i = 1; i < cost.rows(); ++i) {
    const double candidate = cost(i, j) - f[i];
    if (candidate < value) {
      value = candidate;
      best = i;
    }
  }
  return best;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 2 || minibatch_size < 2) throw InvalidArgument("train: batch and minibatch sizes must be >= 2");
  if (batch_size % minibatch_size != 0) throw InvalidArgument("train: minibatch size must divide the batch size");
  if (inner_epochs < 1) throw InvalidArgument("train: need at least one inner epoch");
  if (!(lr_approximator > 0.0) || !(lr_generator > 0.0)) throw InvalidArgument("train: learning rates must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw InvalidArgument("train: lr decay must lie in (0, 1]");
  if (!(lr_reference_dim > 0.0)) throw InvalidArgument("train: lr reference dimension must be positive");
  if (total_unique_samples < 1) throw InvalidArgument("train: total_unique_samples must be >= 1");
  if (checkpoint_every < 0) throw InvalidArgument("train: checkpoint interval must be >= 0");
  if (checkpoint_every > 0 && checkpoint_path.empty())
    throw InvalidArgument("train: checkpoint interval set without a checkpoint path");
}

// Applies the recurrence rate <- decay * rate, iteration times.
double TrainConfig::approximator_rate(long iteration) const {
  double rate = lr_approximator;
  for (long k = 0; k < iteration; ++k) rate *= lr_decay;
  return rate;
}

double TrainConfig::generator_rate(long iteration) const {
  double rate = lr_generator;
  for (long k = 0; k < iteration; ++k) rate *= lr_decay;
  return rate;
}

void TrainLog::write_csv(std::ostream& out, bool include_wall_time) const {
  out << "iteration,samples,dropped,loss_before,loss_after,generator_objective,lr_approximator,lr_generator,"
      << (include_wall_time ? "target_time_ns," : "") << "rng_digest\n";
  out << std::setprecision(17);
  for (const TrainRecord& r : records) {
    out << r.iteration << ',' << r.samples << ',' << r.dropped << ',' << r.loss_before << ',' << r.loss_after << ','
        << r.generator_objective << ',' << r.lr_approximator << ',' << r.lr_generator << ',';
    if (include_wall_time) out << r.target_time_ns << ',';
    out << std::hex << std::setw(16) << std::setfill('0') << r.rng_digest << std::dec << std::setfill(' ') << '\n';
  }
}

void TrainLog::write_csv(const std::string& path, bool include_wall_time) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_csv(out, include_wall_time);
}

PotentialTarget potential_target(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                                 const ExactOptions& options) {
  const ExactSolution solution = solve_exact(mu, nu, cost, options);
  PotentialTarget target;
  target.f = solution.duals.f.array() - pairwise_sum(solution.duals.f) / static_cast<double>(solution.duals.f.size());
  target.f_c = c_transform(target.f, cost);
  return target;
}

// ---------------------------------------------------------------- losses

double alt_loss_ws(const Tensor2& potentials, const Tensor2& inputs, const CostMatrix& cost) {
  const Eigen::Index m = cost.rows();
  const Eigen::Index n = cost.cols();
  if (potentials.cols() != m || inputs.cols() != m + n || potentials.rows() != inputs.rows())
    throw InvalidArgument("alt_loss_ws: dimension mismatch");
  double total = 0.0;
  for (Eigen::Index r = 0; r < potentials.rows(); ++r) {
    const Vector f = potentials.row(r).transpose();
    const Vector f_c = c_transform(f, cost);
    total -= f.dot(inputs.row(r).head(m).transpose()) + f_c.dot(inputs.row(r).tail(n).transpose());
  }
  return total / static_cast<double>(potentials.rows());
}

Tensor2 alt_loss_ws_grad(const Tensor2& potentials, const Tensor2& inputs, const CostMatrix& cost) {
  const Eigen::Index m = cost.rows();
  const Eigen::Index n = cost.cols();
  if (potentials.cols() != m || inputs.cols() != m + n || potentials.rows() != inputs.rows())
    throw InvalidArgument("alt_loss_ws_grad: dimension mismatch");
  const double scale = 1.0 / static_cast<double>(potentials.rows());
  Tensor2 grad(potentials.rows(), m);
  for (Eigen::Index r = 0; r < potentials.rows(); ++r) {
    const Vector f = potentials.row(r).transpose();
    // d/df_i of -<f, mu> is -mu_i; f^C_j = C_{i*j} - f_{i*} sends +nu_j to i*.
    grad.row(r) = -inputs.row(r).head(m);
    for (Eigen::Index j = 0; j < n; ++j) {
      double value = 0.0;
      grad(r, argmin_row(cost.entries(), f, j, value)) += inputs(r, m + j);
    }
  }
  return grad * scale;
}

Tensor2 alt_loss_ws_input_grad(const Tensor2& potentials, const CostMatrix& cost) {
  const Eigen::Index m = cost.rows();
  const Eigen::Index n = cost.cols();
  if (potentials.cols() != m) throw InvalidArgument("alt_loss_ws_input_grad: dimension mismatch");
  const double scale = 1.0 / static_cast<double>(potentials.rows());
  Tensor2 grad(potentials.rows(), m + n);
  for (Eigen::Index r = 0; r < potentials.rows(); ++r) {
    const Vector f = potentials.row(r).transpose();
    grad.row(r).head(m) = -scale * f.transpose();
    grad.row(r).tail(n) = -scale * c_transform(f, cost).transpose();
  }
  return grad;
}

double alt_loss_ws(const Approximator& approximator, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                   const CostMatrix& cost) {
  const Tensor2 input = pair_input(mu, nu);
  return alt_loss_ws(approximator.apply(input), input, cost);
}

double potential_mse(const Approximator& approximator, const std::vector<DiscreteMeasure>& mus,
                     const std::vector<DiscreteMeasure>& nus, const std::vector<Vector>& targets) {
  if (mus.size() != nus.size() || mus.size() != targets.size() || mus.empty())
    throw InvalidArgument("potential_mse: need matching, nonempty pair and target lists");
  const int n = approximator.config().n;
  Tensor2 inputs(static_cast<Eigen::Index>(mus.size()), 2 * n);
  Tensor2 centered_targets(static_cast<Eigen::Index>(mus.size()), n);
  for (std::size_t k = 0; k < mus.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    inputs.row(r) = pair_input(mus[k], nus[k]).row(0);
    centered_targets.row(r) = targets[k].transpose().array() - targets[k].mean();
  }
  Tensor2 predictions = approximator.apply(inputs);
  for (Eigen::Index r = 0; r < predictions.rows(); ++r) predictions.row(r).array() -= predictions.row(r).mean();
  return mse(predictions, centered_targets);
}

std::pair<std::vector<DiscreteMeasure>, std::vector<DiscreteMeasure>> sample_pairs(const Generator& generator,
                                                                                   long count,
                                                                                   std::uint64_t seed,
                                                                                   const GeometryPtr& grid) {
  if (count < 1) throw InvalidArgument("sample_pairs: count must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Tensor2 z(count, generator.config().latent_dim);
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) = normal(rng);
  const Tensor2 x = generator.apply(z);
  const int n = generator.config().n;
  std::vector<DiscreteMeasure> mus;
  std::vector<DiscreteMeasure> nus;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    mus.push_back(DiscreteMeasure::normalized(x.row(r).head(n).transpose(), grid));
    nus.push_back(DiscreteMeasure::normalized(x.row(r).tail(n).transpose(), grid));
  }
  return {std::move(mus), std::move(nus)};
}

double generator_step(Generator& generator, Approximator& approximator, const Tensor2& z, const Tensor2& targets,
                      AdamState& state, double lr) {
  if (lr < 0.0) throw InvalidArgument("generator_step: learning rate must be >= 0");
  generator.zero_grad();
  approximator.zero_grad();
  const Tensor2 x = generator.forward(z);
  const Tensor2 predictions = approximator.forward(x, Mode::train, false);
  const double objective = mse(predictions, targets);
  generator.backward(approximator.backward(mse_grad(predictions, targets)));
  const std::vector<ParamView> params = generator.parameters();
  negate_gradients(params);
  adam_step(params, state, lr);
  approximator.zero_grad();
  return objective;
}

// ---------------------------------------------------------------- trainer

Trainer::Trainer(Generator& generator, Approximator& approximator, const CostMatrix& cost, const TrainConfig& config,
                 GeometryPtr grid)
    : generator_(generator),
      approximator_(approximator),
      cost_(cost),
      cost_t_(cost.transposed()),
      config_(config),
      grid_(std::move(grid)),
      rng_(config.seed) {
  config_.validate();
  if (generator_.config().n != approximator_.config().n)
    throw InvalidArgument("train: generator and approximator disagree on n");
  if (cost_.rows() != approximator_.config().n || cost_.cols() != approximator_.config().n)
    throw InvalidArgument("train: cost matrix does not match the model dimension");
}

void Trainer::init_models() {
  std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32), 0x1417u};
  std::mt19937_64 init_rng(seq);
  generator_.init(init_rng);
  approximator_.init(init_rng);
}

double Trainer::approximator_pass(const Tensor2& inputs, const Tensor2& targets,
                                  const std::vector<Eigen::Index>& rows, double lr) {
  const Tensor2 x = gather_rows(inputs, rows);
  const Tensor2 y = gather_rows(targets, rows);
  approximator_.zero_grad();
  const Tensor2 predictions = approximator_.forward(x, Mode::train);
  const double loss = mse(predictions, y);
  approximator_.backward(mse_grad(predictions, y));
  adam_step(approximator_.parameters(), adam_approximator_, lr);
  return loss;
}

double Trainer::ws_pass(const Tensor2& inputs, const CostMatrix& cost, const std::vector<Eigen::Index>& rows,
                        double lr) {
  const Tensor2 x = gather_rows(inputs, rows);
  approximator_.zero_grad();
  const Tensor2 predictions = approximator_.forward(x, Mode::train);
  const double loss = alt_loss_ws(predictions, x, cost);
  approximator_.backward(alt_loss_ws_grad(predictions, x, cost));
  adam_step(approximator_.parameters(), adam_approximator_, lr);
  return loss;
}

double Trainer::generator_ws_step(const Tensor2& z, double lr) {
  generator_.zero_grad();
  approximator_.zero_grad();
  const Tensor2 x = generator_.forward(z);
  const Tensor2 predictions = approximator_.forward(x, Mode::train, false);
  const double objective = alt_loss_ws(predictions, x, cost_);
  Tensor2 grad_x = approximator_.backward(alt_loss_ws_grad(predictions, x, cost_));
  grad_x += alt_loss_ws_input_grad(predictions, cost_);
  generator_.backward(grad_x);
  const std::vector<ParamView> params = generator_.parameters();
  negate_gradients(params);
  adam_step(params, adam_generator_, lr);
  approximator_.zero_grad();
  return objective;
}

TrainRecord Trainer::step() {
  if (done()) throw InvalidState("train: all outer iterations have run");
  const long i = iteration_;
  const int n = approximator_.config().n;
  const long batch = std::min(config_.batch_size, config_.total_unique_samples - samples_seen_);

  TrainRecord record;
  record.iteration = i;
  record.lr_approximator = config_.approximator_rate(i);
  record.lr_generator = config_.generator_rate(i);
  const double alpha = record.lr_approximator / config_.lr_reference_dim;
  const double beta = record.lr_generator / config_.lr_reference_dim;

  std::normal_distribution<double> normal;
  Tensor2 z(batch, generator_.config().latent_dim);
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) = normal(rng_);
  record.rng_digest = rng_digest(rng_);
  const Tensor2 generated = generator_.apply(z);

  std::vector<DiscreteMeasure> mus;
  std::vector<DiscreteMeasure> nus;
  mus.reserve(static_cast<std::size_t>(batch));
  nus.reserve(static_cast<std::size_t>(batch));
  for (Eigen::Index r = 0; r < batch; ++r) {
    mus.push_back(DiscreteMeasure::normalized(generated.row(r).head(n).transpose(), grid_));
    nus.push_back(DiscreteMeasure::normalized(generated.row(r).tail(n).transpose(), grid_));
  }

  // Targets (skipped for the dual-objective loss, which needs none).
  std::vector<PotentialTarget> targets(static_cast<std::size_t>(batch));
  std::vector<char> kept(static_cast<std::size_t>(batch), 1);
  const auto start = std::chrono::steady_clock::now();
  if (config_.loss == TrainLoss::potential) {
    std::vector<std::string> failures(static_cast<std::size_t>(batch));
    parallel_for(static_cast<std::size_t>(batch), [&](std::size_t k) {
      try {
        targets[k] = potential_target(mus[k], nus[k], cost_, config_.exact);
      } catch (const SolverFailure& e) {
        kept[k] = 0;
        failures[k] = e.what();
      }
    });
    for (std::size_t k = 0; k < failures.size(); ++k) {
      if (!kept[k]) std::cerr << "warning: dropped sample " << k << " of outer iteration " << i << ": " << failures[k] << '\n';
    }
  }
  record.target_time_ns =
      std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
  record.dropped = static_cast<long>(std::count(kept.begin(), kept.end(), 0));
  if (2 * record.dropped >= batch)
    throw SolverFailure("train: exact solver failed on " + std::to_string(record.dropped) + " of " +
                            std::to_string(batch) + " samples in outer iteration " + std::to_string(i),
                        i);

  std::vector<Eigen::Index> kept_rows;
  for (Eigen::Index r = 0; r < batch; ++r) {
    if (kept[static_cast<std::size_t>(r)]) kept_rows.push_back(r);
  }
  const auto count = static_cast<Eigen::Index>(kept_rows.size());
  Tensor2 inputs(count, 2 * n);
  Tensor2 latent(count, z.cols());
  Tensor2 primary(count, n);
  Tensor2 swapped_targets(count, n);
  for (Eigen::Index k = 0; k < count; ++k) {
    const auto src = static_cast<std::size_t>(kept_rows[static_cast<std::size_t>(k)]);
    inputs.row(k).head(n) = mus[src].weights().transpose();
    inputs.row(k).tail(n) = nus[src].weights().transpose();
    latent.row(k) = z.row(kept_rows[static_cast<std::size_t>(k)]);
    if (config_.loss == TrainLoss::potential) {
      primary.row(k) = targets[src].f.transpose();
      swapped_targets.row(k) = targets[src].f_c.transpose();
      if (config_.center_swapped_targets) swapped_targets.row(k).array() -= targets[src].f_c.mean();
    }
  }
  const Tensor2 swapped = swap_halves(inputs);

  auto batch_loss = [&] {
    const Tensor2 predictions = approximator_.apply(inputs);
    return config_.loss == TrainLoss::potential ? mse(predictions, primary) : alt_loss_ws(predictions, inputs, cost_);
  };
  record.loss_before = batch_loss();

  std::vector<Eigen::Index> last_minibatch;
  for (int epoch = 0; epoch < config_.inner_epochs; ++epoch) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(count));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::seed_seq seq{static_cast<std::uint32_t>(config_.seed), static_cast<std::uint32_t>(config_.seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 shuffle_rng(seq);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (const auto& rows : split_minibatches(order, config_.minibatch_size)) {
      if (config_.loss == TrainLoss::potential) {
        approximator_pass(inputs, primary, rows, alpha);
        approximator_pass(swapped, swapped_targets, rows, alpha);
      } else {
        ws_pass(inputs, cost_, rows, alpha);
        ws_pass(swapped, cost_t_, rows, alpha);
      }
      last_minibatch = rows;
    }
  }
  record.loss_after = batch_loss();

  if (config_.train_generator) {
    const Tensor2 z_last = gather_rows(latent, last_minibatch);
    if (config_.loss == TrainLoss::potential) {
      record.generator_objective =
          generator_step(generator_, approximator_, z_last, gather_rows(primary, last_minibatch), adam_generator_, beta);
    } else {
      record.generator_objective = generator_ws_step(z_last, beta);
    }
  }

  record.samples = batch;
  samples_seen_ += batch;
  ++iteration_;
  log_.records.push_back(record);

  if (config_.checkpoint_every > 0 && iteration_ % config_.checkpoint_every == 0) {
    CheckpointHeader progress;
    progress.seed = config_.seed;
    progress.outer_iterations = iteration_;
    progress.samples_seen = samples_seen_;
    save_checkpoint(make_checkpoint(generator_, approximator_, progress), config_.checkpoint_path);
  }
  return record;
}

TrainLog Trainer::run() {
  while (!done()) step();
  return log_;
}

TrainLog train_loop(Generator& generator, Approximator& approximator, const CostMatrix& cost,
                    const TrainConfig& config) {
  Trainer trainer(generator, approximator, cost, config);
  return trainer.run();
}

}  // namespace otws
