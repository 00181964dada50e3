#pragma once

// Adversarial training of the approximator against the generator.
//
// Each outer iteration draws a latent batch, generates (mu, nu) pairs,
// computes exact dual targets, fits the approximator on both orderings for a
// few epochs and then takes one ascent step on the generator.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "otws/exact_ot.hpp"
#include "otws/models.hpp"

namespace otws {

enum class TrainLoss {
  potential,  // supervised MSE against exact potentials
  ws,         // negated dual objective of (f, f^C), no targets needed
};

struct TrainConfig {
  long batch_size = 500;
  long minibatch_size = 100;
  int inner_epochs = 5;
  double lr_approximator = 2.352;
  double lr_generator = 0.2352;
  double lr_decay = 0.99;
  // The Adam step size is lr / lr_reference_dim.
  double lr_reference_dim = 784.0;
  long total_unique_samples = 10000;
  std::uint64_t seed = 0;
  TrainLoss loss = TrainLoss::potential;
  bool train_generator = true;
  // Also shift the swapped-order target f^C to zero sum.
  bool center_swapped_targets = false;
  long checkpoint_every = 0;  // outer iterations; 0 disables
  std::string checkpoint_path;
  ExactOptions exact;

  void validate() const;
  long outer_iterations() const { return (total_unique_samples + batch_size - 1) / batch_size; }
  double approximator_rate(long iteration) const;
  double generator_rate(long iteration) const;
};

struct TrainRecord {
  long iteration = 0;
  long samples = 0;
  long dropped = 0;
  double loss_before = 0.0;  // eval-mode loss on the batch before the inner epochs
  double loss_after = 0.0;
  double generator_objective = 0.0;
  double lr_approximator = 0.0;
  double lr_generator = 0.0;
  std::int64_t target_time_ns = 0;
  std::uint64_t rng_digest = 0;  // FNV-1a of the RNG state after sampling
};

struct TrainLog {
  std::vector<TrainRecord> records;
  // Header: iteration,samples,dropped,loss_before,loss_after,
  //         generator_objective,lr_approximator,lr_generator,target_time_ns,rng_digest
  // target_time_ns is wall time and is left out when include_wall_time is
  // false; every other column is deterministic.
  void write_csv(std::ostream& out, bool include_wall_time = true) const;
  void write_csv(const std::string& path, bool include_wall_time = true) const;
};

// Exact potentials for a pair: f centered to zero sum and its C-transform.
struct PotentialTarget {
  Vector f;
  Vector f_c;
};

PotentialTarget potential_target(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                                 const ExactOptions& options = {});

// Runs outer iterations one at a time; the models are updated in place.
class Trainer {
 public:
  Trainer(Generator& generator, Approximator& approximator, const CostMatrix& cost, const TrainConfig& config,
          GeometryPtr grid = nullptr);

  // Initializes both models from the seed.
  void init_models();

  TrainRecord step();
  bool done() const { return iteration_ >= config_.outer_iterations(); }
  TrainLog run();

  long iteration() const { return iteration_; }
  long samples_seen() const { return samples_seen_; }
  const TrainLog& log() const { return log_; }

 private:
  double approximator_pass(const Tensor2& inputs, const Tensor2& targets, const std::vector<Eigen::Index>& rows,
                           double lr);
  double ws_pass(const Tensor2& inputs, const CostMatrix& cost, const std::vector<Eigen::Index>& rows, double lr);
  double generator_ws_step(const Tensor2& z, double lr);

  Generator& generator_;
  Approximator& approximator_;
  const CostMatrix& cost_;
  CostMatrix cost_t_;
  TrainConfig config_;
  GeometryPtr grid_;
  std::mt19937_64 rng_;
  AdamState adam_approximator_;
  AdamState adam_generator_;
  long iteration_ = 0;
  long samples_seen_ = 0;
  TrainLog log_;
};

TrainLog train_loop(Generator& generator, Approximator& approximator, const CostMatrix& cost,
                    const TrainConfig& config);

// One ascent step on the generator: gradients flow through the approximator
// (batch statistics, running estimates untouched) and the generator, with the
// targets held constant. Approximator parameters are not modified and its
// gradient buffers are left zeroed. Returns the MSE before the step.
double generator_step(Generator& generator, Approximator& approximator, const Tensor2& z, const Tensor2& targets,
                      AdamState& state, double lr);

// Mean over rows of -(<f, mu> + <f^C, nu>) where f is the row of `potentials`
// and (mu, nu) the halves of the matching row of `inputs`.
double alt_loss_ws(const Tensor2& potentials, const Tensor2& inputs, const CostMatrix& cost);
// Subgradient with respect to the potentials; each C-transform entry routes
// its gradient to the argmin row (ties go to the smallest index).
Tensor2 alt_loss_ws_grad(const Tensor2& potentials, const Tensor2& inputs, const CostMatrix& cost);
// Subgradient with respect to the inputs with the potentials held fixed.
Tensor2 alt_loss_ws_input_grad(const Tensor2& potentials, const CostMatrix& cost);
// Single pair, approximator in eval mode.
double alt_loss_ws(const Approximator& approximator, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                   const CostMatrix& cost);

// Held-out potential error: MSE between zero-sum-centered eval-mode
// predictions and centered targets.
double potential_mse(const Approximator& approximator, const std::vector<DiscreteMeasure>& mus,
                     const std::vector<DiscreteMeasure>& nus, const std::vector<Vector>& targets);

// Draws `count` pairs from an untrained-or-trained generator with a seed.
std::pair<std::vector<DiscreteMeasure>, std::vector<DiscreteMeasure>> sample_pairs(const Generator& generator,
                                                                                   long count,
                                                                                   std::uint64_t seed,
                                                                                   const GeometryPtr& grid);

}  // namespace otws
