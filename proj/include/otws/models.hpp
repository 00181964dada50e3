#pragma once

// The sample generator and the potential approximator.
//
// Generator: z (latent, l) -> [mu | nu] (2n), computed as
//   x = lambda * ReLU(T z) + ReLU(W z + b) + c,
// where T bilinearly upsamples each latent half (a square image) to the
// output grid, followed by dividing each half by its sum.
//
// Approximator: [mu | nu] (2n) -> f (n), a three-layer perceptron with widths
// 2n -> 6n -> 6n -> n; the hidden layers are linear -> ReLU -> batch norm.

#include <functional>
#include <random>
#include <utility>

#include "otws/measures.hpp"
#include "otws/nn.hpp"

namespace otws {

struct GeneratorConfig {
  int latent_dim = 128;  // l; each half is a square image unless l / 2 == n
  int n = 784;           // atoms per output distribution (a square grid)
  double lambda = 0.3;
  double c = 1e-2;

  // side x side output grids fed by two latent_side x latent_side images.
  static GeneratorConfig for_grid(int side, int latent_side);
  void validate() const;
};

struct ApproximatorConfig {
  int n = 784;
  int hidden() const { return 6 * n; }
  void validate() const;
};

// Corner-aligned bilinear resampling matrix from a side_in x side_in image to
// a side_out x side_out image (row-major pixels), shape side_out^2 x side_in^2.
Matrix bilinear_interpolation_matrix(int side_in, int side_out);

class Generator {
 public:
  explicit Generator(const GeneratorConfig& config);

  void init(std::mt19937_64& rng);

  const GeneratorConfig& config() const { return config_; }
  LinearLayer& net() { return net_; }
  const LinearLayer& net() const { return net_; }
  // Block-diagonal upsampling T (2n x l).
  const Matrix& upsampling() const { return upsampling_; }

  // Rows of z are latent samples; rows of the result are [mu | nu].
  Tensor2 forward(const Tensor2& z);
  Tensor2 apply(const Tensor2& z) const;
  // Accumulates gradients of the net parameters; returns d/dz.
  Tensor2 backward(const Tensor2& grad_output);

  // lambda * ReLU(T z) + ReLU(W z + b), i.e. without +c and normalization.
  Tensor2 unnormalized_core(const Tensor2& z) const;

  std::pair<DiscreteMeasure, DiscreteMeasure> generate(const Vector& z, const GeometryPtr& grid) const;

  void zero_grad() { net_.zero_grad(); }
  std::vector<ParamView> parameters() { return net_.parameters("generator.net"); }

 private:
  GeneratorConfig config_;
  Matrix upsampling_;
  LinearLayer net_;
  ReLU net_activation_;
  Tensor2 skip_pre_;  // T z
  Tensor2 output_;    // normalized output, cached for backward
  Vector half_sums_mu_;
  Vector half_sums_nu_;
  bool cached_ = false;
};

class Approximator {
 public:
  explicit Approximator(const ApproximatorConfig& config);

  void init(std::mt19937_64& rng);

  const ApproximatorConfig& config() const { return config_; }
  Sequential& network() { return network_; }
  const Sequential& network() const { return network_; }
  LinearLayer& linear(int k);  // k in {0, 1, 2}
  const LinearLayer& linear(int k) const;
  BatchNorm1d& batch_norm(int k);  // k in {0, 1}
  const BatchNorm1d& batch_norm(int k) const;

  Tensor2 forward(const Tensor2& input, Mode mode, bool update_running = true) {
    return network_.forward(input, mode, update_running);
  }
  Tensor2 backward(const Tensor2& grad_output) { return network_.backward(grad_output); }
  // Eval-mode prediction without caching.
  Tensor2 apply(const Tensor2& input) const { return network_.apply(input); }

  // Predicted potential f for the ordered pair (mu, nu), eval mode.
  Vector predict(const DiscreteMeasure& mu, const DiscreteMeasure& nu) const;

  void zero_grad() { network_.zero_grad(); }
  std::vector<ParamView> parameters() { return network_.parameters("approximator"); }

 private:
  ApproximatorConfig config_;
  Sequential network_;
};

// Row-wise concatenation [mu | nu] as a single-row tensor.
Tensor2 pair_input(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

struct LipschitzEstimate {
  double max_ratio = 0.0;  // lower bound on the Lipschitz constant
  double min_ratio = 0.0;  // upper bound on the inverse's co-Lipschitz constant
  long pairs = 0;
};

using VectorMap = std::function<Vector(const Vector&)>;
using PairSampler = std::function<std::pair<Vector, Vector>(std::mt19937_64&)>;

// max and min of |F(x) - F(y)| / |x - y| over sampled pairs (x != y).
LipschitzEstimate lipschitz_estimate(const VectorMap& map, const PairSampler& sampler, long pairs,
                                     std::uint64_t seed);

// Largest singular value by power iteration on W^T W.
double spectral_norm(const Matrix& weight, int iterations = 100);

// Scales the weight by target / sigma_max when sigma_max > target.
LinearLayer spectral_rescale(const LinearLayer& layer, double target);

}  // namespace otws
