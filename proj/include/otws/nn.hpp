#pragma once

// A small dense network stack with hand-written reverse-mode gradients.
//
// Tensors are row-major matrices: one row per sample, one column per feature.
// Every layer caches what its backward pass needs during forward; calling
// backward without a fresh forward is an InvalidState error.

#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "otws/common.hpp"

namespace otws {

using Tensor2 = Matrix;

enum class Mode { train, eval };

// Non-owning handle on a parameter block and its gradient buffer.
struct ParamView {
  std::string name;
  double* value = nullptr;
  double* grad = nullptr;
  Eigen::Index size = 0;
};

class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(int in_features, int out_features);

  // Uniform in +-sqrt(1 / fan_in); bias zero.
  void init_uniform(std::mt19937_64& rng);

  Tensor2 forward(const Tensor2& input);
  Tensor2 backward(const Tensor2& grad_output);
  Tensor2 apply(const Tensor2& input) const;

  int in_features() const { return static_cast<int>(weight.cols()); }
  int out_features() const { return static_cast<int>(weight.rows()); }

  void zero_grad();
  std::vector<ParamView> parameters(const std::string& prefix);

  Matrix weight;  // out x in
  Vector bias;
  Matrix grad_weight;
  Vector grad_bias;

 private:
  Tensor2 input_;
  bool cached_ = false;
};

class ReLU {
 public:
  Tensor2 forward(const Tensor2& input);
  // Zero wherever the cached pre-activation is <= 0.
  Tensor2 backward(const Tensor2& grad_output);
  static Tensor2 apply(const Tensor2& input);

 private:
  Tensor2 pre_activation_;
  bool cached_ = false;
};

class BatchNorm1d {
 public:
  static constexpr double kDefaultEps = 1e-5;
  static constexpr double kDefaultMomentum = 0.1;

  BatchNorm1d() = default;
  explicit BatchNorm1d(int features, double eps = kDefaultEps, double momentum = kDefaultMomentum);

  // Train mode normalizes with batch statistics (biased variance) and, when
  // update_running is set, folds them into the running estimates (unbiased
  // variance). Eval mode uses the running estimates only.
  Tensor2 forward(const Tensor2& input, Mode mode, bool update_running = true);
  Tensor2 backward(const Tensor2& grad_output);
  Tensor2 apply(const Tensor2& input) const;  // eval mode, no cache

  int features() const { return static_cast<int>(gamma.size()); }
  double eps() const { return eps_; }
  double momentum() const { return momentum_; }

  void zero_grad();
  std::vector<ParamView> parameters(const std::string& prefix);

  Vector gamma;
  Vector beta;
  Vector running_mean;
  Vector running_var;
  Vector grad_gamma;
  Vector grad_beta;

 private:
  double eps_ = kDefaultEps;
  double momentum_ = kDefaultMomentum;
  Tensor2 normalized_;
  Vector inv_std_;
  Mode cached_mode_ = Mode::eval;
  bool cached_ = false;
};

using Layer = std::variant<LinearLayer, ReLU, BatchNorm1d>;

// Fixed-topology feed-forward stack.
class Sequential {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<Layer> layers) : layers_(std::move(layers)) {}

  Tensor2 forward(const Tensor2& input, Mode mode, bool update_running = true);
  // Accumulates parameter gradients and returns the input gradient.
  Tensor2 backward(const Tensor2& grad_output);
  // Stateless eval-mode forward; safe to call concurrently.
  Tensor2 apply(const Tensor2& input) const;

  void zero_grad();
  std::vector<ParamView> parameters(const std::string& prefix);

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  int input_width() const;

 private:
  std::vector<Layer> layers_;
  bool cached_ = false;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Vector> first_moment;
  std::vector<Vector> second_moment;
};

// One bias-corrected Adam update of every parameter from its gradient
// buffer. Moments are created zeroed on the first call.
void adam_step(std::span<const ParamView> params, AdamState& state, double lr);

// Mean over all entries of (pred - target)^2.
double mse(const Tensor2& pred, const Tensor2& target);
// d mse / d pred = 2 (pred - target) / (rows * cols).
Tensor2 mse_grad(const Tensor2& pred, const Tensor2& target);

// Throws NumericalFailure if any entry is NaN or infinite. Forward and
// backward passes call it in debug builds.
void check_finite(const Tensor2& t, const char* where);

}  // namespace otws
