#include "otws/models.hpp"

#include <cmath>
#include <limits>

namespace otws {

namespace {

int exact_square_root(int value) {
  const int root = static_cast<int>(std::lround(std::sqrt(static_cast<double>(value))));
  return root * root == value ? root : -1;
}

constexpr int kLinearSlots[] = {0, 3, 6};
constexpr int kBatchNormSlots[] = {2, 5};

}  // namespace

GeneratorConfig GeneratorConfig::for_grid(int side, int latent_side) {
  GeneratorConfig config;
  config.n = side * side;
  config.latent_dim = 2 * latent_side * latent_side;
  config.validate();
  return config;
}

void GeneratorConfig::validate() const {
  if (n <= 0 || latent_dim <= 0 || latent_dim % 2 != 0)
    throw InvalidArgument("generator: n must be positive and the latent dimension positive and even");
  if (!(lambda > 0.0 && lambda < 1.0)) throw InvalidArgument("generator: lambda must lie in (0, 1)");
  if (!(c > 0.0)) throw InvalidArgument("generator: c must be positive");
  if (latent_dim / 2 != n && (exact_square_root(latent_dim / 2) < 0 || exact_square_root(n) < 0))
    throw InvalidArgument("generator: interpolation needs square latent halves and a square output grid");
}

void ApproximatorConfig::validate() const {
  if (n <= 0) throw InvalidArgument("approximator: n must be positive");
}

Matrix bilinear_interpolation_matrix(int side_in, int side_out) {
  if (side_in <= 0 || side_out <= 0) throw InvalidArgument("interpolation sides must be positive");
  Matrix t = Matrix::Zero(side_out * side_out, side_in * side_in);
  auto source = [&](int k) {
    return side_out > 1 ? static_cast<double>(k) * (side_in - 1) / (side_out - 1) : (side_in - 1) / 2.0;
  };
  for (int r = 0; r < side_out; ++r) {
    const double sr = source(r);
    const int r0 = static_cast<int>(std::floor(sr));
    const int r1 = std::min(r0 + 1, side_in - 1);
    const double wr = sr - r0;
    for (int c = 0; c < side_out; ++c) {
      const double sc = source(c);
      const int c0 = static_cast<int>(std::floor(sc));
      const int c1 = std::min(c0 + 1, side_in - 1);
      const double wc = sc - c0;
      const int row = r * side_out + c;
      t(row, r0 * side_in + c0) += (1.0 - wr) * (1.0 - wc);
      t(row, r0 * side_in + c1) += (1.0 - wr) * wc;
      t(row, r1 * side_in + c0) += wr * (1.0 - wc);
      t(row, r1 * side_in + c1) += wr * wc;
    }
  }
  return t;
}

// ---------------------------------------------------------------- generator

Generator::Generator(const GeneratorConfig& config) : config_(config) {
  config_.validate();
  const int half = config_.latent_dim / 2;
  const int n = config_.n;
  const Matrix block = half == n ? Matrix(Matrix::Identity(n, n))
                                 : bilinear_interpolation_matrix(exact_square_root(half), exact_square_root(n));
  upsampling_ = Matrix::Zero(2 * n, config_.latent_dim);
  upsampling_.topLeftCorner(n, half) = block;
  upsampling_.bottomRightCorner(n, half) = block;
  net_ = LinearLayer(config_.latent_dim, 2 * n);
}

void Generator::init(std::mt19937_64& rng) { net_.init_uniform(rng); }

Tensor2 Generator::unnormalized_core(const Tensor2& z) const {
  if (z.cols() != config_.latent_dim) throw InvalidArgument("generator: latent width mismatch");
  Tensor2 skip = z * upsampling_.transpose();
  return config_.lambda * skip.cwiseMax(0.0) + ReLU::apply(net_.apply(z));
}

Tensor2 Generator::apply(const Tensor2& z) const {
  const int n = config_.n;
  Tensor2 x = unnormalized_core(z).array() + config_.c;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    x.row(r).head(n) /= pairwise_sum(Vector(x.row(r).head(n).transpose()));
    x.row(r).tail(n) /= pairwise_sum(Vector(x.row(r).tail(n).transpose()));
  }
  return x;
}

Tensor2 Generator::forward(const Tensor2& z) {
  if (z.cols() != config_.latent_dim) throw InvalidArgument("generator: latent width mismatch");
  const int n = config_.n;
  skip_pre_ = z * upsampling_.transpose();
  Tensor2 x = config_.lambda * skip_pre_.cwiseMax(0.0) + net_activation_.forward(net_.forward(z));
  x.array() += config_.c;
  half_sums_mu_.resize(x.rows());
  half_sums_nu_.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    half_sums_mu_[r] = pairwise_sum(Vector(x.row(r).head(n).transpose()));
    half_sums_nu_[r] = pairwise_sum(Vector(x.row(r).tail(n).transpose()));
    x.row(r).head(n) /= half_sums_mu_[r];
    x.row(r).tail(n) /= half_sums_nu_[r];
  }
  output_ = x;
  cached_ = true;
  return x;
}

Tensor2 Generator::backward(const Tensor2& grad_output) {
  if (!cached_) throw InvalidState("generator backward without a cached forward pass");
  if (grad_output.rows() != output_.rows() || grad_output.cols() != output_.cols())
    throw InvalidArgument("generator backward: gradient shape mismatch");
  cached_ = false;
  const int n = config_.n;
  // y = x / S per half  =>  dx = (dy - <dy, y>) / S
  Tensor2 grad_x(grad_output.rows(), grad_output.cols());
  for (Eigen::Index r = 0; r < grad_output.rows(); ++r) {
    const double dot_mu = grad_output.row(r).head(n).dot(output_.row(r).head(n));
    const double dot_nu = grad_output.row(r).tail(n).dot(output_.row(r).tail(n));
    grad_x.row(r).head(n) = (grad_output.row(r).head(n).array() - dot_mu) / half_sums_mu_[r];
    grad_x.row(r).tail(n) = (grad_output.row(r).tail(n).array() - dot_nu) / half_sums_nu_[r];
  }
  Tensor2 grad_z = net_.backward(net_activation_.backward(grad_x));
  const Tensor2 grad_skip = (skip_pre_.array() > 0.0).select(config_.lambda * grad_x, 0.0);
  grad_z += grad_skip * upsampling_;
  return grad_z;
}

std::pair<DiscreteMeasure, DiscreteMeasure> Generator::generate(const Vector& z, const GeometryPtr& grid) const {
  const Tensor2 out = apply(Tensor2(z.transpose()));
  const int n = config_.n;
  const Vector mu = out.row(0).head(n).transpose();
  const Vector nu = out.row(0).tail(n).transpose();
  return {DiscreteMeasure::normalized(mu, grid), DiscreteMeasure::normalized(nu, grid)};
}

// ---------------------------------------------------------------- approximator

Approximator::Approximator(const ApproximatorConfig& config) : config_(config) {
  config_.validate();
  const int n = config_.n;
  const int h = config_.hidden();
  std::vector<Layer> layers;
  layers.emplace_back(LinearLayer(2 * n, h));
  layers.emplace_back(ReLU());
  layers.emplace_back(BatchNorm1d(h));
  layers.emplace_back(LinearLayer(h, h));
  layers.emplace_back(ReLU());
  layers.emplace_back(BatchNorm1d(h));
  layers.emplace_back(LinearLayer(h, n));
  network_ = Sequential(std::move(layers));
}

void Approximator::init(std::mt19937_64& rng) {
  for (int k = 0; k < 3; ++k) linear(k).init_uniform(rng);
}

LinearLayer& Approximator::linear(int k) {
  return std::get<LinearLayer>(network_.layers().at(static_cast<std::size_t>(kLinearSlots[k])));
}

const LinearLayer& Approximator::linear(int k) const {
  return std::get<LinearLayer>(network_.layers().at(static_cast<std::size_t>(kLinearSlots[k])));
}

BatchNorm1d& Approximator::batch_norm(int k) {
  return std::get<BatchNorm1d>(network_.layers().at(static_cast<std::size_t>(kBatchNormSlots[k])));
}

const BatchNorm1d& Approximator::batch_norm(int k) const {
  return std::get<BatchNorm1d>(network_.layers().at(static_cast<std::size_t>(kBatchNormSlots[k])));
}

Vector Approximator::predict(const DiscreteMeasure& mu, const DiscreteMeasure& nu) const {
  if (mu.size() != config_.n || nu.size() != config_.n)
    throw InvalidArgument("approximator: measures must have dimension " + std::to_string(config_.n));
  return apply(pair_input(mu, nu)).row(0).transpose();
}

Tensor2 pair_input(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  Tensor2 x(1, mu.size() + nu.size());
  x.row(0).head(mu.size()) = mu.weights().transpose();
  x.row(0).tail(nu.size()) = nu.weights().transpose();
  return x;
}

// ---------------------------------------------------------------- lipschitz

LipschitzEstimate lipschitz_estimate(const VectorMap& map, const PairSampler& sampler, long pairs,
                                     std::uint64_t seed) {
  if (pairs < 1) throw InvalidArgument("lipschitz_estimate: need at least one pair");
  std::mt19937_64 rng(seed);
  LipschitzEstimate out;
  out.min_ratio = std::numeric_limits<double>::infinity();
  for (long k = 0; k < pairs; ++k) {
    const auto [x, y] = sampler(rng);
    const double dist = (x - y).norm();
    if (!(dist > 0.0)) continue;
    const double ratio = (map(x) - map(y)).norm() / dist;
    out.max_ratio = std::max(out.max_ratio, ratio);
    out.min_ratio = std::min(out.min_ratio, ratio);
    ++out.pairs;
  }
  if (out.pairs == 0) out.min_ratio = 0.0;
  return out;
}

double spectral_norm(const Matrix& weight, int iterations) {
  if (weight.size() == 0) return 0.0;
  // Fixed pseudo-random start so the estimate is reproducible.
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  Vector x(weight.cols());
  for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = normal(rng);
  x.normalize();
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const Vector wx = weight * x;
    sigma = wx.norm();
    if (sigma == 0.0) return 0.0;
    Vector next = weight.transpose() * wx;
    const double len = next.norm();
    if (len == 0.0) return 0.0;
    x = next / len;
  }
  return (weight * x).norm();
}

LinearLayer spectral_rescale(const LinearLayer& layer, double target) {
  if (!(target > 0.0)) throw InvalidArgument("spectral_rescale: target must be positive");
  LinearLayer out = layer;
  const double sigma = spectral_norm(layer.weight);
  if (sigma > target) out.weight *= target / sigma;
  return out;
}

}  // namespace otws
