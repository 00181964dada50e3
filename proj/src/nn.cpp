#include "otws/nn.hpp"

#include <cmath>

namespace otws {

namespace {

#ifndef NDEBUG
constexpr bool kCheckFinite = true;
#else
constexpr bool kCheckFinite = false;
#endif

void require_width(const Tensor2& input, Eigen::Index width, const char* where) {
  if (input.cols() != width)
    throw InvalidArgument(std::string(where) + ": expected " + std::to_string(width) + " features, got " +
                          std::to_string(input.cols()));
}

}  // namespace

void check_finite(const Tensor2& t, const char* where) {
  if (!t.allFinite()) throw NumericalFailure(std::string("non-finite values in ") + where, 0);
}

// ---------------------------------------------------------------- linear

LinearLayer::LinearLayer(int in_features, int out_features)
    : weight(Matrix::Zero(out_features, in_features)),
      bias(Vector::Zero(out_features)),
      grad_weight(Matrix::Zero(out_features, in_features)),
      grad_bias(Vector::Zero(out_features)) {
  if (in_features <= 0 || out_features <= 0) throw InvalidArgument("linear layer widths must be positive");
}

void LinearLayer::init_uniform(std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(weight.cols()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index k = 0; k < weight.size(); ++k) weight.data()[k] = dist(rng);
  bias.setZero();
}

Tensor2 LinearLayer::apply(const Tensor2& input) const {
  require_width(input, weight.cols(), "linear layer");
  Tensor2 out = input * weight.transpose();
  out.rowwise() += bias.transpose();
  return out;
}

Tensor2 LinearLayer::forward(const Tensor2& input) {
  Tensor2 out = apply(input);
  input_ = input;
  cached_ = true;
  if constexpr (kCheckFinite) check_finite(out, "linear forward");
  return out;
}

Tensor2 LinearLayer::backward(const Tensor2& grad_output) {
  if (!cached_) throw InvalidState("linear layer backward without a cached forward pass");
  if (grad_output.rows() != input_.rows() || grad_output.cols() != weight.rows())
    throw InvalidArgument("linear layer backward: gradient shape mismatch");
  grad_weight.noalias() += grad_output.transpose() * input_;
  grad_bias += grad_output.colwise().sum().transpose();
  cached_ = false;
  Tensor2 grad_input = grad_output * weight;
  if constexpr (kCheckFinite) check_finite(grad_input, "linear backward");
  return grad_input;
}

void LinearLayer::zero_grad() {
  grad_weight.setZero();
  grad_bias.setZero();
}

std::vector<ParamView> LinearLayer::parameters(const std::string& prefix) {
  return {{prefix + ".weight", weight.data(), grad_weight.data(), weight.size()},
          {prefix + ".bias", bias.data(), grad_bias.data(), bias.size()}};
}

// ---------------------------------------------------------------- relu

Tensor2 ReLU::apply(const Tensor2& input) { return input.cwiseMax(0.0); }

Tensor2 ReLU::forward(const Tensor2& input) {
  pre_activation_ = input;
  cached_ = true;
  return apply(input);
}

Tensor2 ReLU::backward(const Tensor2& grad_output) {
  if (!cached_) throw InvalidState("relu backward without a cached forward pass");
  if (grad_output.rows() != pre_activation_.rows() || grad_output.cols() != pre_activation_.cols())
    throw InvalidArgument("relu backward: gradient shape mismatch");
  cached_ = false;
  return (pre_activation_.array() > 0.0).select(grad_output, 0.0);
}

// ---------------------------------------------------------------- batch norm

BatchNorm1d::BatchNorm1d(int features, double eps, double momentum)
    : gamma(Vector::Ones(features)),
      beta(Vector::Zero(features)),
      running_mean(Vector::Zero(features)),
      running_var(Vector::Ones(features)),
      grad_gamma(Vector::Zero(features)),
      grad_beta(Vector::Zero(features)),
      eps_(eps),
      momentum_(momentum) {
  if (features <= 0) throw InvalidArgument("batch norm needs at least one feature");
  if (!(eps > 0.0)) throw InvalidArgument("batch norm eps must be positive");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw InvalidArgument("batch norm momentum must lie in [0, 1]");
}

Tensor2 BatchNorm1d::apply(const Tensor2& input) const {
  require_width(input, gamma.size(), "batch norm");
  const Eigen::ArrayXd inv_std = (running_var.array() + eps_).rsqrt();
  Tensor2 out = input;
  out.rowwise() -= running_mean.transpose();
  out.array().rowwise() *= (inv_std * gamma.array()).transpose();
  out.rowwise() += beta.transpose();
  return out;
}

Tensor2 BatchNorm1d::forward(const Tensor2& input, Mode mode, bool update_running) {
  require_width(input, gamma.size(), "batch norm");
  const Eigen::Index batch = input.rows();
  if (mode == Mode::eval) {
    inv_std_ = (running_var.array() + eps_).rsqrt();
    normalized_ = input;
    normalized_.rowwise() -= running_mean.transpose();
    normalized_.array().rowwise() *= inv_std_.array().transpose();
  } else {
    if (batch < 2) throw InvalidArgument("batch norm in train mode needs at least two samples");
    const Vector mean = input.colwise().mean().transpose();
    normalized_ = input;
    normalized_.rowwise() -= mean.transpose();
    const Vector var = normalized_.array().square().colwise().mean().transpose();
    inv_std_ = (var.array() + eps_).rsqrt();
    normalized_.array().rowwise() *= inv_std_.array().transpose();
    if (update_running) {
      const double unbias = static_cast<double>(batch) / static_cast<double>(batch - 1);
      running_mean = (1.0 - momentum_) * running_mean + momentum_ * mean;
      running_var = (1.0 - momentum_) * running_var + momentum_ * unbias * var;
    }
  }
  cached_mode_ = mode;
  cached_ = true;
  Tensor2 out = normalized_;
  out.array().rowwise() *= gamma.array().transpose();
  out.rowwise() += beta.transpose();
  if constexpr (kCheckFinite) check_finite(out, "batch norm forward");
  return out;
}

Tensor2 BatchNorm1d::backward(const Tensor2& grad_output) {
  if (!cached_) throw InvalidState("batch norm backward without a cached forward pass");
  if (grad_output.rows() != normalized_.rows() || grad_output.cols() != normalized_.cols())
    throw InvalidArgument("batch norm backward: gradient shape mismatch");
  cached_ = false;
  grad_gamma += grad_output.cwiseProduct(normalized_).colwise().sum().transpose();
  grad_beta += grad_output.colwise().sum().transpose();
  Tensor2 grad_norm = grad_output;
  grad_norm.array().rowwise() *= gamma.array().transpose();
  if (cached_mode_ == Mode::eval) {
    grad_norm.array().rowwise() *= inv_std_.array().transpose();
    return grad_norm;
  }
  // dx = inv_std / B * (B dxhat - sum(dxhat) - xhat * sum(dxhat * xhat))
  const double batch = static_cast<double>(grad_output.rows());
  const Eigen::RowVectorXd sum_grad = grad_norm.colwise().sum();
  const Eigen::RowVectorXd sum_grad_xhat = grad_norm.cwiseProduct(normalized_).colwise().sum();
  Tensor2 grad_input = batch * grad_norm;
  grad_input.rowwise() -= sum_grad;
  grad_input -= (normalized_.array().rowwise() * sum_grad_xhat.array()).matrix();
  grad_input.array().rowwise() *= (inv_std_.array() / batch).transpose();
  if constexpr (kCheckFinite) check_finite(grad_input, "batch norm backward");
  return grad_input;
}

void BatchNorm1d::zero_grad() {
  grad_gamma.setZero();
  grad_beta.setZero();
}

std::vector<ParamView> BatchNorm1d::parameters(const std::string& prefix) {
  return {{prefix + ".gamma", gamma.data(), grad_gamma.data(), gamma.size()},
          {prefix + ".beta", beta.data(), grad_beta.data(), beta.size()}};
}

// ---------------------------------------------------------------- sequential

Tensor2 Sequential::forward(const Tensor2& input, Mode mode, bool update_running) {
  if (layers_.empty()) throw InvalidState("empty network");
  require_width(input, input_width(), "network input");
  Tensor2 x = input;
  for (auto& layer : layers_) {
    x = std::visit(
        [&](auto& l) -> Tensor2 {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, BatchNorm1d>) {
            return l.forward(x, mode, update_running);
          } else {
            return l.forward(x);
          }
        },
        layer);
  }
  cached_ = true;
  return x;
}

Tensor2 Sequential::backward(const Tensor2& grad_output) {
  if (!cached_) throw InvalidState("network backward without a cached forward pass");
  cached_ = false;
  Tensor2 grad = grad_output;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    grad = std::visit([&](auto& l) -> Tensor2 { return l.backward(grad); }, *it);
  return grad;
}

Tensor2 Sequential::apply(const Tensor2& input) const {
  if (layers_.empty()) throw InvalidState("empty network");
  require_width(input, input_width(), "network input");
  Tensor2 x = input;
  for (const auto& layer : layers_) x = std::visit([&](const auto& l) -> Tensor2 { return l.apply(x); }, layer);
  return x;
}

void Sequential::zero_grad() {
  for (auto& layer : layers_) {
    std::visit(
        [](auto& l) {
          if constexpr (!std::is_same_v<std::decay_t<decltype(l)>, ReLU>) l.zero_grad();
        },
        layer);
  }
}

std::vector<ParamView> Sequential::parameters(const std::string& prefix) {
  std::vector<ParamView> out;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    std::visit(
        [&](auto& l) {
          if constexpr (!std::is_same_v<std::decay_t<decltype(l)>, ReLU>) {
            for (auto& p : l.parameters(prefix + "." + std::to_string(k))) out.push_back(std::move(p));
          }
        },
        layers_[k]);
  }
  return out;
}

int Sequential::input_width() const {
  for (const auto& layer : layers_) {
    if (const auto* linear = std::get_if<LinearLayer>(&layer)) return linear->in_features();
    if (const auto* bn = std::get_if<BatchNorm1d>(&layer)) return bn->features();
  }
  throw InvalidState("network has no layer with a fixed input width");
}

// ---------------------------------------------------------------- adam

void adam_step(std::span<const ParamView> params, AdamState& state, double lr) {
  if (!(lr >= 0.0)) throw InvalidArgument("adam learning rate must be nonnegative");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Vector::Zero(p.size));
      state.second_moment.push_back(Vector::Zero(p.size));
    }
  }
  if (state.first_moment.size() != params.size())
    throw InvalidState("adam state was built for a different parameter list");
  ++state.step;
  const double correction1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const ParamView& p = params[k];
    Vector& m = state.first_moment[k];
    Vector& v = state.second_moment[k];
    if (m.size() != p.size) throw InvalidState("adam moment size mismatch for " + p.name);
    Eigen::Map<Eigen::ArrayXd> value(p.value, p.size);
    Eigen::Map<const Eigen::ArrayXd> grad(p.grad, p.size);
    m.array() = state.beta1 * m.array() + (1.0 - state.beta1) * grad;
    v.array() = state.beta2 * v.array() + (1.0 - state.beta2) * grad.square();
    value -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + state.eps);
  }
}

// ---------------------------------------------------------------- loss

double mse(const Tensor2& pred, const Tensor2& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw InvalidArgument("mse: shape mismatch");
  if (pred.size() == 0) return 0.0;
  const Matrix diff = (pred - target).array().square().matrix();
  return pairwise_sum(diff) / static_cast<double>(pred.size());
}

Tensor2 mse_grad(const Tensor2& pred, const Tensor2& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw InvalidArgument("mse: shape mismatch");
  return (2.0 / static_cast<double>(pred.size())) * (pred - target);
}

}  // namespace otws
