#include "otws/measures.hpp"

#include <cmath>
#include <limits>

namespace otws {

namespace {

double axis_coordinate(int index, int count) {
  return count > 1 ? static_cast<double>(index) / static_cast<double>(count - 1) : 0.5;
}

double l1_error_rows(const Matrix& plan, const Vector& target) {
  Vector diff(plan.rows());
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    const double row_sum = pairwise_sum(std::span<const double>(plan.row(i).data(), plan.cols()));
    diff[i] = std::abs(row_sum - target[i]);
  }
  return pairwise_sum(diff);
}

double l1_error_cols(const Matrix& plan, const Vector& target) {
  const Matrix transposed = plan.transpose();
  return l1_error_rows(transposed, target);
}

}  // namespace

GridGeometry GridGeometry::unit_square(int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw InvalidArgument("grid dimensions must be positive");
  std::vector<Point2> coords;
  coords.reserve(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) coords.push_back({axis_coordinate(r, rows), axis_coordinate(c, cols)});
  return GridGeometry(rows, cols, std::move(coords));
}

GridGeometry::GridGeometry(int rows, int cols, std::vector<Point2> coordinates)
    : rows_(rows), cols_(cols), coordinates_(std::move(coordinates)) {
  if (rows <= 0 || cols <= 0) throw InvalidArgument("grid dimensions must be positive");
  if (coordinates_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
    throw InvalidArgument("grid coordinate count does not match rows * cols");
  for (const auto& p : coordinates_) {
    if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0))
      throw InvalidArgument("grid coordinates must lie in the unit square");
  }
}

bool GridGeometry::operator==(const GridGeometry& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_) return false;
  for (std::size_t k = 0; k < coordinates_.size(); ++k) {
    if (coordinates_[k].x != other.coordinates_[k].x || coordinates_[k].y != other.coordinates_[k].y)
      return false;
  }
  return true;
}

GeometryPtr make_grid(int rows, int cols) {
  return std::make_shared<const GridGeometry>(GridGeometry::unit_square(rows, cols));
}

DiscreteMeasure::DiscreteMeasure(Vector weights, GeometryPtr geometry)
    : weights_(std::move(weights)), geometry_(std::move(geometry)) {
  if (weights_.size() == 0) throw InvalidArgument("measure must have at least one atom");
  if (!geometry_) geometry_ = make_grid(1, static_cast<int>(weights_.size()));
  if (geometry_->size() != weights_.size())
    throw InvalidArgument("measure dimension does not match its geometry");
  for (Eigen::Index i = 0; i < weights_.size(); ++i) {
    if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i]))
      throw InvalidArgument("measure weights must be finite and nonnegative");
  }
  const double total = pairwise_sum(weights_);
  if (std::abs(total - 1.0) > kSumTolerance)
    throw InvalidArgument("measure weights must sum to 1 (got " + std::to_string(total) + ")");
  strictly_positive_ = weights_.minCoeff() > 0.0;
}

DiscreteMeasure DiscreteMeasure::normalized(const Vector& raw, GeometryPtr geometry) {
  if (raw.size() == 0) throw InvalidArgument("measure must have at least one atom");
  for (Eigen::Index i = 0; i < raw.size(); ++i) {
    if (!(raw[i] >= 0.0) || !std::isfinite(raw[i]))
      throw InvalidArgument("raw weights must be finite and nonnegative");
  }
  const double total = pairwise_sum(raw);
  if (!(total > 0.0)) throw InvalidArgument("raw weights sum to zero");
  return DiscreteMeasure(raw / total, std::move(geometry));
}

CostMatrix::CostMatrix(Matrix entries, double metric_power)
    : entries_(std::move(entries)), metric_power_(metric_power) {
  if (entries_.size() == 0) throw InvalidArgument("cost matrix must be nonempty");
  if (!(metric_power_ >= 1.0)) throw InvalidArgument("metric power must be >= 1");
  for (Eigen::Index k = 0; k < entries_.size(); ++k) {
    const double c = entries_.data()[k];
    if (!(c >= 0.0) || !std::isfinite(c))
      throw InvalidArgument("cost entries must be finite and nonnegative");
  }
}

CostMatrix CostMatrix::transposed() const {
  return CostMatrix(Matrix(entries_.transpose()), metric_power_);
}

CostMatrix CostMatrix::scaled(double factor) const {
  if (!(factor > 0.0)) throw InvalidArgument("cost scale factor must be positive");
  return CostMatrix(entries_ * factor, metric_power_);
}

CostMatrix build_cost(const GridGeometry& source, const GridGeometry& target, double power) {
  if (!(power >= 1.0)) throw InvalidArgument("metric power must be >= 1");
  const int m = source.size();
  const int n = target.size();
  Matrix c(m, n);
  for (int i = 0; i < m; ++i) {
    const Point2& x = source.point(i);
    for (int j = 0; j < n; ++j) {
      const Point2& y = target.point(j);
      const double dx = x.x - y.x;
      const double dy = x.y - y.y;
      const double sq = dx * dx + dy * dy;
      c(i, j) = power == 2.0 ? sq : std::pow(std::sqrt(sq), power);
    }
  }
  return CostMatrix(std::move(c), power);
}

TransportPlan::TransportPlan(Matrix entries, DiscreteMeasure row_target, DiscreteMeasure col_target)
    : entries_(std::move(entries)), row_target_(std::move(row_target)), col_target_(std::move(col_target)) {
  if (entries_.rows() != row_target_.size() || entries_.cols() != col_target_.size())
    throw InvalidArgument("plan shape does not match its marginal targets");
}

bool TransportPlan::nonnegative() const { return entries_.size() == 0 || entries_.minCoeff() >= 0.0; }

double TransportPlan::row_marginal_error() const { return l1_error_rows(entries_, row_target_.weights()); }

double TransportPlan::col_marginal_error() const { return l1_error_cols(entries_, col_target_.weights()); }

bool TransportPlan::feasible(double tol) const {
  return nonnegative() && row_marginal_error() <= tol && col_marginal_error() <= tol;
}

double DualPair::max_violation(const CostMatrix& cost) const {
  if (f.size() != cost.rows() || g.size() != cost.cols())
    throw InvalidArgument("dual potentials do not match cost dimensions");
  double worst = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < cost.rows(); ++i)
    for (int j = 0; j < cost.cols(); ++j) worst = std::max(worst, f[i] + g[j] - cost(i, j));
  return worst;
}

bool DualPair::feasible(const CostMatrix& cost) const {
  return max_violation(cost) <= kFeasibilityTolerance;
}

double ExtendedReal::value() const {
  if (negative_infinity_) throw InvalidState("extended real is -infinity");
  return value_;
}

double primal_cost(const Matrix& plan, const CostMatrix& cost) {
  if (plan.rows() != cost.rows() || plan.cols() != cost.cols())
    throw InvalidArgument("plan and cost dimensions differ");
  return pairwise_dot(std::span<const double>(plan.data(), static_cast<std::size_t>(plan.size())),
                      std::span<const double>(cost.entries().data(), static_cast<std::size_t>(plan.size())));
}

double primal_cost(const TransportPlan& plan, const CostMatrix& cost) {
  return primal_cost(plan.entries(), cost);
}

double dual_value(const DualPair& duals, const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (duals.f.size() != mu.size() || duals.g.size() != nu.size())
    throw InvalidArgument("dual potentials do not match measure dimensions");
  return pairwise_dot(duals.f, mu.weights()) + pairwise_dot(duals.g, nu.weights());
}

ExtendedReal entropy(const Matrix& p) {
  Matrix terms(p.rows(), p.cols());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double x = p.data()[k];
    if (x < 0.0) return ExtendedReal::negative_infinity();
    terms.data()[k] = x == 0.0 ? 0.0 : -x * (std::log(x) - 1.0);
  }
  return ExtendedReal(pairwise_sum(terms));
}

double entropic_primal_objective(const TransportPlan& plan, const CostMatrix& cost, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  const ExtendedReal h = entropy(plan.entries());
  if (h.is_negative_infinity()) return std::numeric_limits<double>::infinity();
  return primal_cost(plan, cost) - eps * h.value();
}

Matrix gibbs_kernel(const CostMatrix& cost, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  return (-cost.entries().array() / eps).unaryExpr(&exp_flush).matrix();
}

double entropic_dual_value(const DualPair& duals, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                           const CostMatrix& cost, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  if (cost.rows() != mu.size() || cost.cols() != nu.size())
    throw InvalidArgument("cost dimensions do not match measures");
  const double linear = dual_value(duals, mu, nu);
  const int m = cost.rows();
  const int n = cost.cols();
  Matrix exponent(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) exponent(i, j) = (duals.f[i] + duals.g[j] - cost(i, j)) / eps;
  const double top = exponent.maxCoeff();
  if (!std::isfinite(top)) return top > 0 ? -std::numeric_limits<double>::infinity() : linear;
  Matrix shifted = (exponent.array() - top).unaryExpr(&exp_flush).matrix();
  const double bilinear = eps * std::exp(top) * pairwise_sum(shifted);
  return linear - bilinear;
}

Vector c_transform(const Vector& f, const CostMatrix& cost, TransformDirection direction) {
  const Matrix& c = cost.entries();
  if (direction == TransformDirection::rows_to_cols) {
    if (f.size() != c.rows()) throw InvalidArgument("c_transform: potential length must equal cost rows");
    Vector out(c.cols());
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < c.rows(); ++i) best = std::min(best, c(i, j) - f[i]);
      out[j] = best;
    }
    return out;
  }
  if (f.size() != c.cols()) throw InvalidArgument("c_transform: potential length must equal cost cols");
  Vector out(c.rows());
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < c.cols(); ++j) best = std::min(best, c(i, j) - f[j]);
    out[i] = best;
  }
  return out;
}

double marginal_constraint_violation(const TransportPlan& plan) {
  return (plan.col_marginal_error() + plan.row_marginal_error()) / 2.0;
}

DualPair center_f_zero_sum(const DualPair& duals) {
  DualPair out = duals;
  if (out.f.size() > 0) {
    const double mean = pairwise_sum(out.f) / static_cast<double>(out.f.size());
    out.f.array() -= mean;
  }
  out.centering = Centering::f_zero_sum;
  return out;
}

}  // namespace otws
