#pragma once

// Core types and objectives of discrete optimal transport on grid supports.
//
// Index conventions: grid points are numbered row-major, point (r, c) has
// index r * cols + c. Cost matrices are indexed C(i, j) with i over the
// source support (rows, the measure mu) and j over the target support
// (columns, the measure nu).

#include <memory>
#include <vector>

#include "otws/common.hpp"

namespace otws {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

class GridGeometry {
 public:
  // r x c grid spanning the unit square: point (i, j) maps to
  // (i / (r - 1), j / (c - 1)); a single row or column maps to 0.5.
  static GridGeometry unit_square(int rows, int cols);

  // Arbitrary coordinates; rows * cols must match and every component must
  // lie in [0, 1].
  GridGeometry(int rows, int cols, std::vector<Point2> coordinates);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int size() const { return rows_ * cols_; }
  const std::vector<Point2>& coordinates() const { return coordinates_; }
  const Point2& point(int index) const { return coordinates_[static_cast<std::size_t>(index)]; }

  bool operator==(const GridGeometry& other) const;

 private:
  int rows_;
  int cols_;
  std::vector<Point2> coordinates_;
};

using GeometryPtr = std::shared_ptr<const GridGeometry>;

GeometryPtr make_grid(int rows, int cols);

class DiscreteMeasure {
 public:
  static constexpr double kSumTolerance = 1e-12;

  // Weights must be nonnegative and sum to one within kSumTolerance. Without
  // a geometry, the measure lives on a 1 x n unit-square line.
  explicit DiscreteMeasure(Vector weights, GeometryPtr geometry = nullptr);

  // Divides nonnegative raw weights by their (positive) sum.
  static DiscreteMeasure normalized(const Vector& raw, GeometryPtr geometry = nullptr);

  const Vector& weights() const { return weights_; }
  const GeometryPtr& geometry() const { return geometry_; }
  int size() const { return static_cast<int>(weights_.size()); }
  bool strictly_positive() const { return strictly_positive_; }
  double operator[](int i) const { return weights_[i]; }

 private:
  Vector weights_;
  GeometryPtr geometry_;
  bool strictly_positive_ = false;
};

class CostMatrix {
 public:
  explicit CostMatrix(Matrix entries, double metric_power = 1.0);

  const Matrix& entries() const { return entries_; }
  double metric_power() const { return metric_power_; }
  int rows() const { return static_cast<int>(entries_.rows()); }
  int cols() const { return static_cast<int>(entries_.cols()); }
  double operator()(int i, int j) const { return entries_(i, j); }

  CostMatrix transposed() const;
  CostMatrix scaled(double factor) const;

 private:
  Matrix entries_;
  double metric_power_;
};

// C_ij = |x_i - y_j|^power with Euclidean distance between unit-square
// coordinates. power = 2 gives the squared Euclidean ground cost.
CostMatrix build_cost(const GridGeometry& source, const GridGeometry& target, double power = 2.0);

class TransportPlan {
 public:
  TransportPlan(Matrix entries, DiscreteMeasure row_target, DiscreteMeasure col_target);

  const Matrix& entries() const { return entries_; }
  const DiscreteMeasure& row_target() const { return row_target_; }
  const DiscreteMeasure& col_target() const { return col_target_; }
  int rows() const { return static_cast<int>(entries_.rows()); }
  int cols() const { return static_cast<int>(entries_.cols()); }

  bool nonnegative() const;
  double row_marginal_error() const;  // |Gamma 1 - mu|_1
  double col_marginal_error() const;  // |Gamma^T 1 - nu|_1
  bool feasible(double tol) const;

 private:
  Matrix entries_;
  DiscreteMeasure row_target_;
  DiscreteMeasure col_target_;
};

enum class Centering { none, f_zero_sum };

struct DualPair {
  static constexpr double kFeasibilityTolerance = 1e-9;

  Vector f;
  Vector g;
  Centering centering = Centering::none;

  // f_i + g_j <= C_ij + 1e-9 for all i, j.
  bool feasible(const CostMatrix& cost) const;
  // max_ij (f_i + g_j - C_ij), positive when infeasible.
  double max_violation(const CostMatrix& cost) const;
};

// Real number or -infinity, kept as a tag rather than a floating-point value.
class ExtendedReal {
 public:
  constexpr ExtendedReal(double value) : value_(value), negative_infinity_(false) {}
  static constexpr ExtendedReal negative_infinity() { return ExtendedReal(); }

  constexpr bool is_finite() const { return !negative_infinity_; }
  constexpr bool is_negative_infinity() const { return negative_infinity_; }
  // Throws InvalidState for -infinity.
  double value() const;

 private:
  constexpr ExtendedReal() : value_(0.0), negative_infinity_(true) {}
  double value_;
  bool negative_infinity_;
};

// <C, Gamma>
double primal_cost(const TransportPlan& plan, const CostMatrix& cost);
double primal_cost(const Matrix& plan, const CostMatrix& cost);

// <f, mu> + <g, nu>; does not check feasibility.
double dual_value(const DualPair& duals, const DiscreteMeasure& mu, const DiscreteMeasure& nu);

// H(P) = -sum p (log p - 1), 0 log 0 = 0, -infinity if any entry is negative.
ExtendedReal entropy(const Matrix& p);

// <C, Gamma> - eps H(Gamma); +infinity when Gamma has a negative entry.
double entropic_primal_objective(const TransportPlan& plan, const CostMatrix& cost, double eps);

// K = exp(-C / eps). Entries below the normal double range are set to 0.
Matrix gibbs_kernel(const CostMatrix& cost, double eps);

// <f, mu> + <g, nu> - eps <e^{f/eps}, K e^{g/eps}>, with the bilinear term
// evaluated as eps * exp(logsumexp_ij((f_i + g_j - C_ij) / eps)).
double entropic_dual_value(const DualPair& duals, const DiscreteMeasure& mu,
                           const DiscreteMeasure& nu, const CostMatrix& cost, double eps);

enum class TransformDirection {
  rows_to_cols,  // f indexed by rows: out_j = min_i C_ij - f_i
  cols_to_rows,  // f indexed by cols: out_i = min_j C_ij - f_j
};

Vector c_transform(const Vector& f, const CostMatrix& cost,
                   TransformDirection direction = TransformDirection::rows_to_cols);

// (|1^T Gamma - nu^T|_1 + |Gamma 1 - mu|_1) / 2
double marginal_constraint_violation(const TransportPlan& plan);

// f <- f - mean(f); g is left untouched.
DualPair center_f_zero_sum(const DualPair& duals);

}  // namespace otws
