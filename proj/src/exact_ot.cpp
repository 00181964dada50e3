#include "otws/exact_ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace otws {

namespace {

constexpr int kNone = -1;

// Transportation simplex on the bipartite graph with supply nodes 0..m-1 and
// demand nodes m..m+n-1. Basic cells form a spanning tree rooted at node 0.
class NetworkSimplex {
 public:
  NetworkSimplex(const Matrix& cost, const Vector& supply, const Vector& demand, const ExactOptions& options)
      : cost_(cost),
        m_(static_cast<int>(cost.rows())),
        n_(static_cast<int>(cost.cols())),
        options_(options),
        cell_slot_(static_cast<std::size_t>(m_) * static_cast<std::size_t>(n_), kNone),
        adjacency_(static_cast<std::size_t>(m_ + n_)),
        parent_(static_cast<std::size_t>(m_ + n_), kNone),
        parent_arc_(static_cast<std::size_t>(m_ + n_), kNone),
        depth_(static_cast<std::size_t>(m_ + n_), 0),
        f_(Vector::Zero(m_)),
        g_(Vector::Zero(n_)) {
    const double max_cost = cost.maxCoeff();
    tolerance_ = 1e-13 * std::max(1.0, max_cost);
    block_size_ = std::max(16, static_cast<int>(std::sqrt(static_cast<double>(m_) * n_)));

    // Perturb supplies so the north-west corner and later pivots stay
    // nondegenerate; the reported plan is recomputed from the exact supplies.
    Vector a = supply.array() + options.perturbation;
    Vector b = demand;
    b[n_ - 1] += options.perturbation * m_;
    north_west_corner(a, b);
    rebuild_tree();
  }

  long solve() {
    const long cap = options_.max_pivots > 0 ? options_.max_pivots : 50L * m_ * n_ + 10000L;
    long pivots = 0;
    for (;;) {
      const int entering = options_.pricing == Pricing::dantzig ? price_dantzig() : price_block();
      if (entering == kNone) return pivots;
      if (pivots >= cap) {
        std::ostringstream msg;
        msg << "network simplex exceeded " << cap << " pivots on a " << m_ << "x" << n_ << " instance";
        throw SolverFailure(msg.str(), pivots);
      }
      pivot(entering / n_, entering % n_);
      ++pivots;
    }
  }

  // Flows on the final basis recomputed from the given balances.
  Matrix plan_for(const Vector& supply, const Vector& demand) const {
    const int nodes = m_ + n_;
    std::vector<double> net(static_cast<std::size_t>(nodes));
    for (int i = 0; i < m_; ++i) net[static_cast<std::size_t>(i)] = supply[i];
    for (int j = 0; j < n_; ++j) net[static_cast<std::size_t>(m_ + j)] = -demand[j];
    Matrix plan = Matrix::Zero(m_, n_);
    // Children before parents: the flow on a node's parent arc equals the net
    // supply of its subtree.
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      const int node = *it;
      if (node == 0) continue;
      const int p = parent_[static_cast<std::size_t>(node)];
      const Cell& cell = cells_[static_cast<std::size_t>(parent_arc_[static_cast<std::size_t>(node)])];
      const double subtree = net[static_cast<std::size_t>(node)];
      double flow = node < m_ ? subtree : -subtree;
      if (flow < 0.0 && flow > -1e-12) flow = 0.0;
      plan(cell.i, cell.j) = flow;
      net[static_cast<std::size_t>(p)] += subtree;
    }
    return plan;
  }

  const Vector& f() const { return f_; }
  const Vector& g() const { return g_; }

 private:
  struct Cell {
    int i;
    int j;
    double flow;
  };

  void add_cell(int i, int j, double flow) {
    const int id = static_cast<int>(cells_.size());
    cells_.push_back({i, j, flow});
    cell_slot_[static_cast<std::size_t>(i) * n_ + j] = id;
    adjacency_[static_cast<std::size_t>(i)].push_back(id);
    adjacency_[static_cast<std::size_t>(m_ + j)].push_back(id);
  }

  void north_west_corner(Vector a, Vector b) {
    int i = 0;
    int j = 0;
    for (;;) {
      if (i == m_ - 1 && j == n_ - 1) {
        add_cell(i, j, std::max(0.0, std::min(a[i], b[j])));
        return;
      }
      if (i == m_ - 1) {
        const double x = std::max(0.0, b[j]);
        add_cell(i, j, x);
        a[i] -= x;
        ++j;
      } else if (j == n_ - 1) {
        const double x = std::max(0.0, a[i]);
        add_cell(i, j, x);
        b[j] -= x;
        ++i;
      } else if (a[i] <= b[j]) {
        const double x = std::max(0.0, a[i]);
        add_cell(i, j, x);
        b[j] -= x;
        ++i;
      } else {
        const double x = std::max(0.0, b[j]);
        add_cell(i, j, x);
        a[i] -= x;
        ++j;
      }
    }
  }

  // BFS from node 0: parents, depths, traversal order and potentials.
  void rebuild_tree() {
    const int nodes = m_ + n_;
    order_.clear();
    order_.reserve(static_cast<std::size_t>(nodes));
    std::fill(parent_.begin(), parent_.end(), kNone);
    parent_[0] = 0;
    depth_[0] = 0;
    f_[0] = 0.0;
    order_.push_back(0);
    for (std::size_t head = 0; head < order_.size(); ++head) {
      const int node = order_[head];
      for (int arc : adjacency_[static_cast<std::size_t>(node)]) {
        const Cell& cell = cells_[static_cast<std::size_t>(arc)];
        const int other = node < m_ ? m_ + cell.j : cell.i;
        if (parent_[static_cast<std::size_t>(other)] != kNone) continue;
        parent_[static_cast<std::size_t>(other)] = node;
        parent_arc_[static_cast<std::size_t>(other)] = arc;
        depth_[static_cast<std::size_t>(other)] = depth_[static_cast<std::size_t>(node)] + 1;
        const double c = cost_(cell.i, cell.j);
        if (node < m_) {
          g_[cell.j] = c - f_[cell.i];
        } else {
          f_[cell.i] = c - g_[cell.j];
        }
        order_.push_back(other);
      }
    }
    if (static_cast<int>(order_.size()) != nodes)
      throw SolverFailure("basis is not a spanning tree", 0);
  }

  double reduced_cost(int i, int j) const { return cost_(i, j) - f_[i] - g_[j]; }

  int price_dantzig() const {
    double best = -tolerance_;
    int chosen = kNone;
    for (int i = 0; i < m_; ++i) {
      const double fi = f_[i];
      const double* row = cost_.data() + static_cast<std::ptrdiff_t>(i) * n_;
      for (int j = 0; j < n_; ++j) {
        const double r = row[j] - fi - g_[j];
        if (r < best && cell_slot_[static_cast<std::size_t>(i) * n_ + j] == kNone) {
          best = r;
          chosen = i * n_ + j;
        }
      }
    }
    return chosen;
  }

  int price_block() {
    const int total = m_ * n_;
    double best = -tolerance_;
    int chosen = kNone;
    int scanned_in_block = 0;
    for (int count = 0; count < total; ++count) {
      const int k = next_cell_;
      next_cell_ = next_cell_ + 1 == total ? 0 : next_cell_ + 1;
      const int i = k / n_;
      const int j = k - i * n_;
      const double r = cost_(i, j) - f_[i] - g_[j];
      if (r < best && cell_slot_[static_cast<std::size_t>(k)] == kNone) {
        best = r;
        chosen = k;
      }
      if (++scanned_in_block == block_size_) {
        if (chosen != kNone) return chosen;
        scanned_in_block = 0;
      }
    }
    return chosen;
  }

  void pivot(int ei, int ej) {
    // Cycle in the orientation of the entering cell: apex -> ... -> ei
    // (down the source side), ei -> ej (entering), ej -> ... -> apex (up).
    int u = ei;
    int w = m_ + ej;
    down_path_.clear();
    up_path_.clear();
    while (u != w) {
      if (depth_[static_cast<std::size_t>(u)] >= depth_[static_cast<std::size_t>(w)]) {
        down_path_.push_back(u);
        u = parent_[static_cast<std::size_t>(u)];
      } else {
        up_path_.push_back(w);
        w = parent_[static_cast<std::size_t>(w)];
      }
    }

    // A tree cell loses flow when the cycle crosses it from its demand
    // endpoint to its supply endpoint.
    double theta = std::numeric_limits<double>::infinity();
    int leaving_node = kNone;
    for (auto it = down_path_.rbegin(); it != down_path_.rend(); ++it) {
      const int node = *it;  // traversed parent -> node
      if (node < m_) {
        const double flow = cells_[static_cast<std::size_t>(parent_arc_[static_cast<std::size_t>(node)])].flow;
        if (flow <= theta) {
          theta = flow;
          leaving_node = node;
        }
      }
    }
    for (int node : up_path_) {  // traversed node -> parent
      if (node >= m_) {
        const double flow = cells_[static_cast<std::size_t>(parent_arc_[static_cast<std::size_t>(node)])].flow;
        if (flow <= theta) {
          theta = flow;
          leaving_node = node;
        }
      }
    }
    if (leaving_node == kNone) throw SolverFailure("unbounded pivot in transportation simplex", 0);

    for (int node : down_path_) {
      Cell& cell = cells_[static_cast<std::size_t>(parent_arc_[static_cast<std::size_t>(node)])];
      cell.flow += node < m_ ? -theta : theta;
    }
    for (int node : up_path_) {
      Cell& cell = cells_[static_cast<std::size_t>(parent_arc_[static_cast<std::size_t>(node)])];
      cell.flow += node >= m_ ? -theta : theta;
    }

    const int leaving = parent_arc_[static_cast<std::size_t>(leaving_node)];
    Cell& out = cells_[static_cast<std::size_t>(leaving)];
    cell_slot_[static_cast<std::size_t>(out.i) * n_ + out.j] = kNone;
    remove_adjacent(out.i, leaving);
    remove_adjacent(m_ + out.j, leaving);
    // Reuse the slot of the leaving cell for the entering one.
    out = {ei, ej, theta};
    cell_slot_[static_cast<std::size_t>(ei) * n_ + ej] = leaving;
    adjacency_[static_cast<std::size_t>(ei)].push_back(leaving);
    adjacency_[static_cast<std::size_t>(m_ + ej)].push_back(leaving);
    rebuild_tree();
  }

  void remove_adjacent(int node, int arc) {
    auto& list = adjacency_[static_cast<std::size_t>(node)];
    list.erase(std::find(list.begin(), list.end(), arc));
  }

  const Matrix& cost_;
  int m_;
  int n_;
  ExactOptions options_;
  double tolerance_ = 0.0;
  int block_size_ = 16;
  int next_cell_ = 0;

  std::vector<Cell> cells_;
  std::vector<int> cell_slot_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<int> parent_;
  std::vector<int> parent_arc_;
  std::vector<int> depth_;
  std::vector<int> order_;
  std::vector<int> down_path_;
  std::vector<int> up_path_;
  Vector f_;
  Vector g_;
};

}  // namespace

ExactSolution solve_exact(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                          const ExactOptions& options) {
  if (cost.rows() != mu.size() || cost.cols() != nu.size())
    throw InvalidArgument("solve_exact: cost is " + std::to_string(cost.rows()) + "x" +
                          std::to_string(cost.cols()) + " but measures have sizes " + std::to_string(mu.size()) +
                          " and " + std::to_string(nu.size()));
  const double mass_mu = pairwise_sum(mu.weights());
  const double mass_nu = pairwise_sum(nu.weights());
  if (std::abs(mass_mu - mass_nu) > 1e-9) throw InvalidArgument("solve_exact: marginals have different mass");
  if (!(options.perturbation >= 0.0)) throw InvalidArgument("solve_exact: perturbation must be nonnegative");

  NetworkSimplex simplex(cost.entries(), mu.weights(), nu.weights(), options);
  const long pivots = simplex.solve();

  Matrix plan = simplex.plan_for(mu.weights(), nu.weights());
  DualPair duals{simplex.f(), simplex.g(), Centering::none};
  const double shift = pairwise_sum(duals.f) / static_cast<double>(duals.f.size());
  duals.f.array() -= shift;
  duals.g.array() += shift;
  duals.centering = Centering::f_zero_sum;

  TransportPlan transport(std::move(plan), mu, nu);
  const double primal = primal_cost(transport, cost);
  const double dual = dual_value(duals, mu, nu);
  return ExactSolution{std::move(transport), std::move(duals), primal, dual, primal - dual, pivots};
}

std::string CertificateReport::summary() const {
  std::ostringstream out;
  out << (passed() ? "certificate ok" : "certificate FAILED") << ": min plan entry " << min_plan_entry
      << ", marginal errors " << row_marginal_error << "/" << col_marginal_error << ", max dual violation "
      << max_dual_violation << ", gap " << gap << ", max slackness " << max_slackness;
  return out.str();
}

CertificateReport verify_certificate(const ExactSolution& solution, const DiscreteMeasure& mu,
                                     const DiscreteMeasure& nu, const CostMatrix& cost, double tolerance) {
  CertificateReport report;
  report.tolerance = tolerance;
  const Matrix& plan = solution.plan.entries();
  if (plan.rows() != cost.rows() || plan.cols() != cost.cols() || mu.size() != cost.rows() ||
      nu.size() != cost.cols() || solution.duals.f.size() != cost.rows() || solution.duals.g.size() != cost.cols()) {
    report.min_plan_entry = -std::numeric_limits<double>::infinity();
    report.row_marginal_error = report.col_marginal_error = std::numeric_limits<double>::infinity();
    report.max_dual_violation = report.gap = report.max_slackness = std::numeric_limits<double>::infinity();
    return report;
  }
  const TransportPlan against(plan, mu, nu);
  report.min_plan_entry = plan.minCoeff();
  report.row_marginal_error = against.row_marginal_error();
  report.col_marginal_error = against.col_marginal_error();
  report.primal_feasible = report.min_plan_entry >= -tolerance && report.row_marginal_error <= tolerance &&
                           report.col_marginal_error <= tolerance;

  report.max_dual_violation = solution.duals.max_violation(cost);
  report.dual_feasible = report.max_dual_violation <= tolerance;

  const double primal = primal_cost(plan, cost);
  const double dual = dual_value(solution.duals, mu, nu);
  report.gap = primal - dual;
  report.gap_ok = std::abs(report.gap) <= tolerance * std::max(1.0, std::abs(primal));

  double slack = 0.0;
  for (int i = 0; i < cost.rows(); ++i) {
    for (int j = 0; j < cost.cols(); ++j) {
      if (plan(i, j) > 0.0)
        slack = std::max(slack, std::abs(solution.duals.f[i] + solution.duals.g[j] - cost(i, j)));
    }
  }
  report.max_slackness = slack;
  report.slackness_ok = slack <= tolerance;
  return report;
}

}  // namespace otws
