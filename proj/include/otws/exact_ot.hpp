#pragma once

// Exact solver for the unregularized discrete transport problem.
//
// The solver is a transportation network simplex: a north-west-corner initial
// basis, pivots on the spanning tree of basic cells, and dual potentials read
// off the final tree. It returns a primal plan together with optimal dual
// potentials so the result can be certified independently (zero duality gap
// plus complementary slackness).

#include <string>

#include "otws/measures.hpp"

namespace otws {

enum class Pricing {
  dantzig,       // most negative reduced cost over all cells, lexicographic ties
  block_search,  // most negative within cyclic blocks of ~sqrt(mn) cells
};

struct ExactOptions {
  Pricing pricing = Pricing::block_search;
  long max_pivots = 0;           // 0 selects 50 * m * n + 10000
  double perturbation = 1e-14;   // supply perturbation against degeneracy
};

struct ExactSolution {
  TransportPlan plan;
  DualPair duals;  // centered: sum(f) = 0, g compensated
  double primal_value = 0.0;
  double dual_value = 0.0;
  double gap = 0.0;
  long iterations = 0;
};

// Throws InvalidArgument when dimensions disagree or sum(mu) and sum(nu)
// differ by more than 1e-9, SolverFailure when the pivot cap is exceeded.
ExactSolution solve_exact(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                          const ExactOptions& options = {});

struct CertificateReport {
  double tolerance = 1e-9;
  double min_plan_entry = 0.0;
  double row_marginal_error = 0.0;
  double col_marginal_error = 0.0;
  double max_dual_violation = 0.0;   // max f_i + g_j - C_ij
  double gap = 0.0;                  // primal - dual, recomputed
  double max_slackness = 0.0;        // max |f_i + g_j - C_ij| over Gamma_ij > 0

  bool primal_feasible = false;
  bool dual_feasible = false;
  bool gap_ok = false;
  bool slackness_ok = false;

  bool passed() const { return primal_feasible && dual_feasible && gap_ok && slackness_ok; }
  std::string summary() const;
};

CertificateReport verify_certificate(const ExactSolution& solution, const DiscreteMeasure& mu,
                                     const DiscreteMeasure& nu, const CostMatrix& cost, double tolerance = 1e-9);

}  // namespace otws
