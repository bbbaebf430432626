#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "llb/data.hpp"
#include "llb/nn.hpp"

// Dual of the multi-constraint gradient projection
//
//   min_z 1/2 |z - g|^2   s.t.  <z, g_k> >= 0  for every stored task k,
//
// which is the nonnegative QP over one multiplier per constraint
//
//   min_v 1/2 v^T (G G^T) v + (G g)^T v   s.t. v >= 0,    z* = G^T v* + g,
//
// with the rows of G being the constraint gradients g_k.

namespace llb {

struct DualProblem {
  Matrix gram;                 // G G^T
  std::vector<double> linear;  // G g

  std::size_t size() const { return linear.size(); }
};

struct DualSolution {
  std::vector<double> v;
  std::size_t iterations = 0;
  double residual = 0.0;  // KKT residual, see kkt_residual()
  bool converged = false;
};

/// Builds the dual problem from constraint rows g_k (each of length P) and g.
DualProblem make_dual_problem(const Matrix& constraints, std::span<const double> g);

double dual_objective(const DualProblem& problem, std::span<const double> v);

/// max over i of |grad_i| where v_i > 0, and max(0, -grad_i) where v_i = 0,
/// with grad = gram v + linear. Also counts negative v_i as violations.
double kkt_residual(const DualProblem& problem, std::span<const double> v);

/// Accelerated projected gradient with step 1/L (L from power iteration),
/// followed by an exact solve on the detected active set. Returns the best
/// iterate flagged non-converged if max_iter is reached.
DualSolution solve_nonneg_qp(const DualProblem& problem, double tol = 1e-7, std::size_t max_iter = 10000);

/// g~ = G^T v + g.
GradientVector reconstruct(std::span<const double> g, const Matrix& constraints, std::span<const double> v);

}  // namespace llb
