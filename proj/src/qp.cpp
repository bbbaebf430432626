#include "llb/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "llb/kernels.hpp"

namespace llb {

namespace {

std::vector<double> dual_gradient(const DualProblem& p, std::span<const double> v) {
  const std::size_t n = p.size();
  std::vector<double> grad(p.linear);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) grad[i] += p.gram(i, j) * v[j];
  return grad;
}

double largest_eigenvalue(const Matrix& gram) {
  const std::size_t n = gram.rows;
  std::vector<double> x(n, 1.0), y(n);
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += gram(i, j) * x[j];
      y[i] = s;
    }
    double norm = 0.0;
    for (double v : y) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / norm;
    if (std::abs(norm - lambda) <= 1e-12 * norm) {
      lambda = norm;
      break;
    }
    lambda = norm;
  }
  // Power iteration approaches from below; the trace bounds it from above.
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += gram(i, i);
  return std::min(lambda * 1.01, trace);
}

// Cholesky solve of A x = b in place; false if A is not numerically PD.
bool cholesky_solve(Matrix a, std::vector<double>& b) {
  const std::size_t n = a.rows;
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > 0.0)) return false;
    d = std::sqrt(d);
    a(j, j) = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / d;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a(i, k) * b[k];
    b[i] = s / a(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a(k, i) * b[k];
    b[i] = s / a(i, i);
  }
  return true;
}

// Solves the unconstrained problem restricted to `active`, zero elsewhere.
// Returns an empty vector when the restricted solution is infeasible.
std::vector<double> solve_on_face(const DualProblem& p, const std::vector<std::size_t>& active) {
  const std::size_t m = active.size();
  std::vector<double> v(p.size(), 0.0);
  if (m == 0) return v;
  Matrix sub(m, m);
  std::vector<double> rhs(m);
  double scale = 0.0;
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) sub(a, b) = p.gram(active[a], active[b]);
    rhs[a] = -p.linear[active[a]];
    scale = std::max(scale, sub(a, a));
  }
  std::vector<double> x = rhs;
  if (!cholesky_solve(sub, x)) {
    for (std::size_t a = 0; a < m; ++a) sub(a, a) += 1e-10 * std::max(scale, 1.0);
    x = rhs;
    if (!cholesky_solve(sub, x)) return {};
  }
  for (std::size_t a = 0; a < m; ++a) {
    if (x[a] < 0.0) return {};
    v[active[a]] = x[a];
  }
  return v;
}

}  // namespace

DualProblem make_dual_problem(const Matrix& constraints, std::span<const double> g) {
  const std::size_t n = constraints.rows;
  DualProblem p;
  p.gram = Matrix(n, n);
  p.linear.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.linear[i] = kernels::dot(constraints.row(i), g);
    for (std::size_t j = 0; j <= i; ++j) {
      const double d = kernels::dot(constraints.row(i), constraints.row(j));
      p.gram(i, j) = d;
      p.gram(j, i) = d;
    }
  }
  return p;
}

double dual_objective(const DualProblem& p, std::span<const double> v) {
  double quad = 0.0;
  double lin = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    lin += p.linear[i] * v[i];
    for (std::size_t j = 0; j < p.size(); ++j) quad += v[i] * p.gram(i, j) * v[j];
  }
  return 0.5 * quad + lin;
}

double kkt_residual(const DualProblem& p, std::span<const double> v) {
  const auto grad = dual_gradient(p, v);
  double r = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (v[i] < 0.0) r = std::max(r, -v[i]);
    r = std::max(r, v[i] > 0.0 ? std::abs(grad[i]) : std::max(0.0, -grad[i]));
  }
  return r;
}

DualSolution solve_nonneg_qp(const DualProblem& p, double tol, std::size_t max_iter) {
  const std::size_t n = p.size();
  DualSolution best;
  best.v.assign(n, 0.0);
  if (n == 1 && p.gram(0, 0) > 0.0) {
    best.v[0] = std::max(0.0, -(p.linear[0] / p.gram(0, 0)));
    best.iterations = 1;
    best.residual = kkt_residual(p, best.v);
    best.converged = best.residual <= tol;
    return best;
  }
  best.residual = kkt_residual(p, best.v);
  best.converged = best.residual <= tol;
  if (best.converged || n == 0) return best;

  const double L = largest_eigenvalue(p.gram);
  if (!(L > 0.0)) {
    // Zero Gram means zero linear term as well (linear = G g).
    best.converged = true;
    return best;
  }
  const double step = 1.0 / L;

  std::vector<double> v(n, 0.0), v_prev(n, 0.0), y(n, 0.0);
  double t = 1.0;
  double obj_prev = dual_objective(p, v);
  std::size_t it = 0;
  for (; it < max_iter; ++it) {
    const auto grad = dual_gradient(p, y);
    v_prev = v;
    for (std::size_t i = 0; i < n; ++i) v[i] = std::max(0.0, y[i] - step * grad[i]);

    const double obj = dual_objective(p, v);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    if (obj > obj_prev) {
      // Function-value restart of the momentum.
      t = 1.0;
      y = v;
    } else {
      const double beta = (t - 1.0) / t_next;
      for (std::size_t i = 0; i < n; ++i) y[i] = v[i] + beta * (v[i] - v_prev[i]);
      t = t_next;
    }
    obj_prev = obj;

    const double r = kkt_residual(p, v);
    if (r < best.residual) {
      best.v = v;
      best.residual = r;
    }
    if (r <= tol) break;

    // Once the support has settled, finishing exactly is cheaper than iterating.
    if (it % 25 == 24) {
      std::vector<std::size_t> active;
      for (std::size_t i = 0; i < n; ++i)
        if (v[i] > 0.0) active.push_back(i);
      auto exact = solve_on_face(p, active);
      if (!exact.empty()) {
        const double re = kkt_residual(p, exact);
        if (re < best.residual) {
          best.v = std::move(exact);
          best.residual = re;
        }
        if (best.residual <= tol) break;
      }
    }
  }
  best.iterations = std::min(it + 1, max_iter);

  // Final polish on the best support found.
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < n; ++i)
    if (best.v[i] > 0.0) active.push_back(i);
  auto exact = solve_on_face(p, active);
  if (!exact.empty()) {
    const double re = kkt_residual(p, exact);
    if (re <= best.residual || re <= tol) {
      best.v = std::move(exact);
      best.residual = re;
    }
  }
  best.converged = best.residual <= tol;
  return best;
}

GradientVector reconstruct(std::span<const double> g, const Matrix& constraints, std::span<const double> v) {
  GradientVector out(std::vector<double>(g.begin(), g.end()));
  for (std::size_t k = 0; k < constraints.rows; ++k)
    if (v[k] != 0.0) kernels::axpy(v[k], constraints.row(k), out.span());
  return out;
}

}  // namespace llb
