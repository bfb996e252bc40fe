#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <lapacke.h>

#include "flexfor/error.hpp"

namespace flexfor {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// (variable index, partial derivative) pairs; indices may repeat.
using SparseGradient = std::vector<std::pair<int, double>>;

/// Twice-differentiable scalar function of the decision vector.
class SmoothFunction {
 public:
  virtual ~SmoothFunction() = default;
  virtual double value(const Eigen::VectorXd& x) const = 0;
  /// Appends scale·∂f/∂x_i entries to `grad`.
  virtual void gradient(const Eigen::VectorXd& x, double scale, SparseGradient& grad) const = 0;
  /// Adds scale·∇²f into the dense symmetric `hess`.
  virtual void add_hessian(const Eigen::VectorXd& x, double scale, Eigen::MatrixXd& hess) const = 0;
  /// Variables the function depends on.
  virtual std::vector<int> support() const = 0;
};

using FunctionPtr = std::shared_ptr<const SmoothFunction>;

// ---------------------------------------------------------------------------
// Building blocks

/// v_a·v_b·(g·cos(θ_a − θ_b) + s·sin(θ_a − θ_b)).
struct TrigTerm {
  int va, vb, ta, tb;
  double g, s;
};

/// Sum of trigonometric bilinear terms, c·x_i² terms, linear terms and a
/// constant. Power-flow injections and branch flows in polar form are all of
/// this shape.
class PowerExpression final : public SmoothFunction {
 public:
  std::vector<TrigTerm> trig;
  std::vector<std::pair<int, double>> square;  // c·x_i²
  std::vector<std::pair<int, double>> linear;  // c·x_i
  double constant = 0.0;

  double value(const Eigen::VectorXd& x) const override {
    double out = constant;
    for (const auto& t : trig) {
      const double phi = x[t.ta] - x[t.tb];
      out += x[t.va] * x[t.vb] * (t.g * std::cos(phi) + t.s * std::sin(phi));
    }
    for (const auto& [i, c] : square) out += c * x[i] * x[i];
    for (const auto& [i, c] : linear) out += c * x[i];
    return out;
  }

  void gradient(const Eigen::VectorXd& x, double scale, SparseGradient& grad) const override {
    for (const auto& t : trig) {
      const double phi = x[t.ta] - x[t.tb];
      const double cs = std::cos(phi), sn = std::sin(phi);
      const double c = t.g * cs + t.s * sn;
      const double d = -t.g * sn + t.s * cs;
      const double vv = x[t.va] * x[t.vb];
      grad.emplace_back(t.va, scale * x[t.vb] * c);
      grad.emplace_back(t.vb, scale * x[t.va] * c);
      grad.emplace_back(t.ta, scale * vv * d);
      grad.emplace_back(t.tb, -scale * vv * d);
    }
    for (const auto& [i, c] : square) grad.emplace_back(i, scale * 2.0 * c * x[i]);
    for (const auto& [i, c] : linear) grad.emplace_back(i, scale * c);
  }

  void add_hessian(const Eigen::VectorXd& x, double scale, Eigen::MatrixXd& h) const override {
    // Mixed partial of a product; i == j correctly counts twice.
    auto sym = [&h](int i, int j, double v) {
      h(i, j) += v;
      h(j, i) += v;
    };
    for (const auto& t : trig) {
      const double phi = x[t.ta] - x[t.tb];
      const double cs = std::cos(phi), sn = std::sin(phi);
      const double c = scale * (t.g * cs + t.s * sn);
      const double d = scale * (-t.g * sn + t.s * cs);
      const double va = x[t.va], vb = x[t.vb];
      sym(t.va, t.vb, c);
      sym(t.va, t.ta, vb * d);
      sym(t.va, t.tb, -vb * d);
      sym(t.vb, t.ta, va * d);
      sym(t.vb, t.tb, -va * d);
      h(t.ta, t.ta) -= va * vb * c;
      h(t.tb, t.tb) -= va * vb * c;
      sym(t.ta, t.tb, va * vb * c);
    }
    for (const auto& [i, c] : square) h(i, i) += scale * 2.0 * c;
  }

  std::vector<int> support() const override {
    std::vector<int> s;
    for (const auto& t : trig) s.insert(s.end(), {t.va, t.vb, t.ta, t.tb});
    for (const auto& [i, c] : square) s.push_back(i);
    for (const auto& [i, c] : linear) s.push_back(i);
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
  }
};

/// Σ_k f_k(x)² − limit, used for apparent-power limits.
class SquaredSum final : public SmoothFunction {
 public:
  std::vector<PowerExpression> parts;
  double limit = 0.0;

  double value(const Eigen::VectorXd& x) const override {
    double out = -limit;
    for (const auto& p : parts) {
      const double v = p.value(x);
      out += v * v;
    }
    return out;
  }

  void gradient(const Eigen::VectorXd& x, double scale, SparseGradient& grad) const override {
    for (const auto& p : parts) p.gradient(x, scale * 2.0 * p.value(x), grad);
  }

  void add_hessian(const Eigen::VectorXd& x, double scale, Eigen::MatrixXd& h) const override {
    SparseGradient g;
    for (const auto& p : parts) {
      const double v = p.value(x);
      g.clear();
      p.gradient(x, 1.0, g);
      for (const auto& [i, gi] : g) {
        for (const auto& [j, gj] : g) h(i, j) += scale * 2.0 * gi * gj;
      }
      p.add_hessian(x, scale * 2.0 * v, h);
    }
  }

  std::vector<int> support() const override {
    std::vector<int> s;
    for (const auto& p : parts) {
      auto ps = p.support();
      s.insert(s.end(), ps.begin(), ps.end());
    }
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
  }
};

/// Σ c·x_i·x_j + Σ c·x_i + constant.
class QuadraticFunction final : public SmoothFunction {
 public:
  struct Term {
    int i, j;
    double c;
  };
  std::vector<Term> quadratic;
  std::vector<std::pair<int, double>> linear;
  double constant = 0.0;

  /// Adds w·(x_i − center)².
  void add_squared_distance(int i, double w, double center) {
    quadratic.push_back({i, i, w});
    linear.emplace_back(i, -2.0 * w * center);
    constant += w * center * center;
  }

  double value(const Eigen::VectorXd& x) const override {
    double out = constant;
    for (const auto& t : quadratic) out += t.c * x[t.i] * x[t.j];
    for (const auto& [i, c] : linear) out += c * x[i];
    return out;
  }

  void gradient(const Eigen::VectorXd& x, double scale, SparseGradient& grad) const override {
    for (const auto& t : quadratic) {
      grad.emplace_back(t.i, scale * t.c * x[t.j]);
      grad.emplace_back(t.j, scale * t.c * x[t.i]);
    }
    for (const auto& [i, c] : linear) grad.emplace_back(i, scale * c);
  }

  void add_hessian(const Eigen::VectorXd&, double scale, Eigen::MatrixXd& h) const override {
    for (const auto& t : quadratic) {
      h(t.i, t.j) += scale * t.c;
      h(t.j, t.i) += scale * t.c;
    }
  }

  std::vector<int> support() const override {
    std::vector<int> s;
    for (const auto& t : quadratic) s.insert(s.end(), {t.i, t.j});
    for (const auto& [i, c] : linear) s.push_back(i);
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
  }
};

/// Sum of other functions.
class SumFunction final : public SmoothFunction {
 public:
  std::vector<FunctionPtr> terms;

  double value(const Eigen::VectorXd& x) const override {
    double out = 0.0;
    for (const auto& t : terms) out += t->value(x);
    return out;
  }
  void gradient(const Eigen::VectorXd& x, double scale, SparseGradient& grad) const override {
    for (const auto& t : terms) t->gradient(x, scale, grad);
  }
  void add_hessian(const Eigen::VectorXd& x, double scale, Eigen::MatrixXd& h) const override {
    for (const auto& t : terms) t->add_hessian(x, scale, h);
  }
  std::vector<int> support() const override {
    std::vector<int> s;
    for (const auto& t : terms) {
      auto ts = t->support();
      s.insert(s.end(), ts.begin(), ts.end());
    }
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
  }
};

// ---------------------------------------------------------------------------
// Problem and solution

struct Variable {
  std::string name;
  double lower = -kInf;
  double upper = kInf;
};

/// min f(x) s.t. g(x) = 0, h(x) <= 0, lower <= x <= upper.
struct NlpProblem {
  std::vector<Variable> variables;
  FunctionPtr objective;
  std::vector<FunctionPtr> equalities;
  std::vector<FunctionPtr> inequalities;
  std::optional<Eigen::VectorXd> warm_start;

  int size() const noexcept { return static_cast<int>(variables.size()); }

  int add_variable(std::string name, double lower, double upper) {
    variables.push_back({std::move(name), lower, upper});
    return size() - 1;
  }
};

enum class NlpStatus { optimal, infeasible, iteration_limit, numerical_failure };

inline const char* to_string(NlpStatus s) {
  switch (s) {
    case NlpStatus::optimal: return "optimal";
    case NlpStatus::infeasible: return "infeasible";
    case NlpStatus::iteration_limit: return "iteration_limit";
    case NlpStatus::numerical_failure: return "numerical_failure";
  }
  return "?";
}

struct IterationRecord {
  int iteration = 0;
  double objective = 0.0;
  double feasibility = 0.0;
  double stationarity = 0.0;
  double complementarity = 0.0;
  double barrier = 0.0;
  double step_primal = 0.0;
  double step_dual = 0.0;
};

struct NlpSolution {
  NlpStatus status = NlpStatus::numerical_failure;
  Eigen::VectorXd x;
  double objective = 0.0;
  /// max(‖g(x)‖∞, max(h(x), 0), bound violation).
  double feasibility_residual = 0.0;
  /// ‖∇L‖∞ / (1 + max(‖λ‖∞, ‖μ‖∞)).
  double stationarity_residual = 0.0;
  Eigen::VectorXd lambda;    // equality multipliers
  Eigen::VectorXd mu;        // inequality multipliers
  Eigen::VectorXd mu_lower;  // bound multipliers
  Eigen::VectorXd mu_upper;
  double wall_time = 0.0;
  int iterations = 0;
  /// Elastic-relaxation slack when the solve went through a feasibility test.
  std::optional<double> elastic_slack;
  std::vector<IterationRecord> history;
  std::string message;
};

struct NlpOptions {
  double feas_tol = 1e-8;
  double opt_tol = 1e-8;
  double comp_tol = 1e-8;
  double cost_tol = 1e-8;
  /// An iterate within feas_tol whose stationarity and complementarity are
  /// within this level is kept, and returned if later iterations break down.
  double acceptable_tol = 1e-6;
  int max_iter = 150;
  double step_fraction = 0.995;
  double centering = 0.1;
  double slack_init = 1.0;
  /// Shift the Hessian block until the KKT matrix has the inertia of a
  /// local minimizer (n positive, n_eq negative eigenvalues).
  bool inertia_correction = true;
};

namespace detail {

// Bunch-Kaufman LDLᵀ of a symmetric indefinite matrix (LAPACK dsytrf) and
// the inertia read off the 1x1 and 2x2 pivot blocks.
class SymmetricIndefinite {
 public:
  bool factor(const Eigen::MatrixXd& a, double zero_tol) {
    n_ = static_cast<lapack_int>(a.rows());
    f_ = a;
    ipiv_.assign(static_cast<std::size_t>(n_), 0);
    work_.resize(64 * std::max<std::size_t>(1, static_cast<std::size_t>(n_)));
    const lapack_int info = LAPACKE_dsytrf_work(LAPACK_COL_MAJOR, 'L', n_, f_.data(), n_, ipiv_.data(),
                                                work_.data(), static_cast<lapack_int>(work_.size()));
    if (info < 0) return false;
    pos = neg = zero = 0;
    for (lapack_int k = 0; k < n_; ++k) {
      if (ipiv_[k] > 0) {
        const double d = f_(k, k);
        (d > zero_tol ? pos : d < -zero_tol ? neg : zero) += 1;
        continue;
      }
      const double a11 = f_(k, k), a21 = f_(k + 1, k), a22 = f_(k + 1, k + 1);
      const double mid = 0.5 * (a11 + a22);
      const double rad = std::hypot(0.5 * (a11 - a22), a21);
      for (double e : {mid + rad, mid - rad}) (e > zero_tol ? pos : e < -zero_tol ? neg : zero) += 1;
      ++k;
    }
    return true;
  }

  Eigen::VectorXd solve(Eigen::VectorXd b) const {
    LAPACKE_dsytrs_work(LAPACK_COL_MAJOR, 'L', n_, 1, f_.data(), n_, ipiv_.data(), b.data(), n_);
    return b;
  }

  int pos = 0, neg = 0, zero = 0;

 private:
  lapack_int n_ = 0;
  Eigen::MatrixXd f_;
  std::vector<lapack_int> ipiv_;
  std::vector<double> work_;
};

struct BoundRow {
  int var;
  double sign;   // +1: x - upper <= 0, -1: lower - x <= 0
  double bound;
};

}  // namespace detail

/// Primal-dual interior-point method with a log barrier on slack variables,
/// Newton steps on the perturbed KKT system (exact Hessian of the
/// Lagrangian) and fraction-to-boundary step damping. Deterministic.
inline NlpSolution solve_nlp(const NlpProblem& prob, const NlpOptions& opts = {}) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const auto t_start = std::chrono::steady_clock::now();
  const int n = prob.size();
  if (!prob.objective) throw PreconditionError("NLP has no objective");

  // Fixed variables become equality rows, finite bounds inequality rows.
  std::vector<int> fixed;
  std::vector<detail::BoundRow> bounds;
  for (int i = 0; i < n; ++i) {
    const auto& v = prob.variables[i];
    if (v.lower > v.upper) throw PreconditionError("variable " + v.name + " has lower > upper");
    if (v.lower == v.upper) {
      fixed.push_back(i);
      continue;
    }
    if (std::isfinite(v.upper)) bounds.push_back({i, 1.0, v.upper});
    if (std::isfinite(v.lower)) bounds.push_back({i, -1.0, v.lower});
  }
  const int n_user_eq = static_cast<int>(prob.equalities.size());
  const int n_eq = n_user_eq + static_cast<int>(fixed.size());
  const int n_gen = static_cast<int>(prob.inequalities.size());
  const int n_iq = n_gen + static_cast<int>(bounds.size());

  VectorXd x(n);
  if (prob.warm_start) {
    if (prob.warm_start->size() != n) throw PreconditionError("warm start has wrong size");
    x = *prob.warm_start;
  } else {
    for (int i = 0; i < n; ++i) {
      const auto& v = prob.variables[i];
      if (std::isfinite(v.lower) && std::isfinite(v.upper)) {
        x[i] = 0.5 * (v.lower + v.upper);
      } else {
        x[i] = std::clamp(0.0, v.lower, v.upper);
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    x[i] = std::clamp(x[i], prob.variables[i].lower, prob.variables[i].upper);
  }

  VectorXd g(n_eq), h(n_iq), grad_f(n);
  MatrixXd jg(n_eq, n), jh(n_gen, n);
  SparseGradient sg;
  double f = 0.0;
  bool finite = true;

  auto evaluate = [&]() {
    f = prob.objective->value(x);
    grad_f.setZero();
    sg.clear();
    prob.objective->gradient(x, 1.0, sg);
    for (auto [i, d] : sg) grad_f[i] += d;
    jg.setZero();
    for (int r = 0; r < n_user_eq; ++r) {
      g[r] = prob.equalities[r]->value(x);
      sg.clear();
      prob.equalities[r]->gradient(x, 1.0, sg);
      for (auto [i, d] : sg) jg(r, i) += d;
    }
    for (std::size_t k = 0; k < fixed.size(); ++k) {
      const int r = n_user_eq + static_cast<int>(k);
      g[r] = x[fixed[k]] - prob.variables[fixed[k]].lower;
      jg(r, fixed[k]) = 1.0;
    }
    jh.setZero();
    for (int r = 0; r < n_gen; ++r) {
      h[r] = prob.inequalities[r]->value(x);
      sg.clear();
      prob.inequalities[r]->gradient(x, 1.0, sg);
      for (auto [i, d] : sg) jh(r, i) += d;
    }
    for (std::size_t k = 0; k < bounds.size(); ++k) {
      const auto& b = bounds[k];
      h[n_gen + static_cast<int>(k)] = b.sign * (x[b.var] - b.bound);
    }
    finite = std::isfinite(f) && g.allFinite() && h.allFinite() && grad_f.allFinite() &&
             jg.allFinite() && jh.allFinite();
  };

  evaluate();

  VectorXd z(n_iq), mu(n_iq), lambda = VectorXd::Zero(n_eq);
  double gamma = 1.0;
  for (int k = 0; k < n_iq; ++k) {
    z[k] = std::max(opts.slack_init, -h[k]);
    mu[k] = opts.slack_init;
  }

  auto raw_violation = [&]() {
    double v = n_eq ? g.lpNorm<Eigen::Infinity>() : 0.0;
    for (int k = 0; k < n_iq; ++k) v = std::max(v, h[k]);
    return v;
  };

  VectorXd lx(n);
  auto lagrangian_gradient = [&]() {
    lx = grad_f;
    if (n_eq) lx.noalias() += jg.transpose() * lambda;
    if (n_gen) lx.noalias() += jh.transpose() * mu.head(n_gen);
    for (std::size_t k = 0; k < bounds.size(); ++k) {
      lx[bounds[k].var] += bounds[k].sign * mu[n_gen + static_cast<int>(k)];
    }
  };

  NlpSolution sol;
  auto finish = [&](NlpStatus status, std::string message) {
    sol.status = status;
    sol.message = std::move(message);
    sol.x = x;
    sol.objective = f;
    double viol = raw_violation();
    for (int i = 0; i < n; ++i) {
      const auto& v = prob.variables[i];
      viol = std::max({viol, v.lower - x[i], x[i] - v.upper});
    }
    sol.feasibility_residual = std::max(0.0, viol);
    sol.lambda = lambda.head(n_user_eq);
    sol.mu = mu.head(n_gen);
    sol.mu_lower = VectorXd::Zero(n);
    sol.mu_upper = VectorXd::Zero(n);
    for (std::size_t k = 0; k < bounds.size(); ++k) {
      const double m = mu[n_gen + static_cast<int>(k)];
      (bounds[k].sign > 0 ? sol.mu_upper : sol.mu_lower)[bounds[k].var] = m;
    }
    sol.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return sol;
  };

  if (!finite) return finish(NlpStatus::numerical_failure, "non-finite values at the initial point");

  // Last acceptable iterate. Deep in the barrier, mu/z on active bounds can
  // reach 1e17 and the multiplier updates lose all accuracy.
  struct Snapshot { VectorXd x, z, lambda, mu; };
  std::optional<Snapshot> acceptable;
  auto fail = [&](NlpStatus status, std::string message) {
    if (!acceptable) return finish(status, std::move(message));
    x = acceptable->x;
    z = acceptable->z;
    lambda = acceptable->lambda;
    mu = acceptable->mu;
    evaluate();
    return finish(NlpStatus::optimal, "converged to acceptable level");
  };

  MatrixXd hess(n, n), kkt(n + n_eq, n + n_eq);
  VectorXd rhs(n + n_eq), step(n + n_eq), dz(n_iq), dmu(n_iq);
  double f_prev = f;
  double last_delta_w = 0.0;

  for (int iter = 0; iter <= opts.max_iter; ++iter) {
    lagrangian_gradient();
    const double x_norm = x.lpNorm<Eigen::Infinity>();
    const double z_norm = n_iq ? z.lpNorm<Eigen::Infinity>() : 0.0;
    const double mult_norm = std::max(n_eq ? lambda.lpNorm<Eigen::Infinity>() : 0.0,
                                      n_iq ? mu.lpNorm<Eigen::Infinity>() : 0.0);
    const double feas = raw_violation();
    const double gradcond = lx.lpNorm<Eigen::Infinity>() / (1.0 + mult_norm);
    const double compcond = n_iq ? z.dot(mu) / (1.0 + x_norm) : 0.0;
    const double costcond = std::abs(f - f_prev) / (1.0 + std::abs(f_prev));
    sol.stationarity_residual = gradcond;
    sol.iterations = iter;
    IterationRecord rec{iter, f, feas, gradcond, compcond, gamma, 0.0, 0.0};

    if (feas <= opts.feas_tol && gradcond <= opts.opt_tol && compcond <= opts.comp_tol &&
        (iter > 0 && costcond <= opts.cost_tol)) {
      sol.history.push_back(rec);
      return finish(NlpStatus::optimal, "converged");
    }
    if (feas <= opts.feas_tol && gradcond <= opts.acceptable_tol && compcond <= opts.acceptable_tol) {
      acceptable = Snapshot{x, z, lambda, mu};
    }
    if (iter == opts.max_iter) {
      sol.history.push_back(rec);
      break;
    }
    (void)z_norm;

    // Hessian of the Lagrangian.
    hess.setZero();
    prob.objective->add_hessian(x, 1.0, hess);
    for (int r = 0; r < n_user_eq; ++r) {
      if (lambda[r] != 0.0) prob.equalities[r]->add_hessian(x, lambda[r], hess);
    }
    for (int r = 0; r < n_gen; ++r) {
      if (mu[r] != 0.0) prob.inequalities[r]->add_hessian(x, mu[r], hess);
    }

    // Condensed Newton system.
    VectorXd w_gen(n_gen), r_gen(n_gen);
    for (int r = 0; r < n_gen; ++r) {
      w_gen[r] = mu[r] / z[r];
      r_gen[r] = (mu[r] * h[r] + gamma) / z[r];
    }
    kkt.setZero();
    auto m_block = kkt.topLeftCorner(n, n);
    m_block = hess;
    if (n_gen) m_block.noalias() += jh.transpose() * w_gen.asDiagonal() * jh;
    VectorXd nvec = lx;
    if (n_gen) nvec.noalias() += jh.transpose() * r_gen;
    for (std::size_t k = 0; k < bounds.size(); ++k) {
      const int r = n_gen + static_cast<int>(k);
      const int i = bounds[k].var;
      m_block(i, i) += mu[r] / z[r];
      nvec[i] += bounds[k].sign * (mu[r] * h[r] + gamma) / z[r];
    }
    if (n_eq) {
      kkt.topRightCorner(n, n_eq) = jg.transpose();
      kkt.bottomLeftCorner(n_eq, n) = jg;
    }
    rhs.head(n) = -nvec;
    rhs.tail(n_eq) = -g;

    const double scale = 1.0 + kkt.cwiseAbs().maxCoeff();
    bool solved = false;
    if (opts.inertia_correction) {
      // Inertia is invariant under the congruence D·A·D; equilibrating first
      // keeps small pivots resolvable next to barrier terms.
      VectorXd d = VectorXd::Ones(kkt.rows());
      MatrixXd eq = kkt;
      for (int sweep = 0; sweep < 8; ++sweep) {
        VectorXd r = eq.cwiseAbs().rowwise().maxCoeff();
        for (Eigen::Index k = 0; k < r.size(); ++k) r[k] = r[k] > 0.0 ? 1.0 / std::sqrt(r[k]) : 1.0;
        eq = r.asDiagonal() * eq * r.asDiagonal();
        d = d.cwiseProduct(r);
      }
      const VectorXd d2 = d.cwiseProduct(d);
      double delta_w = 0.0, delta_c = 0.0;
      detail::SymmetricIndefinite fac;
      bool factored = false;
      for (int attempt = 0; attempt < 40; ++attempt) {
        MatrixXd a = eq;
        // Shifts of the unscaled matrix, carried through the scaling.
        a.topLeftCorner(n, n).diagonal() += delta_w * d2.head(n);
        if (n_eq) a.bottomRightCorner(n_eq, n_eq).diagonal() -= delta_c * d2.tail(n_eq);
        factored = fac.factor(a, 1e-13);
        if (factored && fac.pos == n && fac.neg == n_eq) break;
        factored = false;
        if (fac.zero > 0 && delta_c == 0.0) delta_c = 1e-8 * std::pow(std::max(gamma, 1e-16), 0.25);
        if (delta_w == 0.0) {
          delta_w = last_delta_w == 0.0 ? 1e-4 : std::max(1e-20, last_delta_w / 3.0);
        } else {
          delta_w *= last_delta_w == 0.0 ? 100.0 : 8.0;
        }
      }
      if (delta_w > 0.0) last_delta_w = delta_w;
      kkt.topLeftCorner(n, n).diagonal().array() += delta_w;
      if (n_eq) kkt.bottomRightCorner(n_eq, n_eq).diagonal().array() -= delta_c;
      if (factored) {
        step = d.cwiseProduct(fac.solve(d.cwiseProduct(rhs)));
        // One step of iterative refinement.
        const VectorXd res = rhs - kkt * step;
        step += d.cwiseProduct(fac.solve(d.cwiseProduct(res)));
        const double resid = (kkt * step - rhs).lpNorm<Eigen::Infinity>();
        solved = step.allFinite() && resid <= 1e-6 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
      }
    }

    double reg = 0.0;
    for (int attempt = 0; attempt < 6 && !solved; ++attempt) {
      MatrixXd a = kkt;
      if (reg > 0.0) {
        a.topLeftCorner(n, n).diagonal().array() += reg;
        if (n_eq) a.bottomRightCorner(n_eq, n_eq).diagonal().array() -= reg * 1e-2;
      }
      Eigen::PartialPivLU<MatrixXd> lu(a);
      step = lu.solve(rhs);
      const double resid = (a * step - rhs).lpNorm<Eigen::Infinity>();
      solved = step.allFinite() && resid <= 1e-6 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
      reg = reg == 0.0 ? 1e-10 * scale : reg * 100.0;
    }
    if (!solved) {
      sol.history.push_back(rec);
      return fail(NlpStatus::numerical_failure, "KKT system could not be solved");
    }
    const VectorXd dx = step.head(n);
    const VectorXd dlambda = step.tail(n_eq);

    for (int r = 0; r < n_gen; ++r) dz[r] = -h[r] - z[r] - jh.row(r).dot(dx);
    for (std::size_t k = 0; k < bounds.size(); ++k) {
      const int r = n_gen + static_cast<int>(k);
      dz[r] = -h[r] - z[r] - bounds[k].sign * dx[bounds[k].var];
    }
    for (int r = 0; r < n_iq; ++r) dmu[r] = -mu[r] + (gamma - mu[r] * dz[r]) / z[r];

    double alpha_p = 1.0, alpha_d = 1.0;
    for (int r = 0; r < n_iq; ++r) {
      if (dz[r] < 0.0) alpha_p = std::min(alpha_p, -opts.step_fraction * z[r] / dz[r]);
      if (dmu[r] < 0.0) alpha_d = std::min(alpha_d, -opts.step_fraction * mu[r] / dmu[r]);
    }
    rec.step_primal = alpha_p;
    rec.step_dual = alpha_d;
    sol.history.push_back(rec);

    f_prev = f;
    x += alpha_p * dx;
    z += alpha_p * dz;
    lambda += alpha_d * dlambda;
    mu += alpha_d * dmu;
    if (n_iq) gamma = opts.centering * z.dot(mu) / n_iq;

    evaluate();
    if (!finite || !x.allFinite()) {
      return fail(NlpStatus::numerical_failure, "non-finite iterate");
    }
    if (x.lpNorm<Eigen::Infinity>() > 1e10) {
      return fail(NlpStatus::numerical_failure, "iterate diverged");
    }
  }
  return fail(NlpStatus::iteration_limit, "iteration limit reached");
}

}  // namespace flexfor
