#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flexfor/fitting.hpp"
#include "flexfor/opf.hpp"
#include "flexfor/sampling.hpp"

namespace flexfor {

/// What a DSO hands to the TSO: PCC data, FOR and cost surfaces, and the
/// PCC box, all in (MW, MVAr, p.u.).
struct DsModelBundle {
  std::string ds_name;
  PccLink pcc;
  ImplicitPolynomial for_model;
  CostModel cost_model;
  BoundingBox box;
};

/// A polynomial model of (p, q, v) applied to three NLP variables that hold
/// per-unit values on `base_mva`.
class PqvModelFunction final : public SmoothFunction {
 public:
  using Evaluator = std::function<PolyEval(const CouplingPoint&, bool)>;

  PqvModelFunction(std::array<int, 3> vars, double base_mva, Evaluator eval)
      : vars_(vars), base_(base_mva), eval_(std::move(eval)) {}

  double value(const Eigen::VectorXd& x) const override { return at(x, false).value; }

  void gradient(const Eigen::VectorXd& x, double scale, SparseGradient& grad) const override {
    const auto e = at(x, false);
    for (int a = 0; a < 3; ++a) grad.emplace_back(vars_[a], scale * e.gradient[a] * factor(a));
  }

  void add_hessian(const Eigen::VectorXd& x, double scale, Eigen::MatrixXd& h) const override {
    const auto e = at(x, true);
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        h(vars_[a], vars_[b]) += scale * e.hessian[a][b] * factor(a) * factor(b);
      }
    }
  }

  std::vector<int> support() const override { return {vars_.begin(), vars_.end()}; }

 private:
  double factor(int a) const { return a < 2 ? base_ : 1.0; }
  PolyEval at(const Eigen::VectorXd& x, bool hess) const {
    return eval_({x[vars_[0]] * base_, x[vars_[1]] * base_, x[vars_[2]]}, hess);
  }

  std::array<int, 3> vars_;
  double base_;
  Evaluator eval_;
};

struct ForOpfProblem {
  OpfProblem opf;
  /// (p_j, q_j, v_j) variable indices per bundle.
  std::vector<std::array<int, 3>> xj;
  /// Per bundle: P-balance row and Q-balance row at the PCC bus (which carry
  /// p_j and q_j as the PCC injection) and the voltage row v(tb) = v_j.
  std::vector<std::array<int, 3>> coupling_rows;
  /// Index of the FOR inequality per bundle.
  std::vector<int> for_rows;
  /// TS generator cost part of the objective.
  std::shared_ptr<QuadraticFunction> ts_cost;
};

/// FOR-based AC-OPF on the TS: the TS OPF plus, per DS, x_j = (p_j, q_j, v_j)
/// injected at its PCC bus, FOR_j(x_j) <= 0, the PCC box, and C_j(x_j) in
/// the objective.
inline ForOpfProblem build_for_opf(const Network& ts, const std::vector<DsModelBundle>& bundles) {
  ForOpfProblem out;
  auto& nlp = out.opf.nlp;
  std::vector<PowerExpression> p_rows, q_rows;
  auto& lay = out.opf.layout;
  lay = detail::add_network(nlp, ts, p_rows, q_rows);
  const double base = ts.base_mva();

  std::vector<FunctionPtr> v_rows;
  auto cost = std::make_shared<SumFunction>();
  out.ts_cost = detail::generation_cost(ts, lay);
  cost->terms.push_back(out.ts_cost);
  std::vector<int> used;
  for (const auto& b : bundles) {
    const int bus_id = b.pcc.ts_bus;
    if (!ts.has_bus(bus_id)) {
      throw StructuralError("bundle " + b.ds_name + " references unknown TS bus " + std::to_string(bus_id));
    }
    if (!ts.is_empty_bus(bus_id)) {
      throw PreconditionError("PCC bus " + std::to_string(bus_id) + " hosts a load or generator");
    }
    if (std::find(used.begin(), used.end(), bus_id) != used.end()) {
      throw PreconditionError("two bundles share PCC bus " + std::to_string(bus_id));
    }
    used.push_back(bus_id);
    if (!(b.for_model.normalization == b.cost_model.normalization)) {
      throw PreconditionError("bundle " + b.ds_name + ": FOR and cost models use different normalizations");
    }
    for (int a = 0; a < 3; ++a) {
      if (!(b.for_model.normalization.std[a] > 0.0)) {
        throw PreconditionError("bundle " + b.ds_name + ": non-positive normalization spread");
      }
    }
    const int i = ts.index_of(bus_id);
    const auto& bus = ts.buses()[i];
    const double v_lo = std::max(b.box.lo.v, bus.v_min);
    const double v_hi = std::min(b.box.hi.v, bus.v_max);
    if (v_lo > v_hi) throw PreconditionError("bundle " + b.ds_name + ": PCC voltage box empty");
    std::array<int, 3> xj;
    xj[0] = nlp.add_variable("p_" + b.ds_name, b.box.lo.p / base, b.box.hi.p / base);
    xj[1] = nlp.add_variable("q_" + b.ds_name, b.box.lo.q / base, b.box.hi.q / base);
    xj[2] = nlp.add_variable("v_" + b.ds_name, v_lo, v_hi);
    p_rows[i].linear.emplace_back(xj[0], -1.0);
    q_rows[i].linear.emplace_back(xj[1], -1.0);
    auto vc = std::make_shared<QuadraticFunction>();
    vc->linear = {{lay.v(i), 1.0}, {xj[2], -1.0}};
    v_rows.push_back(vc);
    out.coupling_rows.push_back({i, lay.n_bus + i, -1});
    out.xj.push_back(xj);

    out.for_rows.push_back(static_cast<int>(nlp.inequalities.size()));
    nlp.inequalities.push_back(std::make_shared<PqvModelFunction>(
        xj, base, [fm = b.for_model](const CouplingPoint& x, bool h) { return fm.evaluate(x, h); }));
    cost->terms.push_back(std::make_shared<PqvModelFunction>(
        xj, base, [cm = b.cost_model](const CouplingPoint& x, bool h) { return cm.evaluate(x, h); }));
  }
  for (auto& r : p_rows) nlp.equalities.push_back(std::make_shared<PowerExpression>(std::move(r)));
  for (auto& r : q_rows) nlp.equalities.push_back(std::make_shared<PowerExpression>(std::move(r)));
  for (std::size_t k = 0; k < v_rows.size(); ++k) {
    out.coupling_rows[k][2] = static_cast<int>(nlp.equalities.size());
    nlp.equalities.push_back(v_rows[k]);
  }
  nlp.objective = cost;

  // Flat start with every x_j at its box center.
  Eigen::VectorXd x0 = detail::flat_start(nlp, lay);
  for (std::size_t k = 0; k < bundles.size(); ++k) {
    const auto c = bundles[k].box.center();
    x0[out.xj[k][0]] = c.p / base;
    x0[out.xj[k][1]] = c.q / base;
    x0[out.xj[k][2]] = std::clamp(c.v, nlp.variables[out.xj[k][2]].lower, nlp.variables[out.xj[k][2]].upper);
    x0[lay.v(ts.index_of(bundles[k].pcc.ts_bus))] = x0[out.xj[k][2]];
  }
  nlp.warm_start = x0;
  return out;
}

struct CoordinationOptions {
  NlpOptions nlp;
  /// Extra phase-1 starts (perturbed x_j) tried when the first one fails.
  int multi_start = 1;
  /// Slack tolerance of the disaggregation feasibility verdict.
  double slack_tol = 1e-6;
};

struct DisaggregationResult {
  NlpSolution solution;
  bool feasible = false;
  double dg_cost = 0.0;
};

struct CoordinationReport {
  NlpSolution ts_solution;
  /// PCC operating points chosen by the TSO (MW, MVAr, p.u.).
  std::vector<CouplingPoint> x_star;
  std::vector<double> for_value;
  std::vector<DisaggregationResult> disaggregation;
  double ts_generation_cost = 0.0;
  /// TS generation cost plus the actual DG costs of the disaggregations.
  double total_cost = 0.0;
  /// Phase-1 objective (TS cost plus modelled DS costs).
  double model_cost = 0.0;
  double phase1_time = 0.0;
  double phase2_time = 0.0;
  bool phase1_ok = false;
  /// Every disaggregation succeeded.
  bool feasible = false;
};

/// Single-round scheme: the TSO solves the FOR-based OPF, then each DSO
/// dispatches its DGs at the chosen PCC point.
inline CoordinationReport solve_coordination(const Network& ts,
                                             const std::vector<DsModelBundle>& bundles,
                                             const std::vector<PccNetwork>& ds_networks,
                                             const CoordinationOptions& opts = {}) {
  if (ds_networks.size() != bundles.size()) {
    throw PreconditionError("one DS network per bundle is required");
  }
  CoordinationReport rep;
  auto t0 = std::chrono::steady_clock::now();
  auto prob = build_for_opf(ts, bundles);
  const double base = ts.base_mva();
  rep.ts_solution = solve_nlp(prob.opf.nlp, opts.nlp);
  for (int s = 1; s < opts.multi_start && rep.ts_solution.status != NlpStatus::optimal; ++s) {
    Eigen::VectorXd x0 = *prob.opf.nlp.warm_start;
    for (std::size_t k = 0; k < bundles.size(); ++k) {
      const auto& bx = bundles[k].box;
      const double f = s % 2 ? 0.25 : 0.75;
      x0[prob.xj[k][0]] = (bx.lo.p + f * (bx.hi.p - bx.lo.p)) / base;
      x0[prob.xj[k][1]] = (bx.lo.q + f * (bx.hi.q - bx.lo.q)) / base;
    }
    prob.opf.nlp.warm_start = x0;
    rep.ts_solution = solve_nlp(prob.opf.nlp, opts.nlp);
  }
  rep.phase1_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rep.phase1_ok = rep.ts_solution.status == NlpStatus::optimal;
  if (!rep.phase1_ok) return rep;
  const auto& x = rep.ts_solution.x;
  rep.model_cost = rep.ts_solution.objective;
  rep.ts_generation_cost = prob.ts_cost->value(x);
  for (std::size_t k = 0; k < bundles.size(); ++k) {
    const CouplingPoint xs{x[prob.xj[k][0]] * base, x[prob.xj[k][1]] * base, x[prob.xj[k][2]]};
    rep.x_star.push_back(xs);
    rep.for_value.push_back(bundles[k].for_model.evaluate(xs).value);
  }

  t0 = std::chrono::steady_clock::now();
  rep.feasible = true;
  rep.total_cost = rep.ts_generation_cost;
  FixedPccOptions fo;
  fo.nlp = opts.nlp;
  fo.slack_tol = opts.slack_tol;
  for (std::size_t k = 0; k < bundles.size(); ++k) {
    DisaggregationResult d;
    d.solution = solve_fixed_pcc(ds_networks[k], rep.x_star[k], fo);
    d.feasible = d.solution.status == NlpStatus::optimal;
    d.dg_cost = d.feasible ? d.solution.objective : 0.0;
    rep.feasible = rep.feasible && d.feasible;
    rep.total_cost += d.dg_cost;
    rep.disaggregation.push_back(std::move(d));
  }
  rep.phase2_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

struct IntegratedResult {
  NlpSolution solution;
  double cost = 0.0;
  double time = 0.0;
  bool ok = false;
};

/// Standard AC-OPF on the merged TS+DS network.
inline IntegratedResult solve_integrated(const Network& ts, const std::vector<DsAttachment>& ds,
                                         const NlpOptions& opts = {}) {
  IntegratedResult out;
  const auto t0 = std::chrono::steady_clock::now();
  const auto merged = merge_ts_ds(ts, ds);
  auto prob = assemble_opf(merged.network, OpfObjective::total_cost());
  out.solution = solve_nlp(prob.nlp, opts);
  if (out.solution.status != NlpStatus::optimal) {
    NlpOptions o2 = opts;
    o2.max_iter = std::max(opts.max_iter, 300);
    o2.centering = 0.2;
    out.solution = solve_nlp(prob.nlp, o2);
  }
  out.time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.ok = out.solution.status == NlpStatus::optimal;
  out.cost = out.solution.objective;
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark

struct BenchmarkConfig {
  int trials = 100;
  std::uint64_t seed = 7;
  /// Multiplicative jitter range on the TS generators' linear cost terms.
  double b_jitter_lo = 0.5;
  double b_jitter_hi = 1.5;

  bool operator==(const BenchmarkConfig&) const = default;
};

struct TrialResult {
  int trial = 0;
  std::vector<double> b_factor;
  double proposed_cost = 0.0;
  double standard_cost = 0.0;
  /// (proposed - standard) / standard, in percent.
  double cost_diff_pct = 0.0;
  double proposed_time = 0.0;
  double standard_time = 0.0;
  double time_diff_pct = 0.0;
  bool proposed_ok = false;
  bool standard_ok = false;
  /// Every disaggregation of the proposed path succeeded.
  bool feasible = false;
};

/// TS with the linear cost terms of its generators scaled by `factor`.
inline Network jitter_costs(const Network& ts, const std::vector<double>& factor) {
  NetworkData d = ts.data();
  for (std::size_t g = 0; g < d.generators.size(); ++g) d.generators[g].cost.b *= factor[g];
  return Network(std::move(d));
}

/// Per trial: draw TS cost coefficients, solve the proposed scheme and the
/// integrated OPF, and compare cost and time. Failures are recorded, never
/// thrown.
inline std::vector<TrialResult> run_benchmark(const Network& ts,
                                              const std::vector<DsModelBundle>& bundles,
                                              const std::vector<DsAttachment>& ds,
                                              const BenchmarkConfig& cfg,
                                              const CoordinationOptions& opts = {}) {
  if (bundles.size() != ds.size()) throw PreconditionError("one DS per bundle is required");
  std::vector<PccNetwork> ds_pcc;
  for (const auto& a : ds) ds_pcc.push_back(attach_pcc(a.ds, a.link));
  std::vector<TrialResult> out;
  for (int t = 0; t < cfg.trials; ++t) {
    TrialResult r;
    r.trial = t;
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    for (std::size_t g = 0; g < ts.generators().size(); ++g) {
      r.b_factor.push_back(cfg.b_jitter_lo + (cfg.b_jitter_hi - cfg.b_jitter_lo) * rng.uniform());
    }
    const Network tst = jitter_costs(ts, r.b_factor);
    try {
      const auto rep = solve_coordination(tst, bundles, ds_pcc, opts);
      r.proposed_ok = rep.phase1_ok;
      r.feasible = rep.phase1_ok && rep.feasible;
      r.proposed_cost = rep.total_cost;
      r.proposed_time = rep.phase1_time + rep.phase2_time;
    } catch (const Error&) {
      r.proposed_ok = false;
    }
    try {
      const auto std_res = solve_integrated(tst, ds, opts.nlp);
      r.standard_ok = std_res.ok;
      r.standard_cost = std_res.cost;
      r.standard_time = std_res.time;
    } catch (const Error&) {
      r.standard_ok = false;
    }
    if (r.feasible && r.standard_ok) {
      r.cost_diff_pct = 100.0 * (r.proposed_cost - r.standard_cost) / r.standard_cost;
      r.time_diff_pct = 100.0 * (r.proposed_time - r.standard_time) / r.standard_time;
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace flexfor
