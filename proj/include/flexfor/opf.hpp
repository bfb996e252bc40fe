#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flexfor/netmodel.hpp"
#include "flexfor/nlp.hpp"
#include "flexfor/pflow.hpp"

namespace flexfor {

/// Triple (p, q, v) used for objective parameters; per-unit inside the OPF.
using Pqv = std::array<double, 3>;

inline CouplingPoint to_per_unit(const CouplingPoint& x, double base_mva) {
  return {x.p / base_mva, x.q / base_mva, x.v};
}
inline CouplingPoint to_physical(const CouplingPoint& x, double base_mva) {
  return {x.p * base_mva, x.q * base_mva, x.v};
}

enum class ObjectiveKind { total_cost, axis_extreme, l2_projection, ray_max, fixed_pcc_cost };

/// Objective of an OPF. All parameters are per-unit on the network base.
struct OpfObjective {
  ObjectiveKind kind = ObjectiveKind::total_cost;
  /// axis_extreme: 0 = p, 1 = q, 2 = v.
  int axis = 0;
  bool maximize = false;
  /// l2_projection target; fixed_pcc_cost point.
  Pqv target{0.0, 0.0, 1.0};
  /// l2_projection: distance is Σ ((x_a - target_a) / scale_a)².
  Pqv scale{1.0, 1.0, 1.0};
  /// ray_max: x_j = center + direction·t with t in [0, t_max].
  Pqv center{0.0, 0.0, 1.0};
  Pqv direction{1.0, 0.0, 0.0};
  double t_max = 2.0;
  /// fixed_pcc_cost: penalty per unit of coupling slack.
  double penalty = 1e5;
  /// fixed_pcc_cost: false drops the DG cost, leaving the L1 distance from
  /// the target to the region.
  bool with_cost = true;

  static OpfObjective total_cost() { return {}; }
  static OpfObjective extreme(int axis, bool maximize) {
    OpfObjective o;
    o.kind = ObjectiveKind::axis_extreme;
    o.axis = axis;
    o.maximize = maximize;
    return o;
  }
  static OpfObjective projection(const Pqv& target, const Pqv& scale) {
    OpfObjective o;
    o.kind = ObjectiveKind::l2_projection;
    o.target = target;
    o.scale = scale;
    return o;
  }
  static OpfObjective ray(const Pqv& center, const Pqv& direction, double t_max = 2.0) {
    OpfObjective o;
    o.kind = ObjectiveKind::ray_max;
    o.center = center;
    o.direction = direction;
    o.t_max = t_max;
    return o;
  }
  static OpfObjective fixed(const Pqv& point) {
    OpfObjective o;
    o.kind = ObjectiveKind::fixed_pcc_cost;
    o.target = point;
    return o;
  }
};

/// Variable positions inside an assembled OPF.
struct OpfLayout {
  int n_bus = 0;
  int n_gen = 0;  // generators followed by DGs
  int v0 = 0, theta0 = 0, p0 = 0, q0 = 0;
  /// Coupling variables (p_j, q_j, v_j), or -1.
  int pj = -1, qj = -1, vj = -1;
  int pcc_index = -1;
  int t = -1;
  /// Elastic slacks (s+ then s- for p, q, v), or -1.
  int slack0 = -1;
  /// Number of balance rows (2·n_bus); coupling rows follow.
  int n_balance = 0;

  int v(int bus) const { return v0 + bus; }
  int theta(int bus) const { return theta0 + bus; }
  int p(int gen) const { return p0 + gen; }
  int q(int gen) const { return q0 + gen; }
  bool has_coupling() const { return pj >= 0; }
};

struct OpfProblem {
  NlpProblem nlp;
  OpfLayout layout;
};

namespace detail {

/// Adds bus voltages/angles and generator outputs plus the network
/// constraints: nodal balance, branch apparent-power limits at both ends and
/// DG capability. Balance rows are P for every bus, then Q.
inline OpfLayout add_network(NlpProblem& nlp, const Network& net,
                             std::vector<PowerExpression>& p_rows,
                             std::vector<PowerExpression>& q_rows) {
  OpfLayout lay;
  const int nb = net.bus_count();
  const auto gens = net.all_generators();
  lay.n_bus = nb;
  lay.n_gen = static_cast<int>(gens.size());
  const int ref = net.reference_index();

  lay.v0 = nlp.size();
  for (int i = 0; i < nb; ++i) {
    const auto& b = net.buses()[i];
    nlp.add_variable("v_" + std::to_string(b.id), b.v_min, b.v_max);
  }
  lay.theta0 = nlp.size();
  for (int i = 0; i < nb; ++i) {
    const auto& b = net.buses()[i];
    if (i == ref) {
      nlp.add_variable("theta_" + std::to_string(b.id), 0.0, 0.0);
    } else {
      nlp.add_variable("theta_" + std::to_string(b.id), b.theta_min, b.theta_max);
    }
  }
  lay.p0 = nlp.size();
  for (int g = 0; g < lay.n_gen; ++g) {
    nlp.add_variable("pg_" + std::to_string(g), gens[g].p_min, gens[g].p_max);
  }
  lay.q0 = nlp.size();
  for (int g = 0; g < lay.n_gen; ++g) {
    nlp.add_variable("qg_" + std::to_string(g), gens[g].q_min, gens[g].q_max);
  }

  // Nodal balance: injection(v, θ) - generation + demand = 0.
  const auto y = build_admittance(net);
  p_rows.assign(nb, PowerExpression{});
  q_rows.assign(nb, PowerExpression{});
  for (int k = 0; k < y.outerSize(); ++k) {
    for (AdmittanceMatrix::InnerIterator it(y, k); it; ++it) {
      const int i = static_cast<int>(it.row());
      const int m = static_cast<int>(it.col());
      const double gim = it.value().real(), bim = it.value().imag();
      if (i == m) {
        p_rows[i].square.emplace_back(lay.v(i), gim);
        q_rows[i].square.emplace_back(lay.v(i), -bim);
      } else {
        p_rows[i].trig.push_back({lay.v(i), lay.v(m), lay.theta(i), lay.theta(m), gim, bim});
        q_rows[i].trig.push_back({lay.v(i), lay.v(m), lay.theta(i), lay.theta(m), -bim, gim});
      }
    }
  }
  auto [pd, qd] = net.bus_demand();
  for (int i = 0; i < nb; ++i) {
    p_rows[i].constant = pd[i];
    q_rows[i].constant = qd[i];
  }
  for (int g = 0; g < lay.n_gen; ++g) {
    const int i = net.index_of(gens[g].bus);
    p_rows[i].linear.emplace_back(lay.p(g), -1.0);
    q_rows[i].linear.emplace_back(lay.q(g), -1.0);
  }

  // Branch limits.
  for (const auto& br : net.branches()) {
    if (br.status != BranchStatus::closed || br.rating <= 0.0) continue;
    const int f = net.index_of(br.from_bus), t = net.index_of(br.to_bus);
    const auto ya = branch_admittance(br);
    auto end_flow = [&](int a, int b, std::complex<double> yaa, std::complex<double> yab) {
      PowerExpression pe, qe;
      pe.square.emplace_back(lay.v(a), yaa.real());
      pe.trig.push_back({lay.v(a), lay.v(b), lay.theta(a), lay.theta(b), yab.real(), yab.imag()});
      qe.square.emplace_back(lay.v(a), -yaa.imag());
      qe.trig.push_back({lay.v(a), lay.v(b), lay.theta(a), lay.theta(b), -yab.imag(), yab.real()});
      auto s = std::make_shared<SquaredSum>();
      s->parts = {pe, qe};
      s->limit = br.rating * br.rating;
      nlp.inequalities.push_back(s);
    };
    end_flow(f, t, ya.yff, ya.yft);
    end_flow(t, f, ya.ytt, ya.ytf);
  }

  // DG capability.
  const int n_plain = static_cast<int>(net.generators().size());
  for (std::size_t k = 0; k < net.dgs().size(); ++k) {
    const auto& dg = net.dgs()[k];
    const int g = n_plain + static_cast<int>(k);
    for (const auto& hp : dg.capability) {
      auto f = std::make_shared<QuadraticFunction>();
      f->linear = {{lay.p(g), hp.alpha}, {lay.q(g), hp.beta}};
      f->constant = -hp.delta;
      nlp.inequalities.push_back(f);
    }
    if (dg.s_max) {
      auto f = std::make_shared<QuadraticFunction>();
      f->quadratic = {{lay.p(g), lay.p(g), 1.0}, {lay.q(g), lay.q(g), 1.0}};
      f->constant = -(*dg.s_max) * (*dg.s_max);
      nlp.inequalities.push_back(f);
    }
  }
  lay.n_balance = 2 * nb;
  return lay;
}

/// Σ generator costs (generators and DGs) in currency/h.
inline std::shared_ptr<QuadraticFunction> generation_cost(const Network& net,
                                                          const OpfLayout& lay) {
  auto f = std::make_shared<QuadraticFunction>();
  const auto gens = net.all_generators();
  for (int g = 0; g < lay.n_gen; ++g) {
    const auto& c = gens[g].cost;
    if (c.a != 0.0) f->quadratic.push_back({lay.p(g), lay.p(g), c.a});
    if (c.b != 0.0) f->linear.emplace_back(lay.p(g), c.b);
    f->constant += c.c;
  }
  return f;
}

/// Flat start: v = 1 clipped to bounds, θ = 0, generators mid-box, t = 0.
inline Eigen::VectorXd flat_start(const NlpProblem& nlp, const OpfLayout& lay) {
  Eigen::VectorXd x(nlp.size());
  for (int i = 0; i < nlp.size(); ++i) {
    const auto& v = nlp.variables[i];
    if (std::isfinite(v.lower) && std::isfinite(v.upper)) {
      x[i] = 0.5 * (v.lower + v.upper);
    } else {
      x[i] = std::clamp(0.0, v.lower, v.upper);
    }
  }
  for (int i = 0; i < lay.n_bus; ++i) {
    const auto& v = nlp.variables[lay.v(i)];
    x[lay.v(i)] = std::clamp(1.0, v.lower, v.upper);
    x[lay.theta(i)] = 0.0;
  }
  if (lay.vj >= 0) x[lay.vj] = x[lay.v(lay.pcc_index)];
  if (lay.t >= 0) x[lay.t] = 0.0;
  return x;
}

}  // namespace detail

/// Assembles the AC-OPF of `net` for `objective`. When `pcc_bus` is given the
/// coupling variables x_j = (p_j, q_j, v_j) are added: the bus balance gains
/// `pcc_sign`·(p_j, q_j) as an injection and v_j = v(pcc) is an equality.
/// On a DS seen from its PCC, pcc_sign = -1 (positive p_j leaves the DS).
inline OpfProblem assemble_opf(const Network& net, const OpfObjective& objective,
                               std::optional<int> pcc_bus = std::nullopt,
                               double pcc_sign = -1.0) {
  const bool needs_pcc = objective.kind != ObjectiveKind::total_cost;
  if (needs_pcc && !pcc_bus) {
    throw PreconditionError("objective variant requires a PCC");
  }
  OpfProblem out;
  auto& nlp = out.nlp;
  std::vector<PowerExpression> p_rows, q_rows;
  auto& lay = out.layout;
  lay = detail::add_network(nlp, net, p_rows, q_rows);

  std::vector<FunctionPtr> coupling;
  if (pcc_bus) {
    const int b = net.index_of(*pcc_bus);
    lay.pcc_index = b;
    lay.pj = nlp.add_variable("p_j", -kInf, kInf);
    lay.qj = nlp.add_variable("q_j", -kInf, kInf);
    const auto& bus = net.buses()[b];
    lay.vj = nlp.add_variable("v_j", bus.v_min, bus.v_max);
    p_rows[b].linear.emplace_back(lay.pj, -pcc_sign);
    q_rows[b].linear.emplace_back(lay.qj, -pcc_sign);
    auto vc = std::make_shared<QuadraticFunction>();
    vc->linear = {{lay.v(b), 1.0}, {lay.vj, -1.0}};
    coupling.push_back(vc);
  }
  for (auto& r : p_rows) nlp.equalities.push_back(std::make_shared<PowerExpression>(std::move(r)));
  for (auto& r : q_rows) nlp.equalities.push_back(std::make_shared<PowerExpression>(std::move(r)));
  for (auto& c : coupling) nlp.equalities.push_back(c);

  const std::array<int, 3> xj{lay.pj, lay.qj, lay.vj};
  switch (objective.kind) {
    case ObjectiveKind::total_cost:
      nlp.objective = detail::generation_cost(net, lay);
      break;
    case ObjectiveKind::axis_extreme: {
      if (objective.axis < 0 || objective.axis > 2) throw PreconditionError("axis must be 0, 1 or 2");
      auto f = std::make_shared<QuadraticFunction>();
      f->linear.emplace_back(xj[objective.axis], objective.maximize ? -1.0 : 1.0);
      nlp.objective = f;
      break;
    }
    case ObjectiveKind::l2_projection: {
      auto f = std::make_shared<QuadraticFunction>();
      for (int a = 0; a < 3; ++a) {
        if (!(objective.scale[a] > 0.0)) throw PreconditionError("projection scale must be positive");
        f->add_squared_distance(xj[a], 1.0 / (objective.scale[a] * objective.scale[a]),
                                objective.target[a]);
      }
      nlp.objective = f;
      break;
    }
    case ObjectiveKind::ray_max: {
      lay.t = nlp.add_variable("t", 0.0, objective.t_max);
      for (int a = 0; a < 3; ++a) {
        auto e = std::make_shared<QuadraticFunction>();
        e->linear = {{xj[a], 1.0}, {lay.t, -objective.direction[a]}};
        e->constant = -objective.center[a];
        nlp.equalities.push_back(e);
      }
      auto f = std::make_shared<QuadraticFunction>();
      f->linear.emplace_back(lay.t, -1.0);
      nlp.objective = f;
      break;
    }
    case ObjectiveKind::fixed_pcc_cost: {
      // x_j - target = s+ - s-, penalised; the slack total decides feasibility.
      lay.slack0 = nlp.size();
      for (int k = 0; k < 6; ++k) {
        nlp.add_variable((k < 3 ? "s_plus_" : "s_minus_") + std::to_string(k % 3), 0.0, kInf);
      }
      auto cost = objective.with_cost ? detail::generation_cost(net, lay)
                                      : std::make_shared<QuadraticFunction>();
      for (int a = 0; a < 3; ++a) {
        auto e = std::make_shared<QuadraticFunction>();
        e->linear = {{xj[a], 1.0}, {lay.slack0 + a, -1.0}, {lay.slack0 + 3 + a, 1.0}};
        e->constant = -objective.target[a];
        nlp.equalities.push_back(e);
      }
      for (int k = 0; k < 6; ++k) cost->linear.emplace_back(lay.slack0 + k, objective.penalty);
      nlp.objective = cost;
      break;
    }
  }
  nlp.warm_start = detail::flat_start(nlp, lay);
  if (objective.kind == ObjectiveKind::fixed_pcc_cost) {
    // Start the coupling at the requested point.
    (*nlp.warm_start)[lay.pj] = objective.target[0];
    (*nlp.warm_start)[lay.qj] = objective.target[1];
    (*nlp.warm_start)[lay.vj] = std::clamp(objective.target[2], nlp.variables[lay.vj].lower,
                                           nlp.variables[lay.vj].upper);
  }
  return out;
}

/// Assembles an OPF on a DS seen from its PCC.
inline OpfProblem assemble_opf(const PccNetwork& ds, const OpfObjective& objective) {
  return assemble_opf(ds.network, objective, ds.pcc_bus, -1.0);
}

/// Coupling point of a solution, per-unit.
inline CouplingPoint coupling_point(const OpfLayout& lay, const Eigen::VectorXd& x) {
  if (!lay.has_coupling()) throw PreconditionError("OPF has no coupling variables");
  return {x[lay.pj], x[lay.qj], x[lay.vj]};
}

/// Sum of generator and DG cost at a solution.
inline double generation_cost(const Network& net, const OpfLayout& lay, const Eigen::VectorXd& x) {
  return detail::generation_cost(net, lay)->value(x);
}

/// Re-solves the power flow with the OPF's dispatch (all non-reference buses
/// PQ with the OPF injections, the reference at its OPF voltage) and returns
/// the largest voltage-magnitude or angle deviation from the OPF state.
inline double verify_with_powerflow(const Network& net, const OpfLayout& lay,
                                    const Eigen::VectorXd& x, double pcc_sign = -1.0) {
  PfSetpoints sp;
  const int nb = lay.n_bus;
  sp.gen_p.resize(lay.n_gen);
  sp.gen_q.resize(lay.n_gen);
  for (int g = 0; g < lay.n_gen; ++g) {
    sp.gen_p[g] = x[lay.p(g)];
    sp.gen_q[g] = x[lay.q(g)];
  }
  sp.bus_kind.assign(nb, BusKind::pq);
  sp.bus_kind[net.reference_index()] = BusKind::slack;
  sp.bus_v.resize(nb);
  for (int i = 0; i < nb; ++i) sp.bus_v[i] = x[lay.v(i)];
  if (lay.has_coupling()) {
    sp.extra_p.assign(nb, 0.0);
    sp.extra_q.assign(nb, 0.0);
    sp.extra_p[lay.pcc_index] = pcc_sign * x[lay.pj];
    sp.extra_q[lay.pcc_index] = pcc_sign * x[lay.qj];
  }
  const auto st = solve_powerflow(net, sp);
  if (!st.converged) return kInf;
  double dev = 0.0;
  for (int i = 0; i < nb; ++i) {
    dev = std::max(dev, std::abs(st.v[i] - x[lay.v(i)]));
    dev = std::max(dev, std::abs(st.theta[i] - x[lay.theta(i)]));
  }
  return dev;
}

struct FixedPccOptions {
  NlpOptions nlp;
  /// Total coupling slack (per-unit) above which the point is infeasible.
  double slack_tol = 1e-6;
  double penalty = 1e5;
};

namespace detail {

// Voltages at the requested PCC level and units low in their ranges.
inline Eigen::VectorXd alternate_start(const OpfProblem& prob, double v_target, Eigen::VectorXd start) {
  const auto& lay = prob.layout;
  const double v0 = std::clamp(v_target, 0.9, 1.1);
  for (int i = 0; i < lay.n_bus; ++i) {
    const auto& v = prob.nlp.variables[lay.v(i)];
    start[lay.v(i)] = std::clamp(v0, v.lower, v.upper);
  }
  for (int g = 0; g < lay.n_gen; ++g) {
    const auto& p = prob.nlp.variables[lay.p(g)];
    start[lay.p(g)] = p.lower + 0.25 * (p.upper - p.lower);
  }
  return start;
}

// Elastic fixed-PCC solve; a numerical failure is retried once from the
// alternate start.
inline NlpSolution solve_elastic(OpfProblem& prob, double v_target, const Eigen::VectorXd& start,
                                 const NlpOptions& opts) {
  prob.nlp.warm_start = start;
  NlpSolution sol = solve_nlp(prob.nlp, opts);
  if (sol.status == NlpStatus::optimal) return sol;
  NlpOptions o2 = opts;
  o2.max_iter = std::max(o2.max_iter, 300);
  o2.centering = 0.2;
  prob.nlp.warm_start = alternate_start(prob, v_target, start);
  NlpSolution retry = solve_nlp(prob.nlp, o2);
  retry.history.insert(retry.history.begin(), sol.history.begin(), sol.history.end());
  return retry;
}

inline double coupling_slack(const OpfLayout& lay, const Eigen::VectorXd& x) {
  double s = 0.0;
  for (int k = 0; k < 6; ++k) s += x[lay.slack0 + k];
  return s;
}

}  // namespace detail

/// Minimum DG cost at a fixed PCC operating point `x` (MW, MVAr, p.u.).
///
/// The coupling x_j = x is relaxed by non-negative slacks with a linear
/// penalty. When that solve leaves slack above `slack_tol` or fails, the
/// verdict comes from the same problem without the DG cost, i.e. the L1
/// distance from x to the region, so a penalty that is small next to the
/// coupling multipliers cannot turn a feasible point infeasible. status =
/// optimal means the slack is within `slack_tol` and `objective` is the DG
/// cost; infeasible means the distance problem converged with more slack;
/// numerical_failure means no verdict.
inline NlpSolution solve_fixed_pcc(const PccNetwork& ds, const CouplingPoint& x,
                                   const FixedPccOptions& opts = {}) {
  const auto xpu = to_per_unit(x, ds.network.base_mva());
  auto obj = OpfObjective::fixed({xpu.p, xpu.q, xpu.v});
  obj.penalty = opts.penalty;
  auto prob = assemble_opf(ds, obj);
  const auto& lay = prob.layout;
  const Eigen::VectorXd start = *prob.nlp.warm_start;
  auto finish = [&](NlpSolution sol, const OpfLayout& l) {
    const double slack = detail::coupling_slack(l, sol.x);
    sol.elastic_slack = slack;
    sol.objective = generation_cost(ds.network, l, sol.x);
    if (slack > opts.slack_tol) {
      sol.status = NlpStatus::infeasible;
      sol.message = "coupling slack " + std::to_string(slack) + " exceeds tolerance";
    }
    return sol;
  };

  NlpSolution sol = detail::solve_elastic(prob, xpu.v, start, opts.nlp);
  if (sol.status == NlpStatus::optimal && detail::coupling_slack(lay, sol.x) <= opts.slack_tol) {
    return finish(std::move(sol), lay);
  }

  obj.with_cost = false;
  auto dist = assemble_opf(ds, obj);
  const Eigen::VectorXd dist_start = sol.status == NlpStatus::optimal ? sol.x : start;
  NlpSolution d = detail::solve_elastic(dist, xpu.v, dist_start, opts.nlp);
  if (d.status != NlpStatus::optimal && sol.status == NlpStatus::optimal) {
    d = detail::solve_elastic(dist, xpu.v, start, opts.nlp);
  }
  if (d.status != NlpStatus::optimal) {
    if (sol.status == NlpStatus::optimal) return finish(std::move(sol), lay);
    d.status = NlpStatus::numerical_failure;
    return d;
  }
  if (detail::coupling_slack(dist.layout, d.x) > opts.slack_tol) {
    // The distance problem is non-convex too; a positive local minimum is
    // confirmed from the alternate start before the point is rejected.
    const auto alt = detail::alternate_start(dist, xpu.v, start);
    NlpSolution d2 = detail::solve_elastic(dist, xpu.v, alt, opts.nlp);
    if (d2.status == NlpStatus::optimal &&
        detail::coupling_slack(dist.layout, d2.x) < detail::coupling_slack(dist.layout, d.x)) {
      d = std::move(d2);
    }
    if (detail::coupling_slack(dist.layout, d.x) > opts.slack_tol) return finish(std::move(d), dist.layout);
  }

  // Feasible: price the dispatch with a penalty large enough to hold the
  // coupling, starting from the distance solution.
  obj.with_cost = true;
  obj.penalty = opts.penalty * 1e4;
  auto tight = assemble_opf(ds, obj);
  NlpSolution c = detail::solve_elastic(tight, xpu.v, d.x, opts.nlp);
  if (c.status == NlpStatus::optimal && detail::coupling_slack(tight.layout, c.x) <= opts.slack_tol) {
    return finish(std::move(c), tight.layout);
  }
  d.message = "cost of a feasible dispatch, not minimised";
  return finish(std::move(d), dist.layout);
}

}  // namespace flexfor
