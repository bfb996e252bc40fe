#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "flexfor/netmodel.hpp"

namespace flexfor {

/// Newton power flow failed on a singular Jacobian.
class SingularJacobian : public Error {
 public:
  SingularJacobian(int bus_id, const std::string& what) : Error(what), bus_id_(bus_id) {}
  /// Bus whose Jacobian rows are closest to zero.
  int bus_id() const noexcept { return bus_id_; }

 private:
  int bus_id_;
};

/// Injections and voltage targets for a power-flow run. Empty vectors fall
/// back to the network's own setpoints (Generator::p_set, Bus::v_set, kinds).
struct PfSetpoints {
  /// Per entry of Network::all_generators().
  std::vector<double> gen_p;
  /// Used for generators sitting on PQ buses.
  std::vector<double> gen_q;
  /// Per bus index; used at slack/PV/PCC buses.
  std::vector<double> bus_v;
  /// Per bus index override of the bus kind.
  std::vector<BusKind> bus_kind;
  /// Additional injections per bus index.
  std::vector<double> extra_p;
  std::vector<double> extra_q;
};

struct PfOptions {
  double tol = 1e-8;
  int max_iter = 30;
};

struct PfState {
  Eigen::VectorXd v;
  Eigen::VectorXd theta;
  /// Net injections into the network at the solution.
  Eigen::VectorXd p_inj;
  Eigen::VectorXd q_inj;
  int iterations = 0;
  bool converged = false;
  double max_mismatch = 0.0;
};

namespace detail {

inline Eigen::VectorXcd bus_voltages(const Eigen::VectorXd& v, const Eigen::VectorXd& th) {
  Eigen::VectorXcd out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = std::polar(v[i], th[i]);
  return out;
}

}  // namespace detail

/// Polar Newton-Raphson power flow with a sparse LU solve per iteration,
/// started from v = 1 (or the voltage setpoint) and theta = 0.
inline PfState solve_powerflow(const Network& net, const PfSetpoints& sp = {},
                               const PfOptions& opts = {}) {
  using C = std::complex<double>;
  const int n = net.bus_count();
  const auto y = build_admittance(net);
  const auto gens = net.all_generators();

  std::vector<BusKind> kind(n);
  for (int i = 0; i < n; ++i) {
    kind[i] = sp.bus_kind.empty() ? net.buses()[i].kind : sp.bus_kind[i];
    if (kind[i] == BusKind::pcc) kind[i] = BusKind::slack;
  }
  auto [pd, qd] = net.bus_demand();
  Eigen::VectorXd p_spec(n), q_spec(n);
  for (int i = 0; i < n; ++i) {
    p_spec[i] = -pd[i] + (sp.extra_p.empty() ? 0.0 : sp.extra_p[i]);
    q_spec[i] = -qd[i] + (sp.extra_q.empty() ? 0.0 : sp.extra_q[i]);
  }
  for (std::size_t g = 0; g < gens.size(); ++g) {
    const int i = net.index_of(gens[g].bus);
    p_spec[i] += sp.gen_p.empty() ? gens[g].p_set : sp.gen_p[g];
    if (!sp.gen_q.empty()) q_spec[i] += sp.gen_q[g];
  }

  PfState st;
  st.v = Eigen::VectorXd::Ones(n);
  st.theta = Eigen::VectorXd::Zero(n);
  std::vector<int> pvpq, pq;
  for (int i = 0; i < n; ++i) {
    if (kind[i] != BusKind::pq) {
      st.v[i] = sp.bus_v.empty() ? net.buses()[i].v_set : sp.bus_v[i];
    }
    if (kind[i] != BusKind::slack) pvpq.push_back(i);
    if (kind[i] == BusKind::pq) pq.push_back(i);
  }
  std::vector<int> col_theta(n, -1), col_v(n, -1);
  for (std::size_t k = 0; k < pvpq.size(); ++k) col_theta[pvpq[k]] = static_cast<int>(k);
  for (std::size_t k = 0; k < pq.size(); ++k) {
    col_v[pq[k]] = static_cast<int>(pvpq.size() + k);
  }
  const int dim = static_cast<int>(pvpq.size() + pq.size());

  auto mismatch = [&](const Eigen::VectorXcd& V, Eigen::VectorXcd& I) {
    I = y * V;
    Eigen::VectorXd f(dim);
    for (std::size_t k = 0; k < pvpq.size(); ++k) {
      const int i = pvpq[k];
      f[k] = (V[i] * std::conj(I[i])).real() - p_spec[i];
    }
    for (std::size_t k = 0; k < pq.size(); ++k) {
      const int i = pq[k];
      f[pvpq.size() + k] = (V[i] * std::conj(I[i])).imag() - q_spec[i];
    }
    return f;
  };

  Eigen::VectorXcd V = detail::bus_voltages(st.v, st.theta);
  Eigen::VectorXcd I;
  Eigen::VectorXd f = mismatch(V, I);
  st.max_mismatch = dim ? f.lpNorm<Eigen::Infinity>() : 0.0;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  bool pattern_ready = false;
  while (st.max_mismatch > opts.tol && st.iterations < opts.max_iter) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(4 * y.nonZeros());
    auto put = [&](int row_bus, int col_bus, C ds_dth, C ds_dv) {
      const int rp = col_theta[row_bus];
      const int rq = col_v[row_bus];
      const int ct = col_theta[col_bus];
      const int cv = col_v[col_bus];
      if (rp >= 0 && ct >= 0) trips.emplace_back(rp, ct, ds_dth.real());
      if (rp >= 0 && cv >= 0) trips.emplace_back(rp, cv, ds_dv.real());
      if (rq >= 0 && ct >= 0) trips.emplace_back(rq, ct, ds_dth.imag());
      if (rq >= 0 && cv >= 0) trips.emplace_back(rq, cv, ds_dv.imag());
    };
    const C j(0.0, 1.0);
    for (int k = 0; k < y.outerSize(); ++k) {
      for (AdmittanceMatrix::InnerIterator it(y, k); it; ++it) {
        const int i = static_cast<int>(it.row());
        const int m = static_cast<int>(it.col());
        const C yim = it.value();
        const C vn = V[m] / st.v[m];
        C ds_dth = -j * V[i] * std::conj(yim * V[m]);
        C ds_dv = V[i] * std::conj(yim * vn);
        if (i == m) {
          ds_dth += j * V[i] * std::conj(I[i]);
          ds_dv += std::conj(I[i]) * vn;
        }
        put(i, m, ds_dth, ds_dv);
      }
    }
    Eigen::SparseMatrix<double> jac(dim, dim);
    jac.setFromTriplets(trips.begin(), trips.end());
    jac.makeCompressed();
    if (!pattern_ready) {
      lu.analyzePattern(jac);
      pattern_ready = true;
    }
    lu.factorize(jac);
    Eigen::VectorXd dx;
    if (lu.info() == Eigen::Success) dx = lu.solve(-f);
    if (lu.info() != Eigen::Success || !dx.allFinite()) {
      Eigen::VectorXd row_norm = Eigen::VectorXd::Zero(dim);
      for (int k = 0; k < jac.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(jac, k); it; ++it) {
          row_norm[it.row()] += std::abs(it.value());
        }
      }
      Eigen::Index worst = 0;
      row_norm.minCoeff(&worst);
      const int bus_index = worst < static_cast<Eigen::Index>(pvpq.size())
                                ? pvpq[worst]
                                : pq[worst - pvpq.size()];
      const int id = net.buses()[bus_index].id;
      throw SingularJacobian(id, "singular power-flow Jacobian near bus " + std::to_string(id));
    }
    for (std::size_t k = 0; k < pvpq.size(); ++k) st.theta[pvpq[k]] += dx[k];
    for (std::size_t k = 0; k < pq.size(); ++k) st.v[pq[k]] += dx[pvpq.size() + k];
    V = detail::bus_voltages(st.v, st.theta);
    f = mismatch(V, I);
    st.max_mismatch = f.lpNorm<Eigen::Infinity>();
    ++st.iterations;
  }
  st.converged = st.max_mismatch <= opts.tol;
  st.p_inj.resize(n);
  st.q_inj.resize(n);
  for (int i = 0; i < n; ++i) {
    const C s = V[i] * std::conj(I[i]);
    st.p_inj[i] = s.real();
    st.q_inj[i] = s.imag();
  }
  return st;
}

struct BranchFlow {
  double p_from = 0.0, q_from = 0.0, p_to = 0.0, q_to = 0.0;
  double s_from = 0.0, s_to = 0.0;
};

/// Flows entering each branch at both ends; open branches carry nothing.
inline std::vector<BranchFlow> branch_flows(const Network& net, const PfState& st) {
  std::vector<BranchFlow> out(net.branches().size());
  const Eigen::VectorXcd V = detail::bus_voltages(st.v, st.theta);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& br = net.branches()[k];
    if (br.status != BranchStatus::closed) continue;
    const int f = net.index_of(br.from_bus);
    const int t = net.index_of(br.to_bus);
    const auto y = branch_admittance(br);
    const auto sf = V[f] * std::conj(y.yff * V[f] + y.yft * V[t]);
    const auto st_ = V[t] * std::conj(y.ytf * V[f] + y.ytt * V[t]);
    out[k] = {sf.real(), sf.imag(), st_.real(), st_.imag(), std::abs(sf), std::abs(st_)};
  }
  return out;
}

}  // namespace flexfor
