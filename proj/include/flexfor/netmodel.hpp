#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>

#include "flexfor/error.hpp"

namespace flexfor {

// Network data model. Everything inside a Network is per-unit on
// `base_mva`; conversions to MW/MVAr happen at the file/report boundary.

enum class BusKind { slack, pv, pq, pcc };
enum class BranchStatus { closed, open };

struct Bus {
  int id = 0;
  BusKind kind = BusKind::pq;
  double v_min = 0.9;
  double v_max = 1.1;
  double theta_min = -std::numbers::pi;
  double theta_max = std::numbers::pi;
  double base_kv = 1.0;
  /// Voltage setpoint used by power flow at slack/PV buses.
  double v_set = 1.0;
  /// Fixed shunt admittance (p.u. at 1.0 p.u. voltage).
  double g_shunt = 0.0;
  double b_shunt = 0.0;

  bool operator==(const Bus&) const = default;
};

struct Branch {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double b_charge = 0.0;
  double tap = 1.0;
  double shift = 0.0;
  /// Apparent-power limit at both ends; 0 means unlimited.
  double rating = 0.0;
  BranchStatus status = BranchStatus::closed;

  bool operator==(const Branch&) const = default;
};

/// a·p² + b·p + c with p in per-unit, result in currency/h.
struct QuadraticCost {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  double operator()(double p) const { return (a * p + b) * p + c; }
  double derivative(double p) const { return 2.0 * a * p + b; }

  bool operator==(const QuadraticCost&) const = default;
};

struct Generator {
  int bus = 0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  QuadraticCost cost;
  /// Active-power setpoint used by power flow.
  double p_set = 0.0;

  bool operator==(const Generator&) const = default;
};

/// alpha·p + beta·q <= delta.
struct HalfPlane {
  double alpha = 0.0;
  double beta = 0.0;
  double delta = 0.0;

  bool operator==(const HalfPlane&) const = default;
};

struct DgUnit {
  Generator generator;
  std::vector<HalfPlane> capability;
  std::optional<double> s_max;

  bool operator==(const DgUnit&) const = default;
};

struct Load {
  int bus = 0;
  double p_d = 0.0;
  double q_d = 0.0;

  bool operator==(const Load&) const = default;
};

/// Mutable aggregate used to build a Network.
struct NetworkData {
  std::string name;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<DgUnit> dgs;
  std::vector<Load> loads;

  bool operator==(const NetworkData&) const = default;
};

/// Point of common coupling between a TS bus and a DS. Positive p/q flow
/// from the DS towards the TS.
struct PccLink {
  int ts_bus = 0;
  std::string ds_name;
  /// Voltage box of the PCC, enforced on the TS bus.
  double v_min = 0.95;
  double v_max = 1.05;
  /// Branch from the PCC bus to the DS root bus, per-unit on the DS base.
  Branch interconnect;

  bool operator==(const PccLink&) const = default;
};

/// Operating point at a PCC in MW, MVAr and p.u.
struct CouplingPoint {
  double p = 0.0;
  double q = 0.0;
  double v = 1.0;

  bool operator==(const CouplingPoint&) const = default;
};

/// Immutable validated network. Safe for concurrent read-only use.
class Network {
 public:
  Network() = default;

  explicit Network(NetworkData data) : data_(std::move(data)) {
    validate();
  }

  const NetworkData& data() const noexcept { return data_; }
  const std::string& name() const noexcept { return data_.name; }
  double base_mva() const noexcept { return data_.base_mva; }
  const std::vector<Bus>& buses() const noexcept { return data_.buses; }
  const std::vector<Branch>& branches() const noexcept { return data_.branches; }
  const std::vector<Generator>& generators() const noexcept {
    return data_.generators;
  }
  const std::vector<DgUnit>& dgs() const noexcept { return data_.dgs; }
  const std::vector<Load>& loads() const noexcept { return data_.loads; }

  int bus_count() const noexcept { return static_cast<int>(data_.buses.size()); }

  /// Position of bus `id` in buses(); throws StructuralError if unknown.
  int index_of(int id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
      throw StructuralError("unknown bus id " + std::to_string(id));
    }
    return it->second;
  }

  bool has_bus(int id) const { return index_.contains(id); }

  /// Index of the unique slack or PCC bus.
  int reference_index() const noexcept { return reference_; }

  /// All generators followed by the DG generators, in that order.
  std::vector<Generator> all_generators() const {
    std::vector<Generator> out = data_.generators;
    for (const auto& dg : data_.dgs) out.push_back(dg.generator);
    return out;
  }

  /// Net demand per bus index.
  std::pair<std::vector<double>, std::vector<double>> bus_demand() const {
    std::vector<double> pd(data_.buses.size(), 0.0), qd(data_.buses.size(), 0.0);
    for (const auto& load : data_.loads) {
      int i = index_of(load.bus);
      pd[i] += load.p_d;
      qd[i] += load.q_d;
    }
    return {pd, qd};
  }

  /// True when no load, generator or DG sits at bus `id`.
  bool is_empty_bus(int id) const {
    auto at = [id](const auto& e) { return e.bus == id; };
    return std::none_of(data_.loads.begin(), data_.loads.end(), at) &&
           std::none_of(data_.generators.begin(), data_.generators.end(), at) &&
           std::none_of(data_.dgs.begin(), data_.dgs.end(),
                        [id](const DgUnit& dg) { return dg.generator.bus == id; });
  }

 private:
  void validate();

  NetworkData data_;
  std::unordered_map<int, int> index_;
  int reference_ = -1;
};

// ---------------------------------------------------------------------------
// DG capability

/// One residual per half-plane (alpha·p + beta·q - delta), then
/// p² + q² - s_max² when an apparent-power cap is set. Box bounds of the
/// embedded generator are not included.
inline std::vector<double> capability_residuals(const DgUnit& dg, double p,
                                                double q) {
  std::vector<double> out;
  out.reserve(dg.capability.size() + 1);
  for (const auto& hp : dg.capability) {
    out.push_back(hp.alpha * p + hp.beta * q - hp.delta);
  }
  if (dg.s_max) out.push_back(p * p + q * q - (*dg.s_max) * (*dg.s_max));
  return out;
}

/// Capability archetypes used by the bundled cases. Parameters are scaled to
/// the unit's p_max; see docs/format.md for the exact polygons.
enum class CapabilityArchetype { box, box_circle, triangle, trapezoid, pentagon };

inline const char* to_string(CapabilityArchetype a) {
  switch (a) {
    case CapabilityArchetype::box: return "box";
    case CapabilityArchetype::box_circle: return "box_circle";
    case CapabilityArchetype::triangle: return "triangle";
    case CapabilityArchetype::trapezoid: return "trapezoid";
    case CapabilityArchetype::pentagon: return "pentagon";
  }
  return "?";
}

inline std::optional<CapabilityArchetype> archetype_from_string(const std::string& s) {
  for (auto a : {CapabilityArchetype::box, CapabilityArchetype::box_circle,
                 CapabilityArchetype::triangle, CapabilityArchetype::trapezoid,
                 CapabilityArchetype::pentagon}) {
    if (s == to_string(a)) return a;
  }
  return std::nullopt;
}

/// Builds a DG at `bus` with capability `kind`, p in [0, p_max].
///
///   box         |q| <= 0.5 p_max
///   box_circle  |q| <= p_max, p² + q² <= p_max²
///   triangle    |q| <= 0.6 p
///   trapezoid   |q| <= 0.2 p_max + 0.4 p
///   pentagon    |q| <= 0.5 p_max, p + q <= 1.2 p_max
inline DgUnit make_dg(CapabilityArchetype kind, int bus, double p_max,
                      QuadraticCost cost) {
  DgUnit dg;
  dg.generator.bus = bus;
  dg.generator.p_min = 0.0;
  dg.generator.p_max = p_max;
  dg.generator.cost = cost;
  switch (kind) {
    case CapabilityArchetype::box:
      dg.generator.q_min = -0.5 * p_max;
      dg.generator.q_max = 0.5 * p_max;
      break;
    case CapabilityArchetype::box_circle:
      dg.generator.q_min = -p_max;
      dg.generator.q_max = p_max;
      dg.s_max = p_max;
      break;
    case CapabilityArchetype::triangle:
      dg.generator.q_min = -0.6 * p_max;
      dg.generator.q_max = 0.6 * p_max;
      dg.capability = {{-0.6, 1.0, 0.0}, {-0.6, -1.0, 0.0}};
      break;
    case CapabilityArchetype::trapezoid:
      dg.generator.q_min = -0.6 * p_max;
      dg.generator.q_max = 0.6 * p_max;
      dg.capability = {{-0.4, 1.0, 0.2 * p_max}, {-0.4, -1.0, 0.2 * p_max}};
      break;
    case CapabilityArchetype::pentagon:
      dg.generator.q_min = -0.5 * p_max;
      dg.generator.q_max = 0.5 * p_max;
      dg.capability = {{1.0, 1.0, 1.2 * p_max}};
      break;
  }
  return dg;
}

namespace detail {

inline bool capability_nonempty(const DgUnit& dg) {
  const auto& g = dg.generator;
  // Lines of the linear feasible set: box edges and half-plane boundaries.
  std::vector<HalfPlane> lines = dg.capability;
  lines.push_back({1.0, 0.0, g.p_max});
  lines.push_back({-1.0, 0.0, -g.p_min});
  lines.push_back({0.0, 1.0, g.q_max});
  lines.push_back({0.0, -1.0, -g.q_min});
  const double tol = 1e-12 * (1.0 + std::abs(g.p_max) + std::abs(g.q_max));
  auto linear_ok = [&](double p, double q) {
    return std::all_of(lines.begin(), lines.end(), [&](const HalfPlane& h) {
      return h.alpha * p + h.beta * q <= h.delta + tol;
    });
  };
  std::vector<std::pair<double, double>> vertices;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    for (std::size_t j = i + 1; j < lines.size(); ++j) {
      const auto& a = lines[i];
      const auto& b = lines[j];
      double det = a.alpha * b.beta - a.beta * b.alpha;
      if (std::abs(det) < 1e-14) continue;
      double p = (a.delta * b.beta - a.beta * b.delta) / det;
      double q = (a.alpha * b.delta - a.delta * b.alpha) / det;
      if (linear_ok(p, q)) vertices.emplace_back(p, q);
    }
  }
  if (vertices.empty()) return false;
  if (!dg.s_max) return true;
  const double s = *dg.s_max;
  if (linear_ok(0.0, 0.0)) return s >= 0.0;
  double best = 1e300;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    for (std::size_t j = i; j < vertices.size(); ++j) {
      auto [p0, q0] = vertices[i];
      auto [p1, q1] = vertices[j];
      double dp = p1 - p0, dq = q1 - q0;
      double len2 = dp * dp + dq * dq;
      double t = len2 > 0 ? std::clamp(-(p0 * dp + q0 * dq) / len2, 0.0, 1.0) : 0.0;
      double p = p0 + t * dp, q = q0 + t * dq;
      best = std::min(best, std::hypot(p, q));
    }
  }
  return best <= s + tol;
}

}  // namespace detail

inline void Network::validate() {
  index_.clear();
  reference_ = -1;
  int reference_count = 0;
  for (std::size_t i = 0; i < data_.buses.size(); ++i) {
    const auto& bus = data_.buses[i];
    if (!index_.emplace(bus.id, static_cast<int>(i)).second) {
      throw StructuralError("duplicate bus id " + std::to_string(bus.id));
    }
    if (!(bus.v_min <= bus.v_max)) {
      throw PreconditionError("bus " + std::to_string(bus.id) + ": v_min > v_max");
    }
    if (!(bus.theta_min <= bus.theta_max)) {
      throw PreconditionError("bus " + std::to_string(bus.id) +
                              ": theta_min > theta_max");
    }
    if (bus.kind == BusKind::slack || bus.kind == BusKind::pcc) {
      ++reference_count;
      reference_ = static_cast<int>(i);
    }
  }
  if (data_.buses.empty()) throw StructuralError("network has no buses");
  if (!(data_.base_mva > 0.0)) throw PreconditionError("base_mva must be positive");
  if (reference_count != 1) {
    throw PreconditionError("network '" + data_.name + "' needs exactly one slack/PCC bus, found " +
                            std::to_string(reference_count));
  }
  auto require_bus = [this](int id, const std::string& what) {
    if (!index_.contains(id)) {
      throw StructuralError(what + " references unknown bus " + std::to_string(id));
    }
  };
  for (const auto& br : data_.branches) {
    const std::string what = "branch " + std::to_string(br.id);
    require_bus(br.from_bus, what);
    require_bus(br.to_bus, what);
    if (br.r == 0.0 && br.x == 0.0) throw PreconditionError(what + " has zero impedance");
    if (br.rating < 0.0) throw PreconditionError(what + " has negative rating");
    if (br.tap <= 0.0) throw PreconditionError(what + " has non-positive tap");
  }
  auto check_gen = [&](const Generator& g, const std::string& what) {
    require_bus(g.bus, what);
    if (!(g.p_min <= g.p_max)) throw PreconditionError(what + ": p_min > p_max");
    if (!(g.q_min <= g.q_max)) throw PreconditionError(what + ": q_min > q_max");
  };
  for (std::size_t k = 0; k < data_.generators.size(); ++k) {
    check_gen(data_.generators[k], "generator " + std::to_string(k));
  }
  for (std::size_t k = 0; k < data_.dgs.size(); ++k) {
    const std::string what = "dg " + std::to_string(k);
    check_gen(data_.dgs[k].generator, what);
    for (const auto& hp : data_.dgs[k].capability) {
      if (hp.alpha == 0.0 && hp.beta == 0.0) {
        throw PreconditionError(what + ": half-plane with zero normal");
      }
    }
    if (!detail::capability_nonempty(data_.dgs[k])) {
      throw PreconditionError(what + ": capability region is empty");
    }
  }
  for (const auto& load : data_.loads) require_bus(load.bus, "load");

  // Connectivity over closed branches.
  std::vector<std::vector<int>> adj(data_.buses.size());
  for (const auto& br : data_.branches) {
    if (br.status != BranchStatus::closed) continue;
    int f = index_.at(br.from_bus), t = index_.at(br.to_bus);
    adj[f].push_back(t);
    adj[t].push_back(f);
  }
  std::vector<char> seen(data_.buses.size(), 0);
  std::queue<int> todo;
  todo.push(0);
  seen[0] = 1;
  std::size_t count = 1;
  while (!todo.empty()) {
    int u = todo.front();
    todo.pop();
    for (int w : adj[u]) {
      if (!seen[w]) {
        seen[w] = 1;
        ++count;
        todo.push(w);
      }
    }
  }
  if (count != data_.buses.size()) {
    throw PreconditionError("network '" + data_.name + "' is not connected");
  }
}

// ---------------------------------------------------------------------------
// Admittance

/// π-model 2×2 stamp of a branch: [yff yft; ytf ytt].
struct BranchAdmittance {
  std::complex<double> yff, yft, ytf, ytt;
};

inline BranchAdmittance branch_admittance(const Branch& br) {
  using C = std::complex<double>;
  const C ys = 1.0 / C(br.r, br.x);
  const C half_charge(0.0, br.b_charge / 2.0);
  const C tap = std::polar(br.tap, br.shift);
  BranchAdmittance y;
  y.ytt = ys + half_charge;
  y.yff = y.ytt / (br.tap * br.tap);
  y.yft = -ys / std::conj(tap);
  y.ytf = -ys / tap;
  return y;
}

using AdmittanceMatrix = Eigen::SparseMatrix<std::complex<double>>;

/// Bus admittance matrix indexed by bus position. Open branches contribute
/// nothing.
inline AdmittanceMatrix build_admittance(const Network& net) {
  using C = std::complex<double>;
  const int n = net.bus_count();
  std::vector<Eigen::Triplet<C>> trips;
  trips.reserve(4 * net.branches().size() + n);
  for (const auto& br : net.branches()) {
    if (br.status != BranchStatus::closed) continue;
    const int f = net.index_of(br.from_bus);
    const int t = net.index_of(br.to_bus);
    const auto y = branch_admittance(br);
    trips.emplace_back(f, f, y.yff);
    trips.emplace_back(f, t, y.yft);
    trips.emplace_back(t, f, y.ytf);
    trips.emplace_back(t, t, y.ytt);
  }
  for (int i = 0; i < n; ++i) {
    const auto& bus = net.buses()[i];
    if (bus.g_shunt != 0.0 || bus.b_shunt != 0.0) {
      trips.emplace_back(i, i, C(bus.g_shunt, bus.b_shunt));
    }
  }
  AdmittanceMatrix y(n, n);
  y.setFromTriplets(trips.begin(), trips.end());
  y.makeCompressed();
  return y;
}

// ---------------------------------------------------------------------------
// DS with PCC and TS+DS merging

/// A DS seen from its PCC: the DS plus an explicit PCC bus (kind pcc, the
/// reference) joined to the DS root through the interconnect branch.
struct PccNetwork {
  Network network;
  int pcc_bus = 0;
  PccLink link;
};

inline PccNetwork attach_pcc(const Network& ds, const PccLink& link) {
  NetworkData data = ds.data();
  int root = -1;
  int max_id = 0;
  for (auto& bus : data.buses) {
    max_id = std::max(max_id, bus.id);
    if (bus.kind == BusKind::slack || bus.kind == BusKind::pcc) {
      root = bus.id;
      bus.kind = BusKind::pq;
    }
  }
  const int pcc_id = ds.has_bus(0) ? max_id + 1 : 0;
  Bus pcc;
  pcc.id = pcc_id;
  pcc.kind = BusKind::pcc;
  pcc.v_min = link.v_min;
  pcc.v_max = link.v_max;
  pcc.base_kv = ds.buses()[ds.reference_index()].base_kv;
  pcc.v_set = std::clamp(1.0, link.v_min, link.v_max);
  data.buses.insert(data.buses.begin(), pcc);
  Branch tie = link.interconnect;
  int max_branch = 0;
  for (const auto& br : data.branches) max_branch = std::max(max_branch, br.id);
  tie.id = max_branch + 1;
  tie.from_bus = pcc_id;
  tie.to_bus = root;
  tie.status = BranchStatus::closed;
  data.branches.push_back(tie);
  return {Network(std::move(data)), pcc_id, link};
}

struct DsAttachment {
  PccLink link;
  Network ds;
};

/// Where a bus of a merged network came from. `part` is -1 for the TS and
/// the attachment index otherwise.
struct BusOrigin {
  int part = -1;
  int original_id = 0;
};

struct BranchOrigin {
  int part = -1;  // -2 marks an interconnect branch
  int original_id = 0;
};

struct MergedNetwork {
  Network network;
  std::vector<BusOrigin> bus_map;
  std::vector<BranchOrigin> branch_map;
  /// Merged id of each attachment's PCC (TS) bus.
  std::vector<int> pcc_bus;
};

namespace detail {

/// Re-expresses per-unit quantities of a DS element on a new base:
/// power scales by `k` = old_base / new_base, impedance by 1/k.
struct BaseChange {
  double k = 1.0;
  double power(double v) const { return v * k; }
  double impedance(double z) const { return z / k; }
  double admittance(double y) const { return y * k; }
  QuadraticCost cost(const QuadraticCost& c) const {
    return {c.a / (k * k), c.b / k, c.c};
  }
  Generator generator(Generator g) const {
    g.p_min = power(g.p_min);
    g.p_max = power(g.p_max);
    g.q_min = power(g.q_min);
    g.q_max = power(g.q_max);
    g.p_set = power(g.p_set);
    g.cost = cost(g.cost);
    return g;
  }
  Branch branch(Branch br) const {
    br.r = impedance(br.r);
    br.x = impedance(br.x);
    br.b_charge = admittance(br.b_charge);
    br.rating = power(br.rating);
    return br;
  }
};

}  // namespace detail

/// Joins DSs to a TS through their interconnect branches. TS buses come
/// first; every DS is rescaled to the TS base and its slack bus demoted.
/// PCC buses keep their TS bounds intersected with the link voltage box.
inline MergedNetwork merge_ts_ds(const Network& ts,
                                 const std::vector<DsAttachment>& attachments) {
  MergedNetwork out;
  NetworkData data;
  data.name = ts.name();
  data.base_mva = ts.base_mva();
  int next_bus = 1;
  int next_branch = 1;
  std::unordered_map<int, int> ts_ids;
  for (const auto& bus : ts.buses()) {
    Bus b = bus;
    b.id = next_bus++;
    ts_ids[bus.id] = b.id;
    data.buses.push_back(b);
    out.bus_map.push_back({-1, bus.id});
  }
  for (const auto& br : ts.branches()) {
    Branch b = br;
    b.id = next_branch++;
    b.from_bus = ts_ids.at(br.from_bus);
    b.to_bus = ts_ids.at(br.to_bus);
    data.branches.push_back(b);
    out.branch_map.push_back({-1, br.id});
  }
  for (auto g : ts.generators()) {
    g.bus = ts_ids.at(g.bus);
    data.generators.push_back(g);
  }
  for (auto dg : ts.dgs()) {
    dg.generator.bus = ts_ids.at(dg.generator.bus);
    data.dgs.push_back(dg);
  }
  for (auto l : ts.loads()) {
    l.bus = ts_ids.at(l.bus);
    data.loads.push_back(l);
  }

  for (std::size_t part = 0; part < attachments.size(); ++part) {
    const auto& [link, ds] = attachments[part];
    if (!ts.has_bus(link.ts_bus)) {
      throw StructuralError("PCC references unknown TS bus " + std::to_string(link.ts_bus));
    }
    if (!ts.is_empty_bus(link.ts_bus)) {
      throw PreconditionError("PCC bus " + std::to_string(link.ts_bus) +
                              " hosts a load or generator");
    }
    const int pcc_merged = ts_ids.at(link.ts_bus);
    {
      auto& pb = data.buses[pcc_merged - 1];
      pb.v_min = std::max(pb.v_min, link.v_min);
      pb.v_max = std::min(pb.v_max, link.v_max);
      if (pb.v_min > pb.v_max) {
        throw PreconditionError("PCC voltage box does not intersect TS bus bounds");
      }
    }
    out.pcc_bus.push_back(pcc_merged);
    const detail::BaseChange change{ds.base_mva() / ts.base_mva()};
    std::unordered_map<int, int> ids;
    int root = -1;
    for (const auto& bus : ds.buses()) {
      Bus b = bus;
      b.id = next_bus++;
      b.g_shunt = change.admittance(b.g_shunt);
      b.b_shunt = change.admittance(b.b_shunt);
      if (b.kind == BusKind::slack || b.kind == BusKind::pcc) {
        root = b.id;
        b.kind = BusKind::pq;
      }
      ids[bus.id] = b.id;
      data.buses.push_back(b);
      out.bus_map.push_back({static_cast<int>(part), bus.id});
    }
    for (const auto& br : ds.branches()) {
      Branch b = change.branch(br);
      b.id = next_branch++;
      b.from_bus = ids.at(br.from_bus);
      b.to_bus = ids.at(br.to_bus);
      data.branches.push_back(b);
      out.branch_map.push_back({static_cast<int>(part), br.id});
    }
    Branch tie = change.branch(link.interconnect);
    tie.id = next_branch++;
    tie.from_bus = pcc_merged;
    tie.to_bus = root;
    tie.status = BranchStatus::closed;
    data.branches.push_back(tie);
    out.branch_map.push_back({-2, static_cast<int>(part)});
    for (const auto& g : ds.generators()) {
      Generator m = change.generator(g);
      m.bus = ids.at(g.bus);
      data.generators.push_back(m);
    }
    for (const auto& dg : ds.dgs()) {
      DgUnit m = dg;
      m.generator = change.generator(dg.generator);
      m.generator.bus = ids.at(dg.generator.bus);
      for (auto& hp : m.capability) hp.delta = change.power(hp.delta);
      if (m.s_max) m.s_max = change.power(*m.s_max);
      data.dgs.push_back(m);
    }
    for (const auto& l : ds.loads()) {
      data.loads.push_back({ids.at(l.bus), change.power(l.p_d), change.power(l.q_d)});
    }
  }
  out.network = Network(std::move(data));
  return out;
}

/// Bus ids and branch endpoints (original ids) of attachment `part` in a
/// merged network, for round-trip checks and result translation.
struct SubnetworkTopology {
  std::vector<int> bus_ids;
  std::vector<std::pair<int, int>> branch_ends;
};

inline SubnetworkTopology extract_topology(const MergedNetwork& merged, int part) {
  SubnetworkTopology topo;
  const auto& net = merged.network;
  for (std::size_t i = 0; i < merged.bus_map.size(); ++i) {
    if (merged.bus_map[i].part == part) topo.bus_ids.push_back(merged.bus_map[i].original_id);
  }
  for (std::size_t k = 0; k < merged.branch_map.size(); ++k) {
    if (merged.branch_map[k].part != part) continue;
    const auto& br = net.branches()[k];
    topo.branch_ends.emplace_back(
        merged.bus_map[net.index_of(br.from_bus)].original_id,
        merged.bus_map[net.index_of(br.to_bus)].original_id);
  }
  return topo;
}

}  // namespace flexfor
