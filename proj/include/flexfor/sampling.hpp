#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flexfor/fitting.hpp"
#include "flexfor/opf.hpp"

namespace flexfor {

/// Platform-independent random source: mt19937_64 words mapped to doubles
/// by hand so results do not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<int> permutation(int n) {
    std::vector<int> out(n);
    for (int i = 0; i < n; ++i) out[i] = i;
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(below(static_cast<std::uint64_t>(i) + 1));
      std::swap(out[i], out[j]);
    }
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

/// Seed of sub-stream `k` of `seed` (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace detail {

inline Eigen::MatrixXd lhs(int n, const std::vector<double>& lo, const std::vector<double>& hi,
                           Rng& rng) {
  const int dim = static_cast<int>(lo.size());
  Eigen::MatrixXd out(n, dim);
  for (int a = 0; a < dim; ++a) {
    const auto perm = rng.permutation(n);
    for (int i = 0; i < n; ++i) {
      const double u = (perm[i] + rng.uniform()) / n;
      out(i, a) = lo[a] + u * (hi[a] - lo[a]);
    }
  }
  return out;
}

}  // namespace detail

/// Latin hypercube: per dimension exactly one sample in each of n strata.
inline Eigen::MatrixXd lhs(int n, const std::vector<double>& lo, const std::vector<double>& hi,
                           std::uint64_t seed) {
  if (n < 1) throw PreconditionError("lhs needs n >= 1");
  if (lo.size() != hi.size()) throw PreconditionError("lhs bounds differ in dimension");
  for (std::size_t a = 0; a < lo.size(); ++a) {
    if (!(lo[a] <= hi[a])) throw PreconditionError("lhs needs lo <= hi");
  }
  Rng rng(seed);
  return detail::lhs(n, lo, hi, rng);
}

inline constexpr double kDegenerateInflation = 1e-4;

/// Widens axes narrower than `eps` symmetrically to width `eps`.
inline BoundingBox inflate_degenerate(BoundingBox box, double eps = kDegenerateInflation) {
  auto widen = [eps](double& lo, double& hi) {
    if (hi - lo < eps) {
      const double mid = 0.5 * (lo + hi);
      lo = mid - 0.5 * eps;
      hi = mid + 0.5 * eps;
    }
  };
  widen(box.lo.p, box.hi.p);
  widen(box.lo.q, box.hi.q);
  widen(box.lo.v, box.hi.v);
  return box;
}

/// Facet f = 2·axis + side (side 0 = lower, 1 = upper).
struct FacetSample {
  CouplingPoint x;
  int facet = 0;
};

/// n points on the facets of `box`. Facets are chosen by weighted
/// round-robin (weights = facet areas in box-normalized coordinates, so all
/// equal); in-facet coordinates come from one LHS per facet.
inline std::vector<FacetSample> lhs_on_box_facets(int n, const BoundingBox& box_in,
                                                  std::uint64_t seed) {
  if (n < 1) throw PreconditionError("facet sampling needs n >= 1");
  const BoundingBox box = inflate_degenerate(box_in);
  const auto lo = box.min(), hi = box.max();
  // Normalized box is [-1, 1]^3: every facet has area 4.
  std::array<double, 6> weight;
  weight.fill(4.0);
  std::array<double, 6> credit{};
  double total = 0.0;
  for (double w : weight) total += w;
  std::vector<int> assignment(n);
  std::array<int, 6> count{};
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int f = 0; f < 6; ++f) {
      credit[f] += weight[f];
      if (credit[f] > credit[best]) best = f;
    }
    credit[best] -= total;
    assignment[i] = best;
    ++count[best];
  }
  Rng rng(seed);
  std::vector<FacetSample> out(n);
  std::array<int, 6> used{};
  std::array<Eigen::MatrixXd, 6> draws;
  for (int f = 0; f < 6; ++f) {
    if (count[f] == 0) continue;
    const int axis = f / 2;
    std::vector<double> flo, fhi;
    for (int a = 0; a < 3; ++a) {
      if (a == axis) continue;
      flo.push_back(lo[a]);
      fhi.push_back(hi[a]);
    }
    draws[f] = detail::lhs(count[f], flo, fhi, rng);
  }
  for (int i = 0; i < n; ++i) {
    const int f = assignment[i];
    const int axis = f / 2;
    const int row = used[f]++;
    std::array<double, 3> x;
    int col = 0;
    for (int a = 0; a < 3; ++a) {
      x[a] = a == axis ? (f % 2 ? hi[a] : lo[a]) : draws[f](row, col++);
    }
    out[i] = {{x[0], x[1], x[2]}, f};
  }
  return out;
}

inline constexpr double kGoldenAngle = std::numbers::pi * (3.0 - 2.2360679774997896964);

/// Fibonacci lattice on the unit sphere: z = 1 - (2k+1)/n, θ = φk.
inline std::vector<std::array<double, 3>> fibonacci_directions(int n) {
  if (n < 1) throw PreconditionError("fibonacci_directions needs n >= 1");
  std::vector<std::array<double, 3>> out(n);
  for (int k = 0; k < n; ++k) {
    const double z = 1.0 - (2.0 * k + 1.0) / n;
    const double th = kGoldenAngle * k;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    out[k] = {r * std::cos(th), r * std::sin(th), z};
  }
  return out;
}

// ---------------------------------------------------------------------------
// OPF-driven sampling

struct SamplingConfig {
  int n_bbps = 100;
  int n_fds = 1000;
  int n_cost = 100;
  std::uint64_t seed = 42;
  int batch = 64;
  /// Slack tolerance for the fixed-PCC verdict used while sampling.
  double slack_tol = 1e-6;

  bool operator==(const SamplingConfig&) const = default;
};

enum class SampleSource { bbps, fds };

inline const char* to_string(SampleSource s) { return s == SampleSource::bbps ? "bbps" : "fds"; }

struct BoundaryRow {
  CouplingPoint x;  // MW, MVAr, p.u.
  SampleSource source = SampleSource::bbps;
};

struct CostRow {
  CouplingPoint x;
  double cost = 0.0;  // currency/h
};

/// One line of the sampling log.
struct SampleEvent {
  std::string stage;
  int index = 0;
  std::string outcome;
  double value = 0.0;
};

struct BoxResult {
  BoundingBox box;
  /// Extremes in order min p, max p, min q, max q, min v, max v.
  std::array<NlpSolution, 6> solutions;
};

namespace detail {

inline Pqv pu(const CouplingPoint& x, double base) { return {x.p / base, x.q / base, x.v}; }
inline CouplingPoint phys(const Pqv& x, double base) { return {x[0] * base, x[1] * base, x[2]}; }

/// Half-widths of the (inflated) box in per-unit.
inline Pqv half_widths(const BoundingBox& box, double base) {
  const auto b = inflate_degenerate(box);
  return {0.5 * (b.hi.p - b.lo.p) / base, 0.5 * (b.hi.q - b.lo.q) / base, 0.5 * (b.hi.v - b.lo.v)};
}

inline NlpSolution solve_with_retry(OpfProblem& prob, const NlpOptions& opts) {
  NlpSolution sol = solve_nlp(prob.nlp, opts);
  if (sol.status == NlpStatus::optimal) return sol;
  NlpOptions o2 = opts;
  o2.max_iter = std::max(opts.max_iter, 300);
  o2.centering = 0.2;
  return solve_nlp(prob.nlp, o2);
}

}  // namespace detail

/// Six axis-extreme OPFs over the DS-with-PCC network.
inline BoxResult compute_bounding_box(const PccNetwork& ds, const NlpOptions& opts = {}) {
  BoxResult out;
  const double base = ds.network.base_mva();
  std::array<double, 6> ext{};
  for (int k = 0; k < 6; ++k) {
    auto prob = assemble_opf(ds, OpfObjective::extreme(k / 2, k % 2 == 1));
    auto sol = detail::solve_with_retry(prob, opts);
    if (sol.status != NlpStatus::optimal) {
      throw SamplingError(std::string("bounding-box solve ") + std::to_string(k) +
                          " failed (" + to_string(sol.status) + "): FOR is empty or unreachable");
    }
    const auto xj = coupling_point(prob.layout, sol.x);
    ext[k] = std::array<double, 3>{xj.p, xj.q, xj.v}[k / 2];
    out.solutions[k] = std::move(sol);
  }
  out.box.lo = {ext[0] * base, ext[2] * base, ext[4]};
  out.box.hi = {ext[1] * base, ext[3] * base, ext[5]};
  return out;
}

struct BoundaryResult {
  std::vector<BoundaryRow> rows;
  int attempts = 0;
  int failures = 0;
  bool complete = true;
  std::vector<SampleEvent> log;
};

/// True when the fixed-PCC problem at x is feasible within `slack_tol`.
inline bool fixed_pcc_feasible(const PccNetwork& ds, const CouplingPoint& x, double slack_tol,
                               const NlpOptions& opts = {}) {
  FixedPccOptions fo;
  fo.nlp = opts;
  fo.slack_tol = slack_tol;
  return solve_fixed_pcc(ds, x, fo).status == NlpStatus::optimal;
}

namespace detail {

inline constexpr double kInwardNudge = 1e-6;

// The fixed-PCC problem is degenerate exactly on the boundary, so a point
// that cannot be verified there is retried a relative 1e-6 along `inward`.
inline std::optional<CouplingPoint> verified_boundary_point(const PccNetwork& ds, const CouplingPoint& x,
                                                            const CouplingPoint& inward, double slack_tol,
                                                            const NlpOptions& opts) {
  if (fixed_pcc_feasible(ds, x, slack_tol, opts)) return x;
  const CouplingPoint y{x.p + kInwardNudge * inward.p, x.q + kInwardNudge * inward.q,
                        x.v + kInwardNudge * inward.v};
  if (fixed_pcc_feasible(ds, y, slack_tol, opts)) return y;
  return std::nullopt;
}

}  // namespace detail

/// Bounding-box projection sampling: facet targets projected onto the FOR
/// by a z-scored L2 projection. Failed or unverifiable projections are
/// replaced by fresh draws until n rows or 5n attempts.
inline BoundaryResult bbps(const PccNetwork& ds, const BoundingBox& box, int n,
                           std::uint64_t seed, const SamplingConfig& cfg = {},
                           const NlpOptions& opts = {}) {
  BoundaryResult out;
  if (n <= 0) return out;
  const double base = ds.network.base_mva();
  const Pqv scale = detail::half_widths(box, base);
  const int cap = 5 * n;
  int batch = 0;
  int want = n;
  while (static_cast<int>(out.rows.size()) < n && out.attempts < cap) {
    const int draw = std::min(want, cap - out.attempts);
    const auto targets = lhs_on_box_facets(draw, box, batch == 0 ? seed : derive_seed(seed, batch));
    ++batch;
    for (const auto& t : targets) {
      if (static_cast<int>(out.rows.size()) >= n) break;
      const int idx = out.attempts++;
      auto prob = assemble_opf(ds, OpfObjective::projection(detail::pu(t.x, base), scale));
      auto sol = detail::solve_with_retry(prob, opts);
      if (sol.status != NlpStatus::optimal) {
        ++out.failures;
        out.log.push_back({"bbps", idx, std::string("solve_") + to_string(sol.status), 0.0});
        continue;
      }
      const auto xp = to_physical(coupling_point(prob.layout, sol.x), base);
      const auto kept = detail::verified_boundary_point(
          ds, xp, {xp.p - t.x.p, xp.q - t.x.q, xp.v - t.x.v}, cfg.slack_tol, opts);
      if (!kept) {
        ++out.failures;
        out.log.push_back({"bbps", idx, "verify_failed", 0.0});
        continue;
      }
      out.rows.push_back({*kept, SampleSource::bbps});
      out.log.push_back({"bbps", idx, "ok", sol.objective});
    }
    want = n - static_cast<int>(out.rows.size());
  }
  out.complete = static_cast<int>(out.rows.size()) == n;
  return out;
}

struct FdsResult {
  std::vector<BoundaryRow> rows;
  /// t* per kept row and its scaled direction (per-unit).
  std::vector<double> t_star;
  std::vector<Pqv> direction;
  CouplingPoint center;  // MW, MVAr, p.u.
  bool center_projected = false;
  int failures = 0;
  std::vector<SampleEvent> log;
};

/// Fibonacci direction sampling: rays from the box center along lattice
/// directions scaled by the box half-widths; the largest feasible step
/// along each ray gives a boundary point.
inline FdsResult fds(const PccNetwork& ds, const BoundingBox& box, int n,
                     const SamplingConfig& cfg = {}, const NlpOptions& opts = {}) {
  FdsResult out;
  if (n <= 0) return out;
  const double base = ds.network.base_mva();
  const Pqv scale = detail::half_widths(box, base);
  Pqv xc = detail::pu(box.center(), base);
  if (!fixed_pcc_feasible(ds, box.center(), cfg.slack_tol, opts)) {
    auto prob = assemble_opf(ds, OpfObjective::projection(xc, scale));
    auto sol = detail::solve_with_retry(prob, opts);
    if (sol.status != NlpStatus::optimal) {
      throw SamplingError("box center infeasible and its projection failed");
    }
    const auto c = coupling_point(prob.layout, sol.x);
    xc = {c.p, c.q, c.v};
    out.center_projected = true;
  }
  out.center = detail::phys(xc, base);
  const auto dirs = fibonacci_directions(n);
  for (int k = 0; k < n; ++k) {
    const Pqv d{dirs[k][0] * scale[0], dirs[k][1] * scale[1], dirs[k][2] * scale[2]};
    auto prob = assemble_opf(ds, OpfObjective::ray(xc, d));
    auto sol = detail::solve_with_retry(prob, opts);
    if (sol.status != NlpStatus::optimal) {
      ++out.failures;
      out.log.push_back({"fds", k, std::string("solve_") + to_string(sol.status), 0.0});
      continue;
    }
    double t = std::max(0.0, sol.x[prob.layout.t]);
    const Pqv xs{xc[0] + d[0] * t, xc[1] + d[1] * t, xc[2] + d[2] * t};
    const auto xp = detail::phys(xs, base);
    const auto back = detail::phys({-d[0] * t, -d[1] * t, -d[2] * t}, base);
    const auto kept = detail::verified_boundary_point(ds, xp, back, cfg.slack_tol, opts);
    if (!kept) {
      ++out.failures;
      out.log.push_back({"fds", k, "verify_failed", t});
      continue;
    }
    if (*kept != xp) t *= 1.0 - detail::kInwardNudge;
    out.rows.push_back({*kept, SampleSource::fds});
    out.t_star.push_back(t);
    out.direction.push_back(d);
    out.log.push_back({"fds", k, "ok", t});
  }
  return out;
}

struct CostResult {
  std::vector<CostRow> rows;
  int attempts = 0;
  std::vector<SampleEvent> log;
};

/// Interior cost samples: LHS batches over the box, kept where the fixed-PCC
/// problem is feasible, labeled with the optimal DG cost.
inline CostResult sample_cost_interior(const PccNetwork& ds, const BoundingBox& box_in, int n,
                                       std::uint64_t seed, const SamplingConfig& cfg = {},
                                       const NlpOptions& opts = {}) {
  CostResult out;
  if (n <= 0) return out;
  const BoundingBox box = inflate_degenerate(box_in);
  const auto lo = box.min(), hi = box.max();
  const int cap = 50 * n;
  const int batch = std::max(1, cfg.batch);
  FixedPccOptions fo;
  fo.nlp = opts;
  fo.slack_tol = cfg.slack_tol;
  for (int b = 0; static_cast<int>(out.rows.size()) < n; ++b) {
    const auto draws = lhs(batch, {lo[0], lo[1], lo[2]}, {hi[0], hi[1], hi[2]}, derive_seed(seed, b));
    for (int i = 0; i < batch && static_cast<int>(out.rows.size()) < n; ++i) {
      if (out.attempts >= cap) {
        throw SamplingError("cost sampling kept " + std::to_string(out.rows.size()) + " of " +
                            std::to_string(n) + " rows after " + std::to_string(out.attempts) +
                            " attempts (acceptance rate " +
                            std::to_string(static_cast<double>(out.rows.size()) / out.attempts) +
                            "): FOR volume too small relative to the box");
      }
      const int idx = out.attempts++;
      const CouplingPoint x{draws(i, 0), draws(i, 1), draws(i, 2)};
      const auto sol = solve_fixed_pcc(ds, x, fo);
      if (sol.status == NlpStatus::optimal) {
        out.rows.push_back({x, sol.objective});
        out.log.push_back({"cost", idx, "ok", sol.objective});
      } else {
        out.log.push_back({"cost", idx, to_string(sol.status), sol.elastic_slack.value_or(0.0)});
      }
    }
  }
  return out;
}

}  // namespace flexfor
