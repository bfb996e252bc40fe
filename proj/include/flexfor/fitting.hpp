#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "flexfor/error.hpp"
#include "flexfor/netmodel.hpp"

namespace flexfor {

using Exponents = std::array<int, 3>;

/// Graded-lexicographic order of the monomials p^α q^β v^θ with
/// α + β + θ <= degree: ascending total degree, then ascending (α, β, θ).
/// For degree 1 the order is (1, v, q, p).
class MonomialIndexMap {
 public:
  MonomialIndexMap() : MonomialIndexMap(0) {}

  explicit MonomialIndexMap(int degree) : degree_(degree) {
    if (degree < 0) throw PreconditionError("monomial degree must be non-negative");
    for (int total = 0; total <= degree; ++total) {
      for (int a = 0; a <= total; ++a) {
        for (int b = 0; b <= total - a; ++b) {
          const Exponents e{a, b, total - a - b};
          index_.emplace(e, static_cast<int>(terms_.size()));
          terms_.push_back(e);
        }
      }
    }
  }

  int degree() const noexcept { return degree_; }
  int size() const noexcept { return static_cast<int>(terms_.size()); }
  const Exponents& operator[](int s) const { return terms_.at(s); }
  const std::vector<Exponents>& terms() const noexcept { return terms_; }

  /// Index of (α, β, θ), or -1 when the total degree exceeds degree().
  int index_of(const Exponents& e) const {
    auto it = index_.find(e);
    return it == index_.end() ? -1 : it->second;
  }

  /// C(d + 3, 3).
  static long long count(int degree) {
    const long long d = degree;
    return (d + 1) * (d + 2) * (d + 3) / 6;
  }

 private:
  int degree_;
  std::vector<Exponents> terms_;
  std::map<Exponents, int> index_;
};

/// Rows are points (already normalized), columns follow the map.
inline Eigen::MatrixXd monomial_matrix(const Eigen::MatrixXd& points, const MonomialIndexMap& map) {
  if (points.cols() != 3) throw PreconditionError("points must have 3 columns");
  const int d = map.degree();
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd out(n, map.size());
  std::vector<std::array<double, 3>> pw(d + 1);
  for (Eigen::Index l = 0; l < n; ++l) {
    for (int a = 0; a < 3; ++a) {
      pw[0][a] = 1.0;
      for (int k = 1; k <= d; ++k) pw[k][a] = pw[k - 1][a] * points(l, a);
    }
    for (int s = 0; s < map.size(); ++s) {
      const auto& e = map[s];
      out(l, s) = pw[e[0]][0] * pw[e[1]][1] * pw[e[2]][2];
    }
  }
  return out;
}

/// Per-axis z-score transform z = (x - mean) / std.
struct Normalization {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> std{1.0, 1.0, 1.0};

  std::array<double, 3> apply(const std::array<double, 3>& x) const {
    return {(x[0] - mean[0]) / std[0], (x[1] - mean[1]) / std[1], (x[2] - mean[2]) / std[2]};
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& pts) const {
    Eigen::MatrixXd z(pts.rows(), 3);
    for (Eigen::Index l = 0; l < pts.rows(); ++l) {
      for (int a = 0; a < 3; ++a) z(l, a) = (pts(l, a) - mean[a]) / std[a];
    }
    return z;
  }

  /// Sample mean and standard deviation per column; zero spreads become 1.
  static Normalization from_data(const Eigen::MatrixXd& pts) {
    Normalization nz;
    const double n = static_cast<double>(pts.rows());
    for (int a = 0; a < 3; ++a) {
      const double m = pts.col(a).mean();
      double var = 0.0;
      for (Eigen::Index l = 0; l < pts.rows(); ++l) var += (pts(l, a) - m) * (pts(l, a) - m);
      const double sd = pts.rows() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
      nz.mean[a] = m;
      nz.std[a] = sd > 0.0 ? sd : 1.0;
    }
    return nz;
  }

  bool operator==(const Normalization&) const = default;
};

/// Axis-aligned box in (MW, MVAr, p.u.).
struct BoundingBox {
  CouplingPoint lo;
  CouplingPoint hi;

  std::array<double, 3> min() const { return {lo.p, lo.q, lo.v}; }
  std::array<double, 3> max() const { return {hi.p, hi.q, hi.v}; }
  CouplingPoint center() const {
    return {0.5 * (lo.p + hi.p), 0.5 * (lo.q + hi.q), 0.5 * (lo.v + hi.v)};
  }
  bool contains(const CouplingPoint& x, double tol = 0.0) const {
    return x.p >= lo.p - tol && x.p <= hi.p + tol && x.q >= lo.q - tol && x.q <= hi.q + tol &&
           x.v >= lo.v - tol && x.v <= hi.v + tol;
  }

  bool operator==(const BoundingBox&) const = default;
};

/// Value, gradient and Hessian of a polynomial model.
struct PolyEval {
  double value = 0.0;
  std::array<double, 3> gradient{0.0, 0.0, 0.0};
  std::array<std::array<double, 3>, 3> hessian{};
  /// Point lies outside the training domain enlarged by 20% per side.
  bool extrapolated = false;
};

namespace detail {

/// Evaluates Σ c_s z^e_s with derivatives in z.
inline PolyEval eval_polynomial(const MonomialIndexMap& map, const Eigen::VectorXd& coeffs,
                                const std::array<double, 3>& z, bool with_hessian) {
  const int d = map.degree();
  std::vector<std::array<double, 3>> pw(d + 1);
  for (int a = 0; a < 3; ++a) {
    pw[0][a] = 1.0;
    for (int k = 1; k <= d; ++k) pw[k][a] = pw[k - 1][a] * z[a];
  }
  auto power = [&](int k, int a) { return k < 0 ? 0.0 : pw[k][a]; };
  PolyEval out;
  for (int s = 0; s < map.size(); ++s) {
    const double c = coeffs[s];
    if (c == 0.0) continue;
    const auto& e = map[s];
    const std::array<double, 3> f{pw[e[0]][0], pw[e[1]][1], pw[e[2]][2]};
    const std::array<double, 3> df{e[0] * power(e[0] - 1, 0), e[1] * power(e[1] - 1, 1),
                                   e[2] * power(e[2] - 1, 2)};
    out.value += c * f[0] * f[1] * f[2];
    out.gradient[0] += c * df[0] * f[1] * f[2];
    out.gradient[1] += c * f[0] * df[1] * f[2];
    out.gradient[2] += c * f[0] * f[1] * df[2];
    if (!with_hessian) continue;
    const std::array<double, 3> ddf{e[0] * (e[0] - 1) * power(e[0] - 2, 0),
                                    e[1] * (e[1] - 1) * power(e[1] - 2, 1),
                                    e[2] * (e[2] - 1) * power(e[2] - 2, 2)};
    out.hessian[0][0] += c * ddf[0] * f[1] * f[2];
    out.hessian[1][1] += c * f[0] * ddf[1] * f[2];
    out.hessian[2][2] += c * f[0] * f[1] * ddf[2];
    out.hessian[0][1] += c * df[0] * df[1] * f[2];
    out.hessian[0][2] += c * df[0] * f[1] * df[2];
    out.hessian[1][2] += c * f[0] * df[1] * df[2];
  }
  out.hessian[1][0] = out.hessian[0][1];
  out.hessian[2][0] = out.hessian[0][2];
  out.hessian[2][1] = out.hessian[1][2];
  return out;
}

/// Maps z-space derivatives to physical coordinates.
inline void chain_rule(PolyEval& e, const Normalization& nz) {
  for (int a = 0; a < 3; ++a) {
    e.gradient[a] /= nz.std[a];
    for (int b = 0; b < 3; ++b) e.hessian[a][b] /= nz.std[a] * nz.std[b];
  }
}

inline bool outside(const BoundingBox& dom, const std::array<double, 3>& x) {
  const auto lo = dom.min(), hi = dom.max();
  for (int a = 0; a < 3; ++a) {
    const double margin = 0.2 * (hi[a] - lo[a]);
    if (x[a] < lo[a] - margin || x[a] > hi[a] + margin) return true;
  }
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Least squares

struct LeastSquaresResult {
  Eigen::VectorXd x;
  int rank = 0;
  double residual = 0.0;  // ‖A x - b‖₂
  double sigma_max = 0.0;
  double sigma_min = 0.0;
};

/// Minimum-norm least-squares solution through the SVD pseudoinverse;
/// singular values below cutoff·σ_max are treated as zero.
inline LeastSquaresResult pseudoinverse_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                              double cutoff = 1e-12) {
  if (a.rows() != b.size()) throw PreconditionError("least-squares size mismatch");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  LeastSquaresResult out;
  out.sigma_max = s.size() ? s[0] : 0.0;
  const double thresh = cutoff * out.sigma_max;
  Eigen::VectorXd ub = svd.matrixU().transpose() * b;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > thresh && s[i] > 0.0) {
      w[i] = ub[i] / s[i];
      ++out.rank;
    }
  }
  out.sigma_min = s.size() ? s[s.size() - 1] : 0.0;
  out.x = svd.matrixV() * w;
  out.residual = (a * out.x - b).norm();
  return out;
}

// ---------------------------------------------------------------------------
// FOR model

struct VolumetricFitConfig {
  int degree = 8;
  double gamma_in = 0.999;
  std::vector<double> gamma_out{1.005, 1.07};
  double c_in = -0.15;
  double c_bnd = 0.0;
  std::vector<double> c_out{0.1, 0.2};

  void validate() const {
    if (degree < 1) throw PreconditionError("fit degree must be at least 1");
    if (!(gamma_in > 0.0 && gamma_in < 1.0)) throw PreconditionError("gamma_in must lie in (0, 1)");
    if (gamma_out.empty() || gamma_out.size() != c_out.size()) {
      throw PreconditionError("gamma_out and c_out must be non-empty and of equal length");
    }
    for (double g : gamma_out) {
      if (!(g > 1.0)) throw PreconditionError("gamma_out entries must exceed 1");
    }
    if (!(c_in < 0.0)) throw PreconditionError("c_in must be negative");
    for (double c : c_out) {
      if (!(c > 0.0)) throw PreconditionError("c_out entries must be positive");
    }
  }

  bool operator==(const VolumetricFitConfig&) const = default;
};

struct VolumetricSets {
  Eigen::MatrixXd inner;
  std::vector<Eigen::MatrixXd> outer;
};

/// x_new = c + γ (x - c) around the centroid c of the rows.
inline Eigen::MatrixXd scale_about_centroid(const Eigen::MatrixXd& pts, double gamma,
                                            const Eigen::RowVectorXd& c) {
  Eigen::MatrixXd out = pts;
  for (Eigen::Index l = 0; l < pts.rows(); ++l) out.row(l) = c + gamma * (pts.row(l) - c);
  return out;
}

inline VolumetricSets generate_volumetric_sets(const Eigen::MatrixXd& boundary,
                                               const VolumetricFitConfig& cfg) {
  if (boundary.rows() < 1 || boundary.cols() != 3) {
    throw PreconditionError("boundary data must be a non-empty n x 3 matrix");
  }
  const Eigen::RowVectorXd c = boundary.colwise().mean();
  VolumetricSets out;
  out.inner = scale_about_centroid(boundary, cfg.gamma_in, c);
  for (double g : cfg.gamma_out) out.outer.push_back(scale_about_centroid(boundary, g, c));
  return out;
}

/// Implicit polynomial FOR(x) = Σ a_s σ_s(z(x)); negative inside.
struct ImplicitPolynomial {
  MonomialIndexMap map;
  Eigen::VectorXd coeffs;
  Normalization normalization;
  /// Training domain (bounding box of the boundary data).
  BoundingBox domain;

  PolyEval evaluate(const CouplingPoint& x, bool with_hessian = false) const {
    const std::array<double, 3> xp{x.p, x.q, x.v};
    PolyEval e = detail::eval_polynomial(map, coeffs, normalization.apply(xp), with_hessian);
    detail::chain_rule(e, normalization);
    e.extrapolated = detail::outside(domain, xp);
    return e;
  }

  bool operator==(const ImplicitPolynomial& o) const {
    return map.degree() == o.map.degree() && coeffs == o.coeffs &&
           normalization == o.normalization && domain == o.domain;
  }
};

/// FOR value with gradient in (MW, MVAr, p.u.).
inline PolyEval eval_for(const ImplicitPolynomial& model, const CouplingPoint& x) {
  return model.evaluate(x);
}

struct ForFitResult {
  ImplicitPolynomial model;
  int rank = 0;
  int rows = 0;
  bool under_determined = false;
  double residual = 0.0;
};

/// Composite least-squares fit of the implicit polynomial to boundary data
/// in (MW, MVAr, p.u.) with shrunk/grown copies carrying signed targets.
inline ForFitResult fit_for(const Eigen::MatrixXd& boundary, const VolumetricFitConfig& cfg) {
  cfg.validate();
  const auto sets = generate_volumetric_sets(boundary, cfg);
  ForFitResult out;
  out.model.map = MonomialIndexMap(cfg.degree);
  out.model.normalization = Normalization::from_data(boundary);
  const Eigen::VectorXd lo = boundary.colwise().minCoeff();
  const Eigen::VectorXd hi = boundary.colwise().maxCoeff();
  out.model.domain = {{lo[0], lo[1], lo[2]}, {hi[0], hi[1], hi[2]}};

  const Eigen::Index n = boundary.rows();
  const Eigen::Index blocks = 2 + static_cast<Eigen::Index>(sets.outer.size());
  const int k = out.model.map.size();
  Eigen::MatrixXd m(n * blocks, k);
  Eigen::VectorXd b(n * blocks);
  const auto& nz = out.model.normalization;
  m.middleRows(0, n) = monomial_matrix(nz.apply(sets.inner), out.model.map);
  b.segment(0, n).setConstant(cfg.c_in);
  m.middleRows(n, n) = monomial_matrix(nz.apply(boundary), out.model.map);
  b.segment(n, n).setConstant(cfg.c_bnd);
  for (std::size_t s = 0; s < sets.outer.size(); ++s) {
    const Eigen::Index r0 = n * (2 + static_cast<Eigen::Index>(s));
    m.middleRows(r0, n) = monomial_matrix(nz.apply(sets.outer[s]), out.model.map);
    b.segment(r0, n).setConstant(cfg.c_out[s]);
  }
  const auto ls = pseudoinverse_solve(m, b);
  out.rows = static_cast<int>(m.rows());
  out.rank = ls.rank;
  out.residual = ls.residual;
  out.under_determined = m.rows() < k;
  if (!out.under_determined && ls.rank < k) {
    throw FitError("FOR fit is rank deficient (rank " + std::to_string(ls.rank) + " of " +
                   std::to_string(k) +
                   "): boundary points are degenerate, e.g. coplanar or on a low-degree surface");
  }
  out.model.coeffs = ls.x;
  return out;
}

// ---------------------------------------------------------------------------
// Cost model

/// Trivariate quadratic C(x) = offset + scale·Σ w_s σ_s(z(x)).
struct CostModel {
  MonomialIndexMap map{2};
  Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(10);
  Normalization normalization;
  double offset = 0.0;
  double scale = 1.0;
  BoundingBox domain;

  PolyEval evaluate(const CouplingPoint& x, bool with_hessian = false) const {
    const std::array<double, 3> xp{x.p, x.q, x.v};
    PolyEval e = detail::eval_polynomial(map, coeffs, normalization.apply(xp), with_hessian);
    detail::chain_rule(e, normalization);
    e.value = offset + scale * e.value;
    for (int a = 0; a < 3; ++a) {
      e.gradient[a] *= scale;
      for (int b = 0; b < 3; ++b) e.hessian[a][b] *= scale;
    }
    e.extrapolated = detail::outside(domain, xp);
    return e;
  }

  /// Same model for a per-unit point on base `base_mva`.
  PolyEval evaluate_per_unit(const CouplingPoint& x_pu, double base_mva,
                             bool with_hessian = false) const {
    PolyEval e = evaluate(to_physical_point(x_pu, base_mva), with_hessian);
    const std::array<double, 3> f{base_mva, base_mva, 1.0};
    for (int a = 0; a < 3; ++a) {
      e.gradient[a] *= f[a];
      for (int b = 0; b < 3; ++b) e.hessian[a][b] *= f[a] * f[b];
    }
    return e;
  }

  bool operator==(const CostModel& o) const {
    return coeffs == o.coeffs && normalization == o.normalization && offset == o.offset &&
           scale == o.scale && domain == o.domain;
  }

 private:
  static CouplingPoint to_physical_point(const CouplingPoint& x, double base) {
    return {x.p * base, x.q * base, x.v};
  }
};

inline PolyEval eval_cost(const CostModel& model, const CouplingPoint& x) {
  return model.evaluate(x);
}

struct CostFitResult {
  CostModel model;
  int rank = 0;
  bool rank_deficient = false;
  double rmse = 0.0;
  double mae = 0.0;
};

/// Least-squares quadratic fit of costs y over features in (MW, MVAr, p.u.).
/// A rank-deficient system is flagged and its minimum-norm solution kept.
/// `normalization` defaults to the z-score of the features; pass the FOR
/// model's transform to make both models of a DS share it.
inline CostFitResult fit_cost(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                              const std::optional<Normalization>& normalization = std::nullopt) {
  if (features.cols() != 3) throw PreconditionError("cost features must have 3 columns");
  if (features.rows() != y.size()) throw PreconditionError("cost features and targets differ in length");
  if (features.rows() < 10) throw PreconditionError("cost fit needs at least 10 rows");
  CostFitResult out;
  out.model.normalization = normalization ? *normalization : Normalization::from_data(features);
  const Eigen::VectorXd lo = features.colwise().minCoeff();
  const Eigen::VectorXd hi = features.colwise().maxCoeff();
  out.model.domain = {{lo[0], lo[1], lo[2]}, {hi[0], hi[1], hi[2]}};
  const Eigen::MatrixXd m =
      monomial_matrix(out.model.normalization.apply(features), out.model.map);
  const auto ls = pseudoinverse_solve(m, y);
  out.model.coeffs = ls.x;
  out.rank = ls.rank;
  out.rank_deficient = ls.rank < out.model.map.size();
  const Eigen::VectorXd r = m * ls.x - y;
  out.rmse = std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
  out.mae = r.cwiseAbs().mean();
  return out;
}

}  // namespace flexfor
