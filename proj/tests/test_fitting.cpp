#include <gtest/gtest.h>

#include <set>

#include "flexfor/fitting.hpp"
#include "flexfor/sampling.hpp"

using namespace flexfor;

namespace {

// Points on the unit sphere from a Fibonacci lattice.
Eigen::MatrixXd sphere(int n, double radius = 1.0) {
  const auto d = fibonacci_directions(n);
  Eigen::MatrixXd x(n, 3);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) x(i, a) = radius * d[i][a];
  }
  return x;
}

// A bumpy closed surface (not a low-degree algebraic one) in physical-looking units.
Eigen::MatrixXd blob(int n) {
  Eigen::MatrixXd x = sphere(n);
  for (int i = 0; i < n; ++i) {
    const double r = 1.0 + 0.15 * x(i, 0) * x(i, 1) * x(i, 2) + 0.1 * std::sin(3.0 * x(i, 0));
    const double u = r * x(i, 0), w = r * x(i, 1), z = r * x(i, 2);
    x(i, 0) = 2.0 + 1.5 * u;
    x(i, 1) = -0.5 + 0.8 * w + 0.1 * u;
    x(i, 2) = 1.0 + 0.03 * z;
  }
  return x;
}

// Root of t -> model(c + t·u) on (lo, hi) by bisection.
double radius_along(const ImplicitPolynomial& m, const Eigen::Vector3d& u, double lo, double hi) {
  auto f = [&](double t) { return m.evaluate({t * u[0], t * u[1], t * u[2]}).value; };
  for (int k = 0; k < 100; ++k) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(Monomials, BijectionUpToDegree12) {
  for (int d = 0; d <= 12; ++d) {
    const MonomialIndexMap map(d);
    ASSERT_EQ(map.size(), MonomialIndexMap::count(d));
    std::set<std::array<int, 3>> seen;
    int prev_total = 0;
    for (int s = 0; s < map.size(); ++s) {
      const auto& e = map[s];
      const int total = e[0] + e[1] + e[2];
      EXPECT_LE(total, d);
      EXPECT_GE(total, prev_total);
      prev_total = total;
      EXPECT_TRUE(seen.insert({e[0], e[1], e[2]}).second);
      EXPECT_EQ(map.index_of(e), s);
    }
    // Every exponent triple of total degree <= d is hit.
    for (int a = 0; a <= d; ++a) {
      for (int b = 0; a + b <= d; ++b) {
        for (int c = 0; a + b + c <= d; ++c) EXPECT_GE(map.index_of({a, b, c}), 0);
      }
    }
    EXPECT_EQ(map.index_of({d + 1, 0, 0}), -1);
  }
  EXPECT_EQ(MonomialIndexMap(8).size(), 165);
  EXPECT_EQ(MonomialIndexMap(2).size(), 10);
}

TEST(Monomials, DegreeOneRow) {
  Eigen::MatrixXd x(1, 3);
  x << 2, 3, 4;
  const auto row = monomial_matrix(x, MonomialIndexMap(1));
  ASSERT_EQ(row.cols(), 4);
  EXPECT_EQ(row(0, 0), 1.0);
  EXPECT_EQ(row(0, 1), 4.0);
  EXPECT_EQ(row(0, 2), 3.0);
  EXPECT_EQ(row(0, 3), 2.0);
}

TEST(LeastSquares, PseudoinverseMatchesNormalEquations) {
  Rng rng(17);
  Eigen::MatrixXd a(60, 10);
  Eigen::VectorXd b(60);
  for (int i = 0; i < 60; ++i) {
    for (int j = 0; j < 10; ++j) a(i, j) = rng.uniform() - 0.5;
    b[i] = rng.uniform();
  }
  const auto ls = pseudoinverse_solve(a, b);
  const Eigen::VectorXd ne = (a.transpose() * a).ldlt().solve(a.transpose() * b);
  EXPECT_LE((ls.x - ne).lpNorm<Eigen::Infinity>(), 1e-8);
  EXPECT_EQ(ls.rank, 10);
  EXPECT_NEAR(ls.residual, (a * ne - b).norm(), 1e-10);
}

TEST(LeastSquares, RankDeficientGivesMinimumNorm) {
  Eigen::MatrixXd a(3, 2);
  a << 1, 1, 2, 2, 3, 3;
  Eigen::Vector3d b(1, 2, 3);
  const auto ls = pseudoinverse_solve(a, b);
  EXPECT_EQ(ls.rank, 1);
  EXPECT_NEAR(ls.x[0], 0.5, 1e-12);
  EXPECT_NEAR(ls.x[1], 0.5, 1e-12);
}

TEST(ForFit, SphereDegreeTwo) {
  VolumetricFitConfig cfg;
  cfg.degree = 2;
  cfg.gamma_in = 0.9;
  cfg.c_in = -0.1;
  cfg.gamma_out = {1.1};
  cfg.c_out = {0.1};
  const auto fit = fit_for(sphere(400), cfg);
  EXPECT_EQ(fit.model.coeffs.size(), 10);
  const auto probe = fibonacci_directions(257);
  double err = 0.0;
  for (const auto& d : probe) {
    err += std::abs(radius_along(fit.model, {d[0], d[1], d[2]}, 0.5, 1.5) - 1.0);
  }
  EXPECT_LE(err / probe.size(), 0.02);
  EXPECT_LT(fit.model.evaluate({0, 0, 0}).value, 0.0);
  EXPECT_GT(fit.model.evaluate({1.3, 0, 0}).value, 0.0);
}

TEST(ForFit, GradientsAndHessianMatchFiniteDifferences) {
  const auto fit = fit_for(blob(500), VolumetricFitConfig{});
  const auto& m = fit.model;
  ASSERT_EQ(m.coeffs.size(), 165);
  const std::array<CouplingPoint, 3> probes{CouplingPoint{2.1, -0.4, 1.005}, CouplingPoint{3.0, 0.0, 0.99},
                                            CouplingPoint{1.2, -0.9, 1.02}};
  const std::array<double, 3> h{1e-5, 1e-5, 1e-7};
  for (const auto& x : probes) {
    const auto e = m.evaluate(x, true);
    for (int a = 0; a < 3; ++a) {
      auto shifted = [&](double s) {
        std::array<double, 3> y{x.p, x.q, x.v};
        y[a] += s;
        return m.evaluate({y[0], y[1], y[2]}, true);
      };
      const auto ep = shifted(h[a]), em = shifted(-h[a]);
      const double fd = (ep.value - em.value) / (2 * h[a]);
      EXPECT_LE(std::abs(fd - e.gradient[a]), 1e-4 * std::max(1.0, std::abs(e.gradient[a])));
      for (int b = 0; b < 3; ++b) {
        const double fd2 = (ep.gradient[b] - em.gradient[b]) / (2 * h[a]);
        EXPECT_LE(std::abs(fd2 - e.hessian[a][b]), 1e-4 * std::max(1.0, std::abs(e.hessian[a][b])));
      }
    }
  }
}

TEST(ForFit, DuplicatingRowsLeavesTheModelUnchanged) {
  VolumetricFitConfig cfg;
  cfg.degree = 4;
  const Eigen::MatrixXd x = blob(120);
  Eigen::MatrixXd twice(240, 3);
  twice << x, x;
  const auto a = fit_for(x, cfg).model;
  const auto b = fit_for(twice, cfg).model;
  for (const auto& p : {CouplingPoint{2.0, -0.5, 1.0}, CouplingPoint{3.2, 0.1, 1.02}}) {
    EXPECT_NEAR(a.evaluate(p).value, b.evaluate(p).value, 1e-8);
  }
}

TEST(ForFit, RejectsBadConfigAndDegenerateData) {
  VolumetricFitConfig cfg;
  cfg.gamma_in = 1.2;
  EXPECT_THROW(fit_for(sphere(50), cfg), PreconditionError);
  cfg = {};
  cfg.c_out = {0.1};
  EXPECT_THROW(fit_for(sphere(50), cfg), PreconditionError);
  // Coplanar points cannot pin a degree-2 surface.
  Eigen::MatrixXd flat = sphere(200);
  flat.col(2).setZero();
  cfg = {};
  cfg.degree = 2;
  EXPECT_THROW(fit_for(flat, cfg), FitError);
}

TEST(ForFit, UnderDeterminedIsFlagged) {
  const auto fit = fit_for(sphere(20), VolumetricFitConfig{});
  EXPECT_TRUE(fit.under_determined);
  EXPECT_EQ(fit.rows, 80);
}

TEST(CostFit, RecoversAQuadraticExactly) {
  const auto pts = lhs(40, {-3.0, -2.0, 0.95}, {1.0, 2.0, 1.05}, 8);
  auto truth = [](double p, double q, double v) {
    return 50.0 + 3.0 * p - 2.0 * q + 0.7 * p * p + 0.2 * p * q + 400.0 * (v - 1.0) * (v - 1.0) + q * v;
  };
  Eigen::VectorXd y(pts.rows());
  for (Eigen::Index i = 0; i < pts.rows(); ++i) y[i] = truth(pts(i, 0), pts(i, 1), pts(i, 2));
  const auto fit = fit_cost(pts, y);
  EXPECT_FALSE(fit.rank_deficient);
  EXPECT_LT(fit.rmse, 1e-9);
  const CouplingPoint x{0.3, -1.1, 1.01};
  const auto e = fit.model.evaluate(x, true);
  EXPECT_NEAR(e.value, truth(x.p, x.q, x.v), 1e-8);
  EXPECT_NEAR(e.gradient[0], 3.0 + 1.4 * x.p + 0.2 * x.q, 1e-7);
  EXPECT_NEAR(e.gradient[2], 800.0 * (x.v - 1.0) + x.q, 1e-5);
  EXPECT_NEAR(e.hessian[2][2], 800.0, 1e-4);
  // Per-unit evaluation rescales p/q derivatives.
  const auto pu = fit.model.evaluate_per_unit({x.p / 10.0, x.q / 10.0, x.v}, 10.0);
  EXPECT_NEAR(pu.value, e.value, 1e-9);
  EXPECT_NEAR(pu.gradient[0], 10.0 * e.gradient[0], 1e-7);
}

TEST(CostFit, SharedNormalizationGivesSameFunction) {
  const auto pts = lhs(30, {0.0, 0.0, 0.9}, {1.0, 1.0, 1.1}, 2);
  Eigen::VectorXd y(30);
  for (int i = 0; i < 30; ++i) y[i] = 1.0 + pts(i, 0) * pts(i, 0) + pts(i, 1);
  Normalization nz;
  nz.mean = {0.5, -1.0, 1.0};
  nz.std = {2.0, 3.0, 0.05};
  const auto a = fit_cost(pts, y);
  const auto b = fit_cost(pts, y, nz);
  EXPECT_EQ(b.model.normalization, nz);
  EXPECT_NEAR(a.model.evaluate({0.2, 0.3, 1.0}).value, b.model.evaluate({0.2, 0.3, 1.0}).value, 1e-9);
  EXPECT_THROW(fit_cost(pts.topRows(5), y.head(5)), PreconditionError);
}

TEST(Extrapolation, FlaggedOutsideTrainingDomain) {
  const auto fit = fit_for(sphere(300), [] {
    VolumetricFitConfig c;
    c.degree = 2;
    return c;
  }());
  EXPECT_FALSE(fit.model.evaluate({0.5, 0.5, 0.0}).extrapolated);
  EXPECT_TRUE(fit.model.evaluate({1.5, 0.0, 0.0}).extrapolated);
}
