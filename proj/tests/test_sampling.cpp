#include <gtest/gtest.h>

#include <set>

#include "flexfor/caseio.hpp"
#include "flexfor/sampling.hpp"
#include "oracles.hpp"

using namespace flexfor;

namespace {

// Index of the stratum holding u in [lo, hi) split into n cells.
int stratum(double u, double lo, double hi, int n) {
  return std::min(n - 1, static_cast<int>(std::floor((u - lo) / (hi - lo) * n)));
}

PccNetwork radial_ds() {
  const auto doc = parse_case(oracle::slurp(FLEXFOR_DATA_DIR "/case33bw.json"));
  PccLink link;
  link.ts_bus = 6;
  link.interconnect = Branch{0, 0, 0, 0.005, 0.04};
  return attach_pcc(doc.network, link);
}

}  // namespace

TEST(Lhs, OnePointPerStratum) {
  for (int n : {4, 16, 100}) {
    const std::vector<double> lo{-2.0, 0.0, 0.9}, hi{3.0, 1.0, 1.1};
    const auto x = lhs(n, lo, hi, 7);
    ASSERT_EQ(x.rows(), n);
    for (int a = 0; a < 3; ++a) {
      std::set<int> cells;
      for (int i = 0; i < n; ++i) {
        EXPECT_GE(x(i, a), lo[a]);
        EXPECT_LE(x(i, a), hi[a]);
        cells.insert(stratum(x(i, a), lo[a], hi[a], n));
      }
      EXPECT_EQ(static_cast<int>(cells.size()), n) << "n=" << n << " axis " << a;
    }
  }
}

TEST(Lhs, SeedDeterminism) {
  const auto a = lhs(50, {0, 0, 0}, {1, 1, 1}, 123);
  const auto b = lhs(50, {0, 0, 0}, {1, 1, 1}, 123);
  const auto c = lhs(50, {0, 0, 0}, {1, 1, 1}, 124);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(5, 3), derive_seed(5, 3));
}

TEST(Lhs, RejectsBadInput) {
  EXPECT_THROW(lhs(0, {0}, {1}, 1), PreconditionError);
  EXPECT_THROW(lhs(3, {1}, {0}, 1), PreconditionError);
  EXPECT_THROW(lhs(3, {0, 0}, {1}, 1), PreconditionError);
}

TEST(FacetLhs, EqualSplitOnUnitCube) {
  const BoundingBox box{{0, 0, 0}, {1, 1, 1}};
  const auto pts = lhs_on_box_facets(600, box, 3);
  std::array<std::vector<std::array<double, 2>>, 6> per_facet;
  for (const auto& s : pts) {
    const std::array<double, 3> x{s.x.p, s.x.q, s.x.v};
    const int axis = s.facet / 2;
    EXPECT_EQ(x[axis], s.facet % 2 ? 1.0 : 0.0);
    std::array<double, 2> rest;
    int k = 0;
    for (int a = 0; a < 3; ++a) {
      if (a != axis) rest[k++] = x[a];
    }
    per_facet[s.facet].push_back(rest);
  }
  for (const auto& f : per_facet) {
    ASSERT_EQ(f.size(), 100u);
    for (int c = 0; c < 2; ++c) {
      std::set<int> cells;
      for (const auto& r : f) cells.insert(stratum(r[c], 0.0, 1.0, 100));
      EXPECT_EQ(cells.size(), 100u);
    }
  }
}

TEST(FacetLhs, UnevenCountsStayBalanced) {
  const BoundingBox box{{-5, -1, 0.95}, {5, 1, 1.05}};
  const auto pts = lhs_on_box_facets(15, box, 9);
  std::array<int, 6> count{};
  for (const auto& s : pts) ++count[s.facet];
  for (int c : count) EXPECT_TRUE(c == 2 || c == 3);
  EXPECT_EQ(pts.size(), 15u);
}

TEST(FacetLhs, DegenerateAxisIsInflated) {
  const BoundingBox flat{{0, 0, 1.0}, {1, 1, 1.0}};
  const auto wide = inflate_degenerate(flat);
  EXPECT_NEAR(wide.hi.v - wide.lo.v, kDegenerateInflation, 1e-15);
  EXPECT_NEAR(wide.center().v, 1.0, 1e-15);
  EXPECT_EQ(wide.lo.p, 0.0);
  const auto pts = lhs_on_box_facets(12, flat, 1);
  for (const auto& s : pts) EXPECT_TRUE(wide.contains(s.x, 1e-15));
}

TEST(Fibonacci, SmallCases) {
  auto d = fibonacci_directions(1);
  EXPECT_NEAR(d[0][0], 1.0, 1e-15);
  EXPECT_NEAR(d[0][1], 0.0, 1e-15);
  EXPECT_NEAR(d[0][2], 0.0, 1e-15);
  d = fibonacci_directions(2);
  EXPECT_NEAR(d[0][0], std::sqrt(3.0) / 2.0, 1e-12);
  EXPECT_NEAR(d[0][1], 0.0, 1e-15);
  EXPECT_NEAR(d[0][2], 0.5, 1e-15);
  EXPECT_NEAR(d[1][2], -0.5, 1e-15);
  EXPECT_THROW(fibonacci_directions(0), PreconditionError);
}

TEST(Fibonacci, UnitNormAndBalanced) {
  const auto d = fibonacci_directions(1000);
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& x : d) {
    const Eigen::Vector3d v(x[0], x[1], x[2]);
    EXPECT_NEAR(v.norm(), 1.0, 1e-12);
    mean += v / 1000.0;
  }
  EXPECT_LE(mean.norm(), 0.05);
  EXPECT_EQ(fibonacci_directions(1000), d);
}

TEST(Rng, UniformStaysOpen) {
  Rng r(0);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
  const auto p = Rng(4).permutation(20);
  std::vector<int> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sorted[i], i);
}

class SamplingOnDs : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ds_ = new PccNetwork(radial_ds());
    box_ = new BoxResult(compute_bounding_box(*ds_));
  }
  static void TearDownTestSuite() {
    delete box_;
    delete ds_;
  }
  static PccNetwork* ds_;
  static BoxResult* box_;
};

PccNetwork* SamplingOnDs::ds_ = nullptr;
BoxResult* SamplingOnDs::box_ = nullptr;

TEST_F(SamplingOnDs, BoxExtremesAreFeasible) {
  const auto& b = box_->box;
  EXPECT_LT(b.lo.p, b.hi.p);
  EXPECT_LT(b.lo.q, b.hi.q);
  EXPECT_LE(b.lo.v, b.hi.v);
  EXPECT_GE(b.lo.v, ds_->link.v_min - 1e-7);
  EXPECT_LE(b.hi.v, ds_->link.v_max + 1e-7);
  for (const auto& sol : box_->solutions) EXPECT_EQ(sol.status, NlpStatus::optimal);
}

TEST_F(SamplingOnDs, BbpsPointsAreFeasibleAndOnTheBoundary) {
  const auto r = bbps(*ds_, box_->box, 10, 11);
  EXPECT_TRUE(r.complete);
  ASSERT_EQ(r.rows.size(), 10u);
  for (const auto& row : r.rows) {
    EXPECT_TRUE(box_->box.contains(row.x, 1e-6));
    EXPECT_TRUE(fixed_pcc_feasible(*ds_, row.x, 1e-5));
    EXPECT_EQ(row.source, SampleSource::bbps);
  }
  const auto again = bbps(*ds_, box_->box, 10, 11);
  ASSERT_EQ(again.rows.size(), r.rows.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) EXPECT_EQ(again.rows[i].x, r.rows[i].x);
}

TEST_F(SamplingOnDs, FdsPointsAreMaximalAlongTheirRays) {
  const auto r = fds(*ds_, box_->box, 16);
  ASSERT_GE(r.rows.size(), 15u);
  const double base = ds_->network.base_mva();
  int infeasible_beyond = 0;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    EXPECT_TRUE(fixed_pcc_feasible(*ds_, r.rows[i].x, 1e-5));
    const double t = 1.01 * r.t_star[i];
    const CouplingPoint pushed{r.center.p + r.direction[i][0] * t * base,
                               r.center.q + r.direction[i][1] * t * base,
                               r.center.v + r.direction[i][2] * t};
    infeasible_beyond += !fixed_pcc_feasible(*ds_, pushed, 1e-6);
  }
  EXPECT_GE(infeasible_beyond, static_cast<int>(std::ceil(0.95 * r.rows.size())));
}

TEST_F(SamplingOnDs, CostSamplesAreFeasibleInteriorPoints) {
  const auto r = sample_cost_interior(*ds_, box_->box, 8, 5);
  ASSERT_EQ(r.rows.size(), 8u);
  EXPECT_GE(r.attempts, 8);
  for (const auto& row : r.rows) {
    EXPECT_TRUE(box_->box.contains(row.x, 1e-12));
    const auto sol = solve_fixed_pcc(*ds_, row.x);
    ASSERT_EQ(sol.status, NlpStatus::optimal);
    EXPECT_NEAR(sol.objective, row.cost, 1e-6 * (1.0 + std::abs(row.cost)));
  }
}
