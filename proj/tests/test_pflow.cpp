#include <gtest/gtest.h>

#include <chrono>

#include "flexfor/caseio.hpp"
#include "flexfor/pflow.hpp"
#include "cases.hpp"
#include "oracles.hpp"

using namespace flexfor;

TEST(PowerFlow, TwoBusMatchesClosedForm) {
  for (double load : {0.05, 0.5, 2.0, 4.5}) {
    const auto st = solve_powerflow(testcase::two_bus(load));
    ASSERT_TRUE(st.converged);
    const auto [th, v] = oracle::two_bus_lossless(0.1, load);
    EXPECT_NEAR(st.v[1], v, 1e-9) << load;
    EXPECT_NEAR(st.theta[1], th, 1e-9) << load;
    EXPECT_LE(st.max_mismatch, 1e-8);
  }
  // Light load: v2 = cos(asin(2·0.1·0.1)/2).
  const auto st = solve_powerflow(testcase::two_bus(0.1));
  EXPECT_NEAR(st.v[1], 0.99995, 5e-6);
}

TEST(PowerFlow, ZeroLoadIsFlat) {
  const auto st = solve_powerflow(testcase::two_bus(0.0));
  EXPECT_TRUE(st.converged);
  EXPECT_EQ(st.iterations, 0);
  EXPECT_DOUBLE_EQ(st.v[1], 1.0);
  EXPECT_DOUBLE_EQ(st.theta[1], 0.0);
}

TEST(PowerFlow, Case9AgreesWithGaussSeidel) {
  const auto net = import_matpower(oracle::slurp(FLEXFOR_DATA_DIR "/case9.m"));
  const auto t0 = std::chrono::steady_clock::now();
  const auto st = solve_powerflow(net);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ASSERT_TRUE(st.converged);
  EXPECT_LE(st.max_mismatch, 1e-8);
  EXPECT_LT(secs, 1.0);
  const auto gs = oracle::gs_reference(net);
  ASSERT_TRUE(gs.converged);
  for (int i = 0; i < net.bus_count(); ++i) {
    EXPECT_NEAR(st.v[i], std::abs(gs.v[i]), 1e-6) << i;
    EXPECT_NEAR(st.theta[i], std::arg(gs.v[i]), 1e-6) << i;
  }
}

TEST(PowerFlow, LossBalance) {
  const auto net = import_matpower(oracle::slurp(FLEXFOR_DATA_DIR "/case9.m"));
  const auto st = solve_powerflow(net);
  const auto flows = branch_flows(net, st);
  double losses = 0.0;
  for (const auto& f : flows) losses += f.p_from + f.p_to;
  EXPECT_NEAR(st.p_inj.sum(), losses, 1e-10);
  EXPECT_GT(losses, 0.0);
  // Branch flows sum to the nodal injections.
  Eigen::VectorXd p = Eigen::VectorXd::Zero(net.bus_count());
  for (std::size_t k = 0; k < flows.size(); ++k) {
    p[net.index_of(net.branches()[k].from_bus)] += flows[k].p_from;
    p[net.index_of(net.branches()[k].to_bus)] += flows[k].p_to;
  }
  EXPECT_LT((p - st.p_inj).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(PowerFlow, LossyTwoBusAgreesWithGaussSeidel) {
  const auto net = testcase::two_bus(0.8, 0.3, 0.02, 0.06);
  const auto st = solve_powerflow(net);
  const auto gs = oracle::gs_reference(net);
  ASSERT_TRUE(gs.converged);
  EXPECT_NEAR(st.v[1], std::abs(gs.v[1]), 1e-9);
  EXPECT_NEAR(st.theta[1], std::arg(gs.v[1]), 1e-9);
  const auto flows = branch_flows(net, st);
  EXPECT_NEAR(flows[0].p_to, -0.8, 1e-8);
  EXPECT_NEAR(flows[0].q_to, -0.3, 1e-8);
}

TEST(PowerFlow, OverrideSetpoints) {
  const auto net = testcase::two_bus(0.0);
  PfSetpoints sp;
  sp.extra_p = {0.0, -0.5};
  sp.bus_v = {1.02, 1.0};
  const auto st = solve_powerflow(net, sp);
  ASSERT_TRUE(st.converged);
  EXPECT_DOUBLE_EQ(st.v[0], 1.02);
  EXPECT_NEAR(st.p_inj[1], -0.5, 1e-8);
  EXPECT_NEAR(st.q_inj[1], 0.0, 1e-8);
  // Lossless line: v2 = v1·cos(delta) and 0.5 = v1·v2·sin(delta)/x.
  const double d = -st.theta[1];
  EXPECT_NEAR(st.v[1], 1.02 * std::cos(d), 1e-8);
  EXPECT_NEAR(1.02 * st.v[1] * std::sin(d) / 0.1, 0.5, 1e-8);
}

TEST(PowerFlow, BeyondNoseDoesNotConverge) {
  // Maximum transfer is 1/(2x) = 5 p.u.
  bool converged = true;
  try {
    converged = solve_powerflow(testcase::two_bus(6.0)).converged;
  } catch (const SingularJacobian&) {
    converged = false;
  }
  EXPECT_FALSE(converged);
}
