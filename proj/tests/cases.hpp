#pragma once

// Small hand-built networks shared by the test binaries.

#include "flexfor/netmodel.hpp"

namespace testcase {

using namespace flexfor;

inline Network two_bus(double p_load, double q_load = 0.0, double r = 0.0, double x = 0.1) {
  NetworkData d;
  d.name = "two";
  d.buses = {Bus{1, BusKind::slack}, Bus{2, BusKind::pq}};
  d.branches = {Branch{1, 1, 2, r, x}};
  d.loads = {Load{2, p_load, q_load}};
  return Network(d);
}

inline Network two_bus_opf() {
  NetworkData d;
  d.name = "two";
  Bus b1{1, BusKind::slack};
  Bus b2{2, BusKind::pq};
  for (Bus* b : {&b1, &b2}) {
    b->v_min = 0.95;
    b->v_max = 1.05;
  }
  d.buses = {b1, b2};
  d.branches = {Branch{1, 1, 2, 0.02, 0.06}};
  Generator g1;
  g1.bus = 1;
  g1.p_max = 2.0;
  g1.q_min = -1.0;
  g1.q_max = 1.0;
  g1.cost = {10.0, 20.0, 1.0};
  Generator g2;
  g2.bus = 2;
  g2.p_max = 0.5;
  g2.q_min = -0.5;
  g2.q_max = 0.5;
  g2.cost = {40.0, 10.0, 0.0};
  d.generators = {g1, g2};
  d.loads = {Load{2, 0.8, 0.3}};
  return Network(d);
}

}  // namespace testcase
