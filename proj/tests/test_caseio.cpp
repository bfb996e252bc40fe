#include <gtest/gtest.h>

#include "flexfor/caseio.hpp"
#include "oracles.hpp"

using namespace flexfor;

namespace {

std::string data(const char* name) { return oracle::slurp(std::string(FLEXFOR_DATA_DIR "/") + name); }

std::string expect_parse_error(const std::string& text) {
  try {
    parse_case(text);
  } catch (const ParseError& e) {
    return e.where();
  }
  ADD_FAILURE() << "no ParseError";
  return {};
}

std::string replace_once(std::string s, const std::string& from, const std::string& to) {
  const auto at = s.find(from);
  EXPECT_NE(at, std::string::npos) << from;
  if (at != std::string::npos) s.replace(at, from.size(), to);
  return s;
}

const char* kTwoBus = R"(function mpc = two
mpc.baseMVA = 50;
mpc.bus = [
  1 3 0 0 0 0 1 1 0 110 1 1.1 0.9;
  2 1 30 10 0 5 1 1 0 110 1 1.05 0.95;  % a comment
];
mpc.gen = [
  1 0 0 40 -40 1.02 50 1 80 0 0 0 0 0 0 0 0 0 0 0 0;
];
mpc.branch = [
  1 2 0.01 0.1 0.02 60 60 60 0 0 1 -360 360;
];
mpc.gencost = [
  2 0 0 3 0.02 3 7;
];
)";

DsModelBundle sample_bundle() {
  DsModelBundle b;
  b.ds_name = "ds";
  b.pcc.ts_bus = 6;
  b.pcc.ds_name = "ds";
  b.pcc.interconnect = Branch{0, 0, 0, 0.005, 0.04};
  b.box = {{-3.5, -2.0, 0.95}, {1.25, 2.0, 1.05}};
  b.for_model.map = MonomialIndexMap(3);
  b.for_model.coeffs = Eigen::VectorXd::LinSpaced(20, -1.0, 1.0 / 3.0);
  b.for_model.normalization = {{-1.0, 0.0, 1.0}, {1.5, 1.1, 0.03}};
  b.for_model.domain = b.box;
  b.cost_model.coeffs = Eigen::VectorXd::LinSpaced(10, 0.1, 0.7);
  b.cost_model.normalization = b.for_model.normalization;
  b.cost_model.offset = 12.5;
  b.cost_model.scale = 3.0;
  b.cost_model.domain = b.box;
  return b;
}

}  // namespace

TEST(NativeCase, RoundTripIsIdempotent) {
  for (const char* f : {"case33bw.json", "case33bw_meshed.json"}) {
    const auto text = data(f);
    const auto doc = parse_case(text);
    const auto once = serialize_case(doc);
    EXPECT_EQ(parse_case(once), doc);
    EXPECT_EQ(serialize_case(parse_case(once)), once);
  }
}

TEST(NativeCase, RadialPlusTiesIsTheMeshedCase) {
  const auto radial = parse_case(data("case33bw.json")).network;
  const auto meshed = parse_case(data("case33bw_meshed.json")).network;
  const auto open = open_branch_ids(radial);
  EXPECT_EQ(open.size(), 5u);
  EXPECT_TRUE(open_branch_ids(meshed).empty());
  const auto closed = close_normally_open(radial, open);
  int n_closed = 0;
  for (const auto& b : closed.branches()) n_closed += b.status == BranchStatus::closed;
  EXPECT_EQ(n_closed, 37);
  EXPECT_EQ(closed.branches(), meshed.branches());
  EXPECT_THROW(close_normally_open(radial, {999}), StructuralError);
}

TEST(NativeCase, ReportsFieldPaths) {
  const auto text = data("case33bw.json");
  EXPECT_EQ(expect_parse_error(replace_once(text, "\"base_mva\"", "\"base_mva\": 1, \"colour\"")),
            "$.network.colour");
  EXPECT_EQ(expect_parse_error(replace_once(text, "flexfor-case/1", "flexfor-case/2")), "$.format_version");
  EXPECT_EQ(expect_parse_error(replace_once(text, "\"r\": 0.005,", "\"r\": \"x\",")),
            "$.pcc_links[0].interconnect.r");
  EXPECT_EQ(expect_parse_error("{\n  \"format_version\": }"), "case line 2 column 21");
  EXPECT_THROW(parse_case("[]"), ParseError);
}

TEST(NativeCase, RejectsLoadedPcc) {
  CaseDocument doc;
  doc.network = import_matpower(data("case9.m"));
  PccLink link;
  link.ts_bus = 5;
  link.ds_name = "ds";
  link.interconnect = Branch{0, 0, 0, 0.005, 0.04};
  doc.pcc_links = {link};
  EXPECT_THROW(parse_case(serialize_case(doc)), SemanticError);
  doc.pcc_links[0].ts_bus = 6;
  EXPECT_EQ(parse_case(serialize_case(doc)), doc);
  doc.pcc_links[0].ts_bus = 60;
  EXPECT_THROW(parse_case(serialize_case(doc)), SemanticError);
}

TEST(NativeCase, ConfigSectionsRoundTrip) {
  auto doc = parse_case(data("case33bw.json"));
  doc.sampling = SamplingConfig{};
  doc.sampling->n_bbps = 123;
  doc.fit = VolumetricFitConfig{};
  doc.fit->degree = 6;
  doc.benchmark = BenchmarkConfig{};
  doc.benchmark->trials = 9;
  const auto back = parse_case(serialize_case(doc));
  EXPECT_EQ(back, doc);
  EXPECT_EQ(back.sampling->n_bbps, 123);
}

TEST(Matpower, TwoBusUnitsAndCostScaling) {
  const auto net = import_matpower(kTwoBus);
  EXPECT_EQ(net.name(), "two");
  EXPECT_DOUBLE_EQ(net.base_mva(), 50.0);
  ASSERT_EQ(net.loads().size(), 1u);
  EXPECT_DOUBLE_EQ(net.loads()[0].p_d, 0.6);
  EXPECT_DOUBLE_EQ(net.loads()[0].q_d, 0.2);
  EXPECT_DOUBLE_EQ(net.buses()[1].b_shunt, 0.1);
  EXPECT_DOUBLE_EQ(net.buses()[1].v_min, 0.95);
  const auto& g = net.generators()[0];
  EXPECT_DOUBLE_EQ(g.p_max, 1.6);
  EXPECT_DOUBLE_EQ(g.q_min, -0.8);
  EXPECT_DOUBLE_EQ(net.buses()[0].v_set, 1.02);
  // Cost per hour must not depend on the unit of p: c(p_MW) = c_pu(p_MW / base).
  EXPECT_DOUBLE_EQ(g.cost.a, 0.02 * 2500.0);
  EXPECT_DOUBLE_EQ(g.cost.b, 3.0 * 50.0);
  EXPECT_DOUBLE_EQ(g.cost.c, 7.0);
  EXPECT_NEAR(g.cost(40.0 / 50.0), 0.02 * 1600.0 + 3.0 * 40.0 + 7.0, 1e-9);
  EXPECT_DOUBLE_EQ(net.branches()[0].rating, 1.2);
  EXPECT_DOUBLE_EQ(net.branches()[0].tap, 1.0);
}

TEST(Matpower, PublishedCaseCounts) {
  const auto c30 = import_matpower(data("case30.m"));
  EXPECT_EQ(c30.bus_count(), 30);
  EXPECT_EQ(c30.branches().size(), 41u);
  EXPECT_EQ(c30.generators().size(), 6u);
  const auto c9 = import_matpower(data("case9.m"));
  EXPECT_EQ(c9.bus_count(), 9);
  EXPECT_EQ(c9.branches().size(), 9u);
  EXPECT_EQ(c9.generators().size(), 3u);
}

TEST(Matpower, UnsupportedFeatures) {
  const std::string two = kTwoBus;
  EXPECT_THROW(import_matpower(replace_once(two, "2 0 0 3 0.02 3 7", "1 0 0 2 0 0 80 300")),
               UnsupportedFeature);
  EXPECT_THROW(import_matpower(replace_once(two, "2 0 0 3 0.02 3 7", "2 0 0 4 1 0.02 3 7")),
               UnsupportedFeature);
  EXPECT_THROW(import_matpower(replace_once(two, "2 1 30 10", "2 4 30 10")), UnsupportedFeature);
  EXPECT_THROW(import_matpower(replace_once(two, "mpc.gencost", "mpc.gencostx")), ParseError);
  EXPECT_THROW(import_matpower(replace_once(two, "1 2 0.01 0.1 0.02 60 60 60 0 0 1 -360 360", "1 2 0.01")),
               ParseError);
}

TEST(Dataset, BoundaryAndCostRoundTrip) {
  DatasetFile b;
  b.seed = 42;
  b.generator = "test";
  b.points = {{1.0 / 3.0, -2.5, 1.01}, {0.0, 1e-17, 0.95}};
  b.sources = {SampleSource::bbps, SampleSource::fds};
  const auto text = write_dataset(b);
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "p_MW,q_MVAr,v_pu,source # kind=boundary seed=42 generator=test");
  EXPECT_EQ(read_dataset(text), b);
  EXPECT_EQ(write_dataset(read_dataset(text)), text);
  const auto m = dataset_matrix(b);
  EXPECT_EQ(m(0, 0), 1.0 / 3.0);

  DatasetFile c;
  c.kind = DatasetKind::cost;
  c.seed = 1;
  c.generator = "test";
  c.points = {{1.0, 2.0, 1.0}};
  c.costs = {123.456};
  EXPECT_EQ(read_dataset(write_dataset(c)), c);
}

TEST(Dataset, KindMismatchAndBadRows) {
  EXPECT_THROW(read_dataset("p_MW,q_MVAr,v_pu,cost # kind=boundary seed=1\n"), ParseError);
  EXPECT_THROW(read_dataset("p_MW,q_MVAr,v_pu,source # kind=boundary\n"), ParseError);
  EXPECT_THROW(read_dataset("p_MW,q_MVAr,v_pu,source\n"), ParseError);
  EXPECT_THROW(read_dataset("p_MW,q_MVAr,v_pu,source # kind=boundary seed=1\n1,2,3,lhs\n"), ParseError);
  EXPECT_THROW(read_dataset("p_MW,q_MVAr,v_pu,source # kind=boundary seed=1\n1,2,bbps\n"), ParseError);
  try {
    read_dataset("p_MW,q_MVAr,v_pu,cost # kind=cost seed=1\n1,2,1,3\n1,x,1,3\n");
    ADD_FAILURE();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.where(), "row 2");
  }
  DatasetFile bad;
  bad.points = {{NAN, 0.0, 1.0}};
  bad.sources = {SampleSource::bbps};
  EXPECT_THROW(write_dataset(bad), PreconditionError);
}

TEST(Models, BoxModelAndBundleRoundTrip) {
  const auto b = sample_bundle();
  EXPECT_EQ(read_box(write_box(b.box)), b.box);
  EXPECT_EQ(read_for_model(write_model(b.for_model)), b.for_model);
  EXPECT_EQ(read_cost_model(write_model(b.cost_model)), b.cost_model);
  const auto j = write_bundle(b);
  const auto back = read_bundle(parse_json(j.dump(2)));
  EXPECT_EQ(back.for_model, b.for_model);
  EXPECT_EQ(back.cost_model, b.cost_model);
  EXPECT_EQ(back.pcc, b.pcc);
  EXPECT_EQ(write_bundle(back).dump(), j.dump());
  const CouplingPoint x{-1.0, 0.5, 1.01};
  EXPECT_EQ(back.for_model.evaluate(x).value, b.for_model.evaluate(x).value);
}

TEST(Models, SchemaViolations) {
  const auto b = sample_bundle();
  auto j = write_model(b.for_model);
  j["coeffs"].erase(0);
  EXPECT_THROW(read_for_model(j), SemanticError);
  EXPECT_THROW(read_cost_model(write_model(b.for_model)), SemanticError);
  j = write_model(b.for_model);
  j["sigma_order"] = "lex";
  EXPECT_THROW(read_for_model(j), ParseError);
  j = write_model(b.for_model);
  j["normalization"]["std"][2] = 0.0;
  EXPECT_THROW(read_for_model(j), SemanticError);
  auto box = write_box(b.box);
  box["min"][0] = 9.0;
  EXPECT_THROW(read_box(box), SemanticError);
  box = write_box(b.box);
  box["extra"] = 1;
  try {
    read_box(box);
    ADD_FAILURE();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.where(), "box.extra");
  }
}
