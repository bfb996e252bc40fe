// flexfor command-line driver: sample, fit, validate, coordinate, benchmark.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flexfor/flexfor.hpp"

namespace fs = std::filesystem;
using namespace flexfor;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

CaseDocument load_case(const std::string& path) {
  return load_case_text(read_file(path), fs::path(path).extension() == ".m");
}

/// DS network with its PCC attached, from the link at `index` of a DS case.
struct LoadedDs {
  CaseDocument doc;
  PccLink link;
  PccNetwork pcc;
};

LoadedDs load_ds(const std::string& path, int index) {
  LoadedDs out;
  out.doc = load_case(path);
  if (index < 0 || index >= static_cast<int>(out.doc.pcc_links.size())) {
    throw Error(path + ": no PCC link with index " + std::to_string(index));
  }
  out.link = out.doc.pcc_links[index];
  out.pcc = attach_pcc(out.doc.network, out.link);
  return out;
}

Json events_json(const std::vector<SampleEvent>& log) {
  Json a = Json::array();
  for (const auto& e : log) {
    a.push_back(Json{{"stage", e.stage}, {"index", e.index}, {"outcome", e.outcome}, {"value", e.value}});
  }
  return a;
}

Json point_json(const CouplingPoint& x) { return Json{{"p_MW", x.p}, {"q_MVAr", x.q}, {"v_pu", x.v}}; }

Json confusion_json(const ConfusionMetrics& m) {
  auto num = [](double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); };
  return Json{{"tp", m.tp},
              {"tn", m.tn},
              {"fp", m.fp},
              {"fn", m.fn},
              {"n_samples", m.n_samples()},
              {"excluded", m.excluded},
              {"seed", m.seed},
              {"accuracy", num(m.accuracy())},
              {"recall", num(m.recall())},
              {"specificity", num(m.specificity())}};
}

Json cost_metrics_json(const FitErrorMetrics& m) {
  return Json{{"rmse", m.rmse},
              {"mae", m.mae},
              {"n_validation", m.n_validation},
              {"cost_range", m.cost_range},
              {"rmse_normalized", m.rmse_normalized},
              {"mae_normalized", m.mae_normalized}};
}

// ---------------------------------------------------------------------------

struct SampleArgs {
  std::string case_path, out_dir;
  int pcc = 0;
  int n_bbps = -1, n_fds = -1, n_cost = -1;
  std::int64_t seed = -1;
};

int run_sample(const SampleArgs& a) {
  auto ds = load_ds(a.case_path, a.pcc);
  SamplingConfig cfg = ds.doc.sampling.value_or(SamplingConfig{});
  if (a.n_bbps >= 0) cfg.n_bbps = a.n_bbps;
  if (a.n_fds >= 0) cfg.n_fds = a.n_fds;
  if (a.n_cost >= 0) cfg.n_cost = a.n_cost;
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);

  const auto box = compute_bounding_box(ds.pcc);
  const auto bb = bbps(ds.pcc, box.box, cfg.n_bbps, cfg.seed, cfg);
  const auto fr = fds(ds.pcc, box.box, cfg.n_fds, cfg);
  const auto cr = sample_cost_interior(ds.pcc, box.box, cfg.n_cost, derive_seed(cfg.seed, 1), cfg);

  DatasetFile bnd;
  bnd.kind = DatasetKind::boundary;
  bnd.seed = cfg.seed;
  bnd.generator = "bbps+fds";
  for (const auto* rows : {&bb.rows, &fr.rows}) {
    for (const auto& r : *rows) {
      bnd.points.push_back(r.x);
      bnd.sources.push_back(r.source);
    }
  }
  DatasetFile cost;
  cost.kind = DatasetKind::cost;
  cost.seed = cfg.seed;
  cost.generator = "lhs";
  for (const auto& r : cr.rows) {
    cost.points.push_back(r.x);
    cost.costs.push_back(r.cost);
  }
  const fs::path dir(a.out_dir);
  write_file((dir / "boundary.csv").string(), write_dataset(bnd));
  write_file((dir / "cost.csv").string(), write_dataset(cost));
  Json bj = write_box(box.box);
  bj["ds_name"] = ds.link.ds_name;
  write_file((dir / "box.json").string(), bj.dump(2) + "\n");
  std::string log;
  for (const auto& e : {events_json(bb.log), events_json(fr.log), events_json(cr.log)}) {
    for (const auto& line : e) log += line.dump() + "\n";
  }
  write_file((dir / "log.jsonl").string(), log);
  std::printf("box p [%g, %g] MW, q [%g, %g] MVAr, v [%g, %g] p.u.\n", box.box.lo.p, box.box.hi.p,
              box.box.lo.q, box.box.hi.q, box.box.lo.v, box.box.hi.v);
  std::printf("bbps %zu/%d (attempts %d, failures %d)\n", bb.rows.size(), cfg.n_bbps, bb.attempts,
              bb.failures);
  std::printf("fds %zu/%d (failures %d%s)\n", fr.rows.size(), cfg.n_fds, fr.failures,
              fr.center_projected ? ", center projected" : "");
  std::printf("cost %zu/%d (attempts %d)\n", cr.rows.size(), cfg.n_cost, cr.attempts);
  return 0;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string boundary, cost, config, box, case_path, out;
  int pcc = 0;
};

int run_fit(const FitArgs& a) {
  VolumetricFitConfig cfg;
  if (!a.config.empty()) cfg = read_fit_config(parse_json(read_file(a.config), a.config), a.config);
  const auto ds = load_ds(a.case_path, a.pcc);
  if (ds.doc.fit && a.config.empty()) cfg = *ds.doc.fit;

  const auto bnd = read_dataset(read_file(a.boundary));
  if (bnd.kind != DatasetKind::boundary) throw Error(a.boundary + ": not a boundary dataset");
  const auto cost = read_dataset(read_file(a.cost));
  if (cost.kind != DatasetKind::cost) throw Error(a.cost + ": not a cost dataset");

  const auto ff = fit_for(dataset_matrix(bnd), cfg);
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(cost.costs.data(),
                                                        static_cast<Eigen::Index>(cost.costs.size()));
  const auto cf = fit_cost(dataset_matrix(cost), y, ff.model.normalization);

  DsModelBundle b;
  b.ds_name = ds.link.ds_name;
  b.pcc = ds.link;
  b.for_model = ff.model;
  b.cost_model = cf.model;
  Json bj = parse_json(read_file(a.box), a.box);
  bj.erase("ds_name");
  b.box = read_box(bj, a.box);
  write_file(a.out, write_bundle(b).dump(2) + "\n");
  std::printf("FOR fit: %d rows, rank %d of %lld%s, residual %.6g\n", ff.rows, ff.rank,
              MonomialIndexMap::count(cfg.degree), ff.under_determined ? " (under-determined)" : "",
              ff.residual);
  std::printf("cost fit: rank %d, rmse %.6g, mae %.6g\n", cf.rank, cf.rmse, cf.mae);
  return 0;
}

// ---------------------------------------------------------------------------

struct ValidateArgs {
  std::string model, case_path, out;
  int pcc = 0;
  int n = 10000;
  int n_cost = 0;
  std::int64_t seed = 1;
};

int run_validate(const ValidateArgs& a) {
  const auto b = read_bundle(parse_json(read_file(a.model), a.model), a.model);
  const auto ds = load_ds(a.case_path, a.pcc);
  const auto seed = static_cast<std::uint64_t>(a.seed);
  const auto v = validate_for(b.for_model, ds.pcc, b.box, a.n, seed);
  Json out{{"ds_name", b.ds_name}, {"for", confusion_json(v.metrics)}};
  if (a.n_cost > 0) {
    const auto c = validate_cost(b.cost_model, ds.pcc, b.box, a.n_cost, derive_seed(seed, 2));
    out["cost"] = cost_metrics_json(c.metrics);
  }
  write_file(a.out, out.dump(2) + "\n");
  const auto& m = v.metrics;
  std::printf("tp %ld tn %ld fp %ld fn %ld excluded %ld: accuracy %.4f recall %.4f specificity %.4f\n",
              m.tp, m.tn, m.fp, m.fn, m.excluded, m.accuracy(), m.recall(), m.specificity());
  if (out.contains("cost")) {
    std::printf("cost rmse %.6g (%.4f%% of range)\n", out["cost"]["rmse"].get<double>(),
                100.0 * out["cost"]["rmse_normalized"].get<double>());
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct SystemArgs {
  std::string ts;
  std::vector<std::string> bundles, ds;
};

struct LoadedSystem {
  Network ts;
  std::vector<DsModelBundle> bundles;
  std::vector<DsAttachment> attachments;
  std::vector<PccNetwork> pcc;
};

LoadedSystem load_system(const SystemArgs& a) {
  if (a.bundles.size() != a.ds.size()) throw Error("give one --ds case per --bundle");
  LoadedSystem s;
  s.ts = load_case(a.ts).network;
  for (std::size_t k = 0; k < a.bundles.size(); ++k) {
    auto b = read_bundle(parse_json(read_file(a.bundles[k]), a.bundles[k]), a.bundles[k]);
    auto doc = load_case(a.ds[k]);
    s.attachments.push_back({b.pcc, doc.network});
    s.pcc.push_back(attach_pcc(doc.network, b.pcc));
    s.bundles.push_back(std::move(b));
  }
  return s;
}

int run_coordinate(const SystemArgs& a, const std::string& out_path) {
  const auto s = load_system(a);
  const auto rep = solve_coordination(s.ts, s.bundles, s.pcc);
  Json out{{"phase1_status", to_string(rep.ts_solution.status)},
           {"feasible", rep.feasible},
           {"ts_generation_cost", rep.ts_generation_cost},
           {"model_cost", rep.model_cost},
           {"total_cost", rep.total_cost}};
  Json ds = Json::array();
  for (std::size_t k = 0; k < rep.x_star.size(); ++k) {
    const auto& d = rep.disaggregation[k];
    ds.push_back(Json{{"ds_name", s.bundles[k].ds_name},
                      {"pcc", point_json(rep.x_star[k])},
                      {"for_value", rep.for_value[k]},
                      {"status", to_string(d.solution.status)},
                      {"dg_cost", d.dg_cost}});
  }
  out["ds"] = ds;
  const auto text = out.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_file(out_path, text);
  }
  return rep.feasible ? 0 : 3;
}

struct BenchmarkArgs {
  SystemArgs sys;
  int trials = -1;
  std::int64_t seed = -1;
  std::string out, timing, histogram, summary;
  double bin_width = 0.1;
};

int run_benchmark_cmd(const BenchmarkArgs& a) {
  const auto s = load_system(a.sys);
  BenchmarkConfig cfg = load_case(a.sys.ts).benchmark.value_or(BenchmarkConfig{});
  if (a.trials >= 0) cfg.trials = a.trials;
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  const auto trials = run_benchmark(s.ts, s.bundles, s.attachments, cfg);
  write_file(a.out, trial_table_csv(trials));
  if (!a.timing.empty()) write_file(a.timing, timing_csv(trials));
  if (!a.histogram.empty()) {
    std::vector<double> d;
    for (const auto& t : trials) {
      if (t.feasible && t.standard_ok) d.push_back(t.cost_diff_pct);
    }
    write_file(a.histogram, histogram_csv(histogram(d, a.bin_width), "cost_diff_pct", a.bin_width));
  }
  const auto sm = summarize(trials);
  if (!a.summary.empty()) {
    write_file(a.summary, Json{{"trials", sm.trials},
                               {"both_solved", sm.both_solved},
                               {"feasible", sm.feasible},
                               {"feasibility_ratio", sm.feasibility_ratio},
                               {"mean_cost_diff_pct", sm.mean_cost_diff_pct},
                               {"median_cost_diff_pct", sm.median_cost_diff_pct},
                               {"min_cost_diff_pct", sm.min_cost_diff_pct},
                               {"max_cost_diff_pct", sm.max_cost_diff_pct},
                               {"dominance_violations", sm.dominance_violations}}
                                  .dump(2) +
                              "\n");
  }
  std::printf("trials %d, feasible %d, both solved %d, mean cost diff %.4f%%, max %.4f%%, "
              "dominance violations %d, mean time diff %.2f%%\n",
              sm.trials, sm.feasible, sm.both_solved, sm.mean_cost_diff_pct, sm.max_cost_diff_pct,
              sm.dominance_violations, sm.mean_time_diff_pct);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FOR sampling, fitting and TSO-DSO coordination"};
  app.require_subcommand(1);

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "Sample the FOR boundary and DG costs of a DS");
  sample->add_option("--case", sa.case_path, "DS case (native JSON)")->required();
  sample->add_option("--pcc", sa.pcc, "Index into the case's pcc_links");
  sample->add_option("--n-bbps", sa.n_bbps, "Boundary projection samples");
  sample->add_option("--n-fds", sa.n_fds, "Fibonacci direction samples");
  sample->add_option("--n-cost", sa.n_cost, "Interior cost samples");
  sample->add_option("--seed", sa.seed, "Random seed");
  sample->add_option("--out-dir", sa.out_dir, "Output directory")->required();

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit FOR and cost polynomials into a model bundle");
  fit->add_option("--boundary", fa.boundary, "boundary.csv")->required();
  fit->add_option("--cost", fa.cost, "cost.csv")->required();
  fit->add_option("--box", fa.box, "box.json written by sample")->required();
  fit->add_option("--case", fa.case_path, "DS case the data came from")->required();
  fit->add_option("--pcc", fa.pcc, "Index into the case's pcc_links");
  fit->add_option("--config", fa.config, "Fit hyperparameters (JSON)");
  fit->add_option("--out", fa.out, "Model bundle (JSON)")->required();

  ValidateArgs va;
  auto* validate = app.add_subcommand("validate", "Confusion matrix of a FOR model against OPF truth");
  validate->add_option("--model", va.model, "Model bundle")->required();
  validate->add_option("--case", va.case_path, "DS case")->required();
  validate->add_option("--pcc", va.pcc, "Index into the case's pcc_links");
  validate->add_option("--n", va.n, "Uniform box samples");
  validate->add_option("--n-cost", va.n_cost, "Fresh cost validation samples (0 skips)");
  validate->add_option("--seed", va.seed, "Random seed");
  validate->add_option("--out", va.out, "metrics.json")->required();

  SystemArgs ca;
  std::string coord_out;
  auto* coordinate = app.add_subcommand("coordinate", "One FOR-based TS OPF plus DS disaggregation");
  coordinate->add_option("--ts", ca.ts, "TS case (native JSON or MATPOWER .m)")->required();
  coordinate->add_option("--bundle", ca.bundles, "Model bundle per DS")->required();
  coordinate->add_option("--ds", ca.ds, "DS case per bundle")->required();
  coordinate->add_option("--out", coord_out, "Report JSON (stdout if omitted)");

  BenchmarkArgs ba;
  auto* bench = app.add_subcommand("benchmark", "Proposed scheme against the merged AC-OPF");
  bench->add_option("--ts", ba.sys.ts, "TS case")->required();
  bench->add_option("--bundle", ba.sys.bundles, "Model bundle per DS")->required();
  bench->add_option("--ds", ba.sys.ds, "DS case per bundle")->required();
  bench->add_option("--trials", ba.trials, "Number of cost draws");
  bench->add_option("--seed", ba.seed, "Random seed");
  bench->add_option("--out", ba.out, "Trial table (CSV)")->required();
  bench->add_option("--timing", ba.timing, "Wall times (CSV)");
  bench->add_option("--histogram", ba.histogram, "Cost-difference histogram (CSV)");
  bench->add_option("--bin-width", ba.bin_width, "Histogram bin width in percent");
  bench->add_option("--summary", ba.summary, "Summary (JSON)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sample) return run_sample(sa);
    if (*fit) return run_fit(fa);
    if (*validate) return run_validate(va);
    if (*coordinate) return run_coordinate(ca, coord_out);
    if (*bench) return run_benchmark_cmd(ba);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
