#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "flexfor/coordination.hpp"
#include "flexfor/fitting.hpp"
#include "flexfor/opf.hpp"
#include "flexfor/sampling.hpp"

namespace flexfor {

/// Confusion matrix with "feasible" as the positive class. Ratios with an
/// empty denominator are NaN.
struct ConfusionMetrics {
  long tp = 0, tn = 0, fp = 0, fn = 0;
  /// Samples whose truth label could not be computed.
  long excluded = 0;
  std::uint64_t seed = 0;

  long n_samples() const { return tp + tn + fp + fn; }
  double accuracy() const { return ratio(tp + tn, n_samples()); }
  double recall() const { return ratio(tp, tp + fn); }
  double specificity() const { return ratio(tn, tn + fp); }

  void add(bool truly_feasible, bool predicted_feasible) {
    if (truly_feasible) {
      (predicted_feasible ? tp : fn) += 1;
    } else {
      (predicted_feasible ? fp : tn) += 1;
    }
  }

 private:
  static double ratio(long a, long b) {
    return b == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(a) / b;
  }
};

enum class Truth { feasible, infeasible, failed };

/// Uniform samples in the box, drawn coordinate by coordinate (p, q, v).
inline std::vector<CouplingPoint> uniform_box_samples(const BoundingBox& box, int n,
                                                      std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CouplingPoint> out(n);
  for (auto& x : out) {
    x.p = box.lo.p + (box.hi.p - box.lo.p) * rng.uniform();
    x.q = box.lo.q + (box.hi.q - box.lo.q) * rng.uniform();
    x.v = box.lo.v + (box.hi.v - box.lo.v) * rng.uniform();
  }
  return out;
}

/// Truth label of a PCC point from the elastic fixed-PCC problem.
inline Truth label_point(const PccNetwork& ds, const CouplingPoint& x, double slack_tol = 1e-6,
                         const NlpOptions& opts = {}) {
  FixedPccOptions fo;
  fo.nlp = opts;
  fo.slack_tol = slack_tol;
  const auto sol = solve_fixed_pcc(ds, x, fo);
  switch (sol.status) {
    case NlpStatus::optimal: return Truth::feasible;
    case NlpStatus::infeasible: return Truth::infeasible;
    default: return Truth::failed;
  }
}

struct ForValidation {
  ConfusionMetrics metrics;
  std::vector<CouplingPoint> samples;
  std::vector<Truth> truth;
  std::vector<double> prediction;  // model value per sample
};

/// Confusion matrix of `predict` (value <= 0 means feasible) against truth
/// labels at n uniform box samples.
inline ForValidation validate_for(const std::function<double(const CouplingPoint&)>& predict,
                                  const PccNetwork& ds, const BoundingBox& box, int n,
                                  std::uint64_t seed, double slack_tol = 1e-6,
                                  const NlpOptions& opts = {}) {
  ForValidation out;
  out.metrics.seed = seed;
  out.samples = uniform_box_samples(box, n, seed);
  for (const auto& x : out.samples) {
    const Truth t = label_point(ds, x, slack_tol, opts);
    const double value = predict(x);
    out.truth.push_back(t);
    out.prediction.push_back(value);
    if (t == Truth::failed) {
      ++out.metrics.excluded;
      continue;
    }
    out.metrics.add(t == Truth::feasible, value <= 0.0);
  }
  return out;
}

inline ForValidation validate_for(const ImplicitPolynomial& model, const PccNetwork& ds,
                                  const BoundingBox& box, int n, std::uint64_t seed,
                                  double slack_tol = 1e-6, const NlpOptions& opts = {}) {
  return validate_for([&model](const CouplingPoint& x) { return model.evaluate(x).value; }, ds,
                      box, n, seed, slack_tol, opts);
}

struct FitErrorMetrics {
  double rmse = 0.0;
  double mae = 0.0;
  int n_validation = 0;
  /// max - min of the true costs in the validation set.
  double cost_range = 0.0;
  double rmse_normalized = 0.0;
  double mae_normalized = 0.0;
};

/// Errors of `predict` against true costs.
inline FitErrorMetrics cost_errors(const std::vector<double>& predicted,
                                   const std::vector<double>& truth) {
  if (predicted.size() != truth.size()) throw PreconditionError("cost error inputs differ in length");
  FitErrorMetrics m;
  m.n_validation = static_cast<int>(truth.size());
  if (truth.empty()) return m;
  double se = 0.0, ae = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = predicted[i] - truth[i];
    se += e * e;
    ae += std::abs(e);
  }
  m.rmse = std::sqrt(se / truth.size());
  m.mae = ae / truth.size();
  const auto [lo, hi] = std::minmax_element(truth.begin(), truth.end());
  m.cost_range = *hi - *lo;
  m.rmse_normalized = m.cost_range > 0.0 ? m.rmse / m.cost_range : 0.0;
  m.mae_normalized = m.cost_range > 0.0 ? m.mae / m.cost_range : 0.0;
  return m;
}

struct CostValidation {
  FitErrorMetrics metrics;
  std::vector<CostRow> rows;
  std::vector<double> predicted;
};

/// RMSE/MAE of the cost model on fresh feasible samples drawn as in cost
/// sampling (LHS batches with rejection).
inline CostValidation validate_cost(const CostModel& model, const PccNetwork& ds,
                                    const BoundingBox& box, int n, std::uint64_t seed,
                                    const SamplingConfig& cfg = {}, const NlpOptions& opts = {}) {
  CostValidation out;
  out.rows = sample_cost_interior(ds, box, n, seed, cfg, opts).rows;
  std::vector<double> truth;
  for (const auto& r : out.rows) {
    out.predicted.push_back(model.evaluate(r.x).value);
    truth.push_back(r.cost);
  }
  out.metrics = cost_errors(out.predicted, truth);
  return out;
}

// ---------------------------------------------------------------------------
// Plot-ready output

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  long count = 0;
};

/// Fixed-width bins from floor(min/w)·w to (floor(max/w) + 1)·w; bin k is
/// [lo, hi). Non-finite values are ignored.
inline std::vector<HistogramBin> histogram(const std::vector<double>& values, double width) {
  if (!(width > 0.0)) throw PreconditionError("bin width must be positive");
  std::vector<double> v;
  for (double x : values) {
    if (std::isfinite(x)) v.push_back(x);
  }
  std::vector<HistogramBin> out;
  if (v.empty()) return out;
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const long first = static_cast<long>(std::floor(*mn / width));
  const long last = static_cast<long>(std::floor(*mx / width));
  for (long k = first; k <= last; ++k) out.push_back({k * width, (k + 1) * width, 0});
  for (double x : v) {
    long k = static_cast<long>(std::floor(x / width)) - first;
    k = std::clamp(k, 0L, static_cast<long>(out.size()) - 1);
    ++out[k].count;
  }
  return out;
}

namespace detail {

inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

/// CSV with columns bin_lo,bin_hi,count; the header declares quantity and
/// width so an empty histogram is still self-describing.
inline std::string histogram_csv(const std::vector<HistogramBin>& bins, const std::string& quantity,
                                 double width) {
  std::string s = "bin_lo,bin_hi,count # quantity=" + quantity + " width=" + detail::fmt17(width) + "\n";
  for (const auto& b : bins) {
    s += detail::fmt17(b.lo) + "," + detail::fmt17(b.hi) + "," + std::to_string(b.count) + "\n";
  }
  return s;
}

/// Trial table of a benchmark sweep; wall times are left out so the table is
/// reproducible bit for bit.
inline std::string trial_table_csv(const std::vector<TrialResult>& trials) {
  std::string s =
      "trial,proposed_cost,standard_cost,cost_diff_pct,proposed_ok,standard_ok,feasible,b_factors\n";
  for (const auto& t : trials) {
    std::string f;
    for (std::size_t g = 0; g < t.b_factor.size(); ++g) {
      f += (g ? ";" : "") + detail::fmt17(t.b_factor[g]);
    }
    s += std::to_string(t.trial) + "," + detail::fmt17(t.proposed_cost) + "," +
         detail::fmt17(t.standard_cost) + "," + detail::fmt17(t.cost_diff_pct) + "," +
         (t.proposed_ok ? "1" : "0") + "," + (t.standard_ok ? "1" : "0") + "," +
         (t.feasible ? "1" : "0") + "," + f + "\n";
  }
  return s;
}

/// Wall times of a benchmark sweep (not reproducible by nature).
inline std::string timing_csv(const std::vector<TrialResult>& trials) {
  std::string s = "trial,proposed_time_s,standard_time_s,time_diff_pct\n";
  for (const auto& t : trials) {
    s += std::to_string(t.trial) + "," + detail::fmt17(t.proposed_time) + "," +
         detail::fmt17(t.standard_time) + "," + detail::fmt17(t.time_diff_pct) + "\n";
  }
  return s;
}

struct BenchmarkSummary {
  int trials = 0;
  int both_solved = 0;
  int feasible = 0;
  double feasibility_ratio = 0.0;
  double mean_cost_diff_pct = 0.0;
  double median_cost_diff_pct = 0.0;
  double max_cost_diff_pct = 0.0;
  double min_cost_diff_pct = 0.0;
  double mean_time_diff_pct = 0.0;
  /// Trials where proposed < standard by more than 1e-6 relative.
  int dominance_violations = 0;
};

inline BenchmarkSummary summarize(const std::vector<TrialResult>& trials) {
  BenchmarkSummary s;
  s.trials = static_cast<int>(trials.size());
  std::vector<double> diffs, times;
  for (const auto& t : trials) {
    if (t.feasible) ++s.feasible;
    if (!(t.feasible && t.standard_ok)) continue;
    ++s.both_solved;
    diffs.push_back(t.cost_diff_pct);
    times.push_back(t.time_diff_pct);
    if (t.proposed_cost < t.standard_cost - 1e-6 * std::abs(t.standard_cost)) ++s.dominance_violations;
  }
  s.feasibility_ratio = s.trials ? static_cast<double>(s.feasible) / s.trials : 0.0;
  if (!diffs.empty()) {
    double sum = 0.0, tsum = 0.0;
    for (double d : diffs) sum += d;
    for (double d : times) tsum += d;
    s.mean_cost_diff_pct = sum / diffs.size();
    s.mean_time_diff_pct = tsum / times.size();
    std::vector<double> sorted = diffs;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    s.median_cost_diff_pct = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    s.min_cost_diff_pct = sorted.front();
    s.max_cost_diff_pct = sorted.back();
  }
  return s;
}

/// PQV scatter of boundary rows: p_MW,q_MVAr,v_pu,source.
inline std::string boundary_scatter_csv(const std::vector<BoundaryRow>& rows) {
  std::string s = "p_MW,q_MVAr,v_pu,source\n";
  for (const auto& r : rows) {
    s += detail::fmt17(r.x.p) + "," + detail::fmt17(r.x.q) + "," + detail::fmt17(r.x.v) + "," +
         to_string(r.source) + "\n";
  }
  return s;
}

}  // namespace flexfor
