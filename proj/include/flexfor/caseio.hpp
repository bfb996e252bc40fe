#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "flexfor/coordination.hpp"
#include "flexfor/evaluation.hpp"
#include "flexfor/fitting.hpp"
#include "flexfor/netmodel.hpp"
#include "flexfor/sampling.hpp"

namespace flexfor {

using Json = nlohmann::ordered_json;

inline constexpr const char* kCaseFormat = "flexfor-case/1";

/// A parsed native case file.
struct CaseDocument {
  std::string format_version = kCaseFormat;
  Network network;
  std::vector<PccLink> pcc_links;
  std::optional<SamplingConfig> sampling;
  std::optional<VolumetricFitConfig> fit;
  std::optional<BenchmarkConfig> benchmark;

  bool operator==(const CaseDocument& o) const {
    return format_version == o.format_version && network.data() == o.network.data() &&
           pcc_links == o.pcc_links && sampling == o.sampling && fit == o.fit &&
           benchmark == o.benchmark;
  }
};

namespace detail {

/// Strict reader over one JSON object: every key must be consumed.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ParseError(path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  std::string child(const std::string& key) const { return path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const Json& at(const std::string& key) {
    if (!j_.contains(key)) throw ParseError(child(key), "missing required field");
    seen_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key) { return as_number(at(key), child(key)); }
  double number(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
  }
  int integer(const std::string& key) { return as_int(at(key), child(key)); }
  int integer(const std::string& key, int fallback) { return has(key) ? integer(key) : fallback; }
  std::string text(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_string()) throw ParseError(child(key), "expected a string");
    return v.get<std::string>();
  }
  std::string text(const std::string& key, const std::string& fallback) {
    return has(key) ? text(key) : fallback;
  }
  const Json& array(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_array()) throw ParseError(child(key), "expected an array");
    return v;
  }
  std::vector<double> numbers(const std::string& key) {
    const auto& v = array(key);
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      out.push_back(as_number(v[i], child(key) + "[" + std::to_string(i) + "]"));
    }
    return out;
  }

  /// Rejects keys that were never read.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ParseError(child(it.key()), "unknown field");
    }
  }

  static double as_number(const Json& v, const std::string& where) {
    if (!v.is_number()) throw ParseError(where, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ParseError(where, "non-finite number");
    return d;
  }
  static int as_int(const Json& v, const std::string& where) {
    if (!v.is_number_integer()) throw ParseError(where, "expected an integer");
    return v.get<int>();
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::string item(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

inline BusKind parse_kind(const std::string& s, const std::string& where) {
  if (s == "slack") return BusKind::slack;
  if (s == "pv") return BusKind::pv;
  if (s == "pq") return BusKind::pq;
  if (s == "pcc") return BusKind::pcc;
  throw ParseError(where, "unknown bus kind '" + s + "'");
}

inline const char* kind_name(BusKind k) {
  switch (k) {
    case BusKind::slack: return "slack";
    case BusKind::pv: return "pv";
    case BusKind::pq: return "pq";
    case BusKind::pcc: return "pcc";
  }
  return "?";
}

inline Bus read_bus(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  Bus b;
  b.id = r.integer("id");
  b.kind = parse_kind(r.text("kind"), r.child("kind"));
  b.v_min = r.number("v_min", b.v_min);
  b.v_max = r.number("v_max", b.v_max);
  b.theta_min = r.number("theta_min", b.theta_min);
  b.theta_max = r.number("theta_max", b.theta_max);
  b.base_kv = r.number("base_kv", b.base_kv);
  b.v_set = r.number("v_set", b.v_set);
  b.g_shunt = r.number("g_shunt", b.g_shunt);
  b.b_shunt = r.number("b_shunt", b.b_shunt);
  r.finish();
  return b;
}

inline Json write_bus(const Bus& b) {
  return Json{{"id", b.id},           {"kind", kind_name(b.kind)}, {"v_min", b.v_min},
              {"v_max", b.v_max},     {"theta_min", b.theta_min},  {"theta_max", b.theta_max},
              {"base_kv", b.base_kv}, {"v_set", b.v_set},          {"g_shunt", b.g_shunt},
              {"b_shunt", b.b_shunt}};
}

inline Branch read_branch(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  Branch b;
  b.id = r.integer("id");
  b.from_bus = r.integer("from_bus");
  b.to_bus = r.integer("to_bus");
  b.r = r.number("r");
  b.x = r.number("x");
  b.b_charge = r.number("b_charge", 0.0);
  b.tap = r.number("tap", 1.0);
  b.shift = r.number("shift", 0.0);
  b.rating = r.number("rating", 0.0);
  const std::string st = r.text("status", "closed");
  if (st == "closed") {
    b.status = BranchStatus::closed;
  } else if (st == "open") {
    b.status = BranchStatus::open;
  } else {
    throw ParseError(r.child("status"), "expected 'closed' or 'open'");
  }
  r.finish();
  return b;
}

inline Json write_branch(const Branch& b) {
  return Json{{"id", b.id},       {"from_bus", b.from_bus},
              {"to_bus", b.to_bus}, {"r", b.r},
              {"x", b.x},         {"b_charge", b.b_charge},
              {"tap", b.tap},     {"shift", b.shift},
              {"rating", b.rating}, {"status", b.status == BranchStatus::closed ? "closed" : "open"}};
}

inline Generator read_generator(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  Generator g;
  g.bus = r.integer("bus");
  g.p_min = r.number("p_min");
  g.p_max = r.number("p_max");
  g.q_min = r.number("q_min");
  g.q_max = r.number("q_max");
  g.cost.a = r.number("cost_a", 0.0);
  g.cost.b = r.number("cost_b", 0.0);
  g.cost.c = r.number("cost_c", 0.0);
  g.p_set = r.number("p_set", 0.0);
  r.finish();
  return g;
}

inline Json write_generator(const Generator& g) {
  return Json{{"bus", g.bus},       {"p_min", g.p_min},   {"p_max", g.p_max},
              {"q_min", g.q_min},   {"q_max", g.q_max},   {"cost_a", g.cost.a},
              {"cost_b", g.cost.b}, {"cost_c", g.cost.c}, {"p_set", g.p_set}};
}

inline DgUnit read_dg(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  DgUnit dg;
  dg.generator = read_generator(r.at("generator"), r.child("generator"));
  const auto& cap = r.array("capability");
  for (std::size_t i = 0; i < cap.size(); ++i) {
    ObjectReader h(cap[i], item(r.child("capability"), i));
    dg.capability.push_back({h.number("alpha"), h.number("beta"), h.number("delta")});
    h.finish();
  }
  if (r.has("s_max")) {
    const auto& s = r.at("s_max");
    if (!s.is_null()) dg.s_max = ObjectReader::as_number(s, r.child("s_max"));
  }
  r.finish();
  return dg;
}

inline Json write_dg(const DgUnit& dg) {
  Json cap = Json::array();
  for (const auto& h : dg.capability) {
    cap.push_back(Json{{"alpha", h.alpha}, {"beta", h.beta}, {"delta", h.delta}});
  }
  return Json{{"generator", write_generator(dg.generator)},
              {"capability", cap},
              {"s_max", dg.s_max ? Json(*dg.s_max) : Json(nullptr)}};
}

inline NetworkData read_network_data(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  NetworkData d;
  d.name = r.text("name");
  d.base_mva = r.number("base_mva");
  const auto& buses = r.array("buses");
  for (std::size_t i = 0; i < buses.size(); ++i) {
    d.buses.push_back(read_bus(buses[i], item(r.child("buses"), i)));
  }
  const auto& branches = r.array("branches");
  for (std::size_t i = 0; i < branches.size(); ++i) {
    d.branches.push_back(read_branch(branches[i], item(r.child("branches"), i)));
  }
  const auto& gens = r.array("generators");
  for (std::size_t i = 0; i < gens.size(); ++i) {
    d.generators.push_back(read_generator(gens[i], item(r.child("generators"), i)));
  }
  const auto& dgs = r.array("dgs");
  for (std::size_t i = 0; i < dgs.size(); ++i) {
    d.dgs.push_back(read_dg(dgs[i], item(r.child("dgs"), i)));
  }
  const auto& loads = r.array("loads");
  for (std::size_t i = 0; i < loads.size(); ++i) {
    ObjectReader l(loads[i], item(r.child("loads"), i));
    d.loads.push_back({l.integer("bus"), l.number("p_d"), l.number("q_d")});
    l.finish();
  }
  r.finish();
  return d;
}

inline Json write_network(const NetworkData& d) {
  Json buses = Json::array(), branches = Json::array(), gens = Json::array(),
       dgs = Json::array(), loads = Json::array();
  for (const auto& b : d.buses) buses.push_back(write_bus(b));
  for (const auto& b : d.branches) branches.push_back(write_branch(b));
  for (const auto& g : d.generators) gens.push_back(write_generator(g));
  for (const auto& g : d.dgs) dgs.push_back(write_dg(g));
  for (const auto& l : d.loads) loads.push_back(Json{{"bus", l.bus}, {"p_d", l.p_d}, {"q_d", l.q_d}});
  return Json{{"name", d.name},   {"base_mva", d.base_mva}, {"buses", buses}, {"branches", branches},
              {"generators", gens}, {"dgs", dgs},           {"loads", loads}};
}

inline PccLink read_link(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  PccLink l;
  l.ts_bus = r.integer("ts_bus");
  l.ds_name = r.text("ds_name");
  l.v_min = r.number("v_min", l.v_min);
  l.v_max = r.number("v_max", l.v_max);
  l.interconnect = read_branch(r.at("interconnect"), r.child("interconnect"));
  r.finish();
  if (!(l.v_min <= l.v_max)) throw SemanticError(path + ": v_min > v_max");
  if (l.interconnect.r == 0.0 && l.interconnect.x == 0.0) {
    throw SemanticError(path + ": interconnect has zero impedance");
  }
  return l;
}

inline Json write_link(const PccLink& l) {
  return Json{{"ts_bus", l.ts_bus}, {"ds_name", l.ds_name}, {"v_min", l.v_min},
              {"v_max", l.v_max},   {"interconnect", write_branch(l.interconnect)}};
}

inline Json parse_json_text(std::string_view text, const std::string& what) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    // Translate the byte offset into line:column.
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(what + " line " + std::to_string(line) + " column " + std::to_string(col),
                     "malformed JSON");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Configurations

inline SamplingConfig read_sampling_config(const Json& j, const std::string& path = "sampling") {
  detail::ObjectReader r(j, path);
  SamplingConfig c;
  c.n_bbps = r.integer("n_bbps", c.n_bbps);
  c.n_fds = r.integer("n_fds", c.n_fds);
  c.n_cost = r.integer("n_cost", c.n_cost);
  if (r.has("seed")) {
    const auto& s = r.at("seed");
    if (!s.is_number_unsigned()) throw ParseError(r.child("seed"), "expected a non-negative integer");
    c.seed = s.get<std::uint64_t>();
  }
  c.batch = r.integer("batch", c.batch);
  c.slack_tol = r.number("slack_tol", c.slack_tol);
  r.finish();
  if (c.n_bbps < 0 || c.n_fds < 0 || c.n_cost < 0 || c.batch < 1 || !(c.slack_tol > 0.0)) {
    throw SemanticError(path + ": sample counts must be >= 0, batch >= 1, slack_tol > 0");
  }
  return c;
}

inline Json write_sampling_config(const SamplingConfig& c) {
  return Json{{"n_bbps", c.n_bbps}, {"n_fds", c.n_fds}, {"n_cost", c.n_cost},
              {"seed", c.seed},     {"batch", c.batch}, {"slack_tol", c.slack_tol}};
}

inline VolumetricFitConfig read_fit_config(const Json& j, const std::string& path = "fit") {
  detail::ObjectReader r(j, path);
  VolumetricFitConfig c;
  c.degree = r.integer("degree", c.degree);
  c.gamma_in = r.number("gamma_in", c.gamma_in);
  if (r.has("gamma_out")) c.gamma_out = r.numbers("gamma_out");
  c.c_in = r.number("c_in", c.c_in);
  c.c_bnd = r.number("c_bnd", c.c_bnd);
  if (r.has("c_out")) c.c_out = r.numbers("c_out");
  r.finish();
  try {
    c.validate();
  } catch (const PreconditionError& e) {
    throw SemanticError(path + ": " + e.what());
  }
  return c;
}

inline Json write_fit_config(const VolumetricFitConfig& c) {
  return Json{{"degree", c.degree}, {"gamma_in", c.gamma_in}, {"gamma_out", c.gamma_out},
              {"c_in", c.c_in},     {"c_bnd", c.c_bnd},       {"c_out", c.c_out}};
}

inline BenchmarkConfig read_benchmark_config(const Json& j, const std::string& path = "benchmark") {
  detail::ObjectReader r(j, path);
  BenchmarkConfig c;
  c.trials = r.integer("trials", c.trials);
  if (r.has("seed")) {
    const auto& s = r.at("seed");
    if (!s.is_number_unsigned()) throw ParseError(r.child("seed"), "expected a non-negative integer");
    c.seed = s.get<std::uint64_t>();
  }
  c.b_jitter_lo = r.number("b_jitter_lo", c.b_jitter_lo);
  c.b_jitter_hi = r.number("b_jitter_hi", c.b_jitter_hi);
  r.finish();
  if (c.trials < 0 || !(c.b_jitter_lo <= c.b_jitter_hi)) {
    throw SemanticError(path + ": trials must be >= 0 and b_jitter_lo <= b_jitter_hi");
  }
  return c;
}

inline Json write_benchmark_config(const BenchmarkConfig& c) {
  return Json{{"trials", c.trials},
              {"seed", c.seed},
              {"b_jitter_lo", c.b_jitter_lo},
              {"b_jitter_hi", c.b_jitter_hi}};
}

// ---------------------------------------------------------------------------
// Native case documents

/// Parses a native case document. Schema problems raise ParseError with a
/// field path; violated network invariants raise SemanticError.
inline CaseDocument parse_case(std::string_view text) {
  const Json j = detail::parse_json_text(text, "case");
  detail::ObjectReader r(j, "$");
  CaseDocument doc;
  doc.format_version = r.text("format_version");
  if (doc.format_version != kCaseFormat) {
    throw ParseError("$.format_version", "unsupported version '" + doc.format_version + "'");
  }
  NetworkData data = detail::read_network_data(r.at("network"), "$.network");
  if (r.has("pcc_links")) {
    const auto& links = r.array("pcc_links");
    for (std::size_t i = 0; i < links.size(); ++i) {
      doc.pcc_links.push_back(detail::read_link(links[i], detail::item("$.pcc_links", i)));
    }
  }
  if (r.has("sampling")) doc.sampling = read_sampling_config(r.at("sampling"), "$.sampling");
  if (r.has("fit")) doc.fit = read_fit_config(r.at("fit"), "$.fit");
  if (r.has("benchmark")) doc.benchmark = read_benchmark_config(r.at("benchmark"), "$.benchmark");
  r.finish();
  try {
    doc.network = Network(std::move(data));
  } catch (const SemanticError&) {
    throw;
  } catch (const Error& e) {
    throw SemanticError(e.what());
  }
  // A link whose ds_name is not this network describes a DS attached to this
  // network (a TS), so its PCC bus must exist here and be empty.
  for (const auto& l : doc.pcc_links) {
    if (l.ds_name == doc.network.name()) continue;
    if (!doc.network.has_bus(l.ts_bus)) {
      throw SemanticError("PCC link to " + l.ds_name + " references unknown bus " +
                          std::to_string(l.ts_bus));
    }
    if (!doc.network.is_empty_bus(l.ts_bus)) {
      throw SemanticError("PCC not empty: bus " + std::to_string(l.ts_bus) +
                          " hosts a load or generator");
    }
  }
  return doc;
}

inline std::string serialize_case(const CaseDocument& doc) {
  Json j;
  j["format_version"] = doc.format_version;
  j["network"] = detail::write_network(doc.network.data());
  Json links = Json::array();
  for (const auto& l : doc.pcc_links) links.push_back(detail::write_link(l));
  j["pcc_links"] = links;
  if (doc.sampling) j["sampling"] = write_sampling_config(*doc.sampling);
  if (doc.fit) j["fit"] = write_fit_config(*doc.fit);
  if (doc.benchmark) j["benchmark"] = write_benchmark_config(*doc.benchmark);
  return j.dump(2) + "\n";
}

/// Copy of `net` with the listed branches closed.
inline Network close_normally_open(const Network& net, const std::vector<int>& branch_ids) {
  NetworkData d = net.data();
  for (int id : branch_ids) {
    auto it = std::find_if(d.branches.begin(), d.branches.end(),
                           [id](const Branch& b) { return b.id == id; });
    if (it == d.branches.end()) throw StructuralError("unknown branch id " + std::to_string(id));
    it->status = BranchStatus::closed;
  }
  return Network(std::move(d));
}

/// Ids of all open branches.
inline std::vector<int> open_branch_ids(const Network& net) {
  std::vector<int> out;
  for (const auto& b : net.branches()) {
    if (b.status == BranchStatus::open) out.push_back(b.id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// MATPOWER import

namespace detail {

struct MatrixBlock {
  std::vector<std::vector<double>> rows;
  std::vector<int> lines;
};

inline double parse_matpower_number(const std::string& tok, const std::string& where) {
  if (tok == "Inf" || tok == "inf") return std::numeric_limits<double>::infinity();
  if (tok == "-Inf" || tok == "-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end != tok.c_str() + tok.size()) {
    throw ParseError(where, "not a number: '" + tok + "'");
  }
  return v;
}

inline std::string strip_comments(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool comment = false;
  for (char c : text) {
    if (c == '%') comment = true;
    if (c == '\n') comment = false;
    if (!comment) out.push_back(c);
  }
  return out;
}

/// Finds `mpc.<name> = [ ... ];` and splits it into numeric rows.
inline std::optional<MatrixBlock> matpower_matrix(const std::string& text, const std::string& name) {
  const std::string key = "mpc." + name;
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    std::size_t p = pos + key.size();
    while (p < text.size() && std::isspace(static_cast<unsigned char>(text[p]))) ++p;
    if (p < text.size() && text[p] == '=') break;
    pos = p;
  }
  if (pos == std::string::npos) return std::nullopt;
  const std::size_t open = text.find('[', pos);
  const std::size_t close = text.find(']', open);
  if (open == std::string::npos || close == std::string::npos) {
    throw ParseError(key, "matrix is not enclosed in [ ]");
  }
  int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + open, '\n'));
  MatrixBlock m;
  std::vector<double> row;
  std::string tok;
  auto flush_tok = [&]() {
    if (!tok.empty()) {
      row.push_back(parse_matpower_number(
          tok, key + " row " + std::to_string(m.rows.size() + 1) + " (line " + std::to_string(line) + ")"));
      tok.clear();
    }
  };
  auto flush_row = [&]() {
    flush_tok();
    if (!row.empty()) {
      m.rows.push_back(row);
      m.lines.push_back(line);
      row.clear();
    }
  };
  for (std::size_t i = open + 1; i < close; ++i) {
    const char c = text[i];
    if (c == ';' || c == '\n') {
      flush_row();
      if (c == '\n') ++line;
    } else if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
      flush_tok();
    } else {
      tok.push_back(c);
    }
  }
  flush_row();
  return m;
}

inline std::optional<double> matpower_scalar(const std::string& text, const std::string& name) {
  const std::string key = "mpc." + name;
  const std::size_t pos = text.find(key);
  if (pos == std::string::npos) return std::nullopt;
  const std::size_t eq = text.find('=', pos);
  const std::size_t semi = text.find(';', eq);
  if (eq == std::string::npos || semi == std::string::npos) throw ParseError(key, "malformed assignment");
  std::string tok(text.begin() + eq + 1, text.begin() + semi);
  tok.erase(std::remove_if(tok.begin(), tok.end(), [](unsigned char c) { return std::isspace(c); }),
            tok.end());
  return parse_matpower_number(tok, key);
}

}  // namespace detail

/// Imports a MATPOWER case (bus, gen, branch, gencost; polynomial costs of
/// degree <= 2) into per-unit. Angle-difference limits, rateB/rateC and
/// generator ramping columns are ignored.
inline Network import_matpower(std::string_view raw) {
  const std::string text = detail::strip_comments(raw);
  NetworkData d;
  {
    const std::size_t f = text.find("function");
    d.name = "case";
    if (f != std::string::npos) {
      const std::size_t eq = text.find('=', f);
      std::size_t p = eq + 1;
      while (p < text.size() && std::isspace(static_cast<unsigned char>(text[p]))) ++p;
      std::size_t e = p;
      while (e < text.size() && (std::isalnum(static_cast<unsigned char>(text[e])) || text[e] == '_')) ++e;
      if (e > p) d.name = text.substr(p, e - p);
    }
  }
  const auto base = detail::matpower_scalar(text, "baseMVA");
  if (!base) throw ParseError("mpc.baseMVA", "missing");
  d.base_mva = *base;
  if (!(d.base_mva > 0.0)) throw ParseError("mpc.baseMVA", "must be positive");
  const auto bus = detail::matpower_matrix(text, "bus");
  const auto gen = detail::matpower_matrix(text, "gen");
  const auto branch = detail::matpower_matrix(text, "branch");
  const auto gencost = detail::matpower_matrix(text, "gencost");
  if (!bus) throw ParseError("mpc.bus", "missing");
  if (!gen) throw ParseError("mpc.gen", "missing");
  if (!branch) throw ParseError("mpc.branch", "missing");
  if (!gencost) throw ParseError("mpc.gencost", "missing");
  auto need = [](const detail::MatrixBlock& m, std::size_t i, std::size_t cols, const char* what) {
    if (m.rows[i].size() < cols) {
      throw ParseError(std::string("mpc.") + what + " row " + std::to_string(i + 1),
                       "expected at least " + std::to_string(cols) + " columns, found " +
                           std::to_string(m.rows[i].size()));
    }
  };
  auto as_int = [](double v, const std::string& where) {
    if (v != std::floor(v)) throw ParseError(where, "expected an integer");
    return static_cast<int>(v);
  };
  const double base_mva = d.base_mva;
  for (std::size_t i = 0; i < bus->rows.size(); ++i) {
    need(*bus, i, 13, "bus");
    const auto& r = bus->rows[i];
    const std::string where = "mpc.bus row " + std::to_string(i + 1);
    Bus b;
    b.id = as_int(r[0], where);
    switch (as_int(r[1], where)) {
      case 1: b.kind = BusKind::pq; break;
      case 2: b.kind = BusKind::pv; break;
      case 3: b.kind = BusKind::slack; break;
      case 4: throw UnsupportedFeature(where + ": isolated buses (type 4) are not supported");
      default: throw ParseError(where, "unknown bus type");
    }
    b.g_shunt = r[4] / base_mva;
    b.b_shunt = r[5] / base_mva;
    b.v_set = r[7];
    b.base_kv = r[9];
    b.v_max = r[11];
    b.v_min = r[12];
    d.buses.push_back(b);
    if (r[2] != 0.0 || r[3] != 0.0) d.loads.push_back({b.id, r[2] / base_mva, r[3] / base_mva});
  }
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < gen->rows.size(); ++i) {
    need(*gen, i, 10, "gen");
    const auto& r = gen->rows[i];
    const std::string where = "mpc.gen row " + std::to_string(i + 1);
    if (r[7] <= 0.0) continue;
    Generator g;
    g.bus = as_int(r[0], where);
    g.p_set = r[1] / base_mva;
    g.q_max = r[3] / base_mva;
    g.q_min = r[4] / base_mva;
    g.p_max = r[8] / base_mva;
    g.p_min = r[9] / base_mva;
    for (auto& b : d.buses) {
      if (b.id == g.bus && b.kind != BusKind::pq) b.v_set = r[5];
    }
    d.generators.push_back(g);
    active.push_back(i);
  }
  if (gencost->rows.size() < gen->rows.size()) {
    throw ParseError("mpc.gencost", "fewer rows than mpc.gen");
  }
  for (std::size_t k = 0; k < active.size(); ++k) {
    const std::size_t i = active[k];
    need(*gencost, i, 4, "gencost");
    const auto& r = gencost->rows[i];
    const std::string where = "mpc.gencost row " + std::to_string(i + 1);
    const int model = as_int(r[0], where);
    if (model == 1) throw UnsupportedFeature(where + ": piecewise-linear costs are not supported");
    if (model != 2) throw ParseError(where, "unknown cost model");
    const int n = as_int(r[3], where);
    if (n > 3) throw UnsupportedFeature(where + ": polynomial costs above degree 2 are not supported");
    if (n < 0 || r.size() < 4 + static_cast<std::size_t>(n)) {
      throw ParseError(where, "coefficient count does not match row length");
    }
    // Coefficients run from the highest degree down to the constant.
    std::array<double, 3> c{0.0, 0.0, 0.0};  // constant, linear, quadratic
    for (int t = 0; t < n; ++t) c[n - 1 - t] = r[4 + t];
    d.generators[k].cost = {c[2] * base_mva * base_mva, c[1] * base_mva, c[0]};
  }
  for (std::size_t i = 0; i < branch->rows.size(); ++i) {
    need(*branch, i, 11, "branch");
    const auto& r = branch->rows[i];
    const std::string where = "mpc.branch row " + std::to_string(i + 1);
    Branch b;
    b.id = static_cast<int>(i + 1);
    b.from_bus = as_int(r[0], where);
    b.to_bus = as_int(r[1], where);
    b.r = r[2];
    b.x = r[3];
    b.b_charge = r[4];
    b.rating = r[5] / base_mva;
    b.tap = r[8] == 0.0 ? 1.0 : r[8];
    b.shift = r[9] * std::numbers::pi / 180.0;
    b.status = r[10] > 0.0 ? BranchStatus::closed : BranchStatus::open;
    d.branches.push_back(b);
  }
  return Network(std::move(d));
}

// ---------------------------------------------------------------------------
// Datasets

enum class DatasetKind { boundary, cost };

/// Boundary or cost samples in (MW, MVAr, p.u.[, currency/h]).
struct DatasetFile {
  DatasetKind kind = DatasetKind::boundary;
  std::vector<CouplingPoint> points;
  std::vector<SampleSource> sources;  // boundary only
  std::vector<double> costs;          // cost only
  std::string generator;
  std::uint64_t seed = 0;

  bool operator==(const DatasetFile&) const = default;
};

inline std::string write_dataset(const DatasetFile& d) {
  const bool cost = d.kind == DatasetKind::cost;
  if (cost ? d.costs.size() != d.points.size() : d.sources.size() != d.points.size()) {
    throw PreconditionError("dataset columns differ in length");
  }
  std::string s = cost ? "p_MW,q_MVAr,v_pu,cost" : "p_MW,q_MVAr,v_pu,source";
  s += std::string(" # kind=") + (cost ? "cost" : "boundary") + " seed=" + std::to_string(d.seed) +
       " generator=" + (d.generator.empty() ? "unknown" : d.generator) + "\n";
  for (std::size_t i = 0; i < d.points.size(); ++i) {
    const auto& x = d.points[i];
    for (double v : {x.p, x.q, x.v}) {
      if (!std::isfinite(v)) throw PreconditionError("dataset holds a non-finite value");
    }
    s += detail::fmt17(x.p) + "," + detail::fmt17(x.q) + "," + detail::fmt17(x.v) + ",";
    if (cost) {
      if (!std::isfinite(d.costs[i])) throw PreconditionError("dataset holds a non-finite cost");
      s += detail::fmt17(d.costs[i]);
    } else {
      s += to_string(d.sources[i]);
    }
    s += "\n";
  }
  return s;
}

inline DatasetFile read_dataset(std::string_view text) {
  DatasetFile d;
  std::istringstream in{std::string(text)};
  std::string header;
  if (!std::getline(in, header)) throw ParseError("header", "empty dataset");
  const auto hash = header.find(" # ");
  if (hash == std::string::npos) throw ParseError("header", "missing '# kind=... seed=...' metadata");
  const std::string columns = header.substr(0, hash);
  std::istringstream meta(header.substr(hash + 3));
  std::string field, kind;
  bool have_seed = false;
  while (meta >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw ParseError("header", "malformed metadata '" + field + "'");
    const std::string k = field.substr(0, eq), v = field.substr(eq + 1);
    if (k == "kind") {
      kind = v;
    } else if (k == "seed") {
      char* end = nullptr;
      d.seed = std::strtoull(v.c_str(), &end, 10);
      if (v.empty() || *end != '\0') throw ParseError("header", "malformed seed");
      have_seed = true;
    } else if (k == "generator") {
      d.generator = v;
    } else {
      throw ParseError("header", "unknown metadata key '" + k + "'");
    }
  }
  if (!have_seed) throw ParseError("header", "missing seed");
  if (kind == "boundary") {
    d.kind = DatasetKind::boundary;
    if (columns != "p_MW,q_MVAr,v_pu,source") {
      throw ParseError("header", "kind mismatch: boundary files need columns p_MW,q_MVAr,v_pu,source");
    }
  } else if (kind == "cost") {
    d.kind = DatasetKind::cost;
    if (columns != "p_MW,q_MVAr,v_pu,cost") {
      throw ParseError("header", "kind mismatch: cost files need columns p_MW,q_MVAr,v_pu,cost");
    }
  } else {
    throw ParseError("header", "unknown dataset kind '" + kind + "'");
  }
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const std::string where = "row " + std::to_string(row);
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != 4) throw ParseError(where, "expected 4 columns");
    auto num = [&](const std::string& c) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (c.empty() || *end != '\0') throw ParseError(where, "not a number: '" + c + "'");
      if (!std::isfinite(v)) throw ParseError(where, "non-finite value");
      return v;
    };
    d.points.push_back({num(cells[0]), num(cells[1]), num(cells[2])});
    if (d.kind == DatasetKind::cost) {
      d.costs.push_back(num(cells[3]));
    } else if (cells[3] == "bbps") {
      d.sources.push_back(SampleSource::bbps);
    } else if (cells[3] == "fds") {
      d.sources.push_back(SampleSource::fds);
    } else {
      throw ParseError(where, "unknown source tag '" + cells[3] + "'");
    }
  }
  return d;
}

inline Eigen::MatrixXd dataset_matrix(const DatasetFile& d) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(d.points.size()), 3);
  for (std::size_t i = 0; i < d.points.size(); ++i) {
    m(i, 0) = d.points[i].p;
    m(i, 1) = d.points[i].q;
    m(i, 2) = d.points[i].v;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Models, boxes and bundles

namespace detail {

inline Json triple(const std::array<double, 3>& a) { return Json::array({a[0], a[1], a[2]}); }

inline std::array<double, 3> read_triple(detail::ObjectReader& r, const std::string& key) {
  const auto v = r.numbers(key);
  if (v.size() != 3) throw ParseError(r.child(key), "expected 3 numbers");
  return {v[0], v[1], v[2]};
}

inline Json write_normalization(const Normalization& n) {
  return Json{{"mean", triple(n.mean)}, {"std", triple(n.std)}};
}

inline Normalization read_normalization(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  Normalization n;
  n.mean = read_triple(r, "mean");
  n.std = read_triple(r, "std");
  r.finish();
  for (double s : n.std) {
    if (!(s > 0.0)) throw SemanticError(path + ": std entries must be positive");
  }
  return n;
}

}  // namespace detail

inline Json write_box(const BoundingBox& b) {
  return Json{{"min", detail::triple(b.min())}, {"max", detail::triple(b.max())}};
}

inline BoundingBox read_box(const Json& j, const std::string& path = "box") {
  detail::ObjectReader r(j, path);
  const auto lo = detail::read_triple(r, "min");
  const auto hi = detail::read_triple(r, "max");
  r.finish();
  for (int a = 0; a < 3; ++a) {
    if (!(lo[a] <= hi[a])) throw SemanticError(path + ": min exceeds max");
  }
  return {{lo[0], lo[1], lo[2]}, {hi[0], hi[1], hi[2]}};
}

inline Json write_model(const ImplicitPolynomial& m) {
  return Json{{"kind", "for"},
              {"degree", m.map.degree()},
              {"sigma_order", "grlex"},
              {"coeffs", std::vector<double>(m.coeffs.data(), m.coeffs.data() + m.coeffs.size())},
              {"normalization", detail::write_normalization(m.normalization)},
              {"domain", write_box(m.domain)}};
}

inline Json write_model(const CostModel& m) {
  return Json{{"kind", "cost"},
              {"degree", 2},
              {"sigma_order", "grlex"},
              {"coeffs", std::vector<double>(m.coeffs.data(), m.coeffs.data() + m.coeffs.size())},
              {"normalization", detail::write_normalization(m.normalization)},
              {"domain", write_box(m.domain)},
              {"offset", m.offset},
              {"scale", m.scale}};
}

namespace detail {

struct ModelFields {
  std::string kind;
  int degree = 0;
  Eigen::VectorXd coeffs;
  Normalization normalization;
  BoundingBox domain;
  double offset = 0.0, scale = 1.0;
};

inline ModelFields read_model_fields(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  ModelFields f;
  f.kind = r.text("kind");
  if (f.kind != "for" && f.kind != "cost") throw ParseError(r.child("kind"), "expected 'for' or 'cost'");
  f.degree = r.integer("degree");
  if (f.degree < 0 || f.degree > 30) throw ParseError(r.child("degree"), "degree out of range");
  if (r.text("sigma_order") != "grlex") throw ParseError(r.child("sigma_order"), "only 'grlex' is supported");
  const auto c = r.numbers("coeffs");
  if (static_cast<long long>(c.size()) != MonomialIndexMap::count(f.degree)) {
    throw SemanticError(path + ": coefficient count does not match degree");
  }
  f.coeffs = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
  f.normalization = read_normalization(r.at("normalization"), r.child("normalization"));
  f.domain = read_box(r.at("domain"), r.child("domain"));
  if (f.kind == "cost") {
    if (f.degree != 2) throw SemanticError(path + ": cost models have degree 2");
    f.offset = r.number("offset", 0.0);
    f.scale = r.number("scale", 1.0);
  }
  r.finish();
  return f;
}

}  // namespace detail

inline ImplicitPolynomial read_for_model(const Json& j, const std::string& path = "model") {
  auto f = detail::read_model_fields(j, path);
  if (f.kind != "for") throw SemanticError(path + ": expected a FOR model");
  ImplicitPolynomial m;
  m.map = MonomialIndexMap(f.degree);
  m.coeffs = f.coeffs;
  m.normalization = f.normalization;
  m.domain = f.domain;
  return m;
}

inline CostModel read_cost_model(const Json& j, const std::string& path = "model") {
  auto f = detail::read_model_fields(j, path);
  if (f.kind != "cost") throw SemanticError(path + ": expected a cost model");
  CostModel m;
  m.coeffs = f.coeffs;
  m.normalization = f.normalization;
  m.domain = f.domain;
  m.offset = f.offset;
  m.scale = f.scale;
  return m;
}

inline Json write_bundle(const DsModelBundle& b) {
  return Json{{"ds_name", b.ds_name},
              {"pcc", detail::write_link(b.pcc)},
              {"box", write_box(b.box)},
              {"for_model", write_model(b.for_model)},
              {"cost_model", write_model(b.cost_model)}};
}

inline DsModelBundle read_bundle(const Json& j, const std::string& path = "bundle") {
  detail::ObjectReader r(j, path);
  DsModelBundle b;
  b.ds_name = r.text("ds_name");
  b.pcc = detail::read_link(r.at("pcc"), r.child("pcc"));
  b.box = read_box(r.at("box"), r.child("box"));
  b.for_model = read_for_model(r.at("for_model"), r.child("for_model"));
  b.cost_model = read_cost_model(r.at("cost_model"), r.child("cost_model"));
  r.finish();
  return b;
}

/// Parses any JSON text with line/column diagnostics.
inline Json parse_json(std::string_view text, const std::string& what = "json") {
  return detail::parse_json_text(text, what);
}

/// Loads a network from either a native case (.json) or a MATPOWER file.
inline CaseDocument load_case_text(std::string_view text, bool matpower) {
  if (!matpower) return parse_case(text);
  CaseDocument doc;
  doc.network = import_matpower(text);
  return doc;
}

}  // namespace flexfor
