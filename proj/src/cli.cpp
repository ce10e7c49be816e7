#include "feller/cli.hpp"

#include <CLI11.hpp>
#include <toml.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "feller/analytics.hpp"
#include "feller/errors.hpp"
#include "feller/experiment.hpp"
#include "feller/io.hpp"
#include "feller/parallel.hpp"
#include "feller/riccati.hpp"
#include "feller/simulator.hpp"

namespace feller::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {


void check_keys(const toml::table& tbl, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  for (auto&& [key, node] : tbl) {
    (void)node;
    if (std::find(allowed.begin(), allowed.end(), key.str()) == allowed.end()) {
      throw ValidationError("unknown key '" + std::string(key.str()) + "' in " + where);
    }
  }
}

template <class T>
std::optional<T> get(const toml::table& tbl, std::string_view key, const std::string& where) {
  const toml::node* node = tbl.get(key);
  if (node == nullptr) return std::nullopt;
  if constexpr (std::is_same_v<T, bool>) {
    if (auto v = node->value_exact<bool>()) return *v;
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (auto v = node->value_exact<std::string>()) return *v;
  } else if constexpr (std::is_integral_v<T>) {
    if (auto v = node->value_exact<std::int64_t>()) {
      if (*v < 0) throw ValidationError(where + "." + std::string(key) + " must be >= 0");
      return static_cast<T>(*v);
    }
  } else {
    if (auto v = node->value<double>()) return *v;
  }
  throw ValidationError(where + "." + std::string(key) + " has the wrong type");
}

template <class T>
T require(const toml::table& tbl, std::string_view key, const std::string& where) {
  auto v = get<T>(tbl, key, where);
  if (!v) throw ValidationError(where + " needs '" + std::string(key) + "'");
  return *v;
}

std::vector<double> get_list(const toml::table& tbl, std::string_view key, const std::string& where) {
  const toml::node* node = tbl.get(key);
  if (node == nullptr) return {};
  std::vector<double> out;
  if (const auto* arr = node->as_array()) {
    for (const auto& el : *arr) {
      auto v = el.value<double>();
      if (!v) throw ValidationError(where + "." + std::string(key) + " must hold numbers");
      out.push_back(*v);
    }
    return out;
  }
  if (auto v = node->value<double>()) return {*v};
  throw ValidationError(where + "." + std::string(key) + " must be a number or list");
}

const toml::table* get_table(const toml::table& tbl, std::string_view key) {
  const toml::node* node = tbl.get(key);
  if (node == nullptr) return nullptr;
  const auto* t = node->as_table();
  if (t == nullptr) throw ValidationError("'" + std::string(key) + "' must be a table");
  return t;
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

KernelSpec parse_kernel(const toml::table& t, const std::string& where, const fs::path& base) {
  const auto type = require<std::string>(t, "type", where);
  KernelSpec spec;
  if (type == "exponential") {
    check_keys(t, {"type", "rate"}, where);
    spec = Exponential{get<double>(t, "rate", where).value_or(1.0)};
  } else if (type == "mittag_leffler") {
    check_keys(t, {"type", "alpha", "scale"}, where);
    spec = MittagLeffler{require<double>(t, "alpha", where), get<double>(t, "scale", where).value_or(1.0)};
  } else if (type == "deterministic") {
    check_keys(t, {"type", "location"}, where);
    spec = Deterministic{require<double>(t, "location", where)};
  } else if (type == "pareto") {
    check_keys(t, {"type", "tail_index", "x_min"}, where);
    spec = Pareto{require<double>(t, "tail_index", where), get<double>(t, "x_min", where).value_or(1.0)};
  } else if (type == "empirical") {
    check_keys(t, {"type", "path"}, where);
    spec = Empirical{io::read_measure(resolve(require<std::string>(t, "path", where), base))};
  } else if (type == "gid") {
    check_keys(t, {"type", "drift", "jumps"}, where);
    spec = GidTriplet{get<double>(t, "drift", where).value_or(0.0),
                      io::read_measure(resolve(require<std::string>(t, "jumps", where), base))};
  } else {
    throw ValidationError(where + ": unknown kernel type '" + type + "'");
  }
  validate(spec);
  return spec;
}

void require_times(const std::vector<double>& ts, double horizon, const std::string& where) {
  for (double t : ts) {
    if (!(t >= 0.0 && t <= horizon)) {
      throw ValidationError(where + ": evaluation times must lie in [0, horizon]");
    }
  }
}


class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - start_).count();
    start_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::string fmt(double v) { return io::format_double(v); }

struct Context {
  const ExperimentConfig& cfg;
  fs::path out;
  std::uint64_t seed;
  std::size_t threads;
  Report report;

  Context(const ExperimentConfig& c, const RunOptions& opts, std::string command) : cfg(c) {
    seed = opts.seed.value_or(c.seed);
    threads = opts.threads.value_or(c.threads.value_or(default_threads()));
    if (threads == 0) threads = default_threads();
    out = opts.out_dir;
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) {
      throw Error("cannot create output directory " + out.string());
    }
    ExperimentConfig hashed = c;
    hashed.seed = seed;
    report.command = std::move(command);
    report.config_hash = config_hash(hashed);
    report.seed = seed;
  }

  void write(const std::string& name, const std::string& text) {
    io::write_text(out / name, text);
    report.outputs.push_back(name);
  }

  void verdict(std::string name, double value, double tol, std::string detail = {}) {
    report.verdicts.push_back(Verdict{std::move(name), value <= tol, value, tol, std::move(detail)});
  }
};


double sup_gap(const GridFunction& a, const GridFunction& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::fabs(a[k] - b[k]));
  return m;
}

std::optional<std::size_t> exact_index(const Grid& g, double t) {
  const std::size_t k = g.floor_index(t);
  if (std::fabs(g.time(k) - t) <= 1e-9 * std::max(1.0, t)) return k;
  if (k + 1 < g.size() && std::fabs(g.time(k + 1) - t) <= 1e-9 * std::max(1.0, t)) return k + 1;
  return std::nullopt;
}

std::size_t index_of(const Grid& g, double t, const std::string& where) {
  const auto k = exact_index(g, t);
  if (!k) throw ValidationError(where + ": time " + fmt(t) + " is not a grid point");
  return *k;
}

}  // namespace


GridFunction make_f(const FShape& s, const Grid& grid) {
  if (s.shape == "constant") return GridFunction::constant(grid, s.c);
  if (!(s.width > 0.0)) throw ValidationError("f.width must be > 0");
  if (s.shape == "ramp") {
    return GridFunction::from(grid, [=](double t) { return s.c * std::min(t / s.width, 1.0); });
  }
  if (s.shape == "negative_bump") {
    if (s.depth < 0.0) throw ValidationError("f.depth must be >= 0");
    return GridFunction::from(grid, [=](double t) {
      const double z = (t - s.center) / s.width;
      return -s.depth * std::exp(-0.5 * z * z);
    });
  }
  throw ValidationError("unknown f shape '" + s.shape + "'");
}

ExperimentConfig parse_config(std::string_view text, const fs::path& base) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config parse error: " << e.description() << " at line " << e.source().begin.line;
    throw ValidationError(os.str());
  }
  check_keys(root,
             {"seed", "horizon", "dt", "replications", "eps", "a", "threads", "output_dir", "kernel",
              "kernels", "rho", "background", "f", "simulate", "riccati", "cumulants", "covariance",
              "verify"},
             "config");
  ExperimentConfig cfg;
  cfg.source_text = std::string(text);
  const std::string top = "config";
  cfg.seed = get<std::uint64_t>(root, "seed", top).value_or(0);
  cfg.horizon = require<double>(root, "horizon", top);
  cfg.dt = require<double>(root, "dt", top);
  cfg.replications = get<std::size_t>(root, "replications", top).value_or(1);
  cfg.eps = get_list(root, "eps", top);
  cfg.a = get<double>(root, "a", top);
  cfg.threads = get<std::size_t>(root, "threads", top);
  cfg.output_dir = get<std::string>(root, "output_dir", top);

  if (!(cfg.horizon > 0.0) || !(cfg.dt > 0.0) || !std::isfinite(cfg.horizon)) {
    throw ValidationError("horizon and dt must be > 0");
  }
  const double cells = cfg.horizon / cfg.dt;
  if (std::fabs(cells - std::round(cells)) > 1e-9 * std::max(1.0, cells)) {
    throw ValidationError("dt must divide horizon");
  }
  if (cfg.replications < 1) throw ValidationError("replications must be >= 1");
  for (double e : cfg.eps) {
    if (!(e > 0.0 && e < 1.0)) throw ValidationError("eps values must lie in (0, 1)");
  }
  if (cfg.a && !(*cfg.a > 0.0 && *cfg.a < 1.0)) throw ValidationError("a must lie in (0, 1)");
  if (cfg.a && !cfg.eps.empty()) throw ValidationError("give either a or eps, not both");

  if (const auto* k = get_table(root, "kernel")) {
    cfg.kernels.push_back(parse_kernel(*k, "kernel", base));
  }
  if (const toml::node* ks = root.get("kernels")) {
    if (!cfg.kernels.empty()) throw ValidationError("give either [kernel] or [[kernels]], not both");
    const auto* arr = ks->as_array();
    if (arr == nullptr) throw ValidationError("kernels must be an array of tables");
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto* t = (*arr)[i].as_table();
      if (t == nullptr) throw ValidationError("kernels must be an array of tables");
      cfg.kernels.push_back(parse_kernel(*t, "kernels[" + std::to_string(i) + "]", base));
    }
  }
  if (cfg.kernels.empty()) throw ValidationError("config needs [kernel] or [[kernels]]");
  if (const auto* r = get_table(root, "rho")) cfg.rho = parse_kernel(*r, "rho", base);

  if (const auto* b = get_table(root, "background")) {
    check_keys(*b, {"type", "intensity", "path"}, "background");
    cfg.background.type = get<std::string>(*b, "type", "background").value_or("lebesgue");
    cfg.background.intensity = get<double>(*b, "intensity", "background").value_or(1.0);
    if (auto p = get<std::string>(*b, "path", "background")) cfg.background.path = resolve(*p, base);
    if (cfg.background.type != "lebesgue" && cfg.background.type != "file") {
      throw ValidationError("background.type must be lebesgue or file");
    }
    if (cfg.background.type == "file" && cfg.background.path.empty()) {
      throw ValidationError("background.type = file needs a path");
    }
    if (!(cfg.background.intensity >= 0.0)) throw ValidationError("background.intensity must be >= 0");
  }

  if (const auto* f = get_table(root, "f")) {
    check_keys(*f, {"shape", "c", "width", "center", "depth"}, "f");
    cfg.f.shape = get<std::string>(*f, "shape", "f").value_or("constant");
    cfg.f.c = get<double>(*f, "c", "f").value_or(0.0);
    cfg.f.width = get<double>(*f, "width", "f").value_or(1.0);
    cfg.f.center = get<double>(*f, "center", "f").value_or(0.0);
    cfg.f.depth = get<double>(*f, "depth", "f").value_or(0.0);
    make_f(cfg.f, Grid(1.0, 0.5));  // shape and parameter validation
  }

  if (const auto* s = get_table(root, "simulate")) {
    check_keys(*s, {"t", "write_points"}, "simulate");
    cfg.simulate_t = get_list(*s, "t", "simulate");
    cfg.write_points = get<bool>(*s, "write_points", "simulate").value_or(true);
  }
  if (cfg.simulate_t.empty()) cfg.simulate_t = {cfg.horizon};
  require_times(cfg.simulate_t, cfg.horizon, "simulate.t");

  if (const auto* r = get_table(root, "riccati")) {
    check_keys(*r, {"methods", "window", "picard_tol", "n_terms", "gap_tol"}, "riccati");
    if (const toml::node* m = r->get("methods")) {
      const auto* arr = m->as_array();
      if (arr == nullptr) throw ValidationError("riccati.methods must be a list of strings");
      cfg.methods.clear();
      for (const auto& el : *arr) {
        auto v = el.value_exact<std::string>();
        if (!v) throw ValidationError("riccati.methods must be a list of strings");
        if (*v != "marching" && *v != "picard" && *v != "series" && *v != "dough") {
          throw ValidationError("unknown riccati method '" + *v + "'");
        }
        cfg.methods.push_back(*v);
      }
    }
    cfg.window = get<double>(*r, "window", "riccati").value_or(cfg.window);
    cfg.picard_tol = get<double>(*r, "picard_tol", "riccati").value_or(cfg.picard_tol);
    cfg.n_terms = get<std::size_t>(*r, "n_terms", "riccati").value_or(cfg.n_terms);
    cfg.gap_tol = get<double>(*r, "gap_tol", "riccati").value_or(cfg.gap_tol);
    if (!(cfg.window > 0.0) || !(cfg.picard_tol > 0.0) || cfg.n_terms < 1 || !(cfg.gap_tol > 0.0)) {
      throw ValidationError("riccati window, picard_tol, n_terms and gap_tol must be positive");
    }
  }

  if (const auto* c = get_table(root, "cumulants")) {
    check_keys(*c, {"n_max", "t", "moments"}, "cumulants");
    cfg.n_max = get<std::size_t>(*c, "n_max", "cumulants").value_or(cfg.n_max);
    cfg.cumulant_t = get_list(*c, "t", "cumulants");
    cfg.moments = get<bool>(*c, "moments", "cumulants").value_or(true);
    if (cfg.n_max < 1) throw ValidationError("cumulants.n_max must be >= 1");
  }
  if (cfg.cumulant_t.empty()) cfg.cumulant_t = {cfg.horizon};
  require_times(cfg.cumulant_t, cfg.horizon, "cumulants.t");

  if (const auto* c = get_table(root, "covariance")) {
    check_keys(*c, {"stride", "envelope_r_min", "envelope_gap", "envelope_c_max"}, "covariance");
    cfg.stride = get<std::size_t>(*c, "stride", "covariance").value_or(cfg.stride);
    cfg.envelope_r_min = get<double>(*c, "envelope_r_min", "covariance").value_or(cfg.envelope_r_min);
    cfg.envelope_gap = get<double>(*c, "envelope_gap", "covariance").value_or(cfg.envelope_gap);
    cfg.envelope_c_max = get<double>(*c, "envelope_c_max", "covariance").value_or(cfg.envelope_c_max);
    if (cfg.stride < 1) throw ValidationError("covariance.stride must be >= 1");
  }

  bool explicit_verify_t = false;
  if (const auto* v = get_table(root, "verify")) {
    check_keys(*v, {"t", "rel_tol", "null_cut", "null_threshold"}, "verify");
    if (v->get("t") != nullptr) {
      cfg.verify_t = get_list(*v, "t", "verify");
      explicit_verify_t = true;
    }
    cfg.rel_tol = get<double>(*v, "rel_tol", "verify").value_or(cfg.rel_tol);
    cfg.null_cut = get<double>(*v, "null_cut", "verify").value_or(cfg.null_cut);
    cfg.null_threshold = get<double>(*v, "null_threshold", "verify").value_or(cfg.null_threshold);
  }
  if (!explicit_verify_t) {
    cfg.verify_t.clear();
    for (double t : {1.0, 2.0, 5.0}) {
      if (t <= cfg.horizon) cfg.verify_t.push_back(t);
    }
    if (cfg.verify_t.empty()) cfg.verify_t = {cfg.horizon};
  }
  require_times(cfg.verify_t, cfg.horizon, "verify.t");
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(cfg.source_text + "\nseed=" + std::to_string(cfg.seed))));
  return buf;
}

Grid make_grid(const ExperimentConfig& cfg) { return Grid(cfg.horizon, cfg.dt); }

GridMeasure make_background(const ExperimentConfig& cfg, const Grid& grid) {
  if (cfg.background.type == "lebesgue") return GridMeasure::lebesgue(grid, cfg.background.intensity);
  GridMeasure mu = io::read_measure(cfg.background.path);
  require_same_grid(mu.grid(), grid, "background file");
  if (mu.is_signed()) throw ValidationError("background must be a nonnegative measure");
  return mu;
}

KernelSpec analysis_kernel(const ExperimentConfig& cfg) {
  if (cfg.rho) return *cfg.rho;
  if (auto k = natural_limit_kernel(cfg.kernels)) return *k;
  if (cfg.kernels.size() == 1) return cfg.kernels.front();
  throw ValidationError("no closed-form limit kernel for this family; give [rho]");
}

json to_json(const Report& r) {
  json verdicts = json::array();
  for (const auto& v : r.verdicts) {
    verdicts.push_back({{"name", v.name},
                        {"passed", v.passed},
                        {"value", v.value},
                        {"tolerance", v.tolerance},
                        {"detail", v.detail}});
  }
  json timings = json::object();
  double total = 0.0;
  for (const auto& [stage, s] : r.timings) {
    timings[stage] = s;
    total += s;
  }
  timings["total"] = total;
  json j = {{"schema_version", 1},
            {"command", r.command},
            {"config_hash", r.config_hash},
            {"seed", r.seed},
            {"tables", r.tables},
            {"verdicts", verdicts},
            {"warnings", r.warnings},
            {"outputs", r.outputs},
            {"timings_seconds", timings},
            {"exit_code", exit_code(r)}};
  if (r.refusal) j["refusal"] = *r.refusal;
  return j;
}

int exit_code(const Report& r) {
  if (r.refusal) return kExitRefusal;
  for (const auto& v : r.verdicts) {
    if (!v.passed) return kExitVerification;
  }
  return kExitOk;
}


Report cmd_simulate(const ExperimentConfig& cfg, const RunOptions& opts) {
  Context ctx(cfg, opts, "simulate");
  Stopwatch sw;
  const Grid grid = make_grid(cfg);
  const GridMeasure mu = make_background(cfg, grid);

  struct Run {
    std::string label;
    PrelimitModel model;
  };
  std::vector<Run> runs;
  if (cfg.a) {
    const KernelFamily fam = cfg.kernels.size() == 1 ? KernelFamily(RowConstant{cfg.kernels[0]})
                                                     : KernelFamily(Periodic{cfg.kernels});
    runs.push_back({"a=" + fmt(*cfg.a), PrelimitModel{1.0 - *cfg.a, 1.0, HawkesParams{*cfg.a, fam, mu}}});
  } else {
    if (cfg.eps.empty()) throw ValidationError("simulate needs a or eps");
    for (double e : cfg.eps) runs.push_back({"eps=" + fmt(e), natural_model(cfg.kernels, mu, e)});
  }
  ctx.report.timings.emplace_back("setup", sw.lap());

  std::string counts = "run,label,t,mean,stderr,prediction,gap\n";
  json table = json::array();
  const auto one = GridFunction::constant(grid, 1.0);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& run = runs[i];
    const HawkesParams& p = run.model.params;
    const HawkesSimulator sim(p);
    const std::size_t reps = cfg.replications;
    std::vector<std::vector<double>> n_at(reps, std::vector<double>(cfg.simulate_t.size()));
    std::vector<std::string> point_rows(cfg.write_points ? reps : 0);
    std::vector<std::size_t> totals(reps);
    for_each_replication(sim, reps, ctx.seed, static_cast<std::uint64_t>(i) << 32, ctx.threads,
                         [&](std::size_t r, const PointSample& s) {
                           for (std::size_t j = 0; j < cfg.simulate_t.size(); ++j) {
                             n_at[r][j] = static_cast<double>(count_until(s, cfg.simulate_t[j]));
                           }
                           totals[r] = s.points.size();
                           if (!cfg.write_points) return;
                           std::string& out = point_rows[r];
                           const std::string rep = std::to_string(r);
                           for (const auto& pt : s.points) {
                             out += rep;
                             out += ',';
                             out += fmt(pt.time);
                             out += ',';
                             out += std::to_string(pt.generation);
                             out += ',';
                             out += std::to_string(pt.cluster_id);
                             out += '\n';
                           }
                         });
    ctx.report.timings.emplace_back("simulate " + run.label, sw.lap());
    if (cfg.write_points) {
      std::string text = "replication,time,generation,cluster_id\n";
      for (auto& rows : point_rows) text += rows;
      ctx.write("points_run" + std::to_string(i) + ".csv", text);
    }

    const auto mix = geometric_mixture(p.a, p.family, 0, grid);
    const auto pred = first_moment(one, p.a, mix.rho, p.background);
    json rows = json::array();
    for (std::size_t j = 0; j < cfg.simulate_t.size(); ++j) {
      const double t = cfg.simulate_t[j];
      const auto col = column(n_at, j);
      double mean = 0.0;
      for (double v : col) mean += v;
      mean /= static_cast<double>(reps);
      const double se = reps > 1 ? sample_stats(col).mean_stderr : 0.0;
      const double prediction = pred[grid.floor_index(t)];
      const double gap = std::fabs(mean - prediction);
      counts += std::to_string(i) + ',' + run.label + ',' + fmt(t) + ',' + fmt(mean) + ',' + fmt(se) +
                ',' + fmt(prediction) + ',' + fmt(gap) + '\n';
      rows.push_back({{"t", t}, {"mean", mean}, {"stderr", se}, {"prediction", prediction}, {"gap", gap}});
      const double tol = reps > 1 ? std::max(3.0 * se, 1e-9 * std::max(1.0, prediction))
                                  : std::numeric_limits<double>::infinity();
      ctx.verdict("mean_count " + run.label + " t=" + fmt(t), gap, tol, "tolerance = 3 stderr");
    }
    std::size_t total_points = 0;
    for (auto n : totals) total_points += n;
    table.push_back({{"label", run.label},
                     {"a", p.a},
                     {"kernel_scale", run.model.n},
                     {"total_points", total_points},
                     {"mixture_terms", mix.terms},
                     {"counts", rows}});
    if (reps == 1) ctx.report.warnings.push_back("replications = 1: mean-count verdicts are not informative");
  }
  ctx.write("counts.csv", counts);
  ctx.report.tables["runs"] = table;
  ctx.report.timings.emplace_back("predict", sw.lap());
  return ctx.report;
}


Report cmd_riccati(const ExperimentConfig& cfg, const RunOptions& opts) {
  Context ctx(cfg, opts, "riccati");
  Stopwatch sw;
  const Grid grid = make_grid(cfg);
  const KernelSpec spec = analysis_kernel(cfg);
  const RiccatiProblem prob{make_f(cfg.f, grid), discretize_kernel(spec, grid)};
  validate(prob);
  const double f_sup = sup_norm(prob.f.values());
  ctx.report.tables["kernel"] = describe(spec);
  ctx.report.tables["f_sup"] = f_sup;

  std::vector<RiccatiSolution> sols;
  std::set<std::string> wanted(cfg.methods.begin(), cfg.methods.end());
  try {
    sols.push_back(solve_marching(prob));
  } catch (const BlowUpError& e) {
    ctx.report.refusal = std::string("marching: ") + e.what();
    return ctx.report;
  }
  for (const auto& w : sols.back().warnings) ctx.report.warnings.push_back("marching: " + w);
  json refusals = json::array();
  if (wanted.count("picard")) {
    try {
      sols.push_back(solve_picard(prob, cfg.window, cfg.picard_tol));
    } catch (const NumericalRefusal& e) {
      refusals.push_back({{"method", "picard"}, {"reason", e.what()}});
      ctx.report.refusal = std::string("picard: ") + e.what();
    }
  }
  if (wanted.count("series")) {
    if (f_sup > 0.5) {
      ctx.report.warnings.push_back("series skipped: ||f||_sup = " + fmt(f_sup) + " > 1/2");
      refusals.push_back({{"method", "series"}, {"reason", "||f||_sup > 1/2"}});
    } else {
      auto ser = solve_series(prob, cfg.n_terms);
      if (ser.truncated) {
        ctx.report.warnings.push_back("series truncated: ||K_n_max|| = " + fmt(ser.term_norms.back()));
      }
      sols.push_back(std::move(ser.solution));
    }
  }
  if (wanted.count("dough")) {
    const auto K = solve_dough(convolve(prob.f, prob.rho), prob.rho);
    sols.push_back(RiccatiSolution{K, fixed_point_residual(K, prob), default_tolerance(prob),
                                   RiccatiMethod::kDough, 0, 0, {}});
  }
  ctx.report.timings.emplace_back("solve", sw.lap());

  std::string curves = "t";
  for (const auto& s : sols) curves += "," + to_string(s.method);
  curves += '\n';
  for (std::size_t k = 0; k < grid.size(); ++k) {
    curves += fmt(grid.time(k));
    for (const auto& s : sols) curves += "," + fmt(s.h[k]);
    curves += '\n';
  }
  ctx.write("h.csv", curves);

  std::string summary = "method,residual,tolerance,gap_to_marching,bounds_passed\n";
  json methods = json::array();
  for (const auto& s : sols) {
    const std::string name = to_string(s.method);
    const double gap = sup_gap(s.h, sols.front().h);
    const auto bounds = check_bounds(s, prob);
    summary += name + ',' + fmt(s.residual) + ',' + fmt(s.tolerance) + ',' + fmt(gap) + ',' +
               (bounds.passed ? "1" : "0") + '\n';
    json m = to_json(s);
    m.erase("h");
    m["gap_to_marching"] = gap;
    m["bounds"] = {{"passed", bounds.passed}, {"message", bounds.message}};
    methods.push_back(m);
    ctx.verdict("residual " + name, s.residual, s.tolerance);
    ctx.verdict("bounds " + name, bounds.passed ? 0.0 : 1.0, 0.0, bounds.message);
    if (&s != &sols.front()) ctx.verdict("gap " + name + " vs marching", gap, cfg.gap_tol);
  }
  ctx.write("riccati_summary.csv", summary);
  ctx.report.tables["methods"] = methods;
  ctx.report.tables["refusals"] = refusals;

  // Exponential kernel with constant f: h(t) -> 1 - sqrt(1 - 2c).
  if (std::holds_alternative<Exponential>(spec) && cfg.f.shape == "constant" && cfg.f.c >= 0.0 &&
      cfg.f.c < 0.5) {
    const double target = 1.0 - std::sqrt(1.0 - 2.0 * cfg.f.c);
    const double h_end = sols.front().h[grid.n_cells()];
    ctx.report.tables["stationary"] = {{"t", cfg.horizon}, {"h", h_end}, {"target", target}};
    ctx.verdict("stationary_value", std::fabs(h_end - target), 1e-3,
                "h(T) vs 1 - sqrt(1 - 2c) at T = " + fmt(cfg.horizon));
  }
  ctx.report.timings.emplace_back("report", sw.lap());
  return ctx.report;
}


Report cmd_cumulants(const ExperimentConfig& cfg, const RunOptions& opts) {
  Context ctx(cfg, opts, "cumulants");
  Stopwatch sw;
  const Grid grid = make_grid(cfg);
  const KernelSpec spec = analysis_kernel(cfg);
  const auto f = make_f(cfg.f, grid);
  const auto mu = make_background(cfg, grid);
  const auto rep = cumulants(f, discretize_kernel(spec, grid), mu, cfg.n_max);
  ctx.report.timings.emplace_back("cumulants", sw.lap());
  ctx.write("cumulants.csv", to_csv(rep));
  std::optional<std::vector<GridFunction>> moments;
  if (cfg.moments && cfg.n_max <= 6) {
    moments = moments_from_cumulants(rep.kappa);
    std::string text = "t";
    for (std::size_t n = 1; n <= moments->size(); ++n) text += ",m" + std::to_string(n);
    text += '\n';
    for (std::size_t k = 0; k < grid.size(); ++k) {
      text += fmt(grid.time(k));
      for (const auto& m : *moments) text += "," + fmt(m[k]);
      text += '\n';
    }
    ctx.write("moments.csv", text);
  } else if (cfg.moments) {
    ctx.report.warnings.push_back("moments are only computed for n_max <= 6");
  }
  json at = json::array();
  for (double t : cfg.cumulant_t) {
    const std::size_t k = index_of(grid, t, "cumulants.t");
    json row = {{"t", t}};
    for (std::size_t n = 0; n < rep.kappa.size(); ++n) row["k" + std::to_string(n + 1)] = rep.kappa[n][k];
    if (moments) {
      for (std::size_t n = 0; n < moments->size(); ++n) row["m" + std::to_string(n + 1)] = (*moments)[n][k];
    }
    at.push_back(row);
  }
  ctx.report.tables["kernel"] = describe(spec);
  ctx.report.tables["values"] = at;
  if (rep.kappa.size() >= 2) {
    // The variance of (f * xi)(t) cannot be negative.
    const double scale = std::max(sup_norm(rep.kappa[1].values()), 1e-300);
    double worst = 0.0;
    for (double v : rep.kappa[1].values()) worst = std::max(worst, -v);
    ctx.verdict("kappa2_nonnegative", worst, 1e-12 * scale, "max negative part of kappa_2");
  }
  return ctx.report;
}


Report cmd_covariance(const ExperimentConfig& cfg, const RunOptions& opts) {
  Context ctx(cfg, opts, "covariance");
  Stopwatch sw;
  const Grid grid = make_grid(cfg);
  const KernelSpec spec = analysis_kernel(cfg);
  const auto mu = make_background(cfg, grid);
  const auto cov = covariance_kernel(spec, mu, cfg.stride);
  ctx.report.timings.emplace_back("covariance", sw.lap());
  ctx.write("covariance.csv", to_csv(cov));
  ctx.report.tables["kernel"] = describe(spec);
  ctx.report.tables["points"] = cov.size();

  const auto* e = std::get_if<Exponential>(&spec);
  if (e != nullptr && e->rate == 1.0 && cfg.background.type == "lebesgue") {
    for (std::size_t i = 0; i < cov.size(); ++i) {
      if (std::fabs(cov.times[i] - 1.0) > 1e-9) continue;
      const double ee = std::exp(1.0);
      const double exact = cfg.background.intensity * std::exp(-2.0) * ((ee * ee - 1.0) / 2.0 - (ee - 1.0));
      ctx.report.tables["sigma_1_1"] = {{"grid", cov(i, i)}, {"exact", exact}};
      ctx.verdict("sigma(1,1) closed form", std::fabs(cov(i, i) - exact), 1e-4);
    }
  }
  const auto* ml = std::get_if<MittagLeffler>(&spec);
  if (ml != nullptr && ml->alpha < 1.0) {
    const auto fit = envelope_ratio(cov, ml->alpha, cfg.envelope_r_min, cfg.envelope_gap);
    ctx.report.tables["envelope"] = {{"alpha", ml->alpha},
                                     {"min_ratio", fit.min_ratio},
                                     {"max_ratio", fit.max_ratio},
                                     {"C", fit.C},
                                     {"pairs", fit.pairs},
                                     {"r_min", cfg.envelope_r_min},
                                     {"gap", cfg.envelope_gap}};
    ctx.verdict("envelope C", fit.C, cfg.envelope_c_max,
                "Sigma / B_alpha in [1/C, C] over r >= r_min, |r - s| >= gap");
  }
  ctx.report.timings.emplace_back("report", sw.lap());
  return ctx.report;
}


Report cmd_verify_limit(const ExperimentConfig& cfg, const RunOptions& opts) {
  if (cfg.eps.size() < 2) throw ValidationError("verify-limit needs at least two eps values");
  Context ctx(cfg, opts, "verify-limit");
  Stopwatch sw;
  const Grid grid = make_grid(cfg);
  const auto f = make_f(cfg.f, grid);
  for (double v : f.values()) {
    if (v > 0.0) throw ValidationError("verify-limit needs f <= 0");
  }
  const auto mu = make_background(cfg, grid);
  std::vector<double> eps = cfg.eps;
  std::sort(eps.begin(), eps.end(), std::greater<>());

  GridMeasure rho = GridMeasure::zero(grid);
  if (cfg.rho) {
    rho = discretize_kernel(*cfg.rho, grid);
    ctx.report.tables["limit_kernel"] = describe(*cfg.rho);
  } else if (auto k = natural_limit_kernel(cfg.kernels)) {
    rho = discretize_kernel(*k, grid);
    ctx.report.tables["limit_kernel"] = describe(*k);
  } else {
    rho = prelimit_kernel_proxy(natural_model(cfg.kernels, mu, eps.back()), grid);
    ctx.report.tables["limit_kernel"] = "geometric mixture at eps=" + fmt(eps.back());
    ctx.report.warnings.push_back("no closed-form limit kernel; using the pre-limit geometric mixture at eps = " +
                                  fmt(eps.back()));
  }
  const auto log_m = log_limit_laplace(f, rho, mu);
  std::vector<double> target;
  for (double t : cfg.verify_t) target.push_back(std::exp(log_m[index_of(grid, t, "verify.t")]));
  ctx.report.timings.emplace_back("limit", sw.lap());

  std::string csv = "eps,t,empirical,stderr,limit,gap,tolerance\n";
  json table = json::array();
  std::vector<LaplaceCurve> curves;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const auto model = natural_model(cfg.kernels, mu, eps[i]);
    const double null_sup = null_array_sup(model.params.family, model.n, cfg.null_cut);
    if (i + 1 == eps.size() && null_sup > cfg.null_threshold) {
      ctx.report.warnings.push_back("kernel family not null at eps = " + fmt(eps[i]) + ": sup tail beyond " +
                                    fmt(cfg.null_cut) + " is " + fmt(null_sup));
    }
    const auto values = simulate_functionals(model, f, cfg.verify_t, cfg.replications, ctx.seed,
                                             static_cast<std::uint64_t>(i) << 32, ctx.threads);
    std::vector<std::vector<double>> rows(values.size());
    for (std::size_t r = 0; r < values.size(); ++r) {
      for (double v : values[r]) rows[r].push_back(std::exp(v));
    }
    curves.push_back(summarize_rows(rows, cfg.verify_t));
    ctx.report.timings.emplace_back("simulate eps=" + fmt(eps[i]), sw.lap());
    json per_t = json::array();
    for (std::size_t j = 0; j < cfg.verify_t.size(); ++j) {
      const double emp = curves.back().values[j], se = curves.back().stderrs[j];
      const double gap = std::fabs(emp - target[j]);
      const double tol = std::max(3.0 * se, cfg.rel_tol * target[j]);
      csv += fmt(eps[i]) + ',' + fmt(cfg.verify_t[j]) + ',' + fmt(emp) + ',' + fmt(se) + ',' + fmt(target[j]) +
             ',' + fmt(gap) + ',' + fmt(tol) + '\n';
      per_t.push_back({{"t", cfg.verify_t[j]}, {"empirical", emp}, {"stderr", se}, {"limit", target[j]},
                       {"gap", gap}, {"tolerance", tol}});
      if (i + 1 == eps.size()) {
        ctx.verdict("gap eps=" + fmt(eps[i]) + " t=" + fmt(cfg.verify_t[j]), gap, tol,
                    "tolerance = max(3 stderr, rel_tol * limit)");
      }
    }
    table.push_back({{"eps", eps[i]}, {"kernel_scale", model.n}, {"null_sup", null_sup}, {"values", per_t}});
  }
  // Gaps may not grow as eps decreases beyond a 3-sigma slack.
  for (std::size_t i = 0; i + 1 < eps.size(); ++i) {
    for (std::size_t j = 0; j < cfg.verify_t.size(); ++j) {
      const double g0 = std::fabs(curves[i].values[j] - target[j]);
      const double g1 = std::fabs(curves[i + 1].values[j] - target[j]);
      const double slack = 3.0 * std::hypot(curves[i].stderrs[j], curves[i + 1].stderrs[j]);
      ctx.verdict("monotone eps=" + fmt(eps[i]) + "->" + fmt(eps[i + 1]) + " t=" + fmt(cfg.verify_t[j]),
                  g1 - g0, slack, "gap increase vs 3 stderr of the difference");
    }
  }
  ctx.write("laplace.csv", csv);
  ctx.report.tables["eps"] = table;
  return ctx.report;
}


int run(int argc, char** argv) {
  CLI::App app{"Near-critical Hawkes experiments"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  std::size_t threads = 0;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"simulate", "simulate pre-limit Hawkes samples and check mean counts"},
      {"riccati", "solve the convolutional Riccati equation with every admissible method"},
      {"cumulants", "cumulants and moments of the limit measure"},
      {"covariance", "covariance kernel of the limit measure"},
      {"verify-limit", "compare empirical Laplace functionals with the limit"}};
  std::vector<CLI::App*> subs;
  std::vector<CLI::Option*> seed_opts, thread_opts, out_opts;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "experiment config (TOML)")->required()->check(CLI::ExistingFile);
    seed_opts.push_back(sub->add_option("--seed", seed, "override the config seed"));
    thread_opts.push_back(sub->add_option("--threads", threads, "worker threads (0 = all cores)"));
    out_opts.push_back(sub->add_option("--out", out_dir, "output directory"));
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  std::size_t which = 0;
  while (!subs[which]->parsed()) ++which;
  const std::string command = commands[which].first;
  try {
    const ExperimentConfig cfg = load_config(config_path);
    RunOptions opts;
    if (seed_opts[which]->count()) opts.seed = seed;
    if (thread_opts[which]->count()) opts.threads = threads;
    if (out_opts[which]->count()) {
      opts.out_dir = out_dir;
    } else if (const char* env = std::getenv("OUTPUT_DIR"); env != nullptr && *env != '\0') {
      opts.out_dir = env;
    } else {
      opts.out_dir = cfg.output_dir.value_or("out");
    }

    Report report;
    if (command == "simulate") report = cmd_simulate(cfg, opts);
    if (command == "riccati") report = cmd_riccati(cfg, opts);
    if (command == "cumulants") report = cmd_cumulants(cfg, opts);
    if (command == "covariance") report = cmd_covariance(cfg, opts);
    if (command == "verify-limit") report = cmd_verify_limit(cfg, opts);

    const std::string report_name = command + "_report.json";
    report.outputs.push_back(report_name);
    io::write_text(opts.out_dir / report_name, to_json(report).dump(2) + "\n");
    for (const auto& v : report.verdicts) {
      std::cout << (v.passed ? "PASS " : "FAIL ") << v.name << ": " << fmt(v.value)
                << " <= " << fmt(v.tolerance) << '\n';
    }
    for (const auto& w : report.warnings) std::cout << "WARN " << w << '\n';
    if (report.refusal) std::cout << "REFUSED " << *report.refusal << '\n';
    std::cout << "report: " << (opts.out_dir / report_name).string() << '\n';
    return exit_code(report);
  } catch (const ValidationError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const GridMismatch& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalRefusal& e) {
    std::cerr << "numerical refusal: " << e.what() << '\n';
    return kExitRefusal;
  } catch (const ClusterOverflow& e) {
    std::cerr << "numerical refusal: " << e.what() << '\n';
    return kExitRefusal;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace feller::cli
