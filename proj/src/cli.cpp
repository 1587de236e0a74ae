#include "nucfactor/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "nucfactor/errors.hpp"
#include "nucfactor/evaluate.hpp"
#include "nucfactor/seeding.hpp"
#include "nucfactor/simulate.hpp"
#include "nucfactor/tuning.hpp"

namespace nucfactor::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t k = 0; k < items.size(); ++k) out += (k ? "," : "") + items[k];
  return out;
}

struct Bindings {
  double lambda_c = 0.0;
  double delta = 0.0;
  std::string raw_columns;
  std::string spline_columns;
  bool no_intercept = false;
  bool no_rank = false;
  std::string characteristics;
};

void add_common(CLI::App* sub, RunConfig& c, Bindings& b) {
  sub->add_option("--family", c.family, "unconstrained | semiparametric | homogeneous");
  sub->add_flag("--zero-alpha", c.zero_alpha, "impose a = 0 (undemeaned extraction)");
  sub->add_option("--lambda-c", b.lambda_c, "tuning constant c (lambda = c * rate)");
  sub->add_option("--delta", b.delta, "rank threshold (default: family rate)");
  sub->add_flag("--cv", c.cv, "choose c by cross-validation");
  sub->add_option("--folds", c.folds, "number of CV folds");
  sub->add_option("--grid", c.grid, "CV grid: simulation | empirical | comma list");
  sub->add_option("--seed", c.seed, "top-level seed");
  sub->add_option("--out", c.out, "output directory");
  sub->add_option("--tol", c.tol, "solver tolerance");
  sub->add_option("--max-iter", c.max_iter, "solver iteration cap");
}

void add_data(CLI::App* sub, RunConfig& c, Bindings& b) {
  sub->add_option("--data", c.data_path, "long-format CSV")->required();
  sub->add_option("--asset-col", c.schema.asset, "asset id column");
  sub->add_option("--period-col", c.schema.period, "period column");
  sub->add_option("--return-col", c.schema.ret, "return column");
  sub->add_option("--characteristics", b.characteristics, "characteristic columns to load (default all)");
  sub->add_option("--raw", b.raw_columns, "comma list of linear covariate columns");
  sub->add_option("--splines", b.spline_columns, "comma list of spline covariate columns");
  sub->add_flag("--no-intercept", b.no_intercept, "omit the constant covariate");
  sub->add_flag("--no-rank", b.no_rank, "use raw values instead of cross-sectional ranks");
}

// Fills options not given on the command line from the config file.
void merge_config(CLI::App* sub, const std::string& path) {
  const auto values = read_key_values(path);
  for (const auto& [key, value] : values) {
    CLI::Option* opt = nullptr;
    try {
      opt = sub->get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      fail(ErrorKind::ConfigError, path + ": unknown key '" + key + "' for command " + sub->get_name());
    }
    if (opt->count() > 0) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      fail(ErrorKind::ConfigError, path + ": bad value for '" + key + "': " + e.what());
    }
  }
}

ModelFamily resolve_family(const RunConfig& c, FamilyKind fallback) {
  ModelFamily f;
  f.kind = c.family.empty() ? fallback : family_from_string(c.family);
  f.zero_alpha = c.zero_alpha;
  return f;
}

SolverConfig solver_config(const RunConfig& c) {
  SolverConfig s;
  s.tolerance = c.tol;
  s.max_iterations = c.max_iter;
  return s;
}

CvPlan cv_plan(const RunConfig& c, std::uint64_t seed) {
  CvPlan p;
  p.n_folds = c.folds;
  p.grid = parse_grid(c.grid);
  p.seed = seed;
  return p;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::FormatError, "cannot write " + path.string());
  out << text;
}

std::string cv_csv(const CvResult& r) {
  std::string s = "c,mse,valid\n";
  for (std::size_t g = 0; g < r.grid.size(); ++g)
    s += num(r.grid[g]) + "," + num(r.per_c_mse[g]) + "," + (r.valid[g] ? "1" : "0") + "\n";
  return s;
}

Panel load_design(const RunConfig& c) {
  const RawPanel raw = load_panel(c.data_path, c.schema);
  return build_design(raw, c.design);
}

std::string design_label(const RunConfig& c) {
  std::string s = c.design.intercept ? "1" : "";
  if (!c.design.raw_columns.empty()) s += (s.empty() ? "" : "+") + join(c.design.raw_columns);
  if (!c.design.spline_columns.empty()) s += (s.empty() ? "" : "+") + std::string("bs(") + join(c.design.spline_columns) + ")";
  return s;
}

// Tuning constant: CV when requested, otherwise --lambda-c.
double choose_c(const RunConfig& c, const Panel& panel, ModelFamily family, std::vector<std::string>& artifacts,
                std::ostream& log) {
  if (c.cv) {
    const CvResult r = cross_validate(panel, family, cv_plan(c, derive_seed(c.seed, "folds")), solver_config(c));
    write_file(fs::path(c.out) / "cv.csv", cv_csv(r));
    artifacts.push_back("cv.csv");
    log << "cross-validated c = " << r.chosen_c << "\n";
    return r.chosen_c;
  }
  if (!c.lambda_c) fail(ErrorKind::ConfigError, "give --lambda-c or --cv");
  return *c.lambda_c;
}

std::vector<std::string> run_estimate(const RunConfig& c, std::ostream& log) {
  std::vector<std::string> artifacts;
  const Panel panel = load_design(c);
  const ModelFamily family = resolve_family(c, FamilyKind::Unconstrained);
  const double chosen = choose_c(c, panel, family, artifacts, log);
  SolverConfig s = solver_config(c);
  s.lambda = default_lambda(panel, family.kind, chosen);
  const LowRankFit fit = fit_low_rank(panel, family, s);
  const double delta = c.delta ? *c.delta : default_delta(panel, family.kind);
  const FactorEstimate est = extract_factors(fit, delta);

  save_estimate(est, (fs::path(c.out) / "estimate").string());
  artifacts.push_back("estimate");
  write_matrix_csv(fit.matrix.main, (fs::path(c.out) / "fit_main.csv").string());
  artifacts.push_back("fit_main.csv");
  if (fit.matrix.star.size() > 0) {
    write_matrix_csv(fit.matrix.star, (fs::path(c.out) / "fit_star.csv").string());
    artifacts.push_back("fit_star.csv");
  }
  const FitScores scores = in_sample_r2(panel, est);
  std::string summary =
      "family,zero_alpha,c,lambda,delta,k_hat,iterations,converged,objective,star_max_abs,r2_total,r2_ts_avg,r2_cs_avg\n";
  summary += to_string(family.kind) + "," + (family.zero_alpha ? "1" : "0") + "," + num(chosen) + "," +
             num(s.lambda) + "," + num(delta) + "," + std::to_string(est.k_hat) + "," +
             std::to_string(fit.report.iterations) + "," + (fit.report.converged ? "1" : "0") + "," +
             num(fit.report.objective_trace.empty() ? 0.0 : fit.report.objective_trace.back()) + "," +
             num(fit.report.star_max_abs) + "," + num(scores.r2_total) + "," + num(scores.r2_ts_avg) + "," +
             num(scores.r2_cs_avg) + "\n";
  write_file(fs::path(c.out) / "summary.csv", summary);
  artifacts.push_back("summary.csv");
  log << "family " << to_string(family.kind) << ", lambda " << s.lambda << ", K_hat " << est.k_hat << ", "
      << fit.report.iterations << " iterations" << (fit.report.converged ? "" : " (not converged)") << "\n"
      << "in-sample R2 total " << scores.r2_total << "\n";
  return artifacts;
}

std::vector<std::string> run_cv(const RunConfig& c, std::ostream& log) {
  std::vector<std::string> artifacts;
  const Panel panel = load_design(c);
  const ModelFamily family = resolve_family(c, FamilyKind::Unconstrained);
  const CvResult r = cross_validate(panel, family, cv_plan(c, derive_seed(c.seed, "folds")), solver_config(c));
  write_file(fs::path(c.out) / "cv.csv", cv_csv(r));
  artifacts.push_back("cv.csv");
  log << "chosen c = " << r.chosen_c << "\n";
  return artifacts;
}

std::vector<std::string> run_simulate(const RunConfig& c, std::ostream& log) {
  std::vector<std::string> artifacts;
  DgpSpec spec;
  spec.which = c.dgp;
  spec.n = c.n;
  spec.t = c.t;
  spec.seed = derive_seed(c.seed, "dgp");
  spec.noise_variance = c.noise_variance;
  StudyPlan plan;
  plan.family = resolve_family(c, default_family(c.dgp));
  plan.reps = c.reps;
  plan.solver = solver_config(c);
  plan.delta = c.delta;
  if (c.cv) {
    plan.cv = cv_plan(c, 0);
  } else {
    if (!c.lambda_c) fail(ErrorKind::ConfigError, "give --lambda-c or --cv");
    plan.fixed_c = *c.lambda_c;
  }
  if (!c.sweep.empty()) plan.sweep = parse_grid(c.sweep);
  const SimReport r = run_study(spec, plan);

  const auto& names = r.aggregate.names;
  std::string table = "dgp,n,t,family,reps,aggregate,count";
  for (const auto& name : names) table += "," + name;
  table += ",k_correct_rate,failures\n";
  auto row = [&](const std::string& label, int count, const std::vector<double>& values) {
    std::string s = std::to_string(c.dgp) + "," + std::to_string(c.n) + "," + std::to_string(c.t) + "," +
                    to_string(plan.family.kind) + "," + std::to_string(c.reps) + "," + label + "," + std::to_string(count);
    for (double v : values) s += "," + num(v);
    s += "," + num(r.k_correct_rate) + "," + std::to_string(r.failures) + "\n";
    return s;
  };
  table += row("all_reps", r.aggregate.count_all, r.aggregate.all_reps);
  table += row("correct_k", r.aggregate.count_correct, r.aggregate.correct_k);
  write_file(fs::path(c.out) / "table.csv", table);
  artifacts.push_back("table.csv");

  std::string reps = "rep,seed,failed,chosen_c,k_hat,converged,curve_mse";
  for (const auto& name : names) reps += "," + name;
  reps += "\n";
  for (std::size_t k = 0; k < r.reps.size(); ++k) {
    const RepMetrics& m = r.reps[k];
    reps += std::to_string(k) + "," + std::to_string(m.seed) + "," + (m.failed ? "1" : "0") + "," + num(m.chosen_c) +
            "," + std::to_string(m.k_hat) + "," + (m.solver_converged ? "1" : "0") + "," + num(m.curve_mse);
    for (std::size_t j = 0; j < names.size(); ++j) reps += "," + num(m.failed ? std::nan("") : m.values[j].second);
    reps += "\n";
  }
  write_file(fs::path(c.out) / "replications.csv", reps);
  artifacts.push_back("replications.csv");

  std::string curve = "c,mse\n";
  for (std::size_t s = 0; s < plan.sweep.size(); ++s) curve += num(plan.sweep[s]) + "," + num(r.sweep_mse_mean[s]) + "\n";
  curve += std::string(c.cv ? "cv" : "fixed") + "," + num(r.curve_mse_mean) + "\n";
  write_file(fs::path(c.out) / "curve.csv", curve);
  artifacts.push_back("curve.csv");

  log << "DGP" << c.dgp << " (N=" << c.n << ", T=" << c.t << "), " << c.reps << " replications, family "
      << to_string(plan.family.kind) << "\n";
  for (std::size_t j = 0; j < names.size(); ++j) log << "  MSE " << names[j] << " = " << r.aggregate.all_reps[j] << "\n";
  log << "  K correct rate = " << r.k_correct_rate << ", failures = " << r.failures << "\n";
  return artifacts;
}

std::vector<std::string> run_evaluate(const RunConfig& c, std::ostream& log) {
  std::vector<std::string> artifacts;
  const Panel panel = load_design(c);
  const ModelFamily family = resolve_family(c, FamilyKind::Unconstrained);
  if (c.kmax < 1) fail(ErrorKind::ConfigError, "--kmax must be >= 1");

  // The constant is tuned once on the burn-in window unless fixed.
  OosPlan plan;
  plan.family = family;
  plan.burn_in = c.burn_in;
  plan.cv = cv_plan(c, derive_seed(c.seed, "folds"));
  plan.solver = solver_config(c);
  if (!c.cv) {
    if (!c.lambda_c) fail(ErrorKind::ConfigError, "give --lambda-c or --cv");
    plan.fixed_c = *c.lambda_c;
  }
  for (Index k = 1; k <= c.kmax; ++k) plan.ranks.push_back(k);
  const OosReport oos = out_of_sample_r2(panel, plan);

  SolverConfig s = solver_config(c);
  s.lambda = default_lambda(panel, family.kind, oos.c_used);
  const LowRankFit fit = fit_low_rank(panel, family, s);
  const Index max_rank = std::min(extraction_matrix(fit.matrix, family.kind).rows(), panel.n_periods());

  std::string scores = "spec,family,k,c,r2_total,r2_ts_avg,r2_cs_avg,r2o_total,r2o_ts_avg,r2o_cs_avg\n";
  for (std::size_t r = 0; r < plan.ranks.size(); ++r) {
    const Index k = std::min(plan.ranks[r], max_rank);
    const FitScores in = in_sample_r2(panel, extract_factors_with_rank(fit, k));
    const FitScores& o = oos.scores[r];
    scores += design_label(c) + "," + to_string(family.kind) + (family.zero_alpha ? "-zero-alpha" : "") + "," +
              std::to_string(plan.ranks[r]) + "," + num(oos.c_used) + "," + num(in.r2_total) + "," +
              num(in.r2_ts_avg) + "," + num(in.r2_cs_avg) + "," + num(o.r2_total) + "," + num(o.r2_ts_avg) + "," +
              num(o.r2_cs_avg) + "\n";
  }
  write_file(fs::path(c.out) / "scores.csv", scores);
  artifacts.push_back("scores.csv");
  std::string skipped = "period,reason\n";
  for (const auto& sp : oos.skipped) skipped += std::to_string(sp.period) + ",\"" + sp.reason + "\"\n";
  write_file(fs::path(c.out) / "skipped_periods.csv", skipped);
  artifacts.push_back("skipped_periods.csv");
  log << "evaluated " << oos.evaluated_periods.size() << " periods (" << oos.skipped.size() << " skipped), c = "
      << oos.c_used << "\n";
  return artifacts;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError: return 2;
    case ErrorKind::NumericalFailure:
    case ErrorKind::TuningFailure: return 4;
    default: return 3;
  }
}

}  // namespace

std::vector<double> parse_grid(const std::string& text) {
  if (text == "simulation" || text == "empirical") return grid_preset(text);
  std::vector<double> out;
  for (const std::string& item : split_list(text)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      fail(ErrorKind::ConfigError, "bad grid value '" + item + "'");
    }
  }
  if (out.empty()) fail(ErrorKind::ConfigError, "empty grid");
  return out;
}

RunConfig parse_args(const std::vector<std::string>& args) {
  RunConfig c;
  Bindings b;
  std::string config_path;
  CLI::App app{"Nuclear-norm regularized conditional factor models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  CLI::App* estimate = app.add_subcommand("estimate", "fit one model and extract factors");
  CLI::App* cv = app.add_subcommand("cv", "cross-validate the tuning constant");
  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo study on DGP1-3");
  CLI::App* evaluate = app.add_subcommand("evaluate", "in-sample and recursive out-of-sample R2");
  for (CLI::App* sub : {estimate, cv, simulate, evaluate}) {
    add_common(sub, c, b);
    sub->add_option("--config", config_path, "key=value file; flags win");
  }
  for (CLI::App* sub : {estimate, cv, evaluate}) add_data(sub, c, b);
  simulate->add_option("--dgp", c.dgp, "1, 2 or 3")->check(CLI::Range(1, 3));
  simulate->add_option("--n", c.n, "assets");
  simulate->add_option("--t", c.t, "periods");
  simulate->add_option("--reps", c.reps, "replications");
  simulate->add_option("--noise-variance", c.noise_variance, "variance of the idiosyncratic noise");
  simulate->add_option("--sweep", c.sweep, "fixed-c curve grid: simulation | empirical | comma list");
  evaluate->add_option("--burn-in", c.burn_in, "first out-of-sample period (1-based)");
  evaluate->add_option("--kmax", c.kmax, "largest factor count scored");

  std::vector<const char*> argv{"nucfactor"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    throw;
  } catch (const CLI::CallForVersion&) {
    std::cout << kVersion << "\n";
    throw;
  } catch (const CLI::ParseError& e) {
    fail(ErrorKind::ConfigError, e.what());
  }
  CLI::App* sub = app.get_subcommands().front();
  c.command = sub->get_name();
  if (!config_path.empty()) merge_config(sub, config_path);

  if (sub->get_option("--lambda-c")->count() > 0) c.lambda_c = b.lambda_c;
  if (sub->get_option("--delta")->count() > 0) c.delta = b.delta;
  c.design.raw_columns = split_list(b.raw_columns);
  c.design.spline_columns = split_list(b.spline_columns);
  c.design.intercept = !b.no_intercept;
  c.design.rank_transform = !b.no_rank;
  c.schema.characteristics = split_list(b.characteristics);
  if (!c.family.empty()) family_from_string(c.family);
  if (c.lambda_c && !(*c.lambda_c >= 0.0)) fail(ErrorKind::ConfigError, "--lambda-c must be >= 0");
  if (c.delta && !(*c.delta > 0.0)) fail(ErrorKind::ConfigError, "--delta must be > 0");
  if (c.folds < 2) fail(ErrorKind::ConfigError, "--folds must be >= 2");
  if (c.reps < 1) fail(ErrorKind::ConfigError, "--reps must be >= 1");
  if (!(c.tol > 0.0)) fail(ErrorKind::ConfigError, "--tol must be > 0");
  if (c.max_iter < 1) fail(ErrorKind::ConfigError, "--max-iter must be >= 1");
  parse_grid(c.grid);
  if (!c.sweep.empty()) parse_grid(c.sweep);
  return c;
}

std::vector<std::string> to_args(const RunConfig& c) {
  std::vector<std::string> a{c.command};
  auto opt = [&](const std::string& key, const std::string& value) {
    a.push_back("--" + key);
    a.push_back(value);
  };
  if (!c.family.empty()) opt("family", c.family);
  if (c.zero_alpha) a.push_back("--zero-alpha");
  if (c.lambda_c) opt("lambda-c", num(*c.lambda_c));
  if (c.delta) opt("delta", num(*c.delta));
  if (c.cv) a.push_back("--cv");
  opt("folds", std::to_string(c.folds));
  opt("grid", c.grid);
  opt("seed", std::to_string(c.seed));
  opt("tol", num(c.tol));
  opt("max-iter", std::to_string(c.max_iter));
  if (c.command == "simulate") {
    opt("dgp", std::to_string(c.dgp));
    opt("n", std::to_string(c.n));
    opt("t", std::to_string(c.t));
    opt("reps", std::to_string(c.reps));
    opt("noise-variance", num(c.noise_variance));
    if (!c.sweep.empty()) opt("sweep", c.sweep);
  } else {
    opt("data", fs::absolute(c.data_path).string());
    opt("asset-col", c.schema.asset);
    opt("period-col", c.schema.period);
    opt("return-col", c.schema.ret);
    if (!c.schema.characteristics.empty()) opt("characteristics", join(c.schema.characteristics));
    if (!c.design.raw_columns.empty()) opt("raw", join(c.design.raw_columns));
    if (!c.design.spline_columns.empty()) opt("splines", join(c.design.spline_columns));
    if (!c.design.intercept) a.push_back("--no-intercept");
    if (!c.design.rank_transform) a.push_back("--no-rank");
    if (c.command == "evaluate") {
      opt("burn-in", std::to_string(c.burn_in));
      opt("kmax", std::to_string(c.kmax));
    }
  }
  return a;
}

void run(const RunConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(c.out);
  std::ostringstream log;
  std::vector<std::string> artifacts;
  if (c.command == "estimate") {
    artifacts = run_estimate(c, log);
  } else if (c.command == "cv") {
    artifacts = run_cv(c, log);
  } else if (c.command == "simulate") {
    artifacts = run_simulate(c, log);
  } else if (c.command == "evaluate") {
    artifacts = run_evaluate(c, log);
  } else {
    fail(ErrorKind::ConfigError, "unknown command '" + c.command + "'");
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  json manifest;
  manifest["tool"] = "nucfactor";
  manifest["version"] = kVersion;
  manifest["command"] = c.command;
  manifest["args"] = to_args(c);
  manifest["seed"] = c.seed;
  manifest["artifacts"] = artifacts;
  manifest["wall_time_seconds"] = wall;
  write_file(fs::path(c.out) / "manifest.json", manifest.dump(2) + "\n");
  std::cout << log.str();
}

int main_entry(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string out_dir;
  try {
    if (!args.empty() && args[0] == "replay") {
      // replay MANIFEST --out DIR
      if (args.size() != 4 || args[2] != "--out")
        fail(ErrorKind::ConfigError, "usage: nucfactor replay MANIFEST --out DIR");
      out_dir = args[3];
      std::ifstream in(args[1]);
      if (!in) fail(ErrorKind::ConfigError, "cannot open manifest " + args[1]);
      std::vector<std::string> replay;
      try {
        json manifest;
        in >> manifest;
        replay = manifest.at("args").get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        fail(ErrorKind::ConfigError, std::string("bad manifest: ") + e.what());
      }
      replay.push_back("--out");
      replay.push_back(out_dir);
      args = replay;
    }
    for (std::size_t k = 0; k + 1 < args.size(); ++k)
      if (args[k] == "--out") out_dir = args[k + 1];
    run(parse_args(args));
    return 0;
  } catch (const CLI::Success&) {
    return 0;
  } catch (const Error& e) {
    json record{{"error", to_string(e.kind())}, {"message", e.what()}, {"exit_code", exit_code(e.kind())}};
    std::cerr << record.dump() << "\n";
    if (!out_dir.empty()) {
      std::error_code ec;
      fs::create_directories(out_dir, ec);
      std::ofstream(fs::path(out_dir) / "error.json") << record.dump(2) << "\n";
    }
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    json record{{"error", "InternalError"}, {"message", e.what()}, {"exit_code", 1}};
    std::cerr << record.dump() << "\n";
    return 1;
  }
}

}  // namespace nucfactor::cli
