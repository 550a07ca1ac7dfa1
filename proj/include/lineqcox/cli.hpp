#pragma once

// `lineqcox simulate | fit | evaluate`. Options may also come from a flat
// key=value file given with --config; flags on the command line win.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lineqcox/constraints.hpp"
#include "lineqcox/cox_inference.hpp"
#include "lineqcox/eval_metrics.hpp"
#include "lineqcox/io.hpp"
#include "lineqcox/point_process.hpp"

namespace lineqcox::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 2, kNumerical = 3, kInfeasible = 4 };

inline std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& cell : io::split(text)) {
    try {
      std::size_t used = 0;
      const std::string t = io::trim(cell);
      out.push_back(std::stod(t, &used));
      if (used != t.size()) throw std::invalid_argument(t);
    } catch (const std::exception&) {
      throw ParameterError(what + ": '" + text + "' is not a comma-separated list of numbers");
    }
  }
  if (out.empty()) throw ParameterError(what + " is empty");
  return out;
}

/// "a:b" per dimension, dimensions separated by commas.
inline std::vector<Interval> parse_domain(const std::string& text) {
  std::vector<Interval> dom;
  for (const auto& part : io::split(text)) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw ParameterError("domain must be written lower:upper[,lower:upper...]");
    const auto lo = parse_list(part.substr(0, colon), "domain lower bound");
    const auto hi = parse_list(part.substr(colon + 1), "domain upper bound");
    if (!(lo[0] < hi[0])) throw ParameterError("domain interval '" + part + "' is empty");
    dom.push_back({lo[0], hi[0]});
  }
  if (dom.empty()) throw ParameterError("domain is empty");
  return dom;
}

inline std::pair<double, double> parse_bounds(const std::string& text, const std::string& what) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ParameterError(what + " must be written lower:upper");
  const double lo = parse_list(text.substr(0, colon), what)[0];
  const double hi = parse_list(text.substr(colon + 1), what)[0];
  if (!(lo > 0.0) || !(lo <= hi)) throw ParameterError(what + " must satisfy 0 < lower <= upper");
  return {lo, hi};
}

inline std::vector<double> broadcast(std::vector<double> v, std::size_t dim, const std::string& what) {
  if (v.size() == 1 && dim > 1) v.assign(dim, v[0]);
  if (v.size() != dim) throw ShapeError(what + " needs 1 or " + std::to_string(dim) + " values");
  return v;
}

struct IntensityOptions {
  std::string family = "toy1";
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double beta = std::numeric_limits<double>::quiet_NaN();
  double rate = 1.0;
  std::string domain;
  std::string table_values;

  void add_to(CLI::App& app) {
    app.add_option("--intensity", family, "toy1 | toy2 | toy3 | weibull | gamma | constant | table")->capture_default_str();
    app.add_option("--alpha", alpha, "hazard scale (weibull default 1, gamma default 5)");
    app.add_option("--beta", beta, "hazard shape (weibull default 0.7, gamma default 1.7)");
    app.add_option("--rate", rate, "rate of the constant intensity")->capture_default_str();
    app.add_option("--table-values", table_values, "knot values of a piecewise-linear intensity (1D)");
  }

  IntensitySpec build() const {
    auto dom = [&](Interval fallback) { return domain.empty() ? std::vector<Interval>{fallback} : parse_domain(domain); };
    auto one_d = [&](Interval fallback) {
      const auto d = dom(fallback);
      if (d.size() != 1) throw ParameterError(family + " intensity is one-dimensional");
      return d[0];
    };
    if (family == "toy1" || family == "toy2" || family == "toy3") {
      const int id = family.back() - '0';
      if (!domain.empty()) {
        const auto d = parse_domain(domain);
        if (d.size() != 1 || d[0].lower != toy_domain(id).lower || d[0].upper != toy_domain(id).upper) {
          throw ParameterError(family + " is defined on its own fixed domain");
        }
      }
      return IntensitySpec::toy(id);
    }
    if (family == "weibull") {
      auto s = IntensitySpec::weibull(std::isnan(alpha) ? 1.0 : alpha, std::isnan(beta) ? 0.7 : beta, one_d({0.0, 100.0}));
      s.validate();
      return s;
    }
    if (family == "gamma") {
      auto s = IntensitySpec::gamma(std::isnan(alpha) ? 5.0 : alpha, std::isnan(beta) ? 1.7 : beta, one_d({0.0, 5.0}));
      s.validate();
      return s;
    }
    if (family == "constant") {
      auto s = IntensitySpec::constant(rate, dom({0.0, 1.0}));
      s.validate();
      return s;
    }
    if (family == "table") {
      const auto v = parse_list(table_values, "table values");
      if (v.size() < 2) throw ParameterError("table intensity needs at least 2 knot values");
      Eigen::VectorXd values = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      return IntensitySpec::table(make_grid(one_d({0.0, 1.0}), v.size()), values);
    }
    throw ParameterError("unknown intensity family '" + family + "'");
  }
};

/// Clamps hazard evaluation points away from the singularity at the origin.
inline double truth_at(const IntensitySpec& spec, Point x) {
  if (std::holds_alternative<WeibullIntensity>(spec.family) || std::holds_alternative<GammaIntensity>(spec.family)) {
    x[0] = std::max(x[0], kHazardEpsilon);
  }
  return spec(x);
}

inline std::size_t default_eval_points(std::size_t dim) { return dim == 1 ? 1000 : dim == 2 ? 32 : 10; }

// Splices key=value lines from --config in front of the user's flags.
inline std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::optional<std::string> path;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!path) return rest;
  std::ifstream in(*path);
  if (!in) throw ParseError("cannot open config file " + *path, 0);
  auto given = [&](const std::string& key) {
    return std::any_of(rest.begin(), rest.end(), [&](const std::string& a) {
      return a == "--" + key || a.rfind("--" + key + "=", 0) == 0;
    });
  };
  std::vector<std::string> from_file;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = io::trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError("config lines must be key=value", lineno);
    const std::string key = io::trim(t.substr(0, eq));
    const std::string value = io::trim(t.substr(eq + 1));
    if (key.empty()) throw ParseError("empty key in config", lineno);
    if (!given(key)) from_file.push_back("--" + key + "=" + value);
  }
  // The subcommand must stay first.
  if (rest.empty()) return from_file;
  std::vector<std::string> out{rest.front()};
  out.insert(out.end(), from_file.begin(), from_file.end());
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

struct SimulateOptions {
  IntensityOptions intensity;
  std::size_t observations = 1;
  std::uint64_t seed = 1;
  std::optional<double> lambda_max;
  std::string out = "events.csv";
};

inline int cmd_simulate(const SimulateOptions& o, std::ostream& log) {
  const auto spec = o.intensity.build();
  const auto pattern = simulate_poisson(spec, o.observations, o.seed, o.lambda_max);
  io::write_events(o.out, pattern);
  for (std::size_t i = 0; i < pattern.n_observations(); ++i) {
    log << "observation " << i + 1 << ": " << pattern.observations[i].size() << " events\n";
  }
  log << "total " << pattern.total_events() << " events written to " << o.out << '\n';
  return kOk;
}

struct FitOptions {
  std::string events;
  std::size_t observations = 1;
  std::string domain;
  std::string m = "auto";
  std::string constraints = "nonnegative";
  std::optional<double> variance;
  std::string lengthscales;
  bool estimate = false;
  std::string variance_bounds;
  std::string lengthscale_bounds;
  std::size_t budget = 60;
  std::size_t starts = 3;
  std::size_t prior_samples = 200;
  double eta = 1e-3;
  std::size_t samples = 10'000;
  std::size_t burnin = 1'000;
  std::size_t orthant_mc = 200;
  std::uint64_t seed = 1;
  std::size_t replicates = 1;
  std::size_t grid_points = 0;
  bool write_chain = false;
  std::string out_dir = "fit_out";
};

inline std::vector<ConstraintSpec> parse_constraints(const std::string& text) {
  std::vector<ConstraintSpec> specs;
  for (const auto& c : io::split(text)) {
    if (!io::trim(c).empty()) specs.push_back(parse_constraint(io::trim(c)));
  }
  if (specs.empty()) throw ParameterError("at least one constraint is required");
  return specs;
}

inline void write_fit_outputs(const fs::path& dir, const PosteriorChain& chain, const PointPattern& pattern,
                              const std::vector<Point>& query, bool write_chain) {
  const auto summary = posterior_intensity(chain, query);
  io::write_summary(dir / "summary.csv", summary);
  if (write_chain) io::write_chain(dir / "chain.csv", chain);
  std::vector<std::pair<std::string, std::string>> rows{
      {"acceptance_rate", io::format_number(acceptance_rate(chain))},
      {"acceptance_rate_post_burnin", io::format_number(acceptance_rate(chain, AcceptanceWindow::post_burn_in))},
      {"ess_min", io::format_number(chain.size() >= 10 ? min_ess(chain) : std::numeric_limits<double>::quiet_NaN())},
      {"variance", io::format_number(chain.params.variance)}};
  for (std::size_t d = 0; d < chain.params.lengthscales.size(); ++d) {
    rows.emplace_back("lengthscale_" + std::to_string(d + 1), io::format_number(chain.params.lengthscales[d]));
  }
  for (std::size_t d = 0; d < chain.grid.dim(); ++d) {
    rows.emplace_back("m_" + std::to_string(d + 1), std::to_string(chain.grid.count(d)));
  }
  rows.emplace_back("n_observations", std::to_string(pattern.n_observations()));
  rows.emplace_back("n_events", std::to_string(pattern.total_events()));
  rows.emplace_back("eta", io::format_number(chain.config.eta));
  rows.emplace_back("samples", std::to_string(chain.config.n_samples));
  rows.emplace_back("burn_in", std::to_string(chain.config.burn_in));
  rows.emplace_back("seed", std::to_string(chain.config.seed));
  io::write_key_values(dir / "diagnostics.csv", rows);
}

inline int cmd_fit(const FitOptions& o, std::ostream& log) {
  if (o.domain.empty()) throw ParameterError("fit needs --domain");
  const auto domain = parse_domain(o.domain);
  const std::size_t dim = domain.size();
  PointPattern pattern = io::read_events(o.events, o.observations);
  if (pattern.dim != dim) throw ShapeError("events file has " + std::to_string(pattern.dim) + " coordinates, domain has " + std::to_string(dim));
  const auto specs = parse_constraints(o.constraints);

  KernelParams params = default_kernel_params(pattern, domain);
  if (o.variance) params.variance = *o.variance;
  if (!o.lengthscales.empty()) params.lengthscales = broadcast(parse_list(o.lengthscales, "lengthscales"), dim, "lengthscales");
  params.validate(dim);

  auto counts_for = [&](const KernelParams& p) {
    std::vector<std::size_t> counts;
    if (o.m == "auto") {
      for (std::size_t d = 0; d < dim; ++d) counts.push_back(default_knot_count(domain[d].length(), p.lengthscales[d]));
    } else {
      for (double v : broadcast(parse_list(o.m, "m"), dim, "m")) {
        if (v < 2.0 || v != std::floor(v)) throw ParameterError("m must be an integer >= 2 or 'auto'");
        counts.push_back(static_cast<std::size_t>(v));
      }
    }
    return counts;
  };

  if (o.estimate) {
    HyperparamSearch search;
    if (o.variance_bounds.empty()) {
      search.lower.variance = params.variance / 100.0;
      search.upper.variance = params.variance * 100.0;
    } else {
      std::tie(search.lower.variance, search.upper.variance) = parse_bounds(o.variance_bounds, "variance bounds");
    }
    search.lower.lengthscales.clear();
    search.upper.lengthscales.clear();
    for (std::size_t d = 0; d < dim; ++d) {
      auto [lo, hi] = o.lengthscale_bounds.empty() ? std::pair{domain[d].length() / 100.0, domain[d].length() / 2.0}
                                                   : parse_bounds(o.lengthscale_bounds, "lengthscale bounds");
      search.lower.lengthscales.push_back(lo);
      search.upper.lengthscales.push_back(hi);
    }
    search.budget = o.budget;
    search.starts = o.starts;
    search.marginal.prior_samples = o.prior_samples;
    const auto grid = make_grid(domain, counts_for(params));
    const auto sys = build_constraint_system(specs, grid, std::sqrt(search.upper.variance));
    params = estimate_hyperparams(pattern, grid, sys, search, o.seed);
    log << "estimated variance " << io::format_number(params.variance) << ", lengthscales";
    for (double l : params.lengthscales) log << ' ' << io::format_number(l);
    log << '\n';
  }

  const auto grid = make_grid(domain, counts_for(params));
  const auto system = build_constraint_system(specs, grid, std::sqrt(params.variance));
  MhConfig cfg;
  cfg.eta = o.eta;
  cfg.n_samples = o.samples;
  cfg.burn_in = o.burnin;
  cfg.orthant_mc = o.orthant_mc;
  cfg.seed = o.seed;
  if (o.replicates == 0) throw ParameterError("replicates must be at least 1");

  const auto query = regular_points(domain, o.grid_points ? o.grid_points : default_eval_points(dim));
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<PosteriorChain> chains;
  if (o.replicates == 1) {
    chains.push_back(mh_infer(pattern, grid, system, params, cfg));
  } else {
    chains = mh_infer_replicates(pattern, grid, system, params, cfg, o.replicates);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  for (std::size_t r = 0; r < chains.size(); ++r) {
    const fs::path dir = chains.size() == 1 ? fs::path(o.out_dir) : fs::path(o.out_dir) / ("replicate_" + std::to_string(r + 1));
    write_fit_outputs(dir, chains[r], pattern, query, o.write_chain);
    log << dir.string() << ": acceptance " << acceptance_rate(chains[r]) << ", "
        << chains[r].size() << " samples, " << chains[r].wall_seconds << " s\n";
  }
  log << "wall time " << wall << " s\n";
  return kOk;
}

struct EvaluateOptions {
  IntensityOptions truth;
  std::vector<std::string> summaries;
  std::string summary_dir;
  std::string out = "metrics.csv";
};

inline int cmd_evaluate(const EvaluateOptions& o, std::ostream& log) {
  const auto spec = o.truth.build();
  std::vector<fs::path> files(o.summaries.begin(), o.summaries.end());
  if (!o.summary_dir.empty()) {
    if (!fs::is_directory(o.summary_dir)) throw ParameterError("not a directory: " + o.summary_dir);
    for (const auto& e : fs::recursive_directory_iterator(o.summary_dir)) {
      if (e.is_regular_file() && e.path().filename() == "summary.csv") files.push_back(e.path());
    }
    std::sort(files.begin() + static_cast<std::ptrdiff_t>(o.summaries.size()), files.end());
  }
  if (files.empty()) throw ParameterError("evaluate needs --summary or --summary-dir");

  auto out = io::open_out(o.out);
  out << "source,q2,smse,acceptance_rate,ess_min\n";
  std::vector<MetricReport> reports;
  for (const auto& f : files) {
    const auto table = io::read_summary(f);
    std::vector<double> truth;
    for (const auto& x : table.points) truth.push_back(truth_at(spec, x));
    MetricReport r;
    r.smse = smse(truth, table.mean);
    r.q2 = 1.0 - r.smse;
    const auto diag = f.parent_path() / "diagnostics.csv";
    if (fs::exists(diag)) {
      for (const auto& [k, v] : io::read_key_values(diag)) {
        if (k == "acceptance_rate") r.acceptance_rate = io::parse_number(v, 0);
        if (k == "ess_min") r.ess_min = io::parse_number(v, 0);
      }
    }
    reports.push_back(r);
    out << f.string() << ',' << io::format_number(r.q2) << ',' << io::format_number(r.smse) << ','
        << io::format_number(r.acceptance_rate) << ',' << io::format_number(r.ess_min) << '\n';
    log << f.string() << ": Q2 = " << r.q2 << '\n';
  }
  if (reports.size() > 1) {
    auto column = [&](auto field) {
      std::vector<double> v;
      for (const auto& r : reports) v.push_back(r.*field);
      return mean_sd(v);
    };
    const auto q2 = column(&MetricReport::q2), sm = column(&MetricReport::smse);
    const auto ac = column(&MetricReport::acceptance_rate), es = column(&MetricReport::ess_min);
    out << "mean," << io::format_number(q2.mean) << ',' << io::format_number(sm.mean) << ','
        << io::format_number(ac.mean) << ',' << io::format_number(es.mean) << '\n';
    out << "sd," << io::format_number(q2.sd) << ',' << io::format_number(sm.sd) << ',' << io::format_number(ac.sd)
        << ',' << io::format_number(es.sd) << '\n';
    log << "Q2 over " << reports.size() << " files: " << q2.mean << " +/- " << q2.sd << '\n';
  }
  return kOk;
}

/// Entry point; `args` excludes the program name. Returns the process exit code.
inline int run(const std::vector<std::string>& raw_args, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Cox-process intensity inference with linear inequality constraints"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  app.add_option("--config", "flat key=value file; command-line flags take precedence");

  SimulateOptions sim;
  auto* s = app.add_subcommand("simulate", "Simulate Poisson point patterns by thinning");
  sim.intensity.add_to(*s);
  s->add_option("--domain", sim.intensity.domain, "lower:upper for weibull, gamma, constant or table");
  s->add_option("--observations", sim.observations, "number of independent patterns")->capture_default_str();
  s->add_option("--seed", sim.seed)->capture_default_str();
  s->add_option("--lambda-max", sim.lambda_max, "dominating rate (defaults per family)");
  s->add_option("--out", sim.out, "events CSV")->capture_default_str();

  FitOptions fit;
  auto* f = app.add_subcommand("fit", "Sample the posterior intensity with Metropolis-Hastings");
  f->add_option("--events", fit.events, "events CSV")->required();
  f->add_option("--observations", fit.observations, "minimum observation count (for trailing empty observations)")
      ->capture_default_str();
  f->add_option("--domain", fit.domain, "lower:upper per dimension, comma-separated")->required();
  f->add_option("--m", fit.m, "knots per dimension, or auto (10*range/lengthscale)")->capture_default_str();
  f->add_option("--constraints", fit.constraints, "comma-separated constraint names")->capture_default_str();
  f->add_option("--variance", fit.variance, "kernel variance (default: squared mean rate)");
  f->add_option("--lengthscales", fit.lengthscales, "kernel lengthscales, one per dimension or one for all");
  f->add_flag("--estimate", fit.estimate, "estimate kernel parameters by MC marginal likelihood");
  f->add_option("--variance-bounds", fit.variance_bounds, "lower:upper for --estimate");
  f->add_option("--lengthscale-bounds", fit.lengthscale_bounds, "lower:upper for --estimate (all dimensions)");
  f->add_option("--budget", fit.budget, "objective evaluations for --estimate")->capture_default_str();
  f->add_option("--starts", fit.starts, "simplex restarts for --estimate")->capture_default_str();
  f->add_option("--prior-samples", fit.prior_samples, "prior draws per marginal-likelihood estimate")->capture_default_str();
  f->add_option("--eta", fit.eta, "proposal scale factor")->capture_default_str();
  f->add_option("--samples", fit.samples, "retained MH samples")->capture_default_str();
  f->add_option("--burnin", fit.burnin, "discarded MH steps")->capture_default_str();
  f->add_option("--orthant-mc", fit.orthant_mc, "MC samples per orthant estimate")->capture_default_str();
  f->add_option("--seed", fit.seed)->capture_default_str();
  f->add_option("--replicates", fit.replicates, "independent chains run concurrently")->capture_default_str();
  f->add_option("--grid-points", fit.grid_points, "summary points per dimension (default 1000 in 1D, 32 in 2D)");
  f->add_flag("--write-chain", fit.write_chain, "also write chain.csv");
  f->add_option("--out-dir", fit.out_dir)->capture_default_str();

  EvaluateOptions ev;
  auto* e = app.add_subcommand("evaluate", "Score posterior summaries against a known intensity");
  ev.truth.add_to(*e);
  e->add_option("--domain", ev.truth.domain, "lower:upper for weibull, gamma, constant or table");
  e->add_option("--summary", ev.summaries, "summary CSV (repeatable)");
  e->add_option("--summary-dir", ev.summary_dir, "directory searched recursively for summary.csv files");
  e->add_option("--out", ev.out, "metrics CSV")->capture_default_str();

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
    if (s->parsed()) return cmd_simulate(sim, log);
    if (f->parsed()) return cmd_fit(fit, log);
    return cmd_evaluate(ev, log);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex, log, err);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex, log, err);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex, log, err);
    return kUsage;
  } catch (const InfeasibleError& ex) {
    err << "infeasible: " << ex.what() << '\n';
    return kInfeasible;
  } catch (const NumericalError& ex) {
    err << "numerical failure: " << ex.what() << '\n';
    return kNumerical;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  }
}

}  // namespace lineqcox::cli
