#include "bdp/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>

#include "bdp/errors.hpp"
#include "bdp/estimate.hpp"
#include "bdp/expr.hpp"
#include "bdp/io.hpp"
#include "bdp/models.hpp"
#include "bdp/parallel.hpp"
#include "bdp/probability.hpp"
#include "bdp/rng.hpp"
#include "bdp/simulate.hpp"
#include "bdp/uncertainty.hpp"

namespace bdp {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

double to_real(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(what + ": '" + s + "' is not a number");
  }
}

long to_long(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(what + ": '" + s + "' is not an integer");
  }
}

std::vector<double> reals(const std::string& s, const std::string& what) {
  std::vector<double> out;
  if (trim(s).empty()) return out;
  for (const auto& part : split(s, ',')) out.push_back(to_real(part, what));
  return out;
}

std::vector<long> integers(const std::string& s, const std::string& what) {
  std::vector<long> out;
  if (trim(s).empty()) return out;
  for (const auto& part : split(s, ',')) out.push_back(to_long(part, what));
  return out;
}

/// Comma list, or start:stop:step with stop included when it is hit.
std::vector<double> times_list(const std::string& s, const std::string& what) {
  if (s.find(':') == std::string::npos) return reals(s, what);
  const auto parts = split(s, ':');
  if (parts.size() != 3) throw InvalidArgument(what + ": expected start:stop:step");
  const double a = to_real(parts[0], what), b = to_real(parts[1], what), h = to_real(parts[2], what);
  if (!(h > 0.0) || !(b >= a)) throw InvalidArgument(what + ": need step > 0 and stop >= start");
  std::vector<double> out;
  const auto n = static_cast<long>(std::floor((b - a) / h + 1e-9));
  for (long i = 0; i <= n; ++i) out.push_back(a + static_cast<double>(i) * h);
  return out;
}

Bounds bounds_list(const std::string& s) {
  Bounds b;
  if (trim(s).empty()) return b;
  for (const auto& part : split(s, ',')) {
    const auto lh = split(part, ':');
    if (lh.size() != 2) throw InvalidArgument("bounds: expected lo:hi pairs, got '" + part + "'");
    b.box.emplace_back(to_real(lh[0], "bounds"), to_real(lh[1], "bounds"));
  }
  return b;
}

TruncationWindow window_arg(const std::string& s) {
  const auto lh = split(s, ':');
  if (lh.size() != 2) throw InvalidArgument("z-trunc: expected lo:hi");
  TruncationWindow w{to_long(lh[0], "z-trunc"), to_long(lh[1], "z-trunc")};
  if (w.z_min < 0 || w.z_max < w.z_min) throw InvalidArgument("z-trunc: need 0 <= lo <= hi");
  return w;
}

struct ModelArgs {
  std::string label = "linear";
  std::string birth, death;
  std::size_t n_params = 0;

  void add(CLI::App* app) {
    app->add_option("--model", label, "Model label, or custom with --birth/--death");
    app->add_option("--birth", birth, "Birth-rate expression for a custom model");
    app->add_option("--death", death, "Death-rate expression for a custom model");
    app->add_option("--n-params", n_params, "Parameter count of a custom model");
  }

  Model build() const {
    if (label != "custom") {
      if (!birth.empty() || !death.empty()) {
        throw InvalidArgument("--birth/--death are only used with --model custom");
      }
      return builtin_model(label);
    }
    if (birth.empty() || death.empty()) {
      throw InvalidArgument("--model custom needs both --birth and --death");
    }
    std::size_t n = n_params;
    if (n == 0) {
      n = std::max(RateExpression::parse(birth).param_count(),
                   RateExpression::parse(death).param_count());
    }
    return expression_model(birth, death, n);
  }
};

struct SeedArg {
  std::optional<std::uint64_t> value;

  void add(CLI::App* app, const std::string& name = "--seed") {
    app->add_option(name, value, "Random seed (default BDPKIT_SEED or 2021)");
  }
  std::uint64_t get() const { return value.value_or(default_seed()); }
  bool explicit_seed() const { return value.has_value() || std::getenv("BDPKIT_SEED") != nullptr; }
};

void emit(const std::string& path, const std::string& contents, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << contents;
  } else {
    write_file_atomic(path, contents);
  }
}

std::string fmt_list(const std::vector<double>& v) {
  std::ostringstream os;
  os << std::setprecision(6) << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ']';
  return os.str();
}

std::vector<Constraint> constraints_from(const std::vector<std::string>& texts) {
  std::vector<Constraint> out;
  for (const auto& t : texts) out.push_back(parse_constraint(t));
  return out;
}

KnownParams known_from(const std::string& values, const std::string& indices) {
  KnownParams k;
  k.values = reals(values, "known-p");
  for (long i : integers(indices, "idx-known-p")) {
    if (i < 0) throw InvalidArgument("idx-known-p: indices must be non-negative");
    k.indices.push_back(static_cast<std::size_t>(i));
  }
  return k;
}

}  // namespace

Constraint parse_constraint(std::string_view text) {
  static const std::vector<std::string> ops = {">=", "<=", "==", ">", "<", "="};
  int depth = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '(' || text[i] == '[') ++depth;
    if (text[i] == ')' || text[i] == ']') --depth;
    if (depth != 0) continue;
    for (const auto& op : ops) {
      if (text.substr(i, op.size()) != op) continue;
      const auto lhs = RateExpression::parse(text.substr(0, i));
      const auto rhs = RateExpression::parse(text.substr(i + op.size()));
      Constraint c;
      const bool greater = op[0] == '>';
      c.kind = op[0] == '=' ? Constraint::Kind::Equality : Constraint::Kind::Inequality;
      c.fn = [lhs, rhs, greater, eq = c.kind == Constraint::Kind::Equality](std::span<const double> p) {
        const double l = lhs(0.0, p), r = rhs(0.0, p);
        return (greater || eq) ? l - r : r - l;
      };
      return c;
    }
  }
  throw InvalidArgument("constraint '" + std::string(text) +
                        "' needs a comparison (>, >=, <, <=, =)");
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Population-size-dependent birth-and-death processes", "bdpkit"};
  app.require_subcommand(1);
  unsigned threads = 1;
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate sample paths");
  ModelArgs sim_model;
  sim_model.add(sim);
  std::string sim_params, sim_times, sim_method = "exact", sim_out;
  long sim_z0 = 0;
  double sim_tmax = 0.0, sim_tau = 0.1;
  std::size_t sim_k = 1;
  bool sim_survival = false;
  SeedArg sim_seed;
  sim->add_option("--params", sim_params, "Parameters, comma separated")->required();
  sim->add_option("--z0", sim_z0, "Initial population")->required();
  auto* sim_times_opt = sim->add_option("--times", sim_times, "Observation times (list or a:b:step)");
  auto* sim_tmax_opt = sim->add_option("--t-max", sim_tmax, "Record every jump up to this time");
  sim_times_opt->excludes(sim_tmax_opt);
  sim->add_option("--method", sim_method, "exact, ea, ma or gwa");
  sim->add_option("--tau", sim_tau, "Leap size for approximate methods");
  sim->add_option("--k", sim_k, "Number of paths");
  sim_seed.add(sim);
  sim->add_flag("--survival", sim_survival, "Condition on non-extinction");
  sim->add_option("--out", sim_out, "Output CSV (default stdout)");

  // probability
  auto* prob = app.add_subcommand("probability", "Transition probabilities");
  ModelArgs prob_model;
  prob_model.add(prob);
  std::string prob_params, prob_z0, prob_zt, prob_t, prob_method = "expm", prob_trunc, prob_out;
  std::string prob_laplace = "cme-talbot", prob_anchor = "i";
  std::optional<std::size_t> prob_k;
  SeedArg prob_seed;
  prob->add_option("--params", prob_params, "Parameters, comma separated")->required();
  prob->add_option("--z0", prob_z0, "Initial states")->required();
  prob->add_option("--zt", prob_zt, "Final states")->required();
  prob->add_option("--t", prob_t, "Elapsed times")->required();
  prob->add_option("--method", prob_method, "expm, uniform, Erlang, ilt, da, oua, gwa, gwasa, sim");
  prob->add_option("--z-trunc", prob_trunc, "Truncation window lo:hi");
  prob->add_option("--k", prob_k, "Accuracy knob of the method");
  prob->add_option("--laplace-method", prob_laplace, "cme-talbot, talbot, euler or gaver-stehfest");
  prob->add_option("--anchor", prob_anchor, "gwa linearization point: i, j, max, min, midpoint");
  prob_seed.add(prob);
  prob->add_option("--out", prob_out, "Output CSV (default stdout)");

  // estimate
  auto* est = app.add_subcommand("estimate", "Estimate parameters from count data");
  ModelArgs est_model;
  est_model.add(est);
  std::string est_data, est_framework = "dnm", est_scheme = "discrete", est_p0, est_bounds;
  std::string est_known, est_idx_known, est_likelihood = "expm", est_technique = "expm";
  std::string est_accel = "none", est_squares = "fm", est_eps_abc = "dynamic", est_trunc;
  std::string est_se = "auto", est_opt_method = "local", est_out, est_ci_out;
  std::string est_ci_levels = "0.5,0.95", est_ci_params = "0,1", est_laplace = "cme-talbot";
  std::string est_sim_method = "gwa", est_anchor = "i";
  std::vector<std::string> est_cons;
  std::optional<std::size_t> est_k;
  std::size_t est_max_its = 3, est_max_it = 100, est_gam = 5, est_num_samples = 100;
  std::size_t est_max_iter = 1000;
  double est_i_tol = 1e-3, est_j_tol = 1e-2, est_h_tol = 1e-2, est_max_q = 0.99;
  double est_eps_change = 5.0, est_se_step = 1e-4;
  std::optional<double> est_tau;
  bool est_median = false, est_multi_start = false;
  SeedArg est_seed, est_opt_seed;
  est->add_option("--data", est_data, "CSV with columns path_id, time, count")->required();
  est->add_option("--framework", est_framework, "dnm, em, lse or abc");
  est->add_option("--scheme", est_scheme, "discrete or continuous");
  est->add_option("--p0", est_p0, "Initial guess for the estimated parameters")->required();
  est->add_option("--bounds", est_bounds, "lo:hi per estimated parameter")->required();
  est->add_option("--known-p", est_known, "Values of known parameters");
  est->add_option("--idx-known-p", est_idx_known, "Indices of known parameters");
  est->add_option("--con", est_cons, "Constraint such as p0>p1 (repeatable)");
  est->add_option("--likelihood", est_likelihood, "dnm likelihood method");
  est->add_option("--technique", est_technique, "em technique: expm, ilt or num");
  est->add_option("--accelerator", est_accel, "em accelerator: none, cg, qn1, qn2, Lange");
  est->add_option("--squares", est_squares, "lse method: expm, fm or gwa");
  est->add_option("--eps-abc", est_eps_abc, "abc thresholds: dynamic or a comma list");
  est->add_option("--k", est_k, "abc accepted samples, or likelihood accuracy knob");
  est->add_option("--max-its", est_max_its, "abc iterations");
  est->add_option("--max-q", est_max_q, "abc quantile stopping level");
  est->add_option("--eps-change", est_eps_change, "abc minimum threshold improvement (percent)");
  est->add_option("--gam", est_gam, "abc first-round oversampling factor");
  est->add_option("--sim-method", est_sim_method, "abc simulation method");
  est->add_option("--tau", est_tau, "abc leap size");
  est->add_flag("--median", est_median, "abc point estimate by the median");
  est->add_option("--i-tol", est_i_tol, "em convergence tolerance");
  est->add_option("--j-tol", est_j_tol, "em jump-statistic pruning tolerance");
  est->add_option("--h-tol", est_h_tol, "em holding-time pruning tolerance");
  est->add_option("--max-it", est_max_it, "em iterations");
  est->add_option("--z-trunc", est_trunc, "Truncation window lo:hi");
  est->add_option("--laplace-method", est_laplace, "Inversion rule for ilt");
  est->add_option("--anchor", est_anchor, "gwa linearization point");
  est->add_option("--se-type", est_se, "auto, asymptotic, simulated or none");
  est->add_option("--num-samples", est_num_samples, "Bootstrap replicates for simulated errors");
  est->add_option("--se-step", est_se_step, "Relative Hessian step");
  est->add_option("--opt-method", est_opt_method, "local or differential-evolution");
  est->add_option("--max-iter", est_max_iter, "Optimizer iterations");
  est->add_flag("--multi-start", est_multi_start, "Local optimizer restarts from jittered points");
  est_opt_seed.add(est, "--opt-seed");
  est_seed.add(est);
  est->add_option("--out", est_out, "Result JSON (default stdout)");
  est->add_option("--ci-out", est_ci_out, "Confidence ellipse CSV");
  est->add_option("--ci-levels", est_ci_levels, "Ellipse coverage levels");
  est->add_option("--ci-params", est_ci_params, "Positions (among estimated) of the two parameters");

  // forecast
  auto* fc = app.add_subcommand("forecast", "Forecast bands");
  ModelArgs fc_model;
  fc_model.add(fc);
  std::string fc_params, fc_cov, fc_times, fc_interval = "confidence", fc_method, fc_pct;
  std::string fc_bounds, fc_known, fc_idx_known, fc_out, fc_svg;
  std::vector<std::string> fc_cons;
  long fc_z0 = 0;
  std::size_t fc_k = 1000, fc_n = 1000;
  std::optional<double> fc_tau;
  SeedArg fc_seed;
  fc->add_option("--params", fc_params, "Estimated (free) parameters")->required();
  fc->add_option("--cov", fc_cov, "Covariance JSON (matrix or estimate output)");
  fc->add_option("--z0", fc_z0, "Population at the first time")->required();
  fc->add_option("--times", fc_times, "Forecast times (list or a:b:step)")->required();
  fc->add_option("--interval", fc_interval, "confidence or prediction");
  fc->add_option("--method", fc_method, "fm, exact, ea, ma or gwa");
  fc->add_option("--percentiles", fc_pct, "Percentiles, comma separated");
  fc->add_option("--k", fc_k, "Parameter samples");
  fc->add_option("--n", fc_n, "Paths per simulated mean");
  fc->add_option("--tau", fc_tau, "Leap size for approximate simulation");
  fc->add_option("--bounds", fc_bounds, "lo:hi per free parameter");
  fc->add_option("--known-p", fc_known, "Values of known parameters");
  fc->add_option("--idx-known-p", fc_idx_known, "Indices of known parameters");
  fc->add_option("--con", fc_cons, "Constraint such as p0>p1 (repeatable)");
  fc_seed.add(fc);
  fc->add_option("--out", fc_out, "Bands CSV (default stdout)");
  fc->add_option("--svg", fc_svg, "Also draw the bands to this SVG file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  // Stage 1: turn every option into library types. Failures are usage errors.
  std::function<std::string()> job;
  try {
    set_thread_count(threads);
    if (*sim) {
      const Model model = sim_model.build();
      const Params p = reals(sim_params, "params");
      model.check_params(p);
      const SimMethod method = parse_sim_method(sim_method);
      if (sim_k == 0) throw InvalidArgument("--k must be at least 1");
      if (!(sim_tau > 0.0)) throw InvalidArgument("--tau must be positive");
      if (sim_z0 < 0) throw InvalidArgument("--z0 must be non-negative");
      std::vector<double> times;
      if (*sim_times_opt) {
        times = times_list(sim_times, "times");
        if (times.empty()) throw InvalidArgument("--times is empty");
      } else if (*sim_tmax_opt) {
        if (!(sim_tmax > 0.0)) throw InvalidArgument("--t-max must be positive");
        if (method != SimMethod::Exact) {
          throw InvalidArgument("--t-max records every jump and needs --method exact");
        }
      } else {
        throw InvalidArgument("simulate needs --times or --t-max");
      }
      job = [=, &out] {
        std::ostringstream csv;
        csv << "path_id,time,state\n";
        if (!times.empty()) {
          SimulationOptions o{method, sim_tau, sim_k, sim_survival, sim_seed.get()};
          const auto paths = simulate_discrete(model, p, sim_z0, times, o);
          for (std::size_t k = 0; k < paths.size(); ++k) {
            for (std::size_t i = 0; i < paths[k].obs_times.size(); ++i) {
              csv << k << ',' << format_real(paths[k].obs_times[i]) << ',' << paths[k].states[i] << '\n';
            }
          }
        } else {
          const auto paths = simulate_continuous(model, p, sim_z0, sim_tmax, sim_k, sim_survival,
                                                 sim_seed.get());
          for (std::size_t k = 0; k < paths.size(); ++k) {
            for (std::size_t i = 0; i < paths[k].jump_times.size(); ++i) {
              csv << k << ',' << format_real(paths[k].jump_times[i]) << ',' << paths[k].states[i] << '\n';
            }
          }
        }
        emit(sim_out, csv.str(), out);
        return "simulate: " + std::to_string(sim_k) + " path(s) with method " + sim_method +
               (sim_out.empty() ? std::string() : " written to " + sim_out);
      };
    } else if (*prob) {
      const Model model = prob_model.build();
      const Params p = reals(prob_params, "params");
      model.check_params(p);
      const std::vector<long> z0 = integers(prob_z0, "z0"), zt = integers(prob_zt, "zt");
      const std::vector<double> t = times_list(prob_t, "t");
      const ProbMethod method = parse_prob_method(prob_method);
      ProbOptions o;
      if (!prob_trunc.empty()) o.z_trunc = window_arg(prob_trunc);
      o.k = prob_k;
      o.laplace_method = parse_inversion_method(prob_laplace);
      o.anchor = parse_gwa_anchor(prob_anchor);
      o.seed = prob_seed.get();
      job = [=, &out] {
        const ProbTensor pt = probability(model, p, z0, zt, t, method, o);
        std::ostringstream csv;
        csv << "t,z0,zt,probability\n";
        for (std::size_t ti = 0; ti < t.size(); ++ti) {
          for (std::size_t a = 0; a < z0.size(); ++a) {
            for (std::size_t b = 0; b < zt.size(); ++b) {
              csv << format_real(t[ti]) << ',' << z0[a] << ',' << zt[b] << ','
                  << format_real(pt(ti, a, b)) << '\n';
            }
          }
        }
        emit(prob_out, csv.str(), out);
        return "probability: " + std::to_string(pt.values.size()) + " value(s) by " + prob_method +
               (prob_out.empty() ? std::string() : " written to " + prob_out);
      };
    } else if (*est) {
      auto model = std::make_shared<Model>(est_model.build());
      const Scheme scheme = parse_scheme(est_scheme);
      auto data = std::make_shared<ObservedData>(read_observations(est_data, scheme));
      data->validate();
      EstimateRequest req;
      req.framework = parse_framework(est_framework);
      req.p0 = reals(est_p0, "p0");
      req.bounds = bounds_list(est_bounds);
      req.known = known_from(est_known, est_idx_known);
      req.constraints = constraints_from(est_cons);
      req.likelihood = parse_prob_method(est_likelihood);
      if (!est_trunc.empty()) req.prob.z_trunc = window_arg(est_trunc);
      req.prob.laplace_method = parse_inversion_method(est_laplace);
      req.prob.anchor = parse_gwa_anchor(est_anchor);
      req.prob.seed = est_seed.get();
      req.explicit_seed = est_seed.explicit_seed();
      req.technique = parse_em_technique(est_technique);
      req.accelerator = parse_em_accelerator(est_accel);
      req.i_tol = est_i_tol;
      req.j_tol = est_j_tol;
      req.h_tol = est_h_tol;
      req.max_it = est_max_it;
      req.squares = parse_squares(est_squares);
      if (est_eps_abc != "dynamic") req.abc.eps_abc = reals(est_eps_abc, "eps-abc");
      if (req.framework == Framework::Abc) {
        if (est_k) req.abc.k = *est_k;
      } else {
        req.prob.k = est_k;
      }
      req.abc.max_its = est_max_its;
      req.abc.max_q = est_max_q;
      req.abc.eps_change = est_eps_change;
      req.abc.gam = est_gam;
      req.abc.sim_method = parse_sim_method(est_sim_method);
      req.abc.tau = est_tau;
      req.abc.median = est_median;
      req.opt.method = parse_opt_method(est_opt_method);
      req.opt.max_iter = est_max_iter;
      req.opt.seed = est_opt_seed.get();
      req.opt.multi_start = est_multi_start;
      req.seed = est_seed.get();
      req.num_samples = est_num_samples;
      req.se_step = est_se_step;
      if (est_se == "auto") {
        req.se_type = req.framework == Framework::Lse ? SeType::None : SeType::Asymptotic;
      } else {
        req.se_type = parse_se_type(est_se);
      }
      if (req.framework == Framework::Lse && req.se_type == SeType::Asymptotic) {
        throw InvalidArgument("lse has no likelihood; use --se-type simulated or none");
      }
      model->check_params(req.known.expand(req.p0, model->param_count()));
      const std::vector<double> levels = reals(est_ci_levels, "ci-levels");
      const std::vector<long> ci_params = integers(est_ci_params, "ci-params");
      if (!est_ci_out.empty()) {
        if (ci_params.size() != 2) throw InvalidArgument("--ci-params needs two positions");
        for (long c : ci_params) {
          if (c < 0 || static_cast<std::size_t>(c) >= req.p0.size()) {
            throw InvalidArgument("--ci-params positions must index the estimated parameters");
          }
        }
        for (double l : levels) {
          if (!(l > 0.0 && l < 1.0)) throw InvalidArgument("--ci-levels must lie in (0, 1)");
        }
      }
      job = [=, &out] {
        const EstimationResult res = estimate(*data, *model, req);
        emit(est_out, result_json(res, model->param_names()), out);
        std::string summary = "estimate: p = " + fmt_list(res.p);
        if (!est_out.empty()) summary += " written to " + est_out;
        if (!est_ci_out.empty()) {
          if (!res.cov) throw ComputationError("no covariance available for --ci-out");
          const auto a = static_cast<Eigen::Index>(ci_params[0]);
          const auto b = static_cast<Eigen::Index>(ci_params[1]);
          Matrix c(2, 2);
          c << (*res.cov)(a, a), (*res.cov)(a, b), (*res.cov)(b, a), (*res.cov)(b, b);
          const std::array<double, 2> mean{res.p[res.estimated[static_cast<std::size_t>(a)]],
                                           res.p[res.estimated[static_cast<std::size_t>(b)]]};
          const auto lines = confidence_ellipse(mean, c, levels);
          write_file_atomic(est_ci_out, ellipses_csv(levels, lines));
          summary += ", region written to " + est_ci_out;
        }
        return summary;
      };
    } else if (*fc) {
      auto model = std::make_shared<Model>(fc_model.build());
      const std::vector<double> theta = reals(fc_params, "params");
      const std::vector<double> times = times_list(fc_times, "times");
      ForecastOptions o;
      o.interval = parse_interval(fc_interval);
      if (!fc_method.empty()) o.method = parse_forecast_method(fc_method);
      if (!fc_pct.empty()) o.percentiles = reals(fc_pct, "percentiles");
      o.k = fc_k;
      o.n = fc_n;
      o.tau = fc_tau;
      o.bounds = bounds_list(fc_bounds);
      o.known = known_from(fc_known, fc_idx_known);
      o.constraints = constraints_from(fc_cons);
      o.seed = fc_seed.get();
      o.known.validate(model->param_count());
      model->check_params(o.known.expand(theta, model->param_count()));
      std::optional<Matrix> cov;
      if (!fc_cov.empty()) cov = read_matrix_json(fc_cov);
      job = [=, &out] {
        const ForecastBands bands = forecast(*model, fc_z0, times, theta, cov, o);
        emit(fc_out, bands_csv(bands), out);
        std::string summary = "forecast: " + to_string(o.interval) + " bands at " +
                              std::to_string(times.size()) + " times";
        if (!fc_out.empty()) summary += " written to " + fc_out;
        if (!fc_svg.empty()) {
          write_file_atomic(fc_svg, bands_svg(bands));
          summary += ", chart written to " + fc_svg;
        }
        return summary;
      };
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  // Stage 2: computation.
  try {
    const std::string summary = job();
    err << summary << '\n';
    return 0;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "computation failed: " << e.what() << '\n';
    return 2;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.push_back("bdpkit");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace bdp
