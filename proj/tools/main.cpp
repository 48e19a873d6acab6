#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ipmtmle/experiment.hpp"

using namespace ipmtmle;

namespace {

Target parse_target(const std::string& s) {
  if (s == "lambda") return Target::lambda;
  if (s == "elasticity") return Target::elasticity;
  if (s == "log_lambda_s") return Target::log_lambda_s;
  throw usage_error("unknown target: " + s);
}

TmleConfig::Initial parse_initial(const std::string& s) {
  if (s == "parametric") return TmleConfig::Initial::parametric;
  if (s == "empirical_per_fold") return TmleConfig::Initial::empirical_per_fold;
  if (s == "empirical_pooled") return TmleConfig::Initial::empirical_pooled;
  throw usage_error("unknown initial estimator: " + s);
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

int cmd_simulate(const std::string& config_path, std::uint64_t seed_override, bool has_seed,
                 int threads_override, const std::string& out_override) {
  ExperimentConfig config = ExperimentConfig::from_json_file(config_path);
  if (has_seed) config.seed = seed_override;
  if (threads_override > 0) config.threads = threads_override;
  if (!out_override.empty()) config.out_dir = out_override;
  config.out_dir = env_or("IPMTMLE_OUT_DIR", config.out_dir);
  if (const char* t = std::getenv("IPMTMLE_THREADS")) config.threads = std::atoi(t);

  ExperimentResult result = run_experiment(config);
  std::cout << "truth " << format_double(result.truth) << "\n";
  for (const auto& s : result.summary) {
    std::cout << s.bandwidth << " " << s.method << ": coverage=" << s.coverage
              << " bias=" << s.bias << " sd=" << s.sd << " rmse=" << s.rmse << "\n";
  }
  for (const auto& f : result.failures) std::cerr << "failure: " << f << "\n";
  std::size_t cells = static_cast<std::size_t>(config.n_replications);
  if (result.failures.size() * 10 > cells) {
    std::cerr << "more than 10% of replications failed\n";
    return 3;
  }
  return 0;
}

int cmd_analyze(const std::string& input, const std::string& config_path) {
  nlohmann::json j = nlohmann::json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw data_error("cannot open " + config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    j = nlohmann::json::parse(ss.str());
  }
  SchemaConfig schema;
  if (j.contains("schema")) schema = SchemaConfig::from_json_text(j["schema"].dump());
  Dataset ds = read_dataset(input, schema);

  TmleConfig tc;
  tc.target = parse_target(j.value("target", "lambda"));
  tc.n_folds = j.value("folds", 5);
  tc.max_iterations = j.value("max_iterations", 5);
  tc.epsilon_tol = j.value("epsilon_tol", 1e-4);
  tc.seed = j.value("seed", 1);
  tc.initial = parse_initial(j.value("initial", "parametric"));
  tc.fit.bandwidth = j.value("bandwidth", 0.0);
  if (j.contains("bandwidth_candidates"))
    tc.fit.bandwidth_candidates = j["bandwidth_candidates"].get<std::vector<double>>();
  tc.fit.split_survival_by_seedling = j.value("split_survival_by_seedling", false);
  tc.fit.use_covariates = j.value("use_covariates", false);
  tc.fit.seed = tc.seed;

  auto [estimate, state] = run_cv_tmle(ds, tc);

  nlohmann::json report;
  report["initial_estimate"] = state.trace.front().estimate;
  report["initial_se"] = state.trace.front().std_error;
  report["estimate"] = estimate.estimate;
  report["std_error"] = estimate.std_error;
  report["ci_low"] = estimate.ci_low;
  report["ci_high"] = estimate.ci_high;
  report["converged"] = state.converged;
  report["epsilon_trace"] = nlohmann::json::array();
  for (const auto& [e1, e2] : state.epsilon_history)
    report["epsilon_trace"].push_back({{"growth", e1}, {"fecundity", e2}});
  report["fold_estimates"] = state.fold_estimates;
  report["warnings"] = state.warnings;
  std::string out = j.value("report_path", "");
  if (!out.empty()) {
    std::ofstream f(out);
    f << report.dump(2) << "\n";
  }
  std::cout << "initial estimate: " << format_double(state.trace.front().estimate) << "\n"
            << "tmle estimate:    " << format_double(estimate.estimate) << "\n"
            << "std error:        " << format_double(estimate.std_error) << "\n"
            << "95% CI:           [" << format_double(estimate.ci_low) << ", "
            << format_double(estimate.ci_high) << "]\n"
            << "iterations:       " << state.epsilon_history.size()
            << (state.converged ? " (converged)" : " (cap reached)") << "\n";
  for (const auto& [e1, e2] : state.epsilon_history)
    std::cout << "  eps_growth=" << format_double(e1) << " eps_fecundity=" << format_double(e2)
              << "\n";
  for (const auto& w : state.warnings) std::cout << "warning: " << w << "\n";
  return 0;
}

int cmd_oracle_check(int instances, std::uint64_t seed, double h, const std::string& report_path);

int cmd_gen_data(const std::string& design, long n, std::uint64_t seed, const std::string& out,
                 const std::string& spec_path, bool print_truth) {
  SimSpec spec;
  if (!spec_path.empty()) {
    std::ifstream in(spec_path);
    if (!in) throw data_error("cannot open " + spec_path);
    std::stringstream ss;
    ss << in.rdbuf();
    spec = SimSpec::from_json_text(ss.str());
  } else {
    if (design == "basic") spec = SimSpec::defaults(Design::basic);
    else if (design == "idaho_like") spec = SimSpec::defaults(Design::idaho_like);
    else if (design == "rotifer_like") spec = SimSpec::defaults(Design::rotifer_like);
    else throw usage_error("unknown design: " + design);
  }
  if (n > 0) spec.n = n;
  spec.seed = seed;
  Dataset ds = generate(spec);
  write_dataset(out, ds);
  std::cout << "wrote " << ds.records.size() << " records to " << out << "\n";
  if (print_truth) {
    if (spec.design == Design::idaho_like)
      std::cout << "truth log_lambda_s " << format_double(design_truth(spec, Target::log_lambda_s))
                << "\n";
    else
      std::cout << "truth lambda " << format_double(design_truth(spec, Target::lambda)) << "\n"
                << "truth elasticity "
                << format_double(design_truth(spec, Target::elasticity)) << "\n";
  }
  return 0;
}

} // namespace

// Oracle agreement table over random primitive discrete laws.
#include "ipmtmle/rng.hpp"

namespace {

int cmd_oracle_check(int instances, std::uint64_t seed, double h, const std::string& report_path) {
  struct Row {
    const char* name;
    OracleFunctional fn;
    Target target;
    int n_env;
    double tol;
    double max_rel = 0.0;
  };
  std::vector<Row> rows = {
      {"lambda", OracleFunctional::lambda, Target::lambda, 0, 1e-4},
      {"elasticity", OracleFunctional::elasticity, Target::elasticity, 0, 1e-3},
      {"log_lambda_s", OracleFunctional::log_lambda_s, Target::log_lambda_s, 2, 1e-4},
  };
  Rng rng(seed);
  for (auto& row : rows) {
    for (int inst = 0; inst < instances; ++inst) {
      int n = 2 + inst % 3;
      DiscreteLaw law = random_discrete_law(rng, n, row.n_env);
      DemographicModel model = law.to_model();
      EigenSystem eig = target_eigs(row.target, model);
      std::vector<EifCells> cells = make_eif_cells(row.target, model, eig);
      double sup = 0.0;
      std::vector<double> closed(law.atoms.size());
      for (std::size_t k = 0; k < law.atoms.size(); ++k) {
        const auto& a = law.atoms[k];
        IndividualRecord rec;
        rec.z_class = a.z;
        rec.z_next_class = a.z_next;
        rec.survived = a.z_next == 0 ? 0 : 1;
        for (int j = 0; j < n; ++j)
          if (a.y[j] > 0) rec.offspring.emplace_back(j + 1, a.y[j]);
        if (row.n_env > 0) rec.env_label = "env" + std::to_string(a.env);
        closed[k] = eif_evaluate(rec, model, cells).psi_total();
        sup = std::max(sup, std::fabs(closed[k]));
      }
      for (std::size_t k = 0; k < law.atoms.size(); ++k) {
        // Shrink the step for small atoms so the minus branch stays a law and
        // the difference stays central.
        double hk = std::max(1e-8, std::min(h, law.atoms[k].prob / 4.0));
        OracleResult oc = gateaux_oracle(row.fn, law, law.atoms[k], hk);
        double denom = std::max(std::fabs(oc.derivative), 1e-3 * sup);
        double rel = std::fabs(closed[k] - oc.derivative) / std::max(denom, 1e-12);
        row.max_rel = std::max(row.max_rel, rel);
      }
    }
  }
  bool ok = true;
  nlohmann::json rep;
  for (const auto& row : rows) {
    bool pass = row.max_rel < row.tol;
    ok = ok && pass;
    std::cout << row.name << ": max relative error " << format_double(row.max_rel)
              << " (tolerance " << row.tol << ") " << (pass ? "ok" : "FAIL") << "\n";
    rep[row.name] = {{"max_rel_error", row.max_rel}, {"tolerance", row.tol}, {"pass", pass}};
  }
  if (!report_path.empty()) {
    std::ofstream f(report_path);
    f << rep.dump(2) << "\n";
  }
  return ok ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Demographic targets of discretized projection models with "
               "cross-validated targeted maximum likelihood updates"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Run a Monte Carlo experiment from a JSON config");
  std::string sim_config;
  std::uint64_t sim_seed = 0;
  bool sim_has_seed = false;
  int sim_threads = 0;
  std::string sim_out;
  sim->add_option("--config", sim_config, "experiment config JSON")->required();
  sim->add_option("--seed", sim_seed, "seed override")->each([&](const std::string&) {
    sim_has_seed = true;
  });
  sim->add_option("--threads", sim_threads, "worker threads");
  sim->add_option("--out", sim_out, "output directory override");

  auto* ana = app.add_subcommand("analyze", "Estimate targets for one dataset CSV");
  std::string ana_input, ana_config;
  ana->add_option("input", ana_input, "dataset CSV")->required();
  ana->add_option("--config", ana_config, "analysis config JSON");

  auto* orc = app.add_subcommand("oracle-check", "Influence functions vs the finite-difference oracle");
  int orc_instances = 100;
  std::uint64_t orc_seed = 20240601;
  double orc_h = 1e-5;
  std::string orc_report;
  orc->add_option("--instances", orc_instances, "instances per target");
  orc->add_option("--seed", orc_seed, "seed");
  orc->add_option("--step", orc_h, "contamination step");
  orc->add_option("--report", orc_report, "JSON report path");

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset CSV");
  std::string gen_design = "basic", gen_out = "data.csv", gen_spec;
  long gen_n = 1000;
  std::uint64_t gen_seed = 1;
  bool gen_truth = false;
  gen->add_option("--design", gen_design, "basic | idaho_like | rotifer_like");
  gen->add_option("--n", gen_n, "records");
  gen->add_option("--seed", gen_seed, "seed");
  gen->add_option("--out", gen_out, "output CSV")->required();
  gen->add_option("--spec", gen_spec, "SimSpec JSON (overrides --design)");
  gen->add_flag("--print-truth", gen_truth, "print the design's exact-law targets");

  try {
    app.parse(argc, argv);
    if (sim->parsed()) return cmd_simulate(sim_config, sim_seed, sim_has_seed, sim_threads, sim_out);
    if (ana->parsed()) return cmd_analyze(ana_input, ana_config);
    if (orc->parsed()) return cmd_oracle_check(orc_instances, orc_seed, orc_h, orc_report);
    if (gen->parsed()) return cmd_gen_data(gen_design, gen_n, gen_seed, gen_out, gen_spec, gen_truth);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
