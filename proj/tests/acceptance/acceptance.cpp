// Acceptance suite: one pass/fail line per criterion, nonzero exit on failure.
// argv[1] (optional) is the CLI binary path used by the determinism check.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <mutex>
#include <thread>
#include <vector>

#include "ipmtmle/experiment.hpp"
#include "ipmtmle/rng.hpp"

using namespace ipmtmle;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return std::string(buf);
}

IndividualRecord atom_record(const DiscreteLaw::Atom& a, int n, int n_env) {
  IndividualRecord rec;
  rec.z_class = a.z;
  rec.z_next_class = a.z_next;
  rec.survived = a.z_next == 0 ? 0 : 1;
  for (int j = 0; j < n; ++j)
    if (a.y[j] > 0) rec.offspring.emplace_back(j + 1, a.y[j]);
  if (n_env > 0) rec.env_label = "env" + std::to_string(a.env);
  return rec;
}

struct OracleOutcome {
  double max_rel = 0.0;
  double max_mean = 0.0;  // zero-mean residual, per submodel space
};

OracleOutcome oracle_suite(OracleFunctional fn, Target target, int n_env, int instances,
                           std::uint64_t seed) {
  OracleOutcome out;
  std::atomic<int> next{0};
  std::vector<OracleOutcome> partial(2);
  auto worker = [&](int tid) {
    for (;;) {
      int inst = next.fetch_add(1);
      if (inst >= instances) return;
      int n = 2 + inst % 3;
      Rng rng(hash_mix(seed, static_cast<std::uint64_t>(inst)));
      DiscreteLaw law = random_discrete_law(rng, n, n_env);
      DemographicModel model = law.to_model();
      EigenSystem eig = target_eigs(target, model);
      auto cells = make_eif_cells(target, model, eig);
      double sup = 0.0;
      std::vector<double> closed(law.atoms.size());
      double mean_g = 0.0, mean_f = 0.0;
      for (std::size_t k = 0; k < law.atoms.size(); ++k) {
        auto ev = eif_evaluate(atom_record(law.atoms[k], n, n_env), model, cells);
        closed[k] = ev.psi_total();
        sup = std::max(sup, std::fabs(closed[k]));
        mean_g += law.atoms[k].prob * ev.psi_growth;
        mean_f += law.atoms[k].prob * ev.psi_fecundity;
      }
      partial[tid].max_mean =
          std::max({partial[tid].max_mean, std::fabs(mean_g), std::fabs(mean_f)});
      for (std::size_t k = 0; k < law.atoms.size(); ++k) {
        double hk = std::max(1e-8, std::min(1e-5, law.atoms[k].prob / 4.0));
        OracleResult oc = gateaux_oracle(fn, law, law.atoms[k], hk);
        double rel = std::fabs(closed[k] - oc.derivative) /
                     std::max(std::fabs(oc.derivative), 1e-3 * sup);
        partial[tid].max_rel = std::max(partial[tid].max_rel, rel);
      }
    }
  };
  std::thread t0(worker, 0), t1(worker, 1);
  t0.join();
  t1.join();
  out.max_rel = std::max(partial[0].max_rel, partial[1].max_rel);
  out.max_mean = std::max(partial[0].max_mean, partial[1].max_mean);
  return out;
}

const SummaryRow* find_row(const std::vector<SummaryRow>& rows, const std::string& bw,
                           const std::string& method) {
  for (const auto& r : rows)
    if (r.bandwidth == bw && r.method == method) return &r;
  return nullptr;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace

int main(int argc, char** argv) {
  std::string cli = argc > 1 ? argv[1] : "";
  fs::path work = fs::temp_directory_path() / "ipmtmle_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  // 1 & 2: closed-form influence functions vs the contamination oracle, and
  // exact zero mean over the support, 100 instances per target.
  {
    OracleOutcome lam = oracle_suite(OracleFunctional::lambda, Target::lambda, 0, 100, 101);
    OracleOutcome ela =
        oracle_suite(OracleFunctional::elasticity, Target::elasticity, 0, 100, 202);
    OracleOutcome lls =
        oracle_suite(OracleFunctional::log_lambda_s, Target::log_lambda_s, 2, 100, 303);
    bool pass1 = lam.max_rel < 1e-4 && ela.max_rel < 1e-3 && lls.max_rel < 1e-4;
    report(1, pass1,
           "EIF vs Gateaux oracle, max rel err: lambda " + fmt(lam.max_rel) + " (<1e-4), "
           "elasticity " + fmt(ela.max_rel) + " (<1e-3), log_lambda_s " + fmt(lls.max_rel) +
           " (<1e-4)");
    double worst_mean = std::max({lam.max_mean, ela.max_mean, lls.max_mean});
    report(2, worst_mean < 1e-10,
           "zero-mean EIF over full support, worst |sum psi*P| = " + fmt(worst_mean) +
           " (<1e-10)");
  }

  // 3: plug-in bias removal after convergence on size-structured data, n=1000.
  {
    SimSpec spec = SimSpec::defaults(Design::basic);
    spec.n = 1000;
    spec.seed = 515;
    Dataset ds = gen_basic(spec);
    TmleConfig tc;
    tc.target = Target::lambda;
    tc.fit.bandwidth = 0.1;
    tc.epsilon_tol = 1e-4;  // the spec default; reachable stopping point
    tc.max_iterations = 30;
    tc.seed = 9;
    auto [est, state] = run_cv_tmle(ds, tc);
    double mg = 0, mf = 0, vg = 0, vf = 0;
    double n = static_cast<double>(est.psi_validation.size());
    for (const auto& ev : est.psi_validation) {
      mg += ev.psi_growth;
      mf += ev.psi_fecundity;
      vg += ev.psi_growth * ev.psi_growth;
      vf += ev.psi_fecundity * ev.psi_fecundity;
    }
    mg /= n;
    mf /= n;
    double rg = std::fabs(mg) / std::sqrt(vg / n - mg * mg);
    double rf = std::fabs(mf) / std::sqrt(vf / n - mf * mf);
    bool pass = state.converged && rg < 1e-3 && rf < 1e-3;
    report(3, pass,
           "plug-in bias at convergence: |mean/sd| growth " + fmt(rg) + ", fecundity " +
           fmt(rf) + " (<1e-3)");
  }

  // 4: lambda experiment at paper scale.
  double lambda_truth = 0.0;
  {
    ExperimentConfig config;
    config.sim = SimSpec::defaults(Design::basic);
    config.sim.n = 1000;
    config.target = Target::lambda;
    config.bandwidths = {0.01, 0.1};
    config.n_replications = 200;
    config.n_folds = 5;
    config.max_iterations = 2;  // genuine corrections land in 1-2 updates; later
                                // epsilon fits sit at their noise floor
    config.seed = 20240915;
    config.out_dir = (work / "lambda_experiment").string();
    ExperimentResult res = run_experiment(config);
    lambda_truth = res.truth;
    const SummaryRow* i001 = find_row(res.summary, "0.01", "initial");
    const SummaryRow* i01 = find_row(res.summary, "0.1", "initial");
    const SummaryRow* t001 = find_row(res.summary, "0.01", "tmle-iter-2");
    const SummaryRow* t01 = find_row(res.summary, "0.1", "tmle-iter-2");
    bool have = i001 && i01 && t001 && t01 && res.failures.empty();
    bool cov_ok = have && t001->coverage >= 0.91 && t001->coverage <= 0.99 &&
                  t01->coverage >= 0.91 && t01->coverage <= 0.99;
    bool bias_ok = have && std::fabs(t01->bias) <= 0.5 * std::fabs(i01->bias);
    bool spread_ok = have && std::fabs(t001->mean_estimate - t01->mean_estimate) <
                                std::fabs(i001->mean_estimate - i01->mean_estimate);
    report(4, cov_ok && bias_ok && spread_ok,
           have ? ("lambda at n=1000, 200 reps: tmle coverage {" + fmt(t001->coverage) + ", " +
                   fmt(t01->coverage) + "} in [0.91,0.99]; |bias| at bw=0.1 " +
                   fmt(std::fabs(t01->bias)) + " <= 0.5*" + fmt(std::fabs(i01->bias)) +
                   "; bw spread " + fmt(std::fabs(t001->mean_estimate - t01->mean_estimate)) +
                   " < " + fmt(std::fabs(i001->mean_estimate - i01->mean_estimate)))
                : "experiment rows missing or replications failed");
  }

  // 5: elasticity experiment at the same scale, wider coverage band.
  {
    ExperimentConfig config;
    config.sim = SimSpec::defaults(Design::basic);
    config.sim.n = 1000;
    config.target = Target::elasticity;
    config.bandwidths = {0.01, 0.1};
    config.n_replications = 200;
    config.n_folds = 5;
    config.max_iterations = 2;
    config.seed = 20240916;
    config.out_dir = (work / "elasticity_experiment").string();
    ExperimentResult res = run_experiment(config);
    const SummaryRow* t001 = find_row(res.summary, "0.01", "tmle-iter-2");
    const SummaryRow* t01 = find_row(res.summary, "0.1", "tmle-iter-2");
    bool have = t001 && t01 && res.failures.empty();
    bool pass = have && t001->coverage >= 0.88 && t001->coverage <= 0.99 &&
                t01->coverage >= 0.88 && t01->coverage <= 0.99;
    report(5, pass,
           have ? ("elasticity tmle coverage {" + fmt(t001->coverage) + ", " +
                   fmt(t01->coverage) + "} in [0.88,0.99]")
                : "experiment rows missing or replications failed");
  }

  // 6: empirical initial on rotifer-like data is a TMLE fixed point.
  {
    SimSpec base = SimSpec::defaults(Design::rotifer_like);
    base.n = 1000;
    double worst_eps = 0.0, worst_rel = 0.0;
    std::atomic<int> next{0};
    std::atomic<bool> ok{true};
    std::mutex mtx;
    auto worker = [&]() {
      for (;;) {
        int rep = next.fetch_add(1);
        if (rep >= 200) return;
        SimSpec spec = base;
        spec.seed = hash_mix(606, static_cast<std::uint64_t>(rep));
        Dataset ds = gen_rotifer_like(spec);
        for (Target target : {Target::lambda, Target::elasticity}) {
          TmleConfig tc;
          tc.target = target;
          tc.initial = TmleConfig::Initial::empirical_pooled;
          tc.seed = spec.seed;
          auto [est, state] = run_cv_tmle(ds, tc);
          double e1 = std::fabs(state.epsilon_history[0].first);
          double e2 = std::fabs(state.epsilon_history[0].second);
          double rel = std::fabs(est.estimate - state.trace[0].estimate) /
                       std::fabs(state.trace[0].estimate);
          std::lock_guard<std::mutex> lock(mtx);
          worst_eps = std::max({worst_eps, e1, e2});
          worst_rel = std::max(worst_rel, rel);
          if (e1 >= 1e-3 || e2 >= 1e-3 || rel >= 1e-6) ok = false;
        }
      }
    };
    std::thread t0(worker), t1(worker);
    t0.join();
    t1.join();
    report(6, ok,
           "rotifer no-op over 200 reps: worst first-iteration |eps| " + fmt(worst_eps) +
           " (<1e-3), worst |tmle-initial|/|initial| " + fmt(worst_rel) + " (<1e-6)");
  }

  // 7: eigen engine against the characteristic polynomial and the
  // Moore-Penrose identities.
  {
    Rng rng(707);
    double worst_lam = 0.0;
    for (int k = 0; k < 1000; ++k) {
      Eigen::MatrixXd K(2, 2);
      K << rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform();
      double tr = K(0, 0) + K(1, 1);
      double det = K(0, 0) * K(1, 1) - K(0, 1) * K(1, 0);
      double ref = 0.5 * (tr + std::sqrt(std::max(0.0, tr * tr - 4 * det)));
      worst_lam = std::max(worst_lam, std::fabs(dominant_eigs(K).lambda - ref));
    }
    double worst_mp = 0.0;
    for (int k = 0; k < 100; ++k) {
      int n = 2 + k % 4;
      Eigen::MatrixXd K(n, n);
      for (int a = 0; a < n * n; ++a) K(a / n, a % n) = rng.uniform();
      EigenSystem es = dominant_eigs(K);
      Eigen::MatrixXd A = es.lambda * Eigen::MatrixXd::Identity(n, n) - K;
      Eigen::MatrixXd P = deflated_pinv(es.lambda, K);
      worst_mp = std::max({worst_mp, (A * P * A - A).cwiseAbs().maxCoeff(),
                           (P * A * P - P).cwiseAbs().maxCoeff(),
                           ((A * P).transpose() - A * P).cwiseAbs().maxCoeff(),
                           ((P * A).transpose() - P * A).cwiseAbs().maxCoeff()});
    }
    report(7, worst_lam < 1e-10 && worst_mp < 1e-10,
           "eigen engine: worst |power - charpoly| " + fmt(worst_lam) +
           " (<1e-10), worst Moore-Penrose residual " + fmt(worst_mp) + " (<1e-10)");
  }

  // 8: trivial identities.
  {
    Rng rng(808);
    Eigen::MatrixXd sg(3, 3), f(3, 3);
    for (int a = 0; a < 9; ++a) {
      sg(a / 3, a % 3) = 0.05 + 0.3 * rng.uniform();
      f(a / 3, a % 3) = 0.05 + 0.5 * rng.uniform();
    }
    double e_all_fec = elasticity_of(Eigen::MatrixXd::Zero(3, 3), f);
    double e_no_fec = elasticity_of(sg, Eigen::MatrixXd::Zero(3, 3));
    Eigen::MatrixXd K = sg + f;
    EigenSystem es = dominant_eigs(K);
    double partition = es.v.dot(sg * es.u) / es.lambda + elasticity_of(sg, f);
    double single_env =
        std::fabs(log_lambda_s_of({K}, Eigen::VectorXd::Ones(1)) - std::log(es.lambda));
    bool pass = std::fabs(e_all_fec - 1.0) < 1e-10 && std::fabs(e_no_fec) < 1e-12 &&
                single_env < 1e-12 && std::fabs(partition - 1.0) < 1e-10;
    report(8, pass,
           "identities: e(K=F)-1 " + fmt(e_all_fec - 1.0) + ", e(F=0) " + fmt(e_no_fec) +
           ", single-env log-lambda_s gap " + fmt(single_env) + ", partition-1 " +
           fmt(partition - 1.0));
  }

  // 9: byte-identical simulate runs through the CLI.
  if (cli.empty()) {
    report(9, false, "CLI path not supplied");
  } else {
    fs::path cfg = work / "determinism.json";
    fs::path out1 = work / "det_run1";
    fs::path out2 = work / "det_run2";
    {
      std::ofstream f(cfg);
      f << "{\n"
           "  \"sim\": {\"design\": \"basic\", \"n\": 300, \"basic\": {\"n_classes\": 12}},\n"
           "  \"target\": \"lambda\",\n"
           "  \"bandwidths\": [0.05],\n"
           "  \"n_replications\": 4,\n"
           "  \"folds\": 3,\n"
           "  \"max_iterations\": 2,\n"
           "  \"seed\": 4242,\n"
           "  \"threads\": 2\n"
           "}\n";
    }
    std::string cmd1 = cli + " simulate --config " + cfg.string() + " --out " + out1.string() +
                       " > /dev/null 2>&1";
    std::string cmd2 = cli + " simulate --config " + cfg.string() + " --out " + out2.string() +
                       " > /dev/null 2>&1";
    int rc1 = std::system(cmd1.c_str());
    int rc2 = std::system(cmd2.c_str());
    bool pass = rc1 == 0 && rc2 == 0;
    std::string detail = "simulate twice with one seed: ";
    if (!pass) {
      detail += "CLI exit codes " + std::to_string(rc1) + "/" + std::to_string(rc2);
    } else {
      for (const char* name :
           {"replications.csv", "summary.csv", "histogram.csv", "heatmap_gm_truth.csv",
            "heatmap_gm_initial_0.05.csv", "heatmap_gm_tmle_0.05.csv"}) {
        if (slurp(out1 / name) != slurp(out2 / name)) {
          pass = false;
          detail += std::string(name) + " differs; ";
        }
      }
      if (pass) detail += "all outputs byte-identical";
    }
    report(9, pass, detail);
  }

  std::printf("%s (%d criterion failure%s), lambda truth %.12g\n",
              g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED", g_failures,
              g_failures == 1 ? "" : "s", lambda_truth);
  return g_failures == 0 ? 0 : 1;
}
