#include "ipmtmle/experiment.hpp"
#include "ipmtmle/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace ipmtmle {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  nlohmann::json j = nlohmann::json::parse(ss.str());
  ExperimentConfig c;
  c.sim = SimSpec::from_json_text(j.value("sim", nlohmann::json::object()).dump());
  std::string target = j.value("target", "lambda");
  if (target == "lambda") c.target = Target::lambda;
  else if (target == "elasticity") c.target = Target::elasticity;
  else if (target == "log_lambda_s") c.target = Target::log_lambda_s;
  else throw usage_error("unknown target: " + target);
  if (j.contains("bandwidths")) c.bandwidths = j["bandwidths"].get<std::vector<double>>();
  c.cv_bandwidth = j.value("cv_bandwidth", false);
  c.n_replications = j.value("n_replications", c.n_replications);
  c.n_folds = j.value("folds", c.n_folds);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.epsilon_tol = j.value("epsilon_tol", c.epsilon_tol);
  c.epsilon_bound = j.value("epsilon_bound", c.epsilon_bound);
  c.seed = j.value("seed", c.seed);
  std::string initial = j.value("initial", "parametric");
  if (initial == "parametric") c.initial = TmleConfig::Initial::parametric;
  else if (initial == "empirical_per_fold") c.initial = TmleConfig::Initial::empirical_per_fold;
  else if (initial == "empirical_pooled") c.initial = TmleConfig::Initial::empirical_pooled;
  else throw usage_error("unknown initial estimator: " + initial);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.threads = j.value("threads", c.threads);
  c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
  return c;
}

namespace {

std::string bandwidth_label(double bw) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", bw);
  return std::string(buf);
}

struct Arm {
  std::string label;
  double bandwidth = 0.0;  // 0 = cross-validated
  bool empirical = false;
};

struct RepOutcome {
  std::vector<ReplicationRow> rows;
  std::vector<std::string> failures;
};

} // namespace

std::vector<SummaryRow> summarize_replication_rows(const std::vector<ReplicationRow>& rows,
                                                   double truth) {
  std::map<std::pair<std::string, int>, std::vector<const ReplicationRow*>> groups;
  for (const auto& r : rows) groups[{r.bandwidth, r.iteration}].push_back(&r);
  std::vector<SummaryRow> out;
  for (const auto& [key, grp] : groups) {
    SummaryRow s;
    s.bandwidth = key.first;
    s.method = key.second == 0 ? "initial" : ("tmle-iter-" + std::to_string(key.second));
    std::vector<double> est, cov, sq, err2;
    for (const auto* r : grp) {
      est.push_back(r->estimate);
      cov.push_back(r->covered);
      sq.push_back(r->estimate * r->estimate);
      double d = r->estimate - truth;
      err2.push_back(d * d);
    }
    double n = static_cast<double>(grp.size());
    s.coverage = pairwise_sum(cov) / n;
    s.mean_estimate = pairwise_sum(est) / n;
    s.bias = s.mean_estimate - truth;
    double second = pairwise_sum(sq) / n;
    s.sd = std::sqrt(std::max(0.0, second - s.mean_estimate * s.mean_estimate));
    s.rmse = std::sqrt(pairwise_sum(err2) / n);
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

void write_replications_csv(const std::string& path, const std::vector<ReplicationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  out << "rep,bandwidth,iteration,estimate,se,ci_low,ci_high,covered\n";
  for (const auto& r : rows) {
    out << r.rep << "," << r.bandwidth << "," << r.iteration << "," << format_double(r.estimate)
        << "," << format_double(r.se) << "," << format_double(r.ci_low) << ","
        << format_double(r.ci_high) << "," << r.covered << "\n";
  }
}

void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows,
                       double truth) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  out << "bandwidth,method,coverage,mean_estimate,bias,sd,rmse,truth\n";
  for (const auto& r : rows) {
    out << r.bandwidth << "," << r.method << "," << format_double(r.coverage) << ","
        << format_double(r.mean_estimate) << "," << format_double(r.bias) << ","
        << format_double(r.sd) << "," << format_double(r.rmse) << "," << format_double(truth)
        << "\n";
  }
}

void write_histogram_csv(const std::string& path, const std::vector<ReplicationRow>& rows,
                         int final_iteration, int bins) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  out << "bandwidth,method,bin,bin_lo,bin_hi,count\n";
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& r : rows) {
    if (r.iteration == 0) groups[{r.bandwidth, "initial"}].push_back(r.estimate);
    if (r.iteration == final_iteration) groups[{r.bandwidth, "tmle"}].push_back(r.estimate);
  }
  for (const auto& [key, est] : groups) {
    double lo = *std::min_element(est.begin(), est.end());
    double hi = *std::max_element(est.begin(), est.end());
    if (hi <= lo) hi = lo + 1e-12;
    std::vector<long> count(bins, 0);
    for (double e : est) {
      int b = static_cast<int>((e - lo) / (hi - lo) * bins);
      b = std::min(bins - 1, std::max(0, b));
      count[b] += 1;
    }
    for (int b = 0; b < bins; ++b) {
      double blo = lo + (hi - lo) * b / bins;
      double bhi = lo + (hi - lo) * (b + 1) / bins;
      out << key.first << "," << key.second << "," << b << "," << format_double(blo) << ","
          << format_double(bhi) << "," << count[b] << "\n";
    }
  }
}

Eigen::MatrixXd average_gm(const std::vector<DemographicModel>& models) {
  Eigen::MatrixXd sum;
  for (const auto& m : models) {
    Eigen::MatrixXd gm = survival_growth_matrix(m.base);
    if (sum.size() == 0) sum = gm; else sum += gm;
  }
  return sum / static_cast<double>(models.size());
}

Eigen::MatrixXd average_eif(Target target, const std::vector<DemographicModel>& models) {
  Eigen::MatrixXd sum;
  for (const auto& m : models) {
    EigenSystem eig = target_eigs(target, m);
    std::vector<EifCells> cells = make_eif_cells(target, m, eig);
    Eigen::MatrixXd g;
    if (m.has_env()) {
      for (std::size_t e = 0; e < cells.size(); ++e) {
        Eigen::MatrixXd part = m.env_weights[static_cast<Eigen::Index>(e)] *
                               eif_growth_matrix(cells[e]);
        if (g.size() == 0) g = part; else g += part;
      }
    } else {
      g = eif_growth_matrix(cells[0]);
    }
    if (sum.size() == 0) sum = g; else sum += g;
  }
  return sum / static_cast<double>(models.size());
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);

  ExperimentResult result;
  result.truth = design_truth(config.sim, config.target);

  std::vector<Arm> arms;
  if (config.initial == TmleConfig::Initial::parametric) {
    for (double bw : config.bandwidths) arms.push_back({bandwidth_label(bw), bw, false});
    if (config.cv_bandwidth) arms.push_back({"cv", 0.0, false});
  } else {
    arms.push_back({"empirical", 0.0, true});
  }
  if (arms.empty()) throw usage_error("no bandwidth arms configured");

  const int R = config.n_replications;
  std::vector<RepOutcome> outcomes(R);
  std::vector<std::vector<DemographicModel>> rep0_initial(arms.size()), rep0_final(arms.size());

  auto run_rep = [&](int rep) {
    RepOutcome& oc = outcomes[rep];
    SimSpec sim = config.sim;
    sim.seed = hash_mix(config.seed, static_cast<std::uint64_t>(rep));
    Dataset ds;
    try {
      ds = generate(sim);
    } catch (const std::exception& e) {
      oc.failures.push_back("rep " + std::to_string(rep) + ": generator: " + e.what());
      return;
    }
    for (std::size_t a = 0; a < arms.size(); ++a) {
      try {
        TmleConfig tc;
        tc.target = config.target;
        tc.n_folds = config.n_folds;
        tc.max_iterations = config.max_iterations;
        tc.epsilon_tol = config.epsilon_tol;
        tc.epsilon_bound = config.epsilon_bound;
        tc.seed = sim.seed;
        tc.initial = config.initial;
        tc.fit.bandwidth = arms[a].bandwidth;
        tc.fit.seed = sim.seed;
        tc.keep_models = rep == 0;
        auto [estimate, state] = run_cv_tmle(ds, tc);
        for (int k = 0; k <= config.max_iterations; ++k) {
          const IterationStat& st =
              state.trace[std::min<std::size_t>(k, state.trace.size() - 1)];
          ReplicationRow row;
          row.rep = rep;
          row.bandwidth = arms[a].label;
          row.iteration = k;
          row.estimate = st.estimate;
          row.se = st.std_error;
          row.ci_low = st.estimate - 1.96 * st.std_error;
          row.ci_high = st.estimate + 1.96 * st.std_error;
          row.covered = (row.ci_low <= result.truth && result.truth <= row.ci_high) ? 1 : 0;
          oc.rows.push_back(row);
        }
        if (rep == 0) {
          rep0_initial[a] = state.initial_models;
          rep0_final[a] = state.final_models;
        }
      } catch (const std::exception& e) {
        oc.failures.push_back("rep " + std::to_string(rep) + "/" + arms[a].label + ": " +
                              e.what());
      }
    }
  };

  int threads = config.threads > 0 ? config.threads
                                   : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, R));
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        int rep = next.fetch_add(1);
        if (rep >= R) return;
        run_rep(rep);
      }
    });
  }
  for (auto& t : pool) t.join();

  for (int rep = 0; rep < R; ++rep) {
    for (auto& row : outcomes[rep].rows) result.replications.push_back(row);
    for (auto& f : outcomes[rep].failures) result.failures.push_back(f);
  }
  result.summary = summarize_replication_rows(result.replications, result.truth);

  auto outpath = [&](const std::string& name) {
    std::string p = (fs::path(config.out_dir) / name).string();
    result.files_written.push_back(p);
    return p;
  };

  write_replications_csv(outpath("replications.csv"), result.replications);
  write_summary_csv(outpath("summary.csv"), result.summary, result.truth);
  write_histogram_csv(outpath("histogram.csv"), result.replications, config.max_iterations,
                      config.histogram_bins);

  // Heatmap exports for the first replication, plus the population-law truth.
  try {
    DemographicModel truth_model;
    switch (config.sim.design) {
      case Design::basic: truth_model = exact_basic_model(config.sim.basic); break;
      case Design::idaho_like: truth_model = exact_idaho_model(config.sim.idaho); break;
      case Design::rotifer_like: truth_model = exact_rotifer_model(config.sim.rotifer); break;
    }
    write_matrix_csv(outpath("heatmap_gm_truth.csv"), survival_growth_matrix(truth_model.base));
    write_matrix_csv(outpath("heatmap_eif_truth.csv"),
                     average_eif(config.target, {truth_model}));
    for (std::size_t a = 0; a < arms.size(); ++a) {
      if (rep0_initial[a].empty()) continue;
      write_matrix_csv(outpath("heatmap_gm_initial_" + arms[a].label + ".csv"),
                       average_gm(rep0_initial[a]));
      write_matrix_csv(outpath("heatmap_gm_tmle_" + arms[a].label + ".csv"),
                       average_gm(rep0_final[a]));
      write_matrix_csv(outpath("heatmap_eif_initial_" + arms[a].label + ".csv"),
                       average_eif(config.target, rep0_initial[a]));
      write_matrix_csv(outpath("heatmap_eif_tmle_" + arms[a].label + ".csv"),
                       average_eif(config.target, rep0_final[a]));
    }
  } catch (const std::exception& e) {
    result.failures.push_back(std::string("heatmaps: ") + e.what());
  }

  nlohmann::json report;
  report["truth"] = result.truth;
  report["n_replications"] = R;
  report["arms"] = nlohmann::json::array();
  for (const auto& a : arms) report["arms"].push_back(a.label);
  report["failures"] = result.failures;
  report["files"] = result.files_written;
  std::ofstream rj(outpath("report.json"));
  rj << report.dump(2) << "\n";

  return result;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

} // namespace

std::vector<ReplicationRow> read_replications_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<ReplicationRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_line(line);
    ReplicationRow r;
    r.rep = std::stoi(f[0]);
    r.bandwidth = f[1];
    r.iteration = std::stoi(f[2]);
    r.estimate = std::stod(f[3]);
    r.se = std::stod(f[4]);
    r.ci_low = std::stod(f[5]);
    r.ci_high = std::stod(f[6]);
    r.covered = std::stoi(f[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<SummaryRow> read_summary_csv(const std::string& path, double* truth_out) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_line(line);
    SummaryRow s;
    s.bandwidth = f[0];
    s.method = f[1];
    s.coverage = std::stod(f[2]);
    s.mean_estimate = std::stod(f[3]);
    s.bias = std::stod(f[4]);
    s.sd = std::stod(f[5]);
    s.rmse = std::stod(f[6]);
    if (truth_out) *truth_out = std::stod(f[7]);
    rows.push_back(std::move(s));
  }
  return rows;
}

} // namespace ipmtmle
