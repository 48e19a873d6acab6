#ifndef IPMTMLE_EXPERIMENT_HPP
#define IPMTMLE_EXPERIMENT_HPP

#include <string>
#include <vector>

#include "ipmtmle/simgen.hpp"
#include "ipmtmle/tmle.hpp"

namespace ipmtmle {

struct ExperimentConfig {
  SimSpec sim;
  Target target = Target::lambda;
  std::vector<double> bandwidths = {0.01, 0.1};  // ignored for empirical initials
  bool cv_bandwidth = false;                     // adds a "cv" arm
  int n_replications = 200;
  int n_folds = 5;
  int max_iterations = 5;
  double epsilon_tol = 1e-4;
  double epsilon_bound = 1.0;
  std::uint64_t seed = 1;
  TmleConfig::Initial initial = TmleConfig::Initial::parametric;
  std::string out_dir = ".";
  int threads = 0;  // 0 = hardware concurrency
  int histogram_bins = 40;

  static ExperimentConfig from_json_file(const std::string& path);
};

struct SummaryRow {
  std::string bandwidth;  // "0.01", "cv", or "empirical"
  std::string method;     // "initial" or "tmle-iter-k"
  double coverage = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double rmse = 0.0;
};

struct ReplicationRow {
  int rep = 0;
  std::string bandwidth;
  int iteration = 0;
  double estimate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int covered = 0;
};

struct ExperimentResult {
  double truth = 0.0;
  std::vector<ReplicationRow> replications;
  std::vector<SummaryRow> summary;
  std::vector<std::string> failures;  // "rep/bandwidth: reason"
  std::vector<std::string> files_written;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

// Independent reader used to cross-check summary.csv against replications.csv.
std::vector<SummaryRow> summarize_replication_rows(const std::vector<ReplicationRow>& rows,
                                                   double truth);
std::vector<ReplicationRow> read_replications_csv(const std::string& path);
std::vector<SummaryRow> read_summary_csv(const std::string& path, double* truth_out = nullptr);

std::string format_double(double v);  // "%.17g", shared by all writers

} // namespace ipmtmle

#endif
