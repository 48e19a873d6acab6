#ifndef IPMTMLE_REGRESS_HPP
#define IPMTMLE_REGRESS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ipmtmle/common.hpp"

namespace ipmtmle {

enum class GlmFamily { gaussian, binomial, poisson };

struct GlmOptions {
  double deviance_tol = 1e-10;
  int max_iterations = 100;
  double ridge = 1e-8;  // conditioning term on the normal equations
};

struct GlmFit {
  GlmFamily family = GlmFamily::gaussian;
  Eigen::VectorXd coefficients;          // intercept first
  std::vector<std::string> column_names; // matches design columns
  bool converged = false;
  int n_iterations = 0;
  std::vector<std::string> warnings;

  double linear_predictor(const Eigen::VectorXd& x) const;
  // Mean-response scale; binomial probabilities capped to [1e-12, 1-1e-12].
  double predict(const Eigen::VectorXd& x) const;
};

// IRLS fit. `design` must already contain the intercept column; binomial
// responses in {0,1}, poisson responses nonnegative integers. Rank-deficient
// designs raise an error naming the collinear column; logistic separation
// returns converged=false with a warning.
GlmFit fit_glm(GlmFamily family, const Eigen::VectorXd& responses,
               const Eigen::MatrixXd& design, const std::vector<std::string>& column_names,
               const GlmOptions& options = {});

double glm_log_likelihood(const GlmFit& fit, const Eigen::VectorXd& responses,
                          const Eigen::MatrixXd& design);

struct KdeFit {
  std::vector<double> sample;  // sorted
  double bandwidth = 0.0;      // in the sample's scale
};

// Gaussian kernel density (1/(m h)) sum phi((x - s_i)/h); exact sum.
double kde_density(const KdeFit& fit, double x);

// Candidate maximizing average held-out log density across folds; ties break
// toward the smaller bandwidth. Held-out log densities are floored at
// log(1e-300) rather than dropped. Fold assignment comes from hash(seed, index)
// unless `explicit_folds` (record index -> fold) is supplied.
double cv_bandwidth(const std::vector<double>& sample, const std::vector<double>& candidates,
                    int n_folds, std::uint64_t seed,
                    const std::vector<int>& explicit_folds = {});

// Balanced deterministic fold assignment: indices ranked by hash(seed, index)
// and dealt round-robin, so sizes differ by at most one.
std::vector<int> hash_fold_assignment(std::size_t n, int n_folds, std::uint64_t seed);

// Uniform grid of exact density values with linear interpolation between
// nodes; the workhorse for integrating a kernel density over many intervals.
struct KdeGrid {
  double lo = 0.0;
  double step = 1.0;
  std::vector<double> values;

  static KdeGrid build(const KdeFit& fit, double nodes_per_bandwidth = 20.0);
  double operator()(double x) const;
};

} // namespace ipmtmle

#endif
