#ifndef IPMTMLE_DEMOGRAPHY_HPP
#define IPMTMLE_DEMOGRAPHY_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ipmtmle/data.hpp"
#include "ipmtmle/regress.hpp"

namespace ipmtmle {

// One estimated conditional law. Matrices are indexed by the model's internal
// 0-based class index; `trans` row i is the full conditional over destinations
// {death, class 1..n} so column 0 is the death cell, and fec(i, j) is the
// expected count of class-(j+1) offspring from a class-(i+1) parent.
struct ConditionalModel {
  Eigen::MatrixXd trans;      // n x (n+1)
  Eigen::MatrixXd fec;        // n x n
  Eigen::VectorXd marginal;   // floored and renormalized
  std::vector<int> floored;   // internal indices whose marginal hit the floor
};

struct DemographicModel {
  int n_classes = 0;
  ConditionalModel base;
  std::vector<std::string> env_levels;
  Eigen::VectorXd env_weights;
  std::vector<ConditionalModel> per_env;
  std::vector<int> unsupported;    // 1-based classes never observed as a source
  std::vector<std::string> warnings;

  bool has_env() const { return !per_env.empty(); }
  bool supported(int cls) const;   // 1-based
  // Indices (0-based) of supported classes; identity for parametric models.
  std::vector<int> supported_indices() const;
  const ConditionalModel& env_model(int e) const { return e < 0 ? base : per_env[e]; }
  int env_index(const std::string& label) const;
};

struct FitConfig {
  double bandwidth = 0.0;  // > 0 fixed; 0 selects by cross-validation
  std::vector<double> bandwidth_candidates = {0.01, 0.02, 0.03, 0.05, 0.1};
  int cv_folds = 5;
  std::uint64_t seed = 0;
  bool split_survival_by_seedling = false;
  bool use_covariates = false;
  bool env_conditional = false;  // year enters the GLMs as a categorical factor
  int kde_subintervals = 200;    // midpoint nodes per destination class
  double ridge = 1e-8;
};

// Parametric plug-in: linear growth model + KDE residual law, logistic
// survival, Poisson fecundity, empirical (floored) class marginals.
DemographicModel estimate_model(const Dataset& ds, const FitConfig& config);

// Empirical frequencies; covariate-free discrete data. Classes never observed
// as a source are dropped (flagged) and the model is restricted.
DemographicModel empirical_model(const Dataset& ds);

Eigen::MatrixXd kernel_matrix(const ConditionalModel& m);           // K(j,i)
Eigen::MatrixXd survival_growth_matrix(const ConditionalModel& m);  // GM part
Eigen::MatrixXd fecundity_matrix(const ConditionalModel& m);        // F(j,i)
Eigen::MatrixXd mean_kernel(const DemographicModel& m);             // sum_theta w K_theta

struct EigOptions {
  double tol = 1e-12;
  long max_iterations = 100000;
  bool check_primitive = true;
};

struct EigenSystem {
  double lambda = 0.0;
  Eigen::VectorXd u;  // right eigenvector, entries >= 0, sums to 1
  Eigen::VectorXd v;  // left eigenvector, scaled so <v,u> = 1
  double resid_right = 0.0;  // ||K u - lambda u||_inf
  double resid_left = 0.0;   // ||K^T v - lambda v||_inf
  bool primitive = true;
};

// Power iteration on K and K^T; Rayleigh-quotient lambda.
EigenSystem dominant_eigs(const Eigen::MatrixXd& K, const EigOptions& options = {});

// SVD-based Moore-Penrose pseudoinverse of (lambda I - K); singular values
// below n*lambda*1e-12 are treated as zero.
Eigen::MatrixXd deflated_pinv(double lambda, const Eigen::MatrixXd& K);

double target_lambda(const DemographicModel& m);
double target_elasticity(const DemographicModel& m);
double target_log_lambda_s(const DemographicModel& m);

// Matrix-level forms (j,i layout), shared by the targets and the tests.
double lambda_of(const Eigen::MatrixXd& K, const EigOptions& options = {});
double elasticity_of(const Eigen::MatrixXd& survival_growth, const Eigen::MatrixXd& fecundity);
double log_lambda_s_of(const std::vector<Eigen::MatrixXd>& kernels,
                       const Eigen::VectorXd& weights);

// Row-major CSV with a "j\\i" header cell, destination rows by source columns;
// the JSON form carries the same rows under {"rows": n, "cols": n, "data": [...]}.
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m_ji);
void write_matrix_json(const std::string& path, const Eigen::MatrixXd& m_ji);

} // namespace ipmtmle

#endif
