#ifndef IPMTMLE_TMLE_HPP
#define IPMTMLE_TMLE_HPP

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "ipmtmle/influence.hpp"

namespace ipmtmle {

struct TmleConfig {
  Target target = Target::lambda;
  int n_folds = 5;
  int max_iterations = 5;
  double epsilon_tol = 1e-4;
  // Bound in units of the sup-norm-rescaled direction; the raw search interval
  // is [-b, b] with b = epsilon_bound / max(1, sup|direction|).
  double epsilon_bound = 1.0;
  std::uint64_t seed = 0;
  enum class Initial { parametric, empirical_per_fold, empirical_pooled };
  Initial initial = Initial::parametric;
  FitConfig fit;
  std::vector<int> fold_assignments;  // optional explicit assignment
  bool keep_models = false;           // retain initial/final fold models in the state
};

struct IterationStat {
  double estimate = 0.0;
  double std_error = 0.0;
};

struct TmleState {
  std::vector<int> fold_assignments;
  std::vector<std::pair<double, double>> epsilon_history;  // (eps1, eps2) per iteration
  std::vector<IterationStat> trace;  // [0] = initial, [k] = after k applied tilts
  bool converged = false;
  std::vector<double> fold_estimates;  // final, active folds
  std::vector<std::string> warnings;
  std::vector<DemographicModel> initial_models;  // populated when keep_models is set
  std::vector<DemographicModel> final_models;
};

struct TargetEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<InfluenceEvaluation> psi_validation;  // original record order
};

// Exponential tilt of every conditional growth row (death cell included) in
// the direction of the growth-space cells; rows renormalize per source class.
// eps = 0 returns the input unchanged.
DemographicModel tilt_growth(const DemographicModel& model, const std::vector<EifCells>& cells,
                             double eps);

// Multiplicative fecundity update Q <- Q * exp(eps * direction).
DemographicModel tilt_fecundity(const DemographicModel& model, const std::vector<EifCells>& cells,
                                double eps);

// The lambda-target clever covariate H(i, j) = u_i v_j / p_i (identical to the
// lambda fecundity coefficient field).
Eigen::MatrixXd clever_covariate_matrix(const DemographicModel& model, const EigenSystem& eig);

struct FoldView {
  const DemographicModel* model = nullptr;
  const std::vector<EifCells>* cells = nullptr;
  std::vector<std::size_t> validation;  // record indices into the dataset
};

// Fold-averaged validation log-likelihood of the tilted growth conditionals,
// and the pooled working-model loss for the tilted fecundity means.
double pooled_growth_loglik(const Dataset& ds, const std::vector<FoldView>& folds, double eps);
double pooled_fecundity_loss(const Dataset& ds, const std::vector<FoldView>& folds, double eps);

struct EpsilonFit {
  double epsilon = 0.0;
  bool at_boundary = false;
};

EpsilonFit fit_epsilon_growth(const Dataset& ds, const std::vector<FoldView>& folds, double bound);
EpsilonFit fit_epsilon_fecundity(const Dataset& ds, const std::vector<FoldView>& folds,
                                 double bound);

std::pair<TargetEstimate, TmleState> run_cv_tmle(const Dataset& ds, const TmleConfig& config);

// Bounded scalar minimization (Brent); also evaluates the endpoints and 0.
double brent_minimize(const std::function<double(double)>& f, double lo, double hi, double tol);

} // namespace ipmtmle

#endif
