#ifndef IPMTMLE_INFLUENCE_HPP
#define IPMTMLE_INFLUENCE_HPP

#include <vector>

#include <Eigen/Dense>

#include "ipmtmle/demography.hpp"

namespace ipmtmle {

enum class Target { lambda, elasticity, log_lambda_s };

struct InfluenceEvaluation {
  double psi_growth = 0.0;     // submodel space Z*_{t+1} | Z_t [, theta]
  double psi_fecundity = 0.0;  // submodel space Y_1..Y_N | Z_t [, theta]
  bool used_floored_marginal = false;
  double psi_total() const { return psi_growth + psi_fecundity; }
};

// Closed-form influence values laid out over the observation space: growth(i, jc)
// is the growth-space value for a record with source class i+1 and destination
// column jc (0 = death, jc = class jc); fec_coef(i, j) is the coefficient of
// (Y_{j+1} - Q_{j+1}(i+1)) in the fecundity-space value. These fields double as
// the submodel tilt directions.
struct EifCells {
  Eigen::MatrixXd growth;    // n x (n+1)
  Eigen::MatrixXd fec_coef;  // n x n
};

// One entry per environment level (a single entry for environment-free
// targets). For log_lambda_s pass the eigen-system of the mean kernel.
std::vector<EifCells> make_eif_cells(Target target, const DemographicModel& model,
                                     const EigenSystem& eig);

// Eigen-system matching the target: base kernel for lambda/elasticity, the
// weighted mean kernel for log_lambda_s; honors empirical restrictions.
EigenSystem target_eigs(Target target, const DemographicModel& model,
                        const EigOptions& options = {});

double evaluate_target(Target target, const DemographicModel& model);

InfluenceEvaluation eif_evaluate(const IndividualRecord& record, const DemographicModel& model,
                                 const std::vector<EifCells>& cells);

InfluenceEvaluation eif_lambda(const IndividualRecord& record, const DemographicModel& model,
                               const EigenSystem& eig);
InfluenceEvaluation eif_elasticity(const IndividualRecord& record, const DemographicModel& model,
                                   const EigenSystem& eig);
InfluenceEvaluation eif_log_lambda_s(const IndividualRecord& record,
                                     const DemographicModel& model,
                                     const EigenSystem& eig_of_mean_kernel);

// (j, i) grid of the growth-space values over surviving destinations, for the
// heatmap export.
Eigen::MatrixXd eif_growth_matrix(const EifCells& cells);

// Finite discrete law over full observation tuples; the oracle's world.
struct DiscreteLaw {
  struct Atom {
    int env = 0;        // 0-based level; ignored when n_env == 0
    int z = 1;          // source class, 1..n
    int z_next = 0;     // 0..n, 0 = death
    std::vector<int> y; // offspring counts by class, length n
    double prob = 0.0;
  };
  int n_classes = 0;
  int n_env = 0;  // 0 = no environment dimension
  std::vector<Atom> atoms;

  DemographicModel to_model() const;  // rebuild trans/Q/marginals (and weights)
  Eigen::VectorXd env_weights() const;
};

enum class OracleFunctional { mean_z, lambda, elasticity, log_lambda_s };

struct OracleResult {
  double derivative = 0.0;
  bool forward_difference = false;  // minus branch left the domain
};

// Central difference of the functional along point-mass contamination of the
// joint law, rebuilding conditionals from the contaminated joint. For
// log_lambda_s the functional keeps the base law's environment weights.
OracleResult gateaux_oracle(OracleFunctional functional, const DiscreteLaw& law,
                            const DiscreteLaw::Atom& x, double h);

double law_functional(OracleFunctional functional, const DiscreteLaw& law,
                      const Eigen::VectorXd* fixed_env_weights = nullptr);

class Rng;

// Full-support random law: positive joint over (env, z, z*) with offspring
// counts in {0,1,2} independent per class; every kernel it induces is
// strictly positive, hence primitive.
DiscreteLaw random_discrete_law(Rng& rng, int n_classes, int n_env);

} // namespace ipmtmle

#endif
