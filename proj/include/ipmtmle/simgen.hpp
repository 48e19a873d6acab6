#ifndef IPMTMLE_SIMGEN_HPP
#define IPMTMLE_SIMGEN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ipmtmle/data.hpp"
#include "ipmtmle/demography.hpp"
#include "ipmtmle/influence.hpp"

namespace ipmtmle {

// Size-structured design: zero-inflated Beta sizes, linear growth with a Beta
// innovation, logistic survival in size, Poisson offspring split over a fixed
// class distribution.
struct BasicSpec {
  int n_classes = 100;
  double seedling_prob = 0.35;
  double size_beta_a = 2.0, size_beta_b = 2.0;
  double growth_slope = 0.8, growth_scale = 0.2;
  double resid_beta_a = 8.0, resid_beta_b = 8.0;
  double surv_intercept = 0.1, surv_slope = 7.0;
  double fec_intercept = -3.0, fec_slope = 1.0;
  // Probability that an offspring lands in class 1, 2, ...; zero-padded.
  std::vector<double> offspring_class_probs;  // default: 0.9 then ten 0.01

  std::vector<double> class_probs_padded() const;
};

// Year-structured design: year-level intercept shifts plus optional numeric
// covariates, two survival models, scaled-Beta growth residual, quadrat-level
// Poisson recruitment assigned to non-seedling parents by sqrt(size).
struct IdahoSpec {
  int n_classes = 50;
  double seedling_prob = 0.3;
  double size_beta_a = 2.0, size_beta_b = 2.0;
  std::vector<std::string> years = {"1931", "1932", "1933"};
  std::vector<double> year_probs = {0.4, 0.35, 0.25};
  std::vector<std::string> covariate_names = {"ppt1", "ppt2", "TmeanSpr1", "TmeanSpr2", "pptLag"};
  std::vector<double> covariate_means = {1.0, 1.0, 0.0, 0.0, 1.0};
  std::vector<double> covariate_sds = {0.3, 0.3, 1.0, 1.0, 0.3};
  // growth: z' = growth_intercept[year] + growth_slope * z + cov'beta + residual
  std::vector<double> growth_intercept_by_year = {0.16, 0.20, 0.12};
  double growth_slope = 0.75;
  std::vector<double> growth_cov_coefs = {0, 0, 0, 0, 0};
  double resid_lo = -0.08, resid_hi = 0.08;
  double resid_beta_a = 6.0, resid_beta_b = 6.0;
  std::vector<double> surv_seedling_intercept_by_year = {-0.2, 0.1, -0.4};
  std::vector<double> surv_seedling_cov_coefs = {0, 0, 0, 0, 0};
  std::vector<double> surv_intercept_by_year = {0.3, 0.6, 0.0};
  double surv_slope = 4.0;
  std::vector<double> surv_cov_coefs = {0, 0, 0, 0, 0};
  // log expected recruits per quadrat
  std::vector<double> fec_log_mean_by_year = {-0.9, -0.6, -1.2};
  std::vector<double> fec_cov_coefs = {0, 0, 0, 0, 0};
  int quadrat_size = 1;
  std::vector<double> recruit_class_probs;  // default: 0.85 then 0.03 x 5

  std::vector<double> recruit_probs_padded() const;
};

// Age-within-maternal-group design on the block sparsity pattern: survival
// moves age a to a+1 inside a maternal group, offspring enter age 1 of the
// group determined by the mother's age.
struct RotiferSpec {
  int age_classes = 16;
  int maternal_groups = 4;
  // survival(g, a) for a = 1..15; age 16 never survives
  std::vector<double> survival;   // size groups m x (age_classes-1), row-major by group
  std::vector<double> fertility;  // size groups m x age_classes, row-major by group
  std::vector<double> state_marginal;  // size m x age_classes; default uniform

  int n_states() const { return age_classes * maternal_groups; }
  int state_of(int group, int age) const { return (group - 1) * age_classes + age; }
  int maternal_group_of_age(int age) const;  // 1..4 per the grouping of mother ages
  int offspring_state_of_age(int age) const { return (maternal_group_of_age(age) - 1) * age_classes + 1; }
  double surv(int group, int age) const;
  double fert(int group, int age) const;
};

enum class Design { basic, idaho_like, rotifer_like };

struct SimSpec {
  Design design = Design::basic;
  long n = 1000;
  std::uint64_t seed = 1;
  BasicSpec basic;
  IdahoSpec idaho;
  RotiferSpec rotifer;

  static SimSpec defaults(Design d);
  static SimSpec from_json_text(const std::string& text);
  std::string to_json_text() const;
};

Dataset gen_basic(const SimSpec& spec);
Dataset gen_idaho_like(const SimSpec& spec);
Dataset gen_rotifer_like(const SimSpec& spec);
Dataset generate(const SimSpec& spec);

// Split points at the true quantiles of the zero-inflated Beta size law:
// class 1 is the zero atom, the Beta part splits into equal masses. Both the
// generators and the exact-law constructions discretize with this grid.
SizeGrid true_quantile_grid(int n_classes, double beta_a, double beta_b);

// Population-law constructions on the design's true quantile grid; quadrature
// against the exact conditional laws, reproducible to 1e-12.
DemographicModel exact_basic_model(const BasicSpec& spec, int quad_nodes = 64);
DemographicModel exact_idaho_model(const IdahoSpec& spec, int quad_nodes = 64);
Eigen::MatrixXd rotifer_projection_matrix(const RotiferSpec& spec);         // U + F, (j,i)
DemographicModel exact_rotifer_model(const RotiferSpec& spec);

double design_truth(const SimSpec& spec, Target target);

} // namespace ipmtmle

#endif
