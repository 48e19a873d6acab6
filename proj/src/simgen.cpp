#include "ipmtmle/simgen.hpp"
#include "ipmtmle/rng.hpp"
#include "ipmtmle/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace ipmtmle {

std::vector<double> BasicSpec::class_probs_padded() const {
  std::vector<double> p = offspring_class_probs;
  if (p.empty()) {
    p.push_back(0.9);
    for (int k = 0; k < 10; ++k) p.push_back(0.01);
  }
  p.resize(n_classes, 0.0);
  double s = std::accumulate(p.begin(), p.end(), 0.0);
  if (!(s > 0.0)) throw data_error("offspring class distribution has no mass");
  for (double& v : p) v /= s;
  return p;
}

std::vector<double> IdahoSpec::recruit_probs_padded() const {
  std::vector<double> p = recruit_class_probs;
  if (p.empty()) {
    p.push_back(0.85);
    for (int k = 0; k < 5; ++k) p.push_back(0.03);
  }
  p.resize(n_classes, 0.0);
  double s = std::accumulate(p.begin(), p.end(), 0.0);
  if (!(s > 0.0)) throw data_error("recruit class distribution has no mass");
  for (double& v : p) v /= s;
  return p;
}

int RotiferSpec::maternal_group_of_age(int age) const {
  if (age <= 4) return 1;
  if (age <= 6) return 2;
  if (age <= 8) return 3;
  return 4;
}

double RotiferSpec::surv(int group, int age) const {
  if (age >= age_classes) return 0.0;
  if (!survival.empty())
    return survival[(group - 1) * (age_classes - 1) + (age - 1)];
  double p = 0.92 - 0.025 * (age - 1) - 0.02 * (group - 1);
  return std::min(0.95, std::max(0.05, p));
}

double RotiferSpec::fert(int group, int age) const {
  if (!fertility.empty()) return fertility[(group - 1) * age_classes + (age - 1)];
  double shape = std::exp(-0.5 * ((age - 5.0) / 3.0) * ((age - 5.0) / 3.0));
  return (0.25 + 1.5 * shape) * (1.0 - 0.12 * (group - 1));
}

SimSpec SimSpec::defaults(Design d) {
  SimSpec s;
  s.design = d;
  return s;
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

Dataset gen_basic(const SimSpec& spec) {
  const BasicSpec& b = spec.basic;
  Rng rng(spec.seed);
  const long n = spec.n;

  std::vector<double> zs(n);
  for (long k = 0; k < n; ++k)
    zs[k] = rng.bernoulli(b.seedling_prob) ? 0.0 : rng.beta(b.size_beta_a, b.size_beta_b);

  Dataset ds;
  ds.grid = true_quantile_grid(b.n_classes, b.size_beta_a, b.size_beta_b);
  std::vector<double> pf = b.class_probs_padded();
  pf.resize(ds.grid.n_classes, 0.0);

  for (long k = 0; k < n; ++k) {
    IndividualRecord r;
    r.id = "r" + std::to_string(k + 1);
    r.z_continuous = zs[k];
    r.z_class = ds.grid.discretize(zs[k]);
    r.survived = rng.bernoulli(plogis(b.surv_intercept + b.surv_slope * zs[k])) ? 1 : 0;
    if (r.survived) {
      r.z_next_continuous =
          b.growth_slope * zs[k] + b.growth_scale * rng.beta(b.resid_beta_a, b.resid_beta_b);
      r.z_next_class = ds.grid.discretize(r.z_next_continuous);
    }
    int total = rng.poisson(std::exp(b.fec_intercept + b.fec_slope * zs[k]));
    std::vector<int> y(ds.grid.n_classes, 0);
    for (int t = 0; t < total; ++t) y[rng.categorical(pf)] += 1;
    for (int c = 0; c < ds.grid.n_classes; ++c)
      if (y[c] > 0) r.offspring.emplace_back(c + 1, y[c]);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

Dataset gen_idaho_like(const SimSpec& spec) {
  const IdahoSpec& id = spec.idaho;
  const std::size_t n_years = id.years.size();
  const std::size_t n_cov = id.covariate_names.size();
  if (id.year_probs.size() != n_years ||
      id.growth_intercept_by_year.size() != n_years ||
      id.surv_seedling_intercept_by_year.size() != n_years ||
      id.surv_intercept_by_year.size() != n_years ||
      id.fec_log_mean_by_year.size() != n_years)
    throw data_error("idaho config: missing a per-year coefficient block");
  if (id.growth_cov_coefs.size() != n_cov || id.surv_cov_coefs.size() != n_cov ||
      id.surv_seedling_cov_coefs.size() != n_cov || id.fec_cov_coefs.size() != n_cov ||
      id.covariate_means.size() != n_cov || id.covariate_sds.size() != n_cov)
    throw data_error("idaho config: missing a covariate coefficient block");

  Rng rng(spec.seed);
  const long n = spec.n;
  const int J = std::max(1, id.quadrat_size);

  // Year-level covariate values, one draw per level.
  std::vector<std::vector<double>> cov_by_year(n_years, std::vector<double>(n_cov));
  for (std::size_t y = 0; y < n_years; ++y)
    for (std::size_t c = 0; c < n_cov; ++c)
      cov_by_year[y][c] = rng.normal(id.covariate_means[c], id.covariate_sds[c]);

  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
  };

  struct Member {
    double z;
    int survived;
    double z_next;
    std::vector<int> y;
  };

  const std::vector<double> recruit_probs = id.recruit_probs_padded();
  std::vector<double> all_z;
  std::vector<int> all_year;
  std::vector<Member> members;
  all_z.reserve(n);

  long made = 0;
  while (made < n) {
    int year = rng.categorical(id.year_probs);
    const auto& cov = cov_by_year[year];
    int take = static_cast<int>(std::min<long>(J, n - made));
    std::vector<std::size_t> quadrat;
    for (int j = 0; j < take; ++j) {
      Member m;
      m.z = rng.bernoulli(id.seedling_prob) ? 0.0 : rng.beta(id.size_beta_a, id.size_beta_b);
      double lin = m.z == 0.0
                       ? id.surv_seedling_intercept_by_year[year] + dot(cov, id.surv_seedling_cov_coefs)
                       : id.surv_intercept_by_year[year] + id.surv_slope * m.z +
                             dot(cov, id.surv_cov_coefs);
      m.survived = rng.bernoulli(plogis(lin)) ? 1 : 0;
      m.z_next = 0.0;
      if (m.survived) {
        double resid = id.resid_lo + (id.resid_hi - id.resid_lo) *
                                         rng.beta(id.resid_beta_a, id.resid_beta_b);
        m.z_next = id.growth_intercept_by_year[year] + id.growth_slope * m.z +
                   dot(cov, id.growth_cov_coefs) + resid;
      }
      quadrat.push_back(members.size());
      members.push_back(std::move(m));
      all_z.push_back(members.back().z);
      all_year.push_back(year);
      ++made;
    }
    // Quadrat-level recruitment, assigned to non-seedling parents by sqrt(size).
    double lograte = id.fec_log_mean_by_year[year] + dot(cov, id.fec_cov_coefs);
    int recruits = rng.poisson(std::exp(lograte));
    std::vector<double> wts;
    std::vector<std::size_t> parents;
    for (std::size_t q : quadrat) {
      if (members[q].z > 0.0) {
        parents.push_back(q);
        wts.push_back(std::sqrt(members[q].z));
      }
    }
    if (!parents.empty()) {
      double wsum = std::accumulate(wts.begin(), wts.end(), 0.0);
      for (double& w : wts) w /= wsum;
      for (int t = 0; t < recruits; ++t) {
        std::size_t parent = parents[rng.categorical(wts)];
        if (members[parent].y.empty()) members[parent].y.assign(id.n_classes, 0);
        members[parent].y[rng.categorical(recruit_probs)] += 1;
      }
    }
  }

  Dataset ds;
  ds.grid = true_quantile_grid(id.n_classes, id.size_beta_a, id.size_beta_b);
  ds.covariate_names = id.covariate_names;
  for (std::size_t k = 0; k < members.size(); ++k) {
    const Member& m = members[k];
    IndividualRecord r;
    r.id = "r" + std::to_string(k + 1);
    r.z_continuous = m.z;
    r.z_class = ds.grid.discretize(m.z);
    r.survived = m.survived;
    if (m.survived) {
      r.z_next_continuous = m.z_next;
      r.z_next_class = ds.grid.discretize(m.z_next);
    }
    if (!m.y.empty())
      for (int c = 0; c < static_cast<int>(m.y.size()) && c < ds.grid.n_classes; ++c)
        if (m.y[c] > 0) r.offspring.emplace_back(c + 1, m.y[c]);
    r.env_label = id.years[all_year[k]];
    r.covariates = cov_by_year[all_year[k]];
    ds.records.push_back(std::move(r));
  }
  std::vector<std::string> levels(id.years);
  std::sort(levels.begin(), levels.end());
  ds.env_levels = levels;
  ds.validate();
  return ds;
}

Dataset gen_rotifer_like(const SimSpec& spec) {
  const RotiferSpec& rs = spec.rotifer;
  if (rs.age_classes != 16 || rs.maternal_groups != 4)
    throw data_error("rotifer design requires 4 maternal groups x 16 age classes");
  const int ns = rs.n_states();
  std::vector<double> marginal = rs.state_marginal;
  if (marginal.empty()) marginal.assign(ns, 1.0 / ns);
  if (static_cast<int>(marginal.size()) != ns)
    throw data_error("rotifer config: marginal size mismatch");

  Rng rng(spec.seed);
  Dataset ds;
  ds.grid.n_classes = ns;
  ds.grid.has_seedling_class = false;
  ds.grid.lo = 0.5 / ns;
  ds.grid.hi = (ns - 0.5) / ns;
  for (int k = 1; k < ns; ++k)
    ds.grid.split_points.push_back(static_cast<double>(k) / ns);

  for (long k = 0; k < spec.n; ++k) {
    int state = rng.categorical(marginal) + 1;
    int group = (state - 1) / rs.age_classes + 1;
    int age = (state - 1) % rs.age_classes + 1;
    IndividualRecord r;
    r.id = "r" + std::to_string(k + 1);
    r.z_continuous = (state - 0.5) / ns;
    r.z_class = state;
    double p = rs.surv(group, age);
    r.survived = (age < rs.age_classes && rng.bernoulli(p)) ? 1 : 0;
    if (r.survived) {
      int next = rs.state_of(group, age + 1);
      r.z_next_continuous = (next - 0.5) / ns;
      r.z_next_class = next;
    }
    int dest = rs.offspring_state_of_age(age);
    int y = rng.poisson(rs.fert(group, age));
    if (y > 0) r.offspring.emplace_back(dest, y);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

Dataset generate(const SimSpec& spec) {
  switch (spec.design) {
    case Design::basic: return gen_basic(spec);
    case Design::idaho_like: return gen_idaho_like(spec);
    case Design::rotifer_like: return gen_rotifer_like(spec);
  }
  throw usage_error("unknown design");
}

// ---------------------------------------------------------------------------
// Exact population-law constructions
// ---------------------------------------------------------------------------

namespace {

struct ClassQuadrature {
  // nodes and normalized weights of the size law within each class
  std::vector<std::vector<double>> z;
  std::vector<std::vector<double>> w;
};

// Zero-inflated Beta size law cut at its own quantiles: class 1 is the atom at
// zero, classes 2..N split the Beta part into equal masses.
ClassQuadrature beta_mixture_quadrature(const SizeGrid& grid, double beta_a, double beta_b,
                                        int quad_nodes) {
  std::vector<double> gx, gw;
  gauss_legendre(quad_nodes, gx, gw);
  const int n = grid.n_classes;
  ClassQuadrature q;
  q.z.resize(n);
  q.w.resize(n);
  q.z[0] = {0.0};
  q.w[0] = {1.0};
  for (int i = 1; i < n; ++i) {
    double lo = grid.split_points[i - 1];
    double hi = i < n - 1 ? grid.split_points[i] : 1.0;
    double mass = ibeta(beta_a, beta_b, hi) - ibeta(beta_a, beta_b, lo);
    q.z[i].resize(quad_nodes);
    q.w[i].resize(quad_nodes);
    double half = 0.5 * (hi - lo);
    double mid = 0.5 * (hi + lo);
    for (int k = 0; k < quad_nodes; ++k) {
      double z = mid + half * gx[k];
      q.z[i][k] = z;
      q.w[i][k] = gw[k] * half * beta_pdf(beta_a, beta_b, z) / mass;
    }
  }
  return q;
}

} // namespace

SizeGrid true_quantile_grid(int n_classes, double beta_a, double beta_b) {
  SizeGrid g;
  g.n_classes = n_classes;
  g.has_seedling_class = true;
  g.lo = 0.0;
  g.hi = 1.0;
  g.split_points.push_back(0.0);
  for (int k = 1; k + 1 < n_classes; ++k)
    g.split_points.push_back(
        ibeta_inv(beta_a, beta_b, static_cast<double>(k) / (n_classes - 1)));
  return g;
}

DemographicModel exact_basic_model(const BasicSpec& b, int quad_nodes) {
  const int n = b.n_classes;
  SizeGrid grid = true_quantile_grid(n, b.size_beta_a, b.size_beta_b);
  ClassQuadrature q = beta_mixture_quadrature(grid, b.size_beta_a, b.size_beta_b, quad_nodes);
  std::vector<double> pf = b.class_probs_padded();

  DemographicModel model;
  model.n_classes = n;
  model.base.trans.setZero(n, n + 1);
  model.base.fec.setZero(n, n);
  model.base.marginal.resize(n);
  model.base.marginal[0] = b.seedling_prob;
  for (int i = 1; i < n; ++i)
    model.base.marginal[i] = (1.0 - b.seedling_prob) / (n - 1);

  // CDF of z' = slope*z + scale*Beta(ra, rb) at the class boundaries.
  auto growth_cdf = [&](double x, double z) {
    double t = (x - b.growth_slope * z) / b.growth_scale;
    return ibeta(b.resid_beta_a, b.resid_beta_b, std::min(1.0, std::max(0.0, t)));
  };

  for (int i = 0; i < n; ++i) {
    double surv = 0.0, fec_rate = 0.0;
    Eigen::VectorXd gprob = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < q.z[i].size(); ++k) {
      double z = q.z[i][k], w = q.w[i][k];
      double s = plogis(b.surv_intercept + b.surv_slope * z);
      surv += w * s;
      fec_rate += w * std::exp(b.fec_intercept + b.fec_slope * z);
      double prev = 0.0;
      for (int j = 0; j < n; ++j) {
        double hi = j < n - 1 ? growth_cdf(grid.split_points[j], z) : 1.0;
        gprob[j] += w * s * (hi - prev);
        prev = hi;
      }
    }
    model.base.trans(i, 0) = 1.0 - surv;
    for (int j = 0; j < n; ++j) model.base.trans(i, j + 1) = gprob[j];
    for (int j = 0; j < n; ++j) model.base.fec(i, j) = fec_rate * pf[j];
  }
  return model;
}

DemographicModel exact_idaho_model(const IdahoSpec& id, int quad_nodes) {
  for (double c : id.growth_cov_coefs)
    if (c != 0.0) throw numeric_error("exact idaho law requires zero covariate coefficients");
  for (double c : id.surv_cov_coefs)
    if (c != 0.0) throw numeric_error("exact idaho law requires zero covariate coefficients");
  for (double c : id.surv_seedling_cov_coefs)
    if (c != 0.0) throw numeric_error("exact idaho law requires zero covariate coefficients");
  for (double c : id.fec_cov_coefs)
    if (c != 0.0) throw numeric_error("exact idaho law requires zero covariate coefficients");
  if (id.quadrat_size != 1)
    throw numeric_error("exact idaho law requires quadrat_size 1");

  const int n = id.n_classes;
  SizeGrid grid = true_quantile_grid(n, id.size_beta_a, id.size_beta_b);
  ClassQuadrature q = beta_mixture_quadrature(grid, id.size_beta_a, id.size_beta_b, quad_nodes);
  std::vector<double> rc = id.recruit_probs_padded();

  DemographicModel model;
  model.n_classes = n;
  std::vector<std::string> levels(id.years);
  std::sort(levels.begin(), levels.end());
  model.env_levels = levels;
  model.env_weights.resize(levels.size());

  Eigen::VectorXd marginal(n);
  marginal[0] = id.seedling_prob;
  for (int i = 1; i < n; ++i) marginal[i] = (1.0 - id.seedling_prob) / (n - 1);

  for (std::size_t lev = 0; lev < levels.size(); ++lev) {
    std::size_t y = std::find(id.years.begin(), id.years.end(), levels[lev]) - id.years.begin();
    model.env_weights[static_cast<Eigen::Index>(lev)] = id.year_probs[y];
    ConditionalModel cm;
    cm.trans.setZero(n, n + 1);
    cm.fec.setZero(n, n);
    cm.marginal = marginal;
    auto growth_cdf = [&](double x, double z) {
      double t = (x - id.growth_intercept_by_year[y] - id.growth_slope * z - id.resid_lo) /
                 (id.resid_hi - id.resid_lo);
      return ibeta(id.resid_beta_a, id.resid_beta_b, std::min(1.0, std::max(0.0, t)));
    };
    double recruit_rate = std::exp(id.fec_log_mean_by_year[y]);
    for (int i = 0; i < n; ++i) {
      double surv = 0.0;
      Eigen::VectorXd gprob = Eigen::VectorXd::Zero(n);
      for (std::size_t k = 0; k < q.z[i].size(); ++k) {
        double z = q.z[i][k], w = q.w[i][k];
        double s = i == 0 ? plogis(id.surv_seedling_intercept_by_year[y])
                          : plogis(id.surv_intercept_by_year[y] + id.surv_slope * z);
        surv += w * s;
        double prev = 0.0;
        for (int j = 0; j < n; ++j) {
          double hi = j < n - 1 ? growth_cdf(grid.split_points[j], z) : 1.0;
          gprob[j] += w * s * (hi - prev);
          prev = hi;
        }
      }
      cm.trans(i, 0) = 1.0 - surv;
      for (int j = 0; j < n; ++j) cm.trans(i, j + 1) = gprob[j];
      if (i > 0)
        for (int j = 0; j < n; ++j) cm.fec(i, j) = recruit_rate * rc[j];
    }
    model.per_env.push_back(std::move(cm));
  }
  model.base.trans.setZero(n, n + 1);
  model.base.fec.setZero(n, n);
  model.base.marginal = marginal;
  for (std::size_t e = 0; e < model.per_env.size(); ++e) {
    model.base.trans += model.env_weights[static_cast<Eigen::Index>(e)] * model.per_env[e].trans;
    model.base.fec += model.env_weights[static_cast<Eigen::Index>(e)] * model.per_env[e].fec;
  }
  return model;
}

Eigen::MatrixXd rotifer_projection_matrix(const RotiferSpec& rs) {
  const int ns = rs.n_states();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(ns, ns);
  for (int g = 1; g <= rs.maternal_groups; ++g) {
    for (int a = 1; a <= rs.age_classes; ++a) {
      int s = rs.state_of(g, a);
      if (a < rs.age_classes) A(rs.state_of(g, a + 1) - 1, s - 1) += rs.surv(g, a);
      A(rs.offspring_state_of_age(a) - 1, s - 1) += rs.fert(g, a);
    }
  }
  return A;
}

DemographicModel exact_rotifer_model(const RotiferSpec& rs) {
  const int ns = rs.n_states();
  DemographicModel model;
  model.n_classes = ns;
  model.base.trans.setZero(ns, ns + 1);
  model.base.fec.setZero(ns, ns);
  std::vector<double> marginal = rs.state_marginal;
  if (marginal.empty()) marginal.assign(ns, 1.0 / ns);
  model.base.marginal.resize(ns);
  for (int s = 0; s < ns; ++s) model.base.marginal[s] = marginal[s];
  for (int g = 1; g <= rs.maternal_groups; ++g) {
    for (int a = 1; a <= rs.age_classes; ++a) {
      int s = rs.state_of(g, a);
      double p = a < rs.age_classes ? rs.surv(g, a) : 0.0;
      model.base.trans(s - 1, 0) = 1.0 - p;
      if (a < rs.age_classes) model.base.trans(s - 1, rs.state_of(g, a + 1)) = p;
      model.base.fec(s - 1, rs.offspring_state_of_age(a) - 1) = rs.fert(g, a);
    }
  }
  return model;
}

double design_truth(const SimSpec& spec, Target target) {
  switch (spec.design) {
    case Design::basic: {
      DemographicModel m = exact_basic_model(spec.basic);
      if (target == Target::log_lambda_s)
        throw data_error("basic design has no environment dimension");
      return evaluate_target(target, m);
    }
    case Design::idaho_like: {
      DemographicModel m = exact_idaho_model(spec.idaho);
      return evaluate_target(target, m);
    }
    case Design::rotifer_like: {
      DemographicModel m = exact_rotifer_model(spec.rotifer);
      if (target == Target::log_lambda_s)
        throw data_error("rotifer design has no environment dimension");
      return evaluate_target(target, m);
    }
  }
  throw usage_error("unknown design");
}

// ---------------------------------------------------------------------------
// JSON round trip
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j[key].get<T>();
}

} // namespace

SimSpec SimSpec::from_json_text(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  SimSpec s;
  std::string design = j.value("design", "basic");
  if (design == "basic") s.design = Design::basic;
  else if (design == "idaho_like") s.design = Design::idaho_like;
  else if (design == "rotifer_like") s.design = Design::rotifer_like;
  else throw usage_error("unknown design: " + design);
  get_if(j, "n", s.n);
  get_if(j, "seed", s.seed);
  if (j.contains("basic")) {
    const auto& b = j["basic"];
    get_if(b, "n_classes", s.basic.n_classes);
    get_if(b, "seedling_prob", s.basic.seedling_prob);
    get_if(b, "size_beta_a", s.basic.size_beta_a);
    get_if(b, "size_beta_b", s.basic.size_beta_b);
    get_if(b, "growth_slope", s.basic.growth_slope);
    get_if(b, "growth_scale", s.basic.growth_scale);
    get_if(b, "resid_beta_a", s.basic.resid_beta_a);
    get_if(b, "resid_beta_b", s.basic.resid_beta_b);
    get_if(b, "surv_intercept", s.basic.surv_intercept);
    get_if(b, "surv_slope", s.basic.surv_slope);
    get_if(b, "fec_intercept", s.basic.fec_intercept);
    get_if(b, "fec_slope", s.basic.fec_slope);
    get_if(b, "offspring_class_probs", s.basic.offspring_class_probs);
  }
  if (j.contains("idaho")) {
    const auto& b = j["idaho"];
    get_if(b, "n_classes", s.idaho.n_classes);
    get_if(b, "seedling_prob", s.idaho.seedling_prob);
    get_if(b, "size_beta_a", s.idaho.size_beta_a);
    get_if(b, "size_beta_b", s.idaho.size_beta_b);
    get_if(b, "years", s.idaho.years);
    get_if(b, "year_probs", s.idaho.year_probs);
    get_if(b, "covariate_names", s.idaho.covariate_names);
    get_if(b, "covariate_means", s.idaho.covariate_means);
    get_if(b, "covariate_sds", s.idaho.covariate_sds);
    get_if(b, "growth_intercept_by_year", s.idaho.growth_intercept_by_year);
    get_if(b, "growth_slope", s.idaho.growth_slope);
    get_if(b, "growth_cov_coefs", s.idaho.growth_cov_coefs);
    get_if(b, "resid_lo", s.idaho.resid_lo);
    get_if(b, "resid_hi", s.idaho.resid_hi);
    get_if(b, "resid_beta_a", s.idaho.resid_beta_a);
    get_if(b, "resid_beta_b", s.idaho.resid_beta_b);
    get_if(b, "surv_seedling_intercept_by_year", s.idaho.surv_seedling_intercept_by_year);
    get_if(b, "surv_seedling_cov_coefs", s.idaho.surv_seedling_cov_coefs);
    get_if(b, "surv_intercept_by_year", s.idaho.surv_intercept_by_year);
    get_if(b, "surv_slope", s.idaho.surv_slope);
    get_if(b, "surv_cov_coefs", s.idaho.surv_cov_coefs);
    get_if(b, "fec_log_mean_by_year", s.idaho.fec_log_mean_by_year);
    get_if(b, "fec_cov_coefs", s.idaho.fec_cov_coefs);
    get_if(b, "quadrat_size", s.idaho.quadrat_size);
    get_if(b, "recruit_class_probs", s.idaho.recruit_class_probs);
  }
  if (j.contains("rotifer")) {
    const auto& b = j["rotifer"];
    get_if(b, "age_classes", s.rotifer.age_classes);
    get_if(b, "maternal_groups", s.rotifer.maternal_groups);
    get_if(b, "survival", s.rotifer.survival);
    get_if(b, "fertility", s.rotifer.fertility);
    get_if(b, "state_marginal", s.rotifer.state_marginal);
  }
  return s;
}

std::string SimSpec::to_json_text() const {
  nlohmann::json j;
  j["design"] = design == Design::basic ? "basic"
                : design == Design::idaho_like ? "idaho_like" : "rotifer_like";
  j["n"] = n;
  j["seed"] = seed;
  j["basic"] = {
      {"n_classes", basic.n_classes},
      {"seedling_prob", basic.seedling_prob},
      {"size_beta_a", basic.size_beta_a},
      {"size_beta_b", basic.size_beta_b},
      {"growth_slope", basic.growth_slope},
      {"growth_scale", basic.growth_scale},
      {"resid_beta_a", basic.resid_beta_a},
      {"resid_beta_b", basic.resid_beta_b},
      {"surv_intercept", basic.surv_intercept},
      {"surv_slope", basic.surv_slope},
      {"fec_intercept", basic.fec_intercept},
      {"fec_slope", basic.fec_slope},
      {"offspring_class_probs", basic.offspring_class_probs},
  };
  j["idaho"] = {
      {"n_classes", idaho.n_classes},
      {"seedling_prob", idaho.seedling_prob},
      {"size_beta_a", idaho.size_beta_a},
      {"size_beta_b", idaho.size_beta_b},
      {"years", idaho.years},
      {"year_probs", idaho.year_probs},
      {"covariate_names", idaho.covariate_names},
      {"covariate_means", idaho.covariate_means},
      {"covariate_sds", idaho.covariate_sds},
      {"growth_intercept_by_year", idaho.growth_intercept_by_year},
      {"growth_slope", idaho.growth_slope},
      {"growth_cov_coefs", idaho.growth_cov_coefs},
      {"resid_lo", idaho.resid_lo},
      {"resid_hi", idaho.resid_hi},
      {"resid_beta_a", idaho.resid_beta_a},
      {"resid_beta_b", idaho.resid_beta_b},
      {"surv_seedling_intercept_by_year", idaho.surv_seedling_intercept_by_year},
      {"surv_seedling_cov_coefs", idaho.surv_seedling_cov_coefs},
      {"surv_intercept_by_year", idaho.surv_intercept_by_year},
      {"surv_slope", idaho.surv_slope},
      {"surv_cov_coefs", idaho.surv_cov_coefs},
      {"fec_log_mean_by_year", idaho.fec_log_mean_by_year},
      {"fec_cov_coefs", idaho.fec_cov_coefs},
      {"quadrat_size", idaho.quadrat_size},
      {"recruit_class_probs", idaho.recruit_class_probs},
  };
  j["rotifer"] = {
      {"age_classes", rotifer.age_classes},
      {"maternal_groups", rotifer.maternal_groups},
      {"survival", rotifer.survival},
      {"fertility", rotifer.fertility},
      {"state_marginal", rotifer.state_marginal},
  };
  return j.dump(2);
}

} // namespace ipmtmle
