#include "ipmtmle/demography.hpp"
#include "ipmtmle/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace ipmtmle {

bool DemographicModel::supported(int cls) const {
  return std::find(unsupported.begin(), unsupported.end(), cls) == unsupported.end();
}

std::vector<int> DemographicModel::supported_indices() const {
  std::vector<int> idx;
  for (int i = 0; i < n_classes; ++i)
    if (supported(i + 1)) idx.push_back(i);
  return idx;
}

int DemographicModel::env_index(const std::string& label) const {
  for (std::size_t e = 0; e < env_levels.size(); ++e)
    if (env_levels[e] == label) return static_cast<int>(e);
  return -1;
}

Eigen::MatrixXd survival_growth_matrix(const ConditionalModel& m) {
  const Eigen::Index n = m.trans.rows();
  Eigen::MatrixXd sg(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) sg(j, i) = m.trans(i, j + 1);
  return sg;
}

Eigen::MatrixXd fecundity_matrix(const ConditionalModel& m) {
  return m.fec.transpose();
}

Eigen::MatrixXd kernel_matrix(const ConditionalModel& m) {
  return survival_growth_matrix(m) + fecundity_matrix(m);
}

Eigen::MatrixXd mean_kernel(const DemographicModel& m) {
  if (!m.has_env()) return kernel_matrix(m.base);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(m.n_classes, m.n_classes);
  for (std::size_t e = 0; e < m.per_env.size(); ++e)
    k += m.env_weights[static_cast<Eigen::Index>(e)] * kernel_matrix(m.per_env[e]);
  return k;
}

namespace {

// Boolean reachability check: B^(2^m) strictly positive for 2^m >= 2n.
bool primitive_check(const Eigen::MatrixXd& K) {
  const int n = static_cast<int>(K.rows());
  const int words = (n + 63) / 64;
  std::vector<std::uint64_t> cur(static_cast<std::size_t>(n) * words, 0);
  auto bit = [&](std::vector<std::uint64_t>& m, int r, int c) -> std::uint64_t& {
    return m[static_cast<std::size_t>(r) * words + c / 64];
  };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (K(j, i) > 0.0) bit(cur, j, i) |= 1ULL << (i % 64);
  auto all_ones = [&](const std::vector<std::uint64_t>& m) {
    for (int r = 0; r < n; ++r)
      for (int w = 0; w < words; ++w) {
        std::uint64_t expect = (w == words - 1 && n % 64) ? ((1ULL << (n % 64)) - 1) : ~0ULL;
        if (m[static_cast<std::size_t>(r) * words + w] != expect) return false;
      }
    return true;
  };
  if (all_ones(cur)) return true;
  int steps = 1;
  while ((1 << steps) < 2 * n) ++steps;
  std::vector<std::uint64_t> nxt(cur.size());
  for (int s = 0; s < steps; ++s) {
    std::fill(nxt.begin(), nxt.end(), 0);
    for (int r = 0; r < n; ++r) {
      for (int l = 0; l < n; ++l) {
        if (cur[static_cast<std::size_t>(r) * words + l / 64] & (1ULL << (l % 64))) {
          for (int w = 0; w < words; ++w)
            nxt[static_cast<std::size_t>(r) * words + w] |=
                cur[static_cast<std::size_t>(l) * words + w];
        }
      }
    }
    cur.swap(nxt);
    if (all_ones(cur)) return true;
  }
  return false;
}

} // namespace

EigenSystem dominant_eigs(const Eigen::MatrixXd& K, const EigOptions& opt) {
  const Eigen::Index n = K.rows();
  if (K.cols() != n || n == 0) throw numeric_error("dominant_eigs: square matrix required");
  if (K.minCoeff() < -1e-12 * std::max(1.0, K.cwiseAbs().maxCoeff()))
    throw numeric_error("dominant_eigs: negative entries");

  auto iterate = [&](const Eigen::MatrixXd& A) {
    Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    Eigen::VectorXd y(n);
    for (long it = 0; it < opt.max_iterations; ++it) {
      y.noalias() = A * x;
      double s = y.sum();
      if (!(s > 0.0) || !std::isfinite(s))
        throw numeric_error("no real dominant eigenvalue");
      y /= s;
      double delta = (y - x).cwiseAbs().maxCoeff();
      x = y;
      if (delta < opt.tol) return x;
    }
    throw numeric_error("no real dominant eigenvalue");
  };

  EigenSystem es;
  if (K.cwiseAbs().maxCoeff() == 0.0) {
    // Perron root of the zero matrix
    es.lambda = 0.0;
    es.u = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    es.v = Eigen::VectorXd::Ones(n);
    es.primitive = false;
    return es;
  }
  es.u = iterate(K);
  Eigen::VectorXd w = iterate(K.transpose());
  double dot = w.dot(es.u);
  if (!(dot > 1e-300)) throw numeric_error("dominant_eigs: degenerate eigenvector pairing");
  es.v = w / dot;
  es.lambda = es.v.dot(K * es.u);
  es.resid_right = (K * es.u - es.lambda * es.u).cwiseAbs().maxCoeff();
  es.resid_left = (K.transpose() * es.v - es.lambda * es.v).cwiseAbs().maxCoeff();
  if (opt.check_primitive) es.primitive = primitive_check(K);
  return es;
}

Eigen::MatrixXd deflated_pinv(double lambda, const Eigen::MatrixXd& K) {
  const Eigen::Index n = K.rows();
  Eigen::MatrixXd A = lambda * Eigen::MatrixXd::Identity(n, n) - K;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  double cut = static_cast<double>(n) * lambda * 1e-12;
  Eigen::VectorXd inv = svd.singularValues();
  for (Eigen::Index k = 0; k < inv.size(); ++k)
    inv[k] = inv[k] > cut ? 1.0 / inv[k] : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

double lambda_of(const Eigen::MatrixXd& K, const EigOptions& opt) {
  return dominant_eigs(K, opt).lambda;
}

double elasticity_of(const Eigen::MatrixXd& survival_growth, const Eigen::MatrixXd& fecundity) {
  Eigen::MatrixXd K = survival_growth + fecundity;
  EigenSystem es = dominant_eigs(K);
  if (es.lambda <= 1e-12) throw numeric_error("degenerate eigenvalue");
  return es.v.dot(fecundity * es.u) / es.lambda;
}

double log_lambda_s_of(const std::vector<Eigen::MatrixXd>& kernels,
                       const Eigen::VectorXd& weights) {
  if (kernels.empty()) throw numeric_error("log_lambda_s_of: no kernels");
  Eigen::MatrixXd kbar = Eigen::MatrixXd::Zero(kernels[0].rows(), kernels[0].cols());
  for (std::size_t e = 0; e < kernels.size(); ++e)
    kbar += weights[static_cast<Eigen::Index>(e)] * kernels[e];
  EigenSystem es = dominant_eigs(kbar);
  double out = 0.0;
  for (std::size_t e = 0; e < kernels.size(); ++e) {
    double c = es.v.dot(kernels[e] * es.u);
    if (!(c > 0.0)) throw numeric_error("log_lambda_s_of: nonpositive one-step growth");
    out += weights[static_cast<Eigen::Index>(e)] * std::log(c);
  }
  return out;
}

namespace {

Eigen::MatrixXd restrict_ji(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
  Eigen::MatrixXd out(idx.size(), idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = 0; b < idx.size(); ++b) out(a, b) = m(idx[a], idx[b]);
  return out;
}

} // namespace

double target_lambda(const DemographicModel& m) {
  Eigen::MatrixXd K = kernel_matrix(m.base);
  if (!m.unsupported.empty()) K = restrict_ji(K, m.supported_indices());
  return lambda_of(K);
}

double target_elasticity(const DemographicModel& m) {
  Eigen::MatrixXd sg = survival_growth_matrix(m.base);
  Eigen::MatrixXd f = fecundity_matrix(m.base);
  if (!m.unsupported.empty()) {
    auto idx = m.supported_indices();
    sg = restrict_ji(sg, idx);
    f = restrict_ji(f, idx);
  }
  return elasticity_of(sg, f);
}

double target_log_lambda_s(const DemographicModel& m) {
  if (!m.has_env()) throw data_error("log_lambda_s needs a per-environment model");
  std::vector<Eigen::MatrixXd> kernels;
  for (const auto& em : m.per_env) kernels.push_back(kernel_matrix(em));
  if (!m.unsupported.empty()) {
    auto idx = m.supported_indices();
    for (auto& k : kernels) k = restrict_ji(k, idx);
  }
  return log_lambda_s_of(kernels, m.env_weights);
}

// ---------------------------------------------------------------------------
// Parametric plug-in estimation
// ---------------------------------------------------------------------------

namespace {

struct DesignLayout {
  bool with_z = false;
  bool with_zr = false;
  int n_cov = 0;
  int n_env = 0;  // dummies for env levels 1..n_env (level 0 is the baseline)

  int cols() const { return 1 + (with_z ? 1 : 0) + (with_zr ? 1 : 0) + n_cov + n_env; }

  std::vector<std::string> names(const std::vector<std::string>& cov_names,
                                 const std::vector<std::string>& env_levels) const {
    std::vector<std::string> out{"(intercept)"};
    if (with_z) out.push_back("z");
    if (with_zr) out.push_back("z_r");
    for (int c = 0; c < n_cov; ++c) out.push_back(cov_names[c]);
    for (int e = 1; e <= n_env; ++e) out.push_back("env=" + env_levels[e]);
    return out;
  }

  Eigen::VectorXd row(double z, double zr, const std::vector<double>& covs, int env) const {
    Eigen::VectorXd out(cols());
    int k = 0;
    out[k++] = 1.0;
    if (with_z) out[k++] = z;
    if (with_zr) out[k++] = zr;
    for (int c = 0; c < n_cov; ++c) out[k++] = covs.empty() ? 0.0 : covs[c];
    for (int e = 1; e <= n_env; ++e) out[k++] = (env == e) ? 1.0 : 0.0;
    return out;
  }
};

} // namespace

DemographicModel estimate_model(const Dataset& ds, const FitConfig& config) {
  const int n = ds.grid.n_classes;
  if (ds.records.empty()) throw data_error("estimate_model: empty dataset");

  DemographicModel model;
  model.n_classes = n;

  std::vector<std::size_t> all(ds.records.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::size_t> order = canonical_record_order(ds.records, all);

  const bool use_env = config.env_conditional && ds.has_env();
  const int n_env_levels = use_env ? static_cast<int>(ds.env_levels.size()) : 0;
  auto env_of = [&](const IndividualRecord& r) -> int {
    if (!use_env) return 0;
    int e = model.env_index(r.env_label);
    return e;
  };
  if (use_env) model.env_levels = ds.env_levels;

  const int n_cov = config.use_covariates ? static_cast<int>(ds.covariate_names.size()) : 0;

  // Survivors drive the growth model.
  std::vector<std::size_t> survivors;
  for (std::size_t k : order)
    if (ds.records[k].survived == 1) survivors.push_back(k);
  if (survivors.empty()) throw data_error("estimate_model: no survivors in the data");

  DesignLayout growth_layout{true, false, n_cov, use_env ? n_env_levels - 1 : 0};
  Eigen::MatrixXd Xg(survivors.size(), growth_layout.cols());
  Eigen::VectorXd yg(survivors.size());
  for (std::size_t r = 0; r < survivors.size(); ++r) {
    const auto& rec = ds.records[survivors[r]];
    Xg.row(r) = growth_layout.row(rec.z_continuous, 0.0, rec.covariates, env_of(rec)).transpose();
    yg[r] = rec.z_next_continuous;
  }
  GlmOptions glm_opt;
  glm_opt.ridge = config.ridge;
  GlmFit growth = fit_glm(GlmFamily::gaussian, yg, Xg,
                          growth_layout.names(ds.covariate_names, model.env_levels), glm_opt);
  for (const auto& w : growth.warnings) model.warnings.push_back("growth: " + w);

  // Residual law, rescaled to [0,1], Gaussian KDE.
  std::vector<double> resid(survivors.size());
  for (std::size_t r = 0; r < survivors.size(); ++r)
    resid[r] = yg[r] - growth.linear_predictor(Xg.row(r).transpose());
  double rmin = *std::min_element(resid.begin(), resid.end());
  double rmax = *std::max_element(resid.begin(), resid.end());
  double span = rmax - rmin;
  bool delta_resid = span < 1e-6;
  KdeFit kde;
  KdeGrid kde_grid;
  if (!delta_resid) {
    kde.sample.resize(resid.size());
    for (std::size_t r = 0; r < resid.size(); ++r) kde.sample[r] = (resid[r] - rmin) / span;
    std::sort(kde.sample.begin(), kde.sample.end());
    // config bandwidths live on the raw residual scale; the fitted sample is
    // rescaled to [0,1], so divide by the observed span
    double bandwidth = config.bandwidth / span;
    if (config.bandwidth <= 0.0) {
      std::vector<double> candidates(config.bandwidth_candidates);
      for (double& c : candidates) c /= span;
      bandwidth = cv_bandwidth(kde.sample, candidates, config.cv_folds, config.seed);
    }
    kde.bandwidth = bandwidth;
    kde_grid = KdeGrid::build(kde);
  }

  // Survival: one logistic model, or separate seedling / non-seedling models.
  bool split = config.split_survival_by_seedling && ds.grid.has_seedling_class;
  std::vector<std::size_t> seed_idx, nons_idx;
  if (split) {
    for (std::size_t k : order)
      (ds.records[k].z_class == 1 ? seed_idx : nons_idx).push_back(k);
    if (seed_idx.empty() || nons_idx.empty()) {
      split = false;
      model.warnings.push_back("survival: seedling split requested but one group is empty");
    }
  }
  auto fit_survival = [&](const std::vector<std::size_t>& idx, bool with_z) {
    DesignLayout lay{with_z, false, n_cov, use_env ? n_env_levels - 1 : 0};
    Eigen::MatrixXd X(idx.size(), lay.cols());
    Eigen::VectorXd y(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto& rec = ds.records[idx[r]];
      X.row(r) = lay.row(rec.z_continuous, 0.0, rec.covariates, env_of(rec)).transpose();
      y[r] = rec.survived;
    }
    GlmFit f = fit_glm(GlmFamily::binomial, y, X,
                       lay.names(ds.covariate_names, model.env_levels), glm_opt);
    for (const auto& w : f.warnings) model.warnings.push_back("survival: " + w);
    return std::pair<GlmFit, DesignLayout>{f, lay};
  };
  std::vector<std::size_t> order_vec(order.begin(), order.end());
  auto [surv_all, surv_all_lay] = fit_survival(split ? nons_idx : order_vec, true);
  GlmFit surv_seed;
  DesignLayout surv_seed_lay;
  if (split) {
    auto [f, lay] = fit_survival(seed_idx, false);
    surv_seed = f;
    surv_seed_lay = lay;
  }

  // Fecundity: seedling offspring on z; non-seedling offspring on z and the
  // destination-class size value, in long format.
  DesignLayout fec1_lay{true, false, n_cov, use_env ? n_env_levels - 1 : 0};
  Eigen::MatrixXd Xf1(order.size(), fec1_lay.cols());
  Eigen::VectorXd yf1(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto& rec = ds.records[order[r]];
    Xf1.row(r) = fec1_lay.row(rec.z_continuous, 0.0, rec.covariates, env_of(rec)).transpose();
    yf1[r] = rec.offspring_in(1);
  }
  GlmFit fec_seed = fit_glm(GlmFamily::poisson, yf1, Xf1,
                            fec1_lay.names(ds.covariate_names, model.env_levels), glm_opt);
  for (const auto& w : fec_seed.warnings) model.warnings.push_back("fecundity: " + w);

  GlmFit fec_rest;
  DesignLayout fec2_lay{true, true, n_cov, use_env ? n_env_levels - 1 : 0};
  if (n >= 2) {
    Eigen::MatrixXd Xf2(order.size() * static_cast<std::size_t>(n - 1), fec2_lay.cols());
    Eigen::VectorXd yf2(Xf2.rows());
    std::size_t row = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      const auto& rec = ds.records[order[r]];
      for (int j = 2; j <= n; ++j, ++row) {
        Xf2.row(row) = fec2_lay.row(rec.z_continuous, ds.grid.representative(j),
                                     rec.covariates, env_of(rec)).transpose();
        yf2[row] = rec.offspring_in(j);
      }
    }
    fec_rest = fit_glm(GlmFamily::poisson, yf2, Xf2,
                       fec2_lay.names(ds.covariate_names, model.env_levels), glm_opt);
    for (const auto& w : fec_rest.warnings) model.warnings.push_back("fecundity: " + w);
  }

  // Class representatives: within-class mean of observed sizes, interval
  // midpoint for classes the training folds never saw.
  std::vector<double> zrep(n), zsum(n, 0.0);
  std::vector<int> zcount(n, 0);
  for (std::size_t k : order) {
    zsum[ds.records[k].z_class - 1] += ds.records[k].z_continuous;
    zcount[ds.records[k].z_class - 1] += 1;
  }
  for (int i = 0; i < n; ++i)
    zrep[i] = zcount[i] > 0 ? zsum[i] / zcount[i] : ds.grid.representative(i + 1);

  // Per-environment covariate evaluation points (the labels are year-level,
  // so the within-level mean is the level's value).
  int n_models = use_env ? n_env_levels : 1;
  std::vector<std::vector<double>> cov_eval(n_models, std::vector<double>(n_cov, 0.0));
  std::vector<long> env_count(n_models, 0);
  for (std::size_t k : order) {
    int e = use_env ? env_of(ds.records[k]) : 0;
    env_count[e] += 1;
    for (int c = 0; c < n_cov; ++c) cov_eval[e][c] += ds.records[k].covariates[c];
  }
  for (int e = 0; e < n_models; ++e) {
    if (env_count[e] == 0) throw data_error("estimate_model: empty environment level");
    for (int c = 0; c < n_cov; ++c) cov_eval[e][c] /= static_cast<double>(env_count[e]);
  }

  auto build_conditional = [&](int e) {
    ConditionalModel cm;
    cm.trans.setZero(n, n + 1);
    cm.fec.setZero(n, n);
    for (int i = 0; i < n; ++i) {
      double z = zrep[i];
      // survival
      double s;
      if (split && i == 0) {
        s = surv_seed.predict(surv_seed_lay.row(z, 0.0, cov_eval[e], e));
      } else {
        s = surv_all.predict(surv_all_lay.row(z, 0.0, cov_eval[e], e));
      }
      // growth destination law
      double mu = growth.linear_predictor(growth_layout.row(z, 0.0, cov_eval[e], e));
      Eigen::VectorXd g(n);
      if (delta_resid) {
        g.setZero();
        g[ds.grid.discretize(mu + 0.5 * (rmin + rmax)) - 1] = 1.0;
      } else {
        double h_z = kde.bandwidth * span;
        double zlo = mu + rmin - 10.0 * h_z;
        double zhi = mu + rmax + 10.0 * h_z;
        for (int j = 0; j < n; ++j) {
          double a = j == 0 ? std::min(zlo, ds.grid.split_points[0]) : ds.grid.split_points[j - 1];
          double b = j == n - 1 ? std::max(zhi, ds.grid.split_points[n - 2])
                                : ds.grid.split_points[j];
          double mass = 0.0;
          if (b > a) {
            int m = config.kde_subintervals;
            double w = (b - a) / m;
            for (int k = 0; k < m; ++k) {
              double zq = a + (k + 0.5) * w;
              mass += kde_grid((zq - mu - rmin) / span);
            }
            mass *= w / span;
          }
          g[j] = std::max(mass, 1e-12);
        }
        g /= g.sum();
      }
      cm.trans(i, 0) = 1.0 - s;
      for (int j = 0; j < n; ++j) cm.trans(i, j + 1) = s * g[j];
      // fecundity
      cm.fec(i, 0) = fec_seed.predict(fec1_lay.row(z, 0.0, cov_eval[e], e));
      for (int j = 2; j <= n; ++j)
        cm.fec(i, j - 1) = fec_rest.predict(fec2_lay.row(z, ds.grid.representative(j), cov_eval[e], e));
    }
    return cm;
  };

  auto floored_marginal = [&](const std::vector<long>& counts, long total) {
    Eigen::VectorXd p(n);
    std::vector<int> floored;
    double floor_at = 1.0 / (2.0 * static_cast<double>(total));
    for (int i = 0; i < n; ++i) {
      double raw = static_cast<double>(counts[i]) / static_cast<double>(total);
      if (raw < floor_at) {
        p[i] = floor_at;
        floored.push_back(i);
      } else {
        p[i] = raw;
      }
    }
    p /= p.sum();
    return std::pair<Eigen::VectorXd, std::vector<int>>{p, floored};
  };

  // Pooled marginal.
  std::vector<long> counts(n, 0);
  for (std::size_t k : order) counts[ds.records[k].z_class - 1] += 1;
  auto [p_base, floored_base] = floored_marginal(counts, static_cast<long>(order.size()));

  if (!use_env) {
    model.base = build_conditional(0);
    model.base.marginal = p_base;
    model.base.floored = floored_base;
  } else {
    model.env_weights.resize(n_env_levels);
    for (int e = 0; e < n_env_levels; ++e) {
      ConditionalModel cm = build_conditional(e);
      std::vector<long> ce(n, 0);
      for (std::size_t k : order)
        if (env_of(ds.records[k]) == e) ce[ds.records[k].z_class - 1] += 1;
      auto [pe, fe] = floored_marginal(ce, env_count[e]);
      cm.marginal = pe;
      cm.floored = fe;
      model.per_env.push_back(std::move(cm));
      model.env_weights[e] =
          static_cast<double>(env_count[e]) / static_cast<double>(order.size());
    }
    // Pooled view: environment mixture of the conditionals.
    model.base.trans.setZero(n, n + 1);
    model.base.fec.setZero(n, n);
    for (int e = 0; e < n_env_levels; ++e) {
      model.base.trans += model.env_weights[e] * model.per_env[e].trans;
      model.base.fec += model.env_weights[e] * model.per_env[e].fec;
    }
    model.base.marginal = p_base;
    model.base.floored = floored_base;
  }

  if (!model.base.floored.empty())
    model.warnings.push_back("marginal floor applied to " +
                             std::to_string(model.base.floored.size()) + " class(es)");
  return model;
}

DemographicModel empirical_model(const Dataset& ds) {
  if (ds.records.empty()) throw data_error("empirical_model: empty dataset");
  if (ds.has_env()) throw data_error("empirical_model: environment labels unsupported");
  const int n = ds.grid.n_classes;

  DemographicModel model;
  model.n_classes = n;

  std::vector<std::size_t> all(ds.records.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::size_t> order = canonical_record_order(ds.records, all);

  std::vector<long> src(n, 0);
  Eigen::MatrixXd tc = Eigen::MatrixXd::Zero(n, n + 1);
  Eigen::MatrixXd fs = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t k : order) {
    const auto& r = ds.records[k];
    int i = r.z_class - 1;
    src[i] += 1;
    tc(i, r.z_next_class) += 1.0;
    for (const auto& [c, cnt] : r.offspring) fs(i, c - 1) += cnt;
  }

  model.base.trans.setZero(n, n + 1);
  model.base.fec.setZero(n, n);
  for (int i = 0; i < n; ++i) {
    if (src[i] == 0) {
      model.unsupported.push_back(i + 1);
      continue;
    }
    model.base.trans.row(i) = tc.row(i) / static_cast<double>(src[i]);
    model.base.fec.row(i) = fs.row(i) / static_cast<double>(src[i]);
  }
  if (!model.unsupported.empty())
    model.warnings.push_back(std::to_string(model.unsupported.size()) +
                             " class(es) never observed as a source; model restricted");

  long total = static_cast<long>(order.size());
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  double floor_at = 1.0 / (2.0 * static_cast<double>(total));
  for (int i = 0; i < n; ++i) {
    if (src[i] == 0) continue;
    double raw = static_cast<double>(src[i]) / static_cast<double>(total);
    if (raw < floor_at) {
      p[i] = floor_at;
      model.base.floored.push_back(i);
    } else {
      p[i] = raw;
    }
  }
  p /= p.sum();
  model.base.marginal = p;
  return model;
}

void write_matrix_json(const std::string& path, const Eigen::MatrixXd& m_ji) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  char buf[64];
  out << "{\"rows\":" << m_ji.rows() << ",\"cols\":" << m_ji.cols() << ",\"data\":[";
  for (Eigen::Index j = 0; j < m_ji.rows(); ++j) {
    out << (j ? ",[" : "[");
    for (Eigen::Index i = 0; i < m_ji.cols(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", m_ji(j, i));
      out << (i ? "," : "") << buf;
    }
    out << "]";
  }
  out << "]}\n";
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m_ji) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  char buf[64];
  out << "j\\i";
  for (Eigen::Index i = 0; i < m_ji.cols(); ++i) out << "," << (i + 1);
  out << "\n";
  for (Eigen::Index j = 0; j < m_ji.rows(); ++j) {
    out << (j + 1);
    for (Eigen::Index i = 0; i < m_ji.cols(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", m_ji(j, i));
      out << "," << buf;
    }
    out << "\n";
  }
}

} // namespace ipmtmle
