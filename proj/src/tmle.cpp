#include "ipmtmle/tmle.hpp"
#include "ipmtmle/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ipmtmle {

namespace {

void tilt_conditional_rows(ConditionalModel& cm, const Eigen::MatrixXd& phi, double eps) {
  const Eigen::Index n = cm.trans.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    double rowsum = cm.trans.row(i).sum();
    if (!(rowsum > 0.0)) continue;  // unsupported row
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index jc = 0; jc <= n; ++jc)
      if (cm.trans(i, jc) > 0.0) m = std::max(m, eps * phi(i, jc));
    double total = 0.0;
    for (Eigen::Index jc = 0; jc <= n; ++jc) {
      double w = cm.trans(i, jc) > 0.0
                     ? cm.trans(i, jc) * std::exp(eps * phi(i, jc) - m)
                     : 0.0;
      cm.trans(i, jc) = w;
      total += w;
    }
    cm.trans.row(i) /= total;
  }
}

void rebuild_base_mixture(DemographicModel& model) {
  if (!model.has_env()) return;
  model.base.trans.setZero();
  model.base.fec.setZero();
  for (std::size_t e = 0; e < model.per_env.size(); ++e) {
    model.base.trans += model.env_weights[static_cast<Eigen::Index>(e)] * model.per_env[e].trans;
    model.base.fec += model.env_weights[static_cast<Eigen::Index>(e)] * model.per_env[e].fec;
  }
}

} // namespace

DemographicModel tilt_growth(const DemographicModel& model, const std::vector<EifCells>& cells,
                             double eps) {
  if (eps == 0.0) return model;
  DemographicModel out = model;
  if (model.has_env()) {
    for (std::size_t e = 0; e < out.per_env.size(); ++e)
      tilt_conditional_rows(out.per_env[e], cells[e].growth, eps);
    rebuild_base_mixture(out);
  } else {
    tilt_conditional_rows(out.base, cells[0].growth, eps);
  }
  return out;
}

DemographicModel tilt_fecundity(const DemographicModel& model, const std::vector<EifCells>& cells,
                                double eps) {
  if (eps == 0.0) return model;
  DemographicModel out = model;
  auto apply = [&](ConditionalModel& cm, const Eigen::MatrixXd& coef) {
    const Eigen::Index n = cm.fec.rows();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        cm.fec(i, j) *= std::exp(eps * coef(i, j));
  };
  if (model.has_env()) {
    for (std::size_t e = 0; e < out.per_env.size(); ++e)
      apply(out.per_env[e], cells[e].fec_coef);
    rebuild_base_mixture(out);
  } else {
    apply(out.base, cells[0].fec_coef);
  }
  return out;
}

Eigen::MatrixXd clever_covariate_matrix(const DemographicModel& model, const EigenSystem& eig) {
  return make_eif_cells(Target::lambda, model, eig)[0].fec_coef;
}

// ---------------------------------------------------------------------------
// Pooled validation objectives
// ---------------------------------------------------------------------------

namespace {

struct GrowthPool {
  struct Cell {
    std::vector<double> p;    // conditional row over {death, 1..n}
    std::vector<double> phi;  // tilt direction over the same columns
    double weight = 0.0;      // n_cell / (V * |val_v|)
  };
  std::vector<Cell> cells;
  double lin = 0.0;    // coefficient of eps
  double constant = 0.0;
  double sup_phi = 0.0;

  double operator()(double eps) const {
    double val = lin * eps + constant;
    for (const auto& c : cells) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t jc = 0; jc < c.p.size(); ++jc)
        if (c.p[jc] > 0.0) m = std::max(m, eps * c.phi[jc]);
      double s = 0.0;
      for (std::size_t jc = 0; jc < c.p.size(); ++jc)
        if (c.p[jc] > 0.0) s += c.p[jc] * std::exp(eps * c.phi[jc] - m);
      val -= c.weight * (m + std::log(s));
    }
    return val;
  }
};

GrowthPool build_growth_pool(const Dataset& ds, const std::vector<FoldView>& folds) {
  GrowthPool pool;
  const double V = static_cast<double>(folds.size());
  for (const auto& fv : folds) {
    if (fv.validation.empty()) continue;
    const DemographicModel& model = *fv.model;
    const int n = model.n_classes;
    const int m = model.has_env() ? static_cast<int>(model.per_env.size()) : 1;
    const double wgt = 1.0 / (V * static_cast<double>(fv.validation.size()));
    std::vector<int> slot(static_cast<std::size_t>(m) * n, -1);
    for (std::size_t idx : fv.validation) {
      const auto& rec = ds.records[idx];
      int e = model.has_env() ? model.env_index(rec.env_label) : 0;
      if (e < 0 || !model.supported(rec.z_class)) continue;
      int i = rec.z_class - 1;
      int key = e * n + i;
      if (slot[key] < 0) {
        slot[key] = static_cast<int>(pool.cells.size());
        GrowthPool::Cell c;
        const ConditionalModel& cm = model.env_model(model.has_env() ? e : -1);
        const Eigen::MatrixXd& phi = (*fv.cells)[model.has_env() ? e : 0].growth;
        c.p.resize(n + 1);
        c.phi.resize(n + 1);
        for (int jc = 0; jc <= n; ++jc) {
          c.p[jc] = cm.trans(i, jc);
          c.phi[jc] = phi(i, jc);
        }
        pool.cells.push_back(std::move(c));
      }
      auto& c = pool.cells[slot[key]];
      c.weight += wgt;
      pool.lin += wgt * c.phi[rec.z_next_class];
      pool.constant += wgt * std::log(std::max(c.p[rec.z_next_class], 1e-300));
    }
  }
  for (const auto& c : pool.cells)
    for (double f : c.phi) pool.sup_phi = std::max(pool.sup_phi, std::fabs(f));
  return pool;
}

struct FecPool {
  struct Cell {
    std::vector<double> q;
    std::vector<double> coef;
    double weight = 0.0;  // n_cell / (V * |val_v|)
  };
  std::vector<Cell> cells;
  double lin = 0.0;      // coefficient of eps (enters with minus sign)
  double constant = 0.0;
  double sup_coef = 0.0;

  double operator()(double eps) const {
    double val = -lin * eps + constant;
    for (const auto& c : cells) {
      double s = 0.0;
      for (std::size_t j = 0; j < c.q.size(); ++j) s += c.q[j] * std::exp(eps * c.coef[j]);
      val += c.weight * s;
    }
    return val;
  }
};

FecPool build_fec_pool(const Dataset& ds, const std::vector<FoldView>& folds) {
  FecPool pool;
  const double V = static_cast<double>(folds.size());
  for (const auto& fv : folds) {
    if (fv.validation.empty()) continue;
    const DemographicModel& model = *fv.model;
    const int n = model.n_classes;
    const int m = model.has_env() ? static_cast<int>(model.per_env.size()) : 1;
    const double wgt = 1.0 / (V * static_cast<double>(fv.validation.size()));
    std::vector<int> slot(static_cast<std::size_t>(m) * n, -1);
    for (std::size_t idx : fv.validation) {
      const auto& rec = ds.records[idx];
      int e = model.has_env() ? model.env_index(rec.env_label) : 0;
      if (e < 0 || !model.supported(rec.z_class)) continue;
      int i = rec.z_class - 1;
      int key = e * n + i;
      if (slot[key] < 0) {
        slot[key] = static_cast<int>(pool.cells.size());
        FecPool::Cell c;
        const ConditionalModel& cm = model.env_model(model.has_env() ? e : -1);
        const Eigen::MatrixXd& coef = (*fv.cells)[model.has_env() ? e : 0].fec_coef;
        c.q.resize(n);
        c.coef.resize(n);
        for (int j = 0; j < n; ++j) {
          c.q[j] = cm.fec(i, j);
          c.coef[j] = coef(i, j);
        }
        pool.cells.push_back(std::move(c));
      }
      auto& c = pool.cells[slot[key]];
      c.weight += wgt;
      for (const auto& [cls, cnt] : rec.offspring) {
        pool.lin += wgt * cnt * c.coef[cls - 1];
        pool.constant -= wgt * cnt * std::log(std::max(c.q[cls - 1], 1e-300));
      }
    }
  }
  for (const auto& c : pool.cells)
    for (double f : c.coef) pool.sup_coef = std::max(pool.sup_coef, std::fabs(f));
  return pool;
}

} // namespace

double pooled_growth_loglik(const Dataset& ds, const std::vector<FoldView>& folds, double eps) {
  return build_growth_pool(ds, folds)(eps);
}

double pooled_fecundity_loss(const Dataset& ds, const std::vector<FoldView>& folds, double eps) {
  return build_fec_pool(ds, folds)(eps);
}

double brent_minimize(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double golden = 0.3819660112501051;
  double a = lo, b = hi;
  double x = a + golden * (b - a);
  double w = x, v = x;
  double fx = f(x), fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  for (int it = 0; it < 200; ++it) {
    double xm = 0.5 * (a + b);
    double tol1 = tol * std::fabs(x) + 1e-12;
    double tol2 = 2.0 * tol1;
    if (std::fabs(x - xm) <= tol2 - 0.5 * (b - a)) break;
    bool parabolic = false;
    if (std::fabs(e) > tol1) {
      double r = (x - w) * (fx - fv);
      double q = (x - v) * (fx - fw);
      double p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p;
      q = std::fabs(q);
      double etmp = e;
      e = d;
      if (std::fabs(p) < std::fabs(0.5 * q * etmp) && p > q * (a - x) && p < q * (b - x)) {
        parabolic = true;
        d = p / q;
        double u = x + d;
        if (u - a < tol2 || b - u < tol2) d = (xm - x >= 0 ? tol1 : -tol1);
      }
    }
    if (!parabolic) {
      e = (x >= xm) ? a - x : b - x;
      d = golden * e;
    }
    double u = std::fabs(d) >= tol1 ? x + d : x + (d >= 0 ? tol1 : -tol1);
    double fu = f(u);
    if (fu <= fx) {
      if (u >= x) a = x; else b = x;
      v = w; w = x; x = u;
      fv = fw; fw = fx; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; w = u;
        fv = fw; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u;
        fv = fu;
      }
    }
  }
  return x;
}

namespace {

EpsilonFit pick_epsilon(const std::function<double(double)>& objective, double bound,
                        bool maximize) {
  EpsilonFit fit;
  if (bound <= 0.0) return fit;
  auto signed_obj = [&](double e) { return maximize ? -objective(e) : objective(e); };
  double x = brent_minimize(signed_obj, -bound, bound, 1e-8);
  double best = x;
  double fbest = signed_obj(x);
  for (double cand : {0.0, -bound, bound}) {
    double fc = signed_obj(cand);
    if (fc < fbest - 1e-15 || (fc <= fbest + 1e-15 && std::fabs(cand) < std::fabs(best))) {
      best = cand;
      fbest = fc;
    }
  }
  fit.epsilon = best;
  fit.at_boundary = std::fabs(best) >= bound * (1.0 - 1e-9);
  return fit;
}

} // namespace

EpsilonFit fit_epsilon_growth(const Dataset& ds, const std::vector<FoldView>& folds,
                              double bound) {
  GrowthPool pool = build_growth_pool(ds, folds);
  if (pool.sup_phi == 0.0) return {};
  return pick_epsilon([&](double e) { return pool(e); }, bound, true);
}

EpsilonFit fit_epsilon_fecundity(const Dataset& ds, const std::vector<FoldView>& folds,
                                 double bound) {
  FecPool pool = build_fec_pool(ds, folds);
  if (pool.sup_coef == 0.0) return {};
  return pick_epsilon([&](double e) { return pool(e); }, bound, false);
}

// ---------------------------------------------------------------------------
// Cross-validated TMLE
// ---------------------------------------------------------------------------

namespace {

struct Fold {
  DemographicModel model;
  EigenSystem eig;
  std::vector<EifCells> cells;
  std::vector<std::size_t> validation;
  double estimate = 0.0;
  bool active = false;
};

// The size-class marginal is ancillary to every target and carries no fold
// superscript in the update equations: all folds share the full-sample
// floored frequencies (per environment level when the model is conditional).
void apply_shared_marginal(DemographicModel& model, const Dataset& ds) {
  const int n = model.n_classes;
  auto floored_from_counts = [&](const std::vector<long>& counts, long total,
                                 ConditionalModel& cm) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    cm.floored.clear();
    double floor_at = 1.0 / (2.0 * static_cast<double>(total));
    for (int i = 0; i < n; ++i) {
      if (!model.supported(i + 1)) continue;
      double raw = static_cast<double>(counts[i]) / static_cast<double>(total);
      if (raw < floor_at) {
        p[i] = floor_at;
        cm.floored.push_back(i);
      } else {
        p[i] = raw;
      }
    }
    double s = p.sum();
    if (s > 0.0) p /= s;
    cm.marginal = p;
  };
  if (!model.has_env()) {
    std::vector<long> counts(n, 0);
    for (const auto& r : ds.records) counts[r.z_class - 1] += 1;
    floored_from_counts(counts, static_cast<long>(ds.records.size()), model.base);
    return;
  }
  for (std::size_t e = 0; e < model.per_env.size(); ++e) {
    std::vector<long> counts(n, 0);
    long total = 0;
    for (const auto& r : ds.records) {
      if (model.env_index(r.env_label) != static_cast<int>(e)) continue;
      counts[r.z_class - 1] += 1;
      ++total;
    }
    if (total > 0) floored_from_counts(counts, total, model.per_env[e]);
  }
}

double sorted_square_sum(std::vector<double> values) {
  for (double& v : values) v *= v;
  std::sort(values.begin(), values.end());
  return pairwise_sum(values);
}

} // namespace

std::pair<TargetEstimate, TmleState> run_cv_tmle(const Dataset& ds, const TmleConfig& config) {
  const std::size_t n = ds.records.size();
  if (n == 0) throw data_error("no records");
  const int V = config.n_folds;
  if (V < 2) throw data_error("run_cv_tmle: at least 2 folds required");
  const Target target = config.target;
  if (target == Target::log_lambda_s && !ds.has_env())
    throw data_error("environment column required");

  TmleState state;
  state.fold_assignments = config.fold_assignments.empty()
                               ? hash_fold_assignment(n, V, config.seed)
                               : config.fold_assignments;
  if (state.fold_assignments.size() != n)
    throw data_error("run_cv_tmle: fold assignment size mismatch");
  for (int f : state.fold_assignments)
    if (f < 0 || f >= V) throw data_error("run_cv_tmle: fold label out of range");

  FitConfig fit = config.fit;
  if (target == Target::log_lambda_s) fit.env_conditional = true;

  DemographicModel pooled;
  if (config.initial == TmleConfig::Initial::empirical_pooled) pooled = empirical_model(ds);

  std::vector<Fold> folds(V);
  for (int v = 0; v < V; ++v) {
    std::vector<std::size_t> val_idx, train_idx;
    for (std::size_t k = 0; k < n; ++k)
      (state.fold_assignments[k] == v ? val_idx : train_idx).push_back(k);
    folds[v].validation = canonical_record_order(ds.records, val_idx);
    try {
      if (config.initial == TmleConfig::Initial::empirical_pooled) {
        folds[v].model = pooled;
      } else {
        Dataset train;
        train.grid = ds.grid;
        train.env_levels = ds.env_levels;
        train.covariate_names = ds.covariate_names;
        train.records.reserve(train_idx.size());
        for (std::size_t k : train_idx) train.records.push_back(ds.records[k]);
        folds[v].model = config.initial == TmleConfig::Initial::parametric
                             ? estimate_model(train, fit)
                             : empirical_model(train);
      }
      if (target != Target::log_lambda_s) {
        folds[v].model.per_env.clear();
        folds[v].model.env_levels.clear();
        folds[v].model.env_weights.resize(0);
      }
      apply_shared_marginal(folds[v].model, ds);
      for (const auto& w : folds[v].model.warnings)
        state.warnings.push_back("fold " + std::to_string(v) + ": " + w);
      folds[v].active = true;
    } catch (const Error& e) {
      state.warnings.push_back("fold " + std::to_string(v) + " dropped: " + e.what());
      folds[v].active = false;
    }
  }
  std::size_t n_active = 0;
  for (const auto& f : folds) n_active += f.active ? 1 : 0;
  if (n_active == 0) throw numeric_error("run_cv_tmle: all folds dropped");

  auto refresh = [&]() {
    for (auto& f : folds) {
      if (!f.active) continue;
      f.eig = target_eigs(target, f.model);
      if (!f.eig.primitive) state.warnings.push_back("kernel not verified primitive");
      f.cells = make_eif_cells(target, f.model, f.eig);
    }
  };

  std::vector<InfluenceEvaluation> psi_last(n);
  auto record_stat = [&]() {
    IterationStat st;
    double sum_est = 0.0;
    std::vector<double> totals;
    std::vector<double> fold_ests;
    std::size_t included = 0;
    std::fill(psi_last.begin(), psi_last.end(), InfluenceEvaluation{});
    for (auto& f : folds) {
      if (!f.active) continue;
      f.estimate = evaluate_target(target, f.model);
      sum_est += f.estimate;
      fold_ests.push_back(f.estimate);
      for (std::size_t idx : f.validation) {
        InfluenceEvaluation ev = eif_evaluate(ds.records[idx], f.model, f.cells);
        psi_last[idx] = ev;
        totals.push_back(ev.psi_total());
        ++included;
      }
    }
    st.estimate = sum_est / static_cast<double>(fold_ests.size());
    st.std_error = included > 0
                       ? std::sqrt(sorted_square_sum(totals)) / static_cast<double>(included)
                       : 0.0;
    state.trace.push_back(st);
    state.fold_estimates = fold_ests;
  };

  refresh();
  record_stat();
  if (config.keep_models)
    for (const auto& f : folds)
      if (f.active) state.initial_models.push_back(f.model);

  auto views = [&]() {
    std::vector<FoldView> out;
    for (auto& f : folds)
      if (f.active) out.push_back(FoldView{&f.model, &f.cells, f.validation});
    return out;
  };

  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    std::vector<FoldView> fv = views();
    double sup_phi = 0.0, sup_coef = 0.0;
    for (auto& f : folds) {
      if (!f.active) continue;
      for (const auto& c : f.cells) {
        sup_phi = std::max(sup_phi, c.growth.cwiseAbs().maxCoeff());
        sup_coef = std::max(sup_coef, c.fec_coef.cwiseAbs().maxCoeff());
      }
    }
    double bound1 = config.epsilon_bound / std::max(1.0, sup_phi);
    double bound2 = config.epsilon_bound / std::max(1.0, sup_coef);
    EpsilonFit e1 = fit_epsilon_growth(ds, fv, bound1);
    EpsilonFit e2 = fit_epsilon_fecundity(ds, fv, bound2);
    if (e1.at_boundary || e2.at_boundary) state.warnings.push_back("epsilon at boundary");
    state.epsilon_history.emplace_back(e1.epsilon, e2.epsilon);
    if (std::max(std::fabs(e1.epsilon), std::fabs(e2.epsilon)) < config.epsilon_tol) {
      state.converged = true;
      break;
    }
    for (auto& f : folds) {
      if (!f.active) continue;
      f.model = tilt_growth(f.model, f.cells, e1.epsilon);
      f.model = tilt_fecundity(f.model, f.cells, e2.epsilon);
    }
    refresh();
    record_stat();
  }

  if (config.keep_models)
    for (const auto& f : folds)
      if (f.active) state.final_models.push_back(f.model);

  TargetEstimate te;
  te.estimate = state.trace.back().estimate;
  te.std_error = state.trace.back().std_error;
  te.ci_low = te.estimate - 1.96 * te.std_error;
  te.ci_high = te.estimate + 1.96 * te.std_error;
  te.psi_validation = psi_last;
  return {te, state};
}

} // namespace ipmtmle
