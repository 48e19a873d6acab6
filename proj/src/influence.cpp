#include "ipmtmle/influence.hpp"
#include "ipmtmle/rng.hpp"

#include <algorithm>
#include <cmath>

namespace ipmtmle {

namespace {

// Restriction helpers shared with the targets: cells are computed on the
// supported class set and scattered back to full size.
Eigen::MatrixXd restrict_ji(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
  Eigen::MatrixXd out(idx.size(), idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = 0; b < idx.size(); ++b) out(a, b) = m(idx[a], idx[b]);
  return out;
}

Eigen::VectorXd restrict_vec(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a) out[a] = v[idx[a]];
  return out;
}

struct PairField {
  Eigen::VectorXd left;   // a: contracted against the destination indicator
  Eigen::VectorXd right;  // b: evaluated at the source class
};

// Growth-space cells for one conditional law over the restricted classes:
//   value(i, jc) = sum_pairs (ax(jc) - abar(i)) * b(i) / p(i) * scale
// where ax(0) = 0 (death has no kernel row) and abar(i) = sum_j a_j P(j|i).
// Unsupported destination columns take the indicator-free value, i.e. the
// death-column expression.
Eigen::MatrixXd growth_cells_from_pairs(const ConditionalModel& cm,
                                        const std::vector<int>& idx, int n_full,
                                        const Eigen::VectorXd& p_restricted,
                                        const std::vector<PairField>& pairs, double scale) {
  const int nr = static_cast<int>(idx.size());
  Eigen::MatrixXd cells = Eigen::MatrixXd::Zero(n_full, n_full + 1);
  // abar per pair and per restricted source class.
  Eigen::MatrixXd abar(static_cast<int>(pairs.size()), nr);
  for (std::size_t q = 0; q < pairs.size(); ++q)
    for (int ir = 0; ir < nr; ++ir) {
      double s = 0.0;
      for (int jr = 0; jr < nr; ++jr) s += pairs[q].left[jr] * cm.trans(idx[ir], idx[jr] + 1);
      abar(static_cast<int>(q), ir) = s;
    }
  std::vector<int> col_of(n_full, -1);
  for (int jr = 0; jr < nr; ++jr) col_of[idx[jr]] = jr;
  for (int ir = 0; ir < nr; ++ir) {
    const int i = idx[ir];
    const double pinv_i = scale / p_restricted[ir];
    double death = 0.0;
    for (std::size_t q = 0; q < pairs.size(); ++q)
      death -= abar(static_cast<int>(q), ir) * pairs[q].right[ir];
    death *= pinv_i;
    for (int j = 0; j < n_full; ++j) {
      int jr = col_of[j];
      if (jr < 0) {
        cells(i, j + 1) = death;
        continue;
      }
      double val = 0.0;
      for (std::size_t q = 0; q < pairs.size(); ++q)
        val += (pairs[q].left[jr] - abar(static_cast<int>(q), ir)) * pairs[q].right[ir];
      cells(i, j + 1) = val * pinv_i;
    }
    cells(i, 0) = death;
  }
  return cells;
}

// Fecundity coefficients: C(i, j) = sum_pairs a_j * b(i) / p(i) * scale.
Eigen::MatrixXd fec_coefs_from_pairs(const std::vector<int>& idx, int n_full,
                                     const Eigen::VectorXd& p_restricted,
                                     const std::vector<PairField>& pairs, double scale) {
  const int nr = static_cast<int>(idx.size());
  Eigen::MatrixXd coefs = Eigen::MatrixXd::Zero(n_full, n_full);
  for (int ir = 0; ir < nr; ++ir) {
    const double pinv_i = scale / p_restricted[ir];
    for (int jr = 0; jr < nr; ++jr) {
      double val = 0.0;
      for (const auto& pr : pairs) val += pr.left[jr] * pr.right[ir];
      coefs(idx[ir], idx[jr]) = val * pinv_i;
    }
  }
  return coefs;
}

} // namespace

EigenSystem target_eigs(Target target, const DemographicModel& model, const EigOptions& opt) {
  Eigen::MatrixXd K = target == Target::log_lambda_s ? mean_kernel(model)
                                                     : kernel_matrix(model.base);
  if (!model.unsupported.empty()) K = restrict_ji(K, model.supported_indices());
  return dominant_eigs(K, opt);
}

double evaluate_target(Target target, const DemographicModel& model) {
  switch (target) {
    case Target::lambda: return target_lambda(model);
    case Target::elasticity: return target_elasticity(model);
    case Target::log_lambda_s: return target_log_lambda_s(model);
  }
  throw numeric_error("unknown target");
}

std::vector<EifCells> make_eif_cells(Target target, const DemographicModel& model,
                                     const EigenSystem& eig) {
  const int n = model.n_classes;
  std::vector<int> idx = model.supported_indices();
  const int nr = static_cast<int>(idx.size());
  if (eig.u.size() != nr)
    throw numeric_error("make_eif_cells: eigen-system does not match the model support");
  const Eigen::VectorXd& u = eig.u;
  const Eigen::VectorXd& v = eig.v;
  const double lambda = eig.lambda;

  auto restricted_marginal = [&](const ConditionalModel& cm) {
    Eigen::VectorXd p = restrict_vec(cm.marginal, idx);
    return p;
  };

  std::vector<EifCells> out;
  if (target == Target::lambda) {
    // psi_growth = v^T W1 u, psi_fec = v^T W2 u with <v,u> = 1.
    std::vector<PairField> pairs{{v, u}};
    EifCells c;
    Eigen::VectorXd p = restricted_marginal(model.base);
    c.growth = growth_cells_from_pairs(model.base, idx, n, p, pairs, 1.0);
    c.fec_coef = fec_coefs_from_pairs(idx, n, p, pairs, 1.0);
    out.push_back(std::move(c));
    return out;
  }

  if (target == Target::elasticity) {
    if (lambda <= 1e-12) throw numeric_error("degenerate eigenvalue");
    Eigen::MatrixXd K = kernel_matrix(model.base);
    Eigen::MatrixXd F = fecundity_matrix(model.base);
    if (!model.unsupported.empty()) {
      K = restrict_ji(K, idx);
      F = restrict_ji(F, idx);
    }
    Eigen::MatrixXd P = deflated_pinv(lambda, K);
    Eigen::VectorXd u1 = P * u;
    Eigen::VectorXd u2 = P * (F * u);
    Eigen::VectorXd v1 = P.transpose() * v;
    Eigen::VectorXd v2 = P.transpose() * (F.transpose() * v);
    const double c = v.dot(F * u);
    const double d_vu2 = v.dot(u2), d_v2u = v2.dot(u);
    const double d_vu1 = v.dot(u1), d_v1u = v1.dot(u);
    // Coefficient picked up by the s = v^T W u direction.
    const double s_coef = -lambda * (d_vu2 + d_v2u) - c + c * lambda * (d_vu1 + d_v1u);
    Eigen::VectorXd r_growth = lambda * u2 + s_coef * u - c * lambda * u1;
    std::vector<PairField> growth_pairs{{v, r_growth}, {v2, lambda * u}, {v1, -c * lambda * u}};
    // The fecundity space adds the direct v^T W2 u term from dF.
    std::vector<PairField> fec_pairs{
        {v, r_growth + lambda * u}, {v2, lambda * u}, {v1, -c * lambda * u}};
    EifCells cell;
    Eigen::VectorXd p = restricted_marginal(model.base);
    double scale = 1.0 / (lambda * lambda);
    cell.growth = growth_cells_from_pairs(model.base, idx, n, p, growth_pairs, scale);
    cell.fec_coef = fec_coefs_from_pairs(idx, n, p, fec_pairs, scale);
    out.push_back(std::move(cell));
    return out;
  }

  // log_lambda_s: eigen-system of the mean kernel, per-environment cells.
  if (!model.has_env()) throw data_error("log_lambda_s needs a per-environment model");
  std::vector<Eigen::MatrixXd> kernels;
  for (const auto& em : model.per_env) {
    Eigen::MatrixXd k = kernel_matrix(em);
    if (!model.unsupported.empty()) k = restrict_ji(k, idx);
    kernels.push_back(std::move(k));
  }
  Eigen::MatrixXd kbar = Eigen::MatrixXd::Zero(nr, nr);
  for (std::size_t e = 0; e < kernels.size(); ++e)
    kbar += model.env_weights[static_cast<Eigen::Index>(e)] * kernels[e];
  Eigen::MatrixXd P = deflated_pinv(lambda, kbar);
  Eigen::VectorXd u1 = P * u;
  Eigen::VectorXd v1 = P.transpose() * v;
  const double d1 = v.dot(u1);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(nr);  // sum_theta (w/c) K_theta^T v
  Eigen::VectorXd s = Eigen::VectorXd::Zero(nr);  // sum_theta (w/c) K_theta u
  std::vector<double> c_env(kernels.size());
  for (std::size_t e = 0; e < kernels.size(); ++e) {
    double c = v.dot(kernels[e] * u);
    if (!(c > 0.0)) throw numeric_error("log_lambda_s cells: nonpositive one-step growth");
    c_env[e] = c;
    double w = model.env_weights[static_cast<Eigen::Index>(e)];
    r += (w / c) * (kernels[e].transpose() * v);
    s += (w / c) * (kernels[e] * u);
  }
  Eigen::VectorXd Ps = P * s;
  Eigen::VectorXd rho = P.transpose() * r;
  const double v1s = v1.dot(s);
  const double ru1 = r.dot(u1);
  for (std::size_t e = 0; e < kernels.size(); ++e) {
    const double kappa = 1.0 / c_env[e] + 2.0 * d1 - v1s - ru1;
    std::vector<PairField> pairs{{v, Ps + kappa * u - u1}, {rho, u}, {v1, -u}};
    EifCells cell;
    Eigen::VectorXd p = restricted_marginal(model.per_env[e]);
    cell.growth = growth_cells_from_pairs(model.per_env[e], idx, n, p, pairs, 1.0);
    cell.fec_coef = fec_coefs_from_pairs(idx, n, p, pairs, 1.0);
    out.push_back(std::move(cell));
  }
  return out;
}

InfluenceEvaluation eif_evaluate(const IndividualRecord& record, const DemographicModel& model,
                                 const std::vector<EifCells>& cells) {
  InfluenceEvaluation ev;
  int e = model.has_env() ? model.env_index(record.env_label) : -1;
  if (model.has_env() && e < 0) throw data_error("record environment level unknown to the model");
  const EifCells& cell = cells[model.has_env() ? static_cast<std::size_t>(e) : 0];
  const ConditionalModel& cm = model.env_model(model.has_env() ? e : -1);
  int i = record.z_class - 1;
  if (!model.supported(record.z_class)) return ev;  // no data support, no contribution
  ev.psi_growth = cell.growth(i, record.z_next_class);
  double fec = 0.0;
  for (int j = 0; j < model.n_classes; ++j) fec -= cell.fec_coef(i, j) * cm.fec(i, j);
  for (const auto& [c, k] : record.offspring) fec += cell.fec_coef(i, c - 1) * k;
  ev.psi_fecundity = fec;
  ev.used_floored_marginal =
      std::find(cm.floored.begin(), cm.floored.end(), i) != cm.floored.end();
  return ev;
}

InfluenceEvaluation eif_lambda(const IndividualRecord& record, const DemographicModel& model,
                               const EigenSystem& eig) {
  return eif_evaluate(record, model, make_eif_cells(Target::lambda, model, eig));
}

InfluenceEvaluation eif_elasticity(const IndividualRecord& record, const DemographicModel& model,
                                   const EigenSystem& eig) {
  return eif_evaluate(record, model, make_eif_cells(Target::elasticity, model, eig));
}

InfluenceEvaluation eif_log_lambda_s(const IndividualRecord& record,
                                     const DemographicModel& model,
                                     const EigenSystem& eig_of_mean_kernel) {
  return eif_evaluate(record, model,
                      make_eif_cells(Target::log_lambda_s, model, eig_of_mean_kernel));
}

Eigen::MatrixXd eif_growth_matrix(const EifCells& cells) {
  const Eigen::Index n = cells.growth.rows();
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(j, i) = cells.growth(i, j + 1);
  return m;
}

// ---------------------------------------------------------------------------
// Discrete law and the finite-difference oracle
// ---------------------------------------------------------------------------

Eigen::VectorXd DiscreteLaw::env_weights() const {
  int m = std::max(n_env, 1);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
  for (const auto& a : atoms) w[n_env == 0 ? 0 : a.env] += a.prob;
  return w;
}

DemographicModel DiscreteLaw::to_model() const {
  const int n = n_classes;
  const int m = std::max(n_env, 1);
  DemographicModel model;
  model.n_classes = n;

  std::vector<ConditionalModel> cms(m);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
  std::vector<Eigen::VectorXd> pz(m, Eigen::VectorXd::Zero(n));
  for (int e = 0; e < m; ++e) {
    cms[e].trans = Eigen::MatrixXd::Zero(n, n + 1);
    cms[e].fec = Eigen::MatrixXd::Zero(n, n);
  }
  for (const auto& a : atoms) {
    int e = n_env == 0 ? 0 : a.env;
    w[e] += a.prob;
    pz[e][a.z - 1] += a.prob;
    cms[e].trans(a.z - 1, a.z_next) += a.prob;
    for (int j = 0; j < n; ++j) cms[e].fec(a.z - 1, j) += a.prob * a.y[j];
  }
  for (int e = 0; e < m; ++e) {
    for (int i = 0; i < n; ++i) {
      double pi = pz[e][i];
      if (pi <= 0.0) {
        if (n_env == 0) {
          bool listed = std::find(model.unsupported.begin(), model.unsupported.end(), i + 1) !=
                        model.unsupported.end();
          if (!listed) model.unsupported.push_back(i + 1);
        } else {
          throw data_error("discrete law: class without mass in an environment level");
        }
        continue;
      }
      cms[e].trans.row(i) /= pi;
      cms[e].fec.row(i) /= pi;
    }
    if (w[e] > 0.0) cms[e].marginal = pz[e] / w[e];
  }
  if (n_env == 0) {
    model.base = std::move(cms[0]);
  } else {
    model.env_weights = w;
    for (int e = 0; e < m; ++e) {
      model.env_levels.push_back("env" + std::to_string(e));
      model.per_env.push_back(std::move(cms[e]));
    }
    // Pooled view for completeness.
    model.base.trans = Eigen::MatrixXd::Zero(n, n + 1);
    model.base.fec = Eigen::MatrixXd::Zero(n, n);
    model.base.marginal = Eigen::VectorXd::Zero(n);
    for (int e = 0; e < m; ++e) {
      model.base.trans += w[e] * model.per_env[e].trans;
      model.base.fec += w[e] * model.per_env[e].fec;
      model.base.marginal += w[e] * model.per_env[e].marginal;
    }
  }
  return model;
}

double law_functional(OracleFunctional f, const DiscreteLaw& law,
                      const Eigen::VectorXd* fixed_env_weights) {
  if (f == OracleFunctional::mean_z) {
    double s = 0.0;
    for (const auto& a : law.atoms) s += a.prob * a.z;
    return s;
  }
  DemographicModel model = law.to_model();
  switch (f) {
    case OracleFunctional::lambda: return target_lambda(model);
    case OracleFunctional::elasticity: return target_elasticity(model);
    case OracleFunctional::log_lambda_s: {
      if (!model.has_env()) throw data_error("log_lambda_s oracle needs environments");
      std::vector<Eigen::MatrixXd> kernels;
      for (const auto& em : model.per_env) kernels.push_back(kernel_matrix(em));
      Eigen::VectorXd w = fixed_env_weights ? *fixed_env_weights : model.env_weights;
      return log_lambda_s_of(kernels, w);
    }
    default: break;
  }
  throw numeric_error("unknown functional");
}

namespace {

bool same_atom(const DiscreteLaw::Atom& a, const DiscreteLaw::Atom& b, int n_env) {
  return (n_env == 0 || a.env == b.env) && a.z == b.z && a.z_next == b.z_next && a.y == b.y;
}

DiscreteLaw contaminate(const DiscreteLaw& law, const DiscreteLaw::Atom& x, double eps) {
  DiscreteLaw out = law;
  bool found = false;
  for (auto& a : out.atoms) {
    a.prob *= (1.0 - eps);
    if (!found && same_atom(a, x, law.n_env)) {
      a.prob += eps;
      found = true;
    }
  }
  if (!found) {
    DiscreteLaw::Atom nx = x;
    nx.prob = eps;
    out.atoms.push_back(nx);
  }
  return out;
}

} // namespace

DiscreteLaw random_discrete_law(Rng& rng, int n_classes, int n_env) {
  const int n = n_classes;
  const int m = std::max(1, n_env);
  DiscreteLaw law;
  law.n_classes = n;
  law.n_env = n_env;

  std::vector<double> joint;
  double total = 0.0;
  for (int e = 0; e < m; ++e)
    for (int z = 1; z <= n; ++z)
      for (int jc = 0; jc <= n; ++jc) {
        double w = 0.05 + rng.uniform();
        joint.push_back(w);
        total += w;
      }
  for (double& w : joint) w /= total;

  // Offspring counts in {0,1,2}, independent per destination class.
  std::vector<double> p1, p2;
  for (int e = 0; e < m; ++e)
    for (int z = 1; z <= n; ++z)
      for (int j = 0; j < n; ++j) {
        p1.push_back(0.1 + 0.5 * rng.uniform());
        p2.push_back(0.05 + 0.2 * rng.uniform());
      }
  std::vector<std::vector<int>> yvecs;
  std::vector<int> cur(n, 0);
  for (;;) {
    yvecs.push_back(cur);
    int k = 0;
    while (k < n && cur[k] == 2) cur[k++] = 0;
    if (k == n) break;
    cur[k] += 1;
  }
  std::size_t idx = 0;
  for (int e = 0; e < m; ++e)
    for (int z = 1; z <= n; ++z)
      for (int jc = 0; jc <= n; ++jc, ++idx) {
        double base = joint[idx];
        for (const auto& y : yvecs) {
          double py = 1.0;
          for (int j = 0; j < n; ++j) {
            std::size_t yk = (static_cast<std::size_t>(e) * n + (z - 1)) * n + j;
            py *= y[j] == 0 ? (1.0 - p1[yk] - p2[yk]) : (y[j] == 1 ? p1[yk] : p2[yk]);
          }
          DiscreteLaw::Atom a;
          a.env = e;
          a.z = z;
          a.z_next = jc;
          a.y = y;
          a.prob = base * py;
          law.atoms.push_back(std::move(a));
        }
      }
  return law;
}

OracleResult gateaux_oracle(OracleFunctional f, const DiscreteLaw& law,
                            const DiscreteLaw::Atom& x, double h) {
  if (h < 1e-8 || h > 1e-3) throw usage_error("gateaux_oracle: h outside [1e-8, 1e-3]");
  Eigen::VectorXd base_w = law.env_weights();
  const Eigen::VectorXd* fw = f == OracleFunctional::log_lambda_s ? &base_w : nullptr;

  DiscreteLaw plus = contaminate(law, x, h);
  DiscreteLaw minus = contaminate(law, x, -h);
  double min_prob = 0.0;
  for (const auto& a : minus.atoms) min_prob = std::min(min_prob, a.prob);

  OracleResult res;
  if (min_prob < 0.0) {
    res.forward_difference = true;
    res.derivative = (law_functional(f, plus, fw) - law_functional(f, law, fw)) / h;
  } else {
    res.derivative =
        (law_functional(f, plus, fw) - law_functional(f, minus, fw)) / (2.0 * h);
  }
  return res;
}

} // namespace ipmtmle
