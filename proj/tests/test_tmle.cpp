#include <doctest.h>

#include <cmath>
#include <limits>

#include "ipmtmle/simgen.hpp"
#include "ipmtmle/tmle.hpp"
#include "test_helpers.hpp"

using namespace ipmtmle;

namespace {

// One-class world: conditional row (death, survive), fecundity zero.
DemographicModel one_class(double survive) {
  DemographicModel m;
  m.n_classes = 1;
  m.base.trans.resize(1, 2);
  m.base.trans << 1.0 - survive, survive;
  m.base.fec = Eigen::MatrixXd::Zero(1, 1);
  m.base.marginal = Eigen::VectorXd::Ones(1);
  return m;
}

DemographicModel uniform_two_class() {
  DemographicModel m;
  m.n_classes = 2;
  m.base.trans.resize(2, 3);
  m.base.trans << 0.2, 0.4, 0.4,
                  0.2, 0.4, 0.4;
  m.base.fec = Eigen::MatrixXd::Constant(2, 2, 0.1);
  m.base.marginal = Eigen::VectorXd::Constant(2, 0.5);
  return m;
}

Dataset one_class_dataset(int n_survive, int n_die) {
  Dataset ds;
  ds.grid.n_classes = 1;
  ds.grid.lo = 0.0;
  ds.grid.hi = 1.0;
  for (int k = 0; k < n_survive; ++k) {
    IndividualRecord r;
    r.z_class = 1;
    r.survived = 1;
    r.z_next_class = 1;
    r.z_continuous = 0.5;
    r.z_next_continuous = 0.5;
    ds.records.push_back(r);
  }
  for (int k = 0; k < n_die; ++k) {
    IndividualRecord r;
    r.z_class = 1;
    r.z_continuous = 0.5;
    ds.records.push_back(r);
  }
  return ds;
}

} // namespace

TEST_CASE("growth tilt closed form and invariances") {
  DemographicModel m = one_class(0.5);
  std::vector<EifCells> cells(1);
  cells[0].growth.resize(1, 2);
  cells[0].growth << -1.0, 1.0;
  cells[0].fec_coef = Eigen::MatrixXd::Zero(1, 1);

  DemographicModel same = tilt_growth(m, cells, 0.0);
  CHECK(same.base.trans(0, 0) == m.base.trans(0, 0));  // bit-for-bit
  CHECK(same.base.trans(0, 1) == m.base.trans(0, 1));

  DemographicModel tilted = tilt_growth(m, cells, 0.1);
  double e02 = std::exp(0.2);
  CHECK(tilted.base.trans(0, 1) == doctest::Approx(e02 / (1 + e02)).epsilon(1e-12));
  CHECK(tilted.base.trans(0, 0) == doctest::Approx(1 / (1 + e02)).epsilon(1e-12));
  CHECK(tilted.base.trans(0, 1) == doctest::Approx(0.54983).epsilon(1e-4));

  // constant direction within a row cancels in the normalization
  std::vector<EifCells> flat(1);
  flat[0].growth = Eigen::MatrixXd::Constant(1, 2, 3.7);
  flat[0].fec_coef = Eigen::MatrixXd::Zero(1, 1);
  DemographicModel still = tilt_growth(m, flat, 0.42);
  CHECK(still.base.trans(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(still.base.trans(0, 1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("fecundity tilt scales multiplicatively") {
  DemographicModel m = uniform_two_class();
  EigenSystem eig = target_eigs(Target::lambda, m);
  CHECK(eig.u[0] == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(eig.v[0] == doctest::Approx(1.0).epsilon(1e-10));
  auto cells = make_eif_cells(Target::lambda, m, eig);
  // clever covariate u v / p = 1 in this symmetric world
  CHECK(cells[0].fec_coef(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(clever_covariate_matrix(m, eig)(1, 1) == doctest::Approx(1.0).epsilon(1e-10));

  DemographicModel same = tilt_fecundity(m, cells, 0.0);
  CHECK(same.base.fec(0, 0) == m.base.fec(0, 0));

  double prev = target_elasticity(tilt_fecundity(m, cells, -0.1));
  double mid = target_elasticity(m);
  double next = target_elasticity(tilt_fecundity(m, cells, 0.1));
  CHECK(prev < mid);
  CHECK(mid < next);

  DemographicModel zero = m;
  zero.base.fec.setZero();
  DemographicModel still_zero = tilt_fecundity(zero, cells, 0.8);
  CHECK(still_zero.base.fec.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("epsilon fit is zero when the model already matches the validation law") {
  Dataset ds = one_class_dataset(7, 3);
  DemographicModel m = empirical_model(ds);
  EigenSystem eig = target_eigs(Target::lambda, m);
  auto cells = make_eif_cells(Target::lambda, m, eig);
  std::vector<std::size_t> all;
  for (std::size_t k = 0; k < ds.records.size(); ++k) all.push_back(k);
  std::vector<FoldView> folds{{&m, &cells, all}};
  EpsilonFit e1 = fit_epsilon_growth(ds, folds, 1.0);
  CHECK(std::fabs(e1.epsilon) < 1e-6);
  EpsilonFit e2 = fit_epsilon_fecundity(ds, folds, 1.0);
  CHECK(std::fabs(e2.epsilon) < 1e-6);
}

TEST_CASE("epsilon growth has the logit-difference closed form on a two-cell row") {
  Dataset ds = one_class_dataset(3, 2);  // validation hit fraction 3/5
  DemographicModel m = one_class(0.7);   // training row (0.3, 0.7)
  EigenSystem eig = target_eigs(Target::lambda, m);
  auto cells = make_eif_cells(Target::lambda, m, eig);
  std::vector<std::size_t> all{0, 1, 2, 3, 4};
  std::vector<FoldView> folds{{&m, &cells, all}};
  EpsilonFit fit = fit_epsilon_growth(ds, folds, 5.0);
  // logit difference over the direction gap phi(1) - phi(0)
  double gap = cells[0].growth(0, 1) - cells[0].growth(0, 0);
  double expect = (std::log(0.6 / 0.4) - std::log(0.7 / 0.3)) / gap;
  CHECK(fit.epsilon == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("epsilon fits agree with a grid search") {
  SimSpec spec = SimSpec::defaults(Design::basic);
  spec.basic.n_classes = 8;
  spec.n = 4000;
  spec.seed = 12;
  Dataset ds = gen_basic(spec);
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t k = 0; k < ds.records.size(); ++k)
    (k % 2 == 0 ? train_idx : val_idx).push_back(k);
  Dataset train;
  train.grid = ds.grid;
  for (std::size_t k : train_idx) train.records.push_back(ds.records[k]);
  DemographicModel m = empirical_model(train);
  EigenSystem eig = target_eigs(Target::lambda, m);
  auto cells = make_eif_cells(Target::lambda, m, eig);
  std::vector<FoldView> folds{{&m, &cells, val_idx}};

  // the fit and the grid search the same interval [-0.5, 0.5]
  EpsilonFit e1 = fit_epsilon_growth(ds, folds, 0.5);
  double best = -1e300, best_eps = 0;
  for (int g = -50; g <= 50; ++g) {
    double eps = g / 100.0;
    double val = pooled_growth_loglik(ds, folds, eps);
    if (val > best) {
      best = val;
      best_eps = eps;
    }
  }
  CHECK(std::fabs(e1.epsilon - best_eps) <= 0.0100001);

  EpsilonFit e2 = fit_epsilon_fecundity(ds, folds, 0.5);
  best = 1e300;
  best_eps = 0;
  for (int g = -50; g <= 50; ++g) {
    double eps = g / 100.0;
    double val = pooled_fecundity_loss(ds, folds, eps);
    if (val < best) {
      best = val;
      best_eps = eps;
    }
  }
  CHECK(std::fabs(e2.epsilon - best_eps) <= 0.0100001);
}

TEST_CASE("epsilon fecundity is zero at the validation sample means") {
  Dataset ds = test_helpers::make_dataset(2);
  for (int k = 0; k < 6; ++k) {
    auto r = test_helpers::make_record(ds.grid, 1 + k % 2, 1 + (k + 1) % 2,
                                       {{1, k % 3}, {2, 1}});
    if (r.offspring[0].second == 0) r.offspring.erase(r.offspring.begin());
    ds.records.push_back(r);
  }
  DemographicModel m = empirical_model(ds);  // Q equals the sample means
  EigenSystem eig = target_eigs(Target::lambda, m);
  auto cells = make_eif_cells(Target::lambda, m, eig);
  std::vector<std::size_t> all;
  for (std::size_t k = 0; k < ds.records.size(); ++k) all.push_back(k);
  std::vector<FoldView> folds{{&m, &cells, all}};
  EpsilonFit e2 = fit_epsilon_fecundity(ds, folds, 1.0);
  CHECK(std::fabs(e2.epsilon) < 1e-6);

  // empty validation offspring push the scale down
  Dataset none = ds;
  for (auto& r : none.records) r.offspring.clear();
  EpsilonFit down = fit_epsilon_fecundity(none, folds, 1.0);
  CHECK(down.epsilon < 0.0);
  CHECK(down.at_boundary);
}

TEST_CASE("infinite tolerance returns the plug-in estimate") {
  SimSpec spec = SimSpec::defaults(Design::basic);
  spec.basic.n_classes = 10;
  spec.n = 400;
  spec.seed = 3;
  Dataset ds = gen_basic(spec);
  TmleConfig tc;
  tc.target = Target::lambda;
  tc.epsilon_tol = std::numeric_limits<double>::infinity();
  tc.fit.bandwidth = 0.05;
  auto [est, state] = run_cv_tmle(ds, tc);
  CHECK(state.converged);
  CHECK(state.trace.size() == 1);
  CHECK(est.estimate == state.trace[0].estimate);
}

TEST_CASE("tmle run is deterministic and permutation-exchangeable") {
  SimSpec spec = SimSpec::defaults(Design::basic);
  spec.basic.n_classes = 10;
  spec.n = 300;
  spec.seed = 21;
  Dataset ds = gen_basic(spec);
  TmleConfig tc;
  tc.target = Target::lambda;
  tc.n_folds = 3;
  tc.max_iterations = 2;
  tc.fit.bandwidth = 0.05;
  tc.seed = 5;

  auto [a, sa] = run_cv_tmle(ds, tc);
  auto [b, sb] = run_cv_tmle(ds, tc);
  CHECK(a.estimate == b.estimate);
  CHECK(a.std_error == b.std_error);

  // permute records and carry the fold assignment along
  std::vector<int> assign = sa.fold_assignments;
  Dataset perm;
  perm.grid = ds.grid;
  std::vector<int> perm_assign;
  for (std::size_t k = ds.records.size(); k-- > 0;) {
    perm.records.push_back(ds.records[k]);
    perm_assign.push_back(assign[k]);
  }
  TmleConfig tcp = tc;
  tcp.fold_assignments = perm_assign;
  auto [c, sc] = run_cv_tmle(perm, tcp);
  CHECK(c.estimate == a.estimate);
  CHECK(c.std_error == a.std_error);
}

TEST_CASE("tilted rows stay distributions and the validation likelihood is monotone") {
  SimSpec spec = SimSpec::defaults(Design::basic);
  spec.basic.n_classes = 10;
  spec.n = 400;
  spec.seed = 31;
  Dataset ds = gen_basic(spec);
  auto assign = hash_fold_assignment(ds.records.size(), 2, 9);
  std::vector<std::size_t> val0, val1;
  for (std::size_t k = 0; k < ds.records.size(); ++k)
    (assign[k] == 0 ? val0 : val1).push_back(k);
  Dataset train0, train1;
  train0.grid = train1.grid = ds.grid;
  for (std::size_t k : val1) train0.records.push_back(ds.records[k]);
  for (std::size_t k : val0) train1.records.push_back(ds.records[k]);
  FitConfig fc;
  fc.bandwidth = 0.1;
  std::vector<DemographicModel> models{estimate_model(train0, fc), estimate_model(train1, fc)};
  std::vector<std::vector<std::size_t>> vals{val0, val1};

  double prev_loglik = -std::numeric_limits<double>::infinity();
  double prev_loss = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 3; ++iter) {
    std::vector<EigenSystem> eigs;
    std::vector<std::vector<EifCells>> cells;
    for (auto& m : models) {
      eigs.push_back(target_eigs(Target::lambda, m));
      cells.push_back(make_eif_cells(Target::lambda, m, eigs.back()));
    }
    std::vector<FoldView> folds;
    for (int v = 0; v < 2; ++v) folds.push_back({&models[v], &cells[v], vals[v]});

    double ll0 = pooled_growth_loglik(ds, folds, 0.0);
    double ls0 = pooled_fecundity_loss(ds, folds, 0.0);
    CHECK(ll0 >= prev_loglik - 1e-12);
    CHECK(ls0 <= prev_loss + 1e-12);

    EpsilonFit e1 = fit_epsilon_growth(ds, folds, 1.0);
    EpsilonFit e2 = fit_epsilon_fecundity(ds, folds, 1.0);
    prev_loglik = pooled_growth_loglik(ds, folds, e1.epsilon);
    prev_loss = pooled_fecundity_loss(ds, folds, e2.epsilon);
    CHECK(prev_loglik >= ll0 - 1e-12);
    CHECK(prev_loss <= ls0 + 1e-12);

    for (int v = 0; v < 2; ++v) {
      models[v] = tilt_growth(models[v], cells[v], e1.epsilon);
      models[v] = tilt_fecundity(models[v], cells[v], e2.epsilon);
      for (int i = 0; i < models[v].n_classes; ++i) {
        CHECK(models[v].base.trans.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(models[v].base.trans.row(i).minCoeff() >= 0.0);
      }
    }
  }
}

TEST_CASE("pooled empirical initial is a fixed point on rotifer-like data") {
  SimSpec spec = SimSpec::defaults(Design::rotifer_like);
  spec.n = 1000;
  spec.seed = 77;
  Dataset ds = gen_rotifer_like(spec);
  for (Target target : {Target::lambda, Target::elasticity}) {
    TmleConfig tc;
    tc.target = target;
    tc.initial = TmleConfig::Initial::empirical_pooled;
    tc.seed = 7;
    auto [est, state] = run_cv_tmle(ds, tc);
    REQUIRE(!state.epsilon_history.empty());
    CHECK(std::fabs(state.epsilon_history[0].first) < 1e-3);
    CHECK(std::fabs(state.epsilon_history[0].second) < 1e-3);
    CHECK(std::fabs(est.estimate - state.trace[0].estimate) <=
          1e-6 * std::fabs(state.trace[0].estimate));
  }
}

TEST_CASE("plug-in bias is removed at convergence") {
  SimSpec spec = SimSpec::defaults(Design::basic);
  spec.basic.n_classes = 20;
  spec.n = 600;
  spec.seed = 101;
  Dataset ds = gen_basic(spec);
  TmleConfig tc;
  tc.target = Target::lambda;
  tc.fit.bandwidth = 0.1;
  tc.epsilon_tol = 1e-6;
  tc.max_iterations = 10;
  tc.seed = 2;
  auto [est, state] = run_cv_tmle(ds, tc);
  CHECK(state.converged);
  double mg = 0, mf = 0, vg = 0, vf = 0;
  double n = static_cast<double>(est.psi_validation.size());
  for (const auto& ev : est.psi_validation) {
    mg += ev.psi_growth;
    mf += ev.psi_fecundity;
    vg += ev.psi_growth * ev.psi_growth;
    vf += ev.psi_fecundity * ev.psi_fecundity;
  }
  mg /= n;
  mf /= n;
  double sg = std::sqrt(vg / n - mg * mg);
  double sf = std::sqrt(vf / n - mf * mf);
  CHECK(std::fabs(mg) < 1e-3 * sg);
  CHECK(std::fabs(mf) < 1e-3 * sf);
}

TEST_CASE("dropped folds are reported, all-dropped is an error") {
  // two records per fold, no survivors: the parametric initial cannot fit
  Dataset ds = test_helpers::make_dataset(2);
  for (int k = 0; k < 8; ++k)
    ds.records.push_back(test_helpers::make_record(ds.grid, 1 + k % 2, 0));
  TmleConfig tc;
  tc.target = Target::lambda;
  tc.n_folds = 2;
  CHECK_THROWS_AS(run_cv_tmle(ds, tc), Error);
}

TEST_CASE("unobserved source class surfaces a positivity warning") {
  SimSpec spec = SimSpec::defaults(Design::basic);
  spec.basic.n_classes = 15;
  spec.n = 300;
  spec.seed = 66;
  Dataset ds = gen_basic(spec);
  Dataset thin;
  thin.grid = ds.grid;
  for (const auto& r : ds.records)
    if (r.z_class != 9) thin.records.push_back(r);
  TmleConfig tc;
  tc.target = Target::lambda;
  tc.n_folds = 3;
  tc.max_iterations = 1;
  tc.fit.bandwidth = 0.05;
  auto [est, state] = run_cv_tmle(thin, tc);
  bool floored = false;
  for (const auto& w : state.warnings) floored = floored || w.find("floor") != std::string::npos;
  CHECK(floored);
}

TEST_CASE("log lambda_s requires environment labels") {
  Dataset ds = test_helpers::make_dataset(2);
  ds.records.push_back(test_helpers::make_record(ds.grid, 1, 1));
  TmleConfig tc;
  tc.target = Target::log_lambda_s;
  CHECK_THROWS_WITH_AS(run_cv_tmle(ds, tc), doctest::Contains("environment column required"),
                       Error);
}
