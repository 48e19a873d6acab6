#include "ipmtmle/regress.hpp"
#include "ipmtmle/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ipmtmle {

namespace {

constexpr double kProbCap = 1e-12;
constexpr double kLogFloor = -690.77552789821368;  // log(1e-300)

double link_inverse(GlmFamily f, double eta) {
  switch (f) {
    case GlmFamily::gaussian: return eta;
    case GlmFamily::binomial: {
      double p = plogis(eta);
      return std::min(1.0 - kProbCap, std::max(kProbCap, p));
    }
    case GlmFamily::poisson: return std::exp(std::min(eta, 350.0));
  }
  return eta;
}

double deviance(GlmFamily f, const Eigen::VectorXd& y, const Eigen::VectorXd& mu) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    switch (f) {
      case GlmFamily::gaussian: {
        double r = y[i] - mu[i];
        dev += r * r;
        break;
      }
      case GlmFamily::binomial: {
        double p = std::min(1.0 - kProbCap, std::max(kProbCap, mu[i]));
        dev += -2.0 * (y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p));
        break;
      }
      case GlmFamily::poisson: {
        double term = mu[i];
        if (y[i] > 0) term += y[i] * std::log(y[i] / mu[i]) - y[i];
        dev += 2.0 * term;
        break;
      }
    }
  }
  return dev;
}

} // namespace

double GlmFit::linear_predictor(const Eigen::VectorXd& x) const {
  return coefficients.dot(x);
}

double GlmFit::predict(const Eigen::VectorXd& x) const {
  return link_inverse(family, linear_predictor(x));
}

GlmFit fit_glm(GlmFamily family, const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
               const std::vector<std::string>& column_names, const GlmOptions& opt) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (y.size() != n) throw data_error("fit_glm: response/design size mismatch");
  if (family == GlmFamily::binomial) {
    for (Eigen::Index i = 0; i < n; ++i)
      if (y[i] != 0.0 && y[i] != 1.0) throw data_error("fit_glm: binomial response not in {0,1}");
  }
  if (family == GlmFamily::poisson) {
    for (Eigen::Index i = 0; i < n; ++i)
      if (y[i] < 0.0 || y[i] != std::floor(y[i]))
        throw data_error("fit_glm: poisson response must be a nonnegative integer");
  }

  // Rank check on the raw design, before the ridge term can mask it.
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
      Eigen::Index col = qr.colsPermutation().indices()[qr.rank()];
      std::string name = col < static_cast<Eigen::Index>(column_names.size())
                             ? column_names[col]
                             : ("column " + std::to_string(col));
      throw numeric_error("fit_glm: rank-deficient design, collinear column " + name);
    }
  }

  GlmFit fit;
  fit.family = family;
  fit.column_names = column_names;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd reg = opt.ridge * Eigen::MatrixXd::Identity(p, p);

  if (family == GlmFamily::gaussian) {
    beta = (X.transpose() * X + reg).ldlt().solve(X.transpose() * y);
    fit.coefficients = beta;
    fit.converged = true;
    fit.n_iterations = 1;
    return fit;
  }

  // Start from the intercept-only estimate.
  double ymean = y.mean();
  if (family == GlmFamily::binomial) {
    double p0 = std::min(1.0 - 1e-6, std::max(1e-6, ymean));
    beta[0] = std::log(p0 / (1.0 - p0));
  } else {
    beta[0] = std::log(std::max(ymean, 1e-8));
  }

  double dev_old = std::numeric_limits<double>::infinity();
  Eigen::VectorXd eta(n), mu(n), w(n), z(n);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    fit.n_iterations = it;
    eta = X * beta;
    for (Eigen::Index i = 0; i < n; ++i) mu[i] = link_inverse(family, eta[i]);
    if (family == GlmFamily::binomial) {
      for (Eigen::Index i = 0; i < n; ++i) {
        double v = std::max(mu[i] * (1.0 - mu[i]), 1e-10);
        w[i] = v;
        z[i] = eta[i] + (y[i] - mu[i]) / v;
      }
    } else {
      for (Eigen::Index i = 0; i < n; ++i) {
        double v = std::max(mu[i], 1e-10);
        w[i] = v;
        z[i] = eta[i] + (y[i] - mu[i]) / v;
      }
    }
    Eigen::MatrixXd Xw = w.asDiagonal() * X;
    beta = (X.transpose() * Xw + reg).ldlt().solve(Xw.transpose() * z);
    eta = X * beta;
    for (Eigen::Index i = 0; i < n; ++i) mu[i] = link_inverse(family, eta[i]);
    double dev = deviance(family, y, mu);
    if (std::fabs(dev - dev_old) < opt.deviance_tol * (1.0 + std::fabs(dev))) {
      fit.converged = true;
      dev_old = dev;
      break;
    }
    dev_old = dev;
  }

  if (family == GlmFamily::binomial) {
    bool pinned = false;
    for (Eigen::Index i = 0; i < n; ++i)
      if (mu[i] <= 2.0 * kProbCap || mu[i] >= 1.0 - 2.0 * kProbCap) pinned = true;
    if (pinned) {
      fit.converged = false;
      fit.warnings.push_back("separation: fitted probabilities pinned near 0/1");
    }
  }
  fit.coefficients = beta;
  return fit;
}

double glm_log_likelihood(const GlmFit& fit, const Eigen::VectorXd& y, const Eigen::MatrixXd& X) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double mu = fit.predict(X.row(i).transpose());
    switch (fit.family) {
      case GlmFamily::gaussian: {
        double r = y[i] - mu;
        ll += -0.5 * r * r;
        break;
      }
      case GlmFamily::binomial:
        ll += y[i] * std::log(mu) + (1.0 - y[i]) * std::log(1.0 - mu);
        break;
      case GlmFamily::poisson:
        ll += y[i] * std::log(std::max(mu, 1e-300)) - mu - std::lgamma(y[i] + 1.0);
        break;
    }
  }
  return ll;
}

double kde_density(const KdeFit& fit, double x) {
  if (fit.sample.empty() || fit.bandwidth <= 0.0)
    throw numeric_error("kde_density: invalid fit");
  double s = 0.0;
  for (double v : fit.sample) s += norm_pdf((x - v) / fit.bandwidth);
  return s / (static_cast<double>(fit.sample.size()) * fit.bandwidth);
}

std::vector<int> hash_fold_assignment(std::size_t n, int n_folds, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::uint64_t> key(n);
  for (std::size_t i = 0; i < n; ++i) key[i] = hash_mix(seed, i);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return key[a] < key[b] || (key[a] == key[b] && a < b); });
  std::vector<int> fold(n);
  for (std::size_t r = 0; r < n; ++r) fold[order[r]] = static_cast<int>(r % n_folds);
  return fold;
}

double cv_bandwidth(const std::vector<double>& sample, const std::vector<double>& candidates,
                    int n_folds, std::uint64_t seed, const std::vector<int>& explicit_folds) {
  if (candidates.empty()) throw data_error("cv_bandwidth: no candidates");
  if (n_folds < 2) throw data_error("cv_bandwidth: need at least 2 folds");
  std::vector<int> fold = explicit_folds.empty()
                              ? hash_fold_assignment(sample.size(), n_folds, seed)
                              : explicit_folds;
  if (fold.size() != sample.size()) throw data_error("cv_bandwidth: fold assignment size mismatch");

  std::vector<double> sorted_candidates(candidates);
  std::sort(sorted_candidates.begin(), sorted_candidates.end());

  double best_h = sorted_candidates.front();
  double best_score = -std::numeric_limits<double>::infinity();
  for (double h : sorted_candidates) {
    double total = 0.0;
    std::size_t used = 0;
    for (int v = 0; v < n_folds; ++v) {
      KdeFit train;
      train.bandwidth = h;
      std::vector<double> held;
      for (std::size_t i = 0; i < sample.size(); ++i) {
        if (fold[i] == v) held.push_back(sample[i]);
        else train.sample.push_back(sample[i]);
      }
      if (train.sample.empty() || held.empty()) continue;
      std::sort(train.sample.begin(), train.sample.end());
      for (double x : held) {
        double d = kde_density(train, x);
        total += std::log(std::max(d, 1e-300));
        ++used;
      }
    }
    if (used == 0) continue;
    double score = total / static_cast<double>(used);
    if (score > best_score) {
      best_score = score;
      best_h = h;
    }
  }
  return best_h;
}

KdeGrid KdeGrid::build(const KdeFit& fit, double nodes_per_bandwidth) {
  if (fit.sample.empty() || fit.bandwidth <= 0.0)
    throw numeric_error("KdeGrid: invalid fit");
  KdeGrid g;
  double smin = fit.sample.front(), smax = fit.sample.back();
  for (double v : fit.sample) {
    smin = std::min(smin, v);
    smax = std::max(smax, v);
  }
  double pad = 10.0 * fit.bandwidth;
  g.lo = smin - pad;
  double hi = smax + pad;
  g.step = fit.bandwidth / nodes_per_bandwidth;
  std::size_t count = static_cast<std::size_t>(std::ceil((hi - g.lo) / g.step)) + 2;
  count = std::min<std::size_t>(std::max<std::size_t>(count, 16), 400000);
  g.step = (hi - g.lo) / static_cast<double>(count - 1);
  g.values.resize(count);
  for (std::size_t k = 0; k < count; ++k)
    g.values[k] = kde_density(fit, g.lo + g.step * static_cast<double>(k));
  return g;
}

double KdeGrid::operator()(double x) const {
  double t = (x - lo) / step;
  if (t <= 0.0 || t >= static_cast<double>(values.size() - 1)) return 0.0;
  std::size_t k = static_cast<std::size_t>(t);
  double frac = t - static_cast<double>(k);
  return values[k] * (1.0 - frac) + values[k + 1] * frac;
}

} // namespace ipmtmle
