#include "ipmtmle/stats.hpp"
#include "ipmtmle/common.hpp"
#include "ipmtmle/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace ipmtmle {

double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  std::size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

double pairwise_sum(const std::vector<double>& x) {
  return pairwise_sum(x.data(), x.size());
}

std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() {
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform_pos() {
  double u = uniform();
  while (u <= 0.0) u = uniform();
  return u;
}

bool Rng::bernoulli(double p) { return uniform() < p; }

int Rng::poisson(double mu) {
  if (mu <= 0.0) return 0;
  double u = uniform_pos();
  double p = std::exp(-mu);
  double cum = p;
  int k = 0;
  while (u > cum && k < 1000000) {
    ++k;
    p *= mu / k;
    cum += p;
  }
  return k;
}

double Rng::normal(double mean, double sd) {
  double u1 = uniform_pos();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  return mean + sd * r * std::cos(6.283185307179586476925287 * u2);
}

double Rng::beta(double a, double b) {
  return ibeta_inv(a, b, uniform_pos());
}

int Rng::categorical(const std::vector<double>& probs) {
  double u = uniform();
  double cum = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    cum += probs[k];
    if (u < cum) return static_cast<int>(k);
  }
  return static_cast<int>(probs.size()) - 1;
}

double plogis(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double norm_pdf(double x) {
  return 0.3989422804014326779399461 * std::exp(-0.5 * x * x);
}

namespace {

// Continued fraction for the incomplete beta (Lentz).
double ibeta_cf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double eps = 1e-15;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 400; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

} // namespace

double ibeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  double front = std::exp(a * std::log(x) + b * std::log1p(-x) - lbeta);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * ibeta_cf(a, b, x) / a;
  }
  return 1.0 - front * ibeta_cf(b, a, 1.0 - x) / b;
}

double beta_pdf(double a, double b, double x) {
  if (x <= 0.0 || x >= 1.0) {
    // Endpoint values only matter for a,b >= 1 in this codebase.
    if (x == 0.0 && a == 1.0) return b;
    if (x == 1.0 && b == 1.0) return a;
    return 0.0;
  }
  double lbeta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  return std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - lbeta);
}

double ibeta_inv(double a, double b, double p) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  double lo = 0.0, hi = 1.0;
  double x = a / (a + b);
  for (int it = 0; it < 200; ++it) {
    double f = ibeta(a, b, x) - p;
    if (f > 0.0) hi = x; else lo = x;
    double d = beta_pdf(a, b, x);
    double step = (d > 1e-300) ? f / d : 0.0;
    double nx = x - step;
    if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
    if (std::fabs(nx - x) < 1e-15 * (1.0 + std::fabs(x))) { x = nx; break; }
    x = nx;
  }
  return x;
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  std::size_t n = sorted.size();
  if (n == 0) throw numeric_error("quantile of empty sample");
  if (n == 1) return sorted[0];
  double h = (static_cast<double>(n) - 1.0) * p;
  double flo = std::floor(h);
  std::size_t lo = static_cast<std::size_t>(flo);
  if (lo >= n - 1) return sorted[n - 1];
  return sorted[lo] + (h - flo) * (sorted[lo + 1] - sorted[lo]);
}

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double x = std::cos(3.141592653589793238462643 * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (x * p0 - p1) / (x * x - 1.0);
      double dx = p0 / pp;
      x -= dx;
      if (std::fabs(dx) < 1e-15) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    weights[i] = 2.0 / ((1.0 - x * x) * pp * pp);
    weights[n - 1 - i] = weights[i];
  }
}

} // namespace ipmtmle
