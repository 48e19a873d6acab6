#ifndef IPMTMLE_STATS_HPP
#define IPMTMLE_STATS_HPP

#include <vector>

namespace ipmtmle {

double plogis(double x);
double norm_pdf(double x);

// Regularized incomplete beta I_x(a, b) and its inverse; continued-fraction
// evaluation, Newton inversion with bisection safeguard.
double ibeta(double a, double b, double x);
double ibeta_inv(double a, double b, double p);
double beta_pdf(double a, double b, double x);

// Type-7 sample quantile (linear interpolation) over a sorted vector.
double quantile_sorted(const std::vector<double>& sorted, double p);

// Gauss-Legendre nodes/weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

} // namespace ipmtmle

#endif
