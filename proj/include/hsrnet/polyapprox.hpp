#pragma once

#include <cstdint>
#include <vector>

#include "hsrnet/dataset.hpp"

namespace hsrnet {

// Degree parameter k = ceil(eta^-2 * ln(2/eps1)) giving
// |p_k(x) - sgn(x)| <= eps1/2 on [-1,-eta] u [eta,1].
int sign_poly_degree(double eta, double eps1);

// p_k(x) = x * sum_{i=0}^k (1-x^2)^i * prod_{j=1}^i (2j-1)/(2j), evaluated by
// the term recurrence term_i = term_{i-1} * (1-x^2) * (2i-1)/(2i). Never
// expanded to monomials; every term has magnitude <= 1 on [-1,1].
double sign_poly_eval(double x, int k);
long double sign_poly_eval_l(long double x, int k);

// Smoothed step with transition centered at alpha = 1 - rho^2/2 - 2*eta,
// margin eta = (eps_sep - 2*rho)*eps_sep/8:
//   q(z) = (p_k((z - alpha)/2) + 1)/2,   k = sign_poly_degree(eta, eps1).
// The argument scaling keeps (z - alpha)/2 inside p_k's domain [-1,1] for all
// z in [-1,1] and maps the half-gap 2*eta in z to p_k's margin eta. Contract:
// |q| <= eps1 for z < 1-(eps_sep-rho)^2/2 and |q-1| <= eps1 for z >= 1-rho^2/2.
struct StepSpec {
    double eps1 = 0.0;
    double eps_sep = 0.0;
    double rho = 0.0;
    double eta = 0.0;
    double alpha = 0.0;
    int k = 0;

    static StepSpec make(double eps1, double eps_sep, double rho);
};
double step_poly_eval(double z, const StepSpec& spec);
long double step_poly_eval_l(long double z, const StepSpec& spec);

// First-kind Chebyshev. Evaluation by the stable three-term recurrence
// C_{k+1} = 2x C_k - C_{k-1}; coefficients by exact integer expansion of the
// closed form sum_i binom(k,2i) (x^2-1)^i x^{k-2i}. Guarded at k <= 30 where
// the 2^{2k} coefficient bound still fits in int64.
double chebyshev_eval(int k, double x);
std::vector<std::int64_t> chebyshev_coeffs(int k);

// C_plain = c * sum_j (j+1)^{1.75} |alpha_j|
// C_eps   = sum_j c^j (1 + (sqrt(ln(1/eps1)/j))^j) |alpha_j|, j=0 factor = 2.
struct ComplexityMeasures {
    double plain = 0.0;
    double eps_weighted = 0.0;
};
ComplexityMeasures complexity_measures(const std::vector<double>& coeffs, double eps1, double c);

// f*(x) = sum_i y_i * q(<x_i, x>) with eps1 = eps/(3n) and (eps_sep, rho)
// taken from the dataset. For every rho-bounded perturbation x~ of x_j,
// |f*(x~) - y_j| <= eps/3. high_precision evaluates in long double.
double robust_fit_eval(const Dataset& ds, const double* x, double eps, bool high_precision = false);

// The two published degree guides recorded as diagnostics:
//   M_log48n = 24 * ln(48 n / eps) / gamma,  M_log16 = 24 * ln(16/eps1) / gamma.
struct RobustFitDegreeBounds {
    double m_log48n = 0.0;
    double m_log16 = 0.0;
};
RobustFitDegreeBounds robust_fit_degree_bounds(int n, double eps, double gamma);

// d/dx of p_k; used by gradient-based probes of the fitted surface.
double sign_poly_deriv(double x, int k);

}  // namespace hsrnet
