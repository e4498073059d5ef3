#include "hsrnet/polyapprox.hpp"

#include <cmath>
#include <stdexcept>

namespace hsrnet {

int sign_poly_degree(double eta, double eps1) {
    if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("sign_poly_degree: eta in (0,1)");
    if (!(eps1 > 0.0 && eps1 < 1.0)) throw std::invalid_argument("sign_poly_degree: eps1 in (0,1)");
    return static_cast<int>(std::ceil(std::log(2.0 / eps1) / (eta * eta)));
}

double sign_poly_eval(double x, int k) {
    if (k < 0) throw std::invalid_argument("sign_poly_eval: k must be >= 0");
    const double q = 1.0 - x * x;
    double term = 1.0;
    double sum = 1.0;
    for (int i = 1; i <= k; ++i) {
        term *= q * (2.0 * i - 1.0) / (2.0 * i);
        sum += term;
    }
    return x * sum;
}

long double sign_poly_eval_l(long double x, int k) {
    if (k < 0) throw std::invalid_argument("sign_poly_eval_l: k must be >= 0");
    const long double q = 1.0L - x * x;
    long double term = 1.0L;
    long double sum = 1.0L;
    for (int i = 1; i <= k; ++i) {
        term *= q * (2.0L * i - 1.0L) / (2.0L * i);
        sum += term;
    }
    return x * sum;
}

double sign_poly_deriv(double x, int k) {
    // d/dx [ x * s(x) ] = s(x) + x * s'(x) with s = sum_i c_i (1-x^2)^i and
    // s' = sum_i c_i * i * (1-x^2)^(i-1) * (-2x).
    const double q = 1.0 - x * x;
    double term = 1.0;  // c_i (1-x^2)^i
    double s = 1.0;
    double sp = 0.0;
    for (int i = 1; i <= k; ++i) {
        const double lower = term * (2.0 * i - 1.0) / (2.0 * i);  // c_i (1-x^2)^(i-1)
        term = lower * q;
        s += term;
        sp += lower * i * (-2.0 * x);
    }
    return s + x * sp;
}

StepSpec StepSpec::make(double eps1, double eps_sep, double rho) {
    if (!(eps1 > 0.0 && eps1 < 1.0)) throw std::invalid_argument("StepSpec: eps1 in (0,1)");
    if (rho < 0.0) throw std::invalid_argument("StepSpec: rho must be >= 0");
    if (!(eps_sep > 2.0 * rho)) throw std::invalid_argument("StepSpec: requires eps_sep > 2*rho");
    StepSpec s;
    s.eps1 = eps1;
    s.eps_sep = eps_sep;
    s.rho = rho;
    s.eta = (eps_sep - 2.0 * rho) * eps_sep / 8.0;
    s.alpha = 1.0 - rho * rho / 2.0 - 2.0 * s.eta;
    if (!(s.eta > 0.0 && s.eta < 1.0)) throw std::invalid_argument("StepSpec: eta out of range");
    if (!(s.alpha > -1.0 && s.alpha < 1.0))
        throw std::invalid_argument("StepSpec: alpha out of range");
    s.k = sign_poly_degree(s.eta, eps1);
    return s;
}

double step_poly_eval(double z, const StepSpec& spec) {
    return 0.5 * (sign_poly_eval(0.5 * (z - spec.alpha), spec.k) + 1.0);
}

long double step_poly_eval_l(long double z, const StepSpec& spec) {
    return 0.5L * (sign_poly_eval_l(0.5L * (z - static_cast<long double>(spec.alpha)), spec.k) +
                   1.0L);
}

double chebyshev_eval(int k, double x) {
    if (k < 0) throw std::invalid_argument("chebyshev_eval: k must be >= 0");
    if (k == 0) return 1.0;
    double prev = 1.0;
    double cur = x;
    for (int i = 2; i <= k; ++i) {
        const double next = 2.0 * x * cur - prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

std::vector<std::int64_t> chebyshev_coeffs(int k) {
    if (k < 0) throw std::invalid_argument("chebyshev_coeffs: k must be >= 0");
    if (k > 30) throw std::invalid_argument("chebyshev_coeffs: k > 30 overflows int64");
    // binom table up to k.
    std::vector<std::vector<std::int64_t>> binom(k + 1, std::vector<std::int64_t>(k + 1, 0));
    for (int i = 0; i <= k; ++i) {
        binom[i][0] = 1;
        for (int j = 1; j <= i; ++j)
            binom[i][j] = binom[i - 1][j - 1] + ((j <= i - 1) ? binom[i - 1][j] : 0);
    }
    // coeff of x^{k-2u} = (-1)^u * sum_{i=u}^{floor(k/2)} binom(k,2i)*binom(i,u).
    std::vector<std::int64_t> coeffs(k + 1, 0);
    const int half = k / 2;
    for (int u = 0; u <= half; ++u) {
        std::int64_t acc = 0;
        for (int i = u; i <= half; ++i) acc += binom[k][2 * i] * binom[i][u];
        coeffs[k - 2 * u] = (u % 2 == 0) ? acc : -acc;
    }
    return coeffs;
}

ComplexityMeasures complexity_measures(const std::vector<double>& coeffs, double eps1, double c) {
    if (!(eps1 > 0.0 && eps1 < 1.0))
        throw std::invalid_argument("complexity_measures: eps1 in (0,1)");
    if (!(c >= 1.0)) throw std::invalid_argument("complexity_measures: c must be >= 1");
    ComplexityMeasures out;
    const double log_inv = std::log(1.0 / eps1);
    for (std::size_t j = 0; j < coeffs.size(); ++j) {
        const double mag = std::fabs(coeffs[j]);
        if (mag == 0.0) continue;
        out.plain += std::pow(static_cast<double>(j + 1), 1.75) * mag;
        double factor;
        if (j == 0) {
            factor = 2.0;  // limit value of 1 + (sqrt(ln(1/eps1)/j))^j as j -> 0+
        } else {
            factor = 1.0 + std::pow(std::sqrt(log_inv / static_cast<double>(j)),
                                    static_cast<double>(j));
        }
        out.eps_weighted += std::pow(c, static_cast<double>(j)) * factor * mag;
    }
    out.plain *= c;
    return out;
}

double robust_fit_eval(const Dataset& ds, const double* x, double eps, bool high_precision) {
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("robust_fit_eval: eps in (0,1)");
    const double gamma = ds.eps_sep * (ds.eps_sep - 2.0 * ds.rho);
    if (!(gamma > 0.0)) throw std::invalid_argument("robust_fit_eval: requires gamma > 0");
    const StepSpec spec = StepSpec::make(eps / (3.0 * ds.n), ds.eps_sep, ds.rho);
    if (high_precision) {
        long double acc = 0.0L;
        for (int i = 0; i < ds.n; ++i) {
            const double* xi = ds.x(i);
            long double z = 0.0L;
            for (int j = 0; j < ds.d; ++j) z += static_cast<long double>(xi[j]) * x[j];
            acc += static_cast<long double>(ds.ys[i]) * step_poly_eval_l(z, spec);
        }
        return static_cast<double>(acc);
    }
    double acc = 0.0;
    for (int i = 0; i < ds.n; ++i) {
        const double* xi = ds.x(i);
        double z = 0.0;
        for (int j = 0; j < ds.d; ++j) z += xi[j] * x[j];
        acc += ds.ys[i] * step_poly_eval(z, spec);
    }
    return acc;
}

RobustFitDegreeBounds robust_fit_degree_bounds(int n, double eps, double gamma) {
    if (n < 1 || !(eps > 0.0) || !(gamma > 0.0))
        throw std::invalid_argument("robust_fit_degree_bounds: bad arguments");
    RobustFitDegreeBounds out;
    out.m_log48n = 24.0 * std::log(48.0 * n / eps) / gamma;
    out.m_log16 = 24.0 * std::log(16.0 / (eps / (3.0 * n))) / gamma;
    return out;
}

}  // namespace hsrnet
