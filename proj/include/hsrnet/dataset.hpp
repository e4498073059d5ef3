#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hsrnet/rng.hpp"

namespace hsrnet {

enum class LabelMode { RandomSign, Smooth };

// n labeled points on the domain X = { x : x_d = 1/2, ||x||_2 = 1 }.
// eps_sep stores the realized minimum pairwise distance (>= the requested
// separation when generated); gamma = eps_sep * (eps_sep - 2 rho).
struct Dataset {
    int n = 0;
    int d = 0;
    double eps_sep = 0.0;
    double rho = 0.0;
    double gamma = 0.0;
    std::vector<double> xs;  // n * d, row-major (point i at &xs[i*d])
    std::vector<double> ys;  // n labels in [-1, 1]

    const double* x(int i) const { return xs.data() + static_cast<std::size_t>(i) * d; }
};

// Uniform draw from X: first d-1 coordinates uniform on the sphere of radius
// sqrt(3)/2, last coordinate exactly 1/2.
std::vector<double> sample_sphere_cap(int d, Rng& rng);

// Rejection-samples points with pairwise distance >= eps_sep. Throws
// std::runtime_error once the attempt budget is exhausted. Requires
// eps_sep > 2*rho. Smooth labels are y = clamp(x_1, -1, 1).
Dataset generate_dataset(int n, int d, double eps_sep, double rho, LabelMode mode,
                         std::uint64_t seed, int max_attempts = 100000);

// gamma = eps * (eps - 2 rho) for eps = exact minimum pairwise distance.
// n < 2 has no pairwise distance: returns +infinity (vacuously separable).
double verify_separability(const Dataset& ds, double rho);

// CSV layout: line 1 "d,n,eps_sep,rho" (names), line 2 the four values,
// then n rows "x_1,...,x_d,y". Floats at 17 significant digits round-trip
// exactly.
void save_dataset_csv(const Dataset& ds, const std::string& path);
Dataset load_dataset_csv(const std::string& path);

// Throws std::invalid_argument unless every point is on the domain within
// 1e-12, labels are in [-1,1], and eps_sep > 2*rho.
void validate_dataset(const Dataset& ds);

}  // namespace hsrnet
