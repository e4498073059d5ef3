#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hsrnet/net.hpp"

namespace hsrnet {

enum class AdversaryKind { Null, Random, Pgd };

struct AdversaryConfig {
    AdversaryKind kind = AdversaryKind::Pgd;
    double rho = 0.0;
    int steps = 5;               // PGD ascent steps, >= 1
    double step_size = 0.0;      // 0 means the default rho/steps
    int projection_rounds = 8;   // alternating-projection count
};

// Supplies the exact active set for a query point; the trainer wires this to
// either the HSR index or the dense scan so that adversary-internal forward
// passes are engine-consistent.
using ActiveSetFn = std::function<ActiveSet(const double* x)>;

// Exact active set at an arbitrary threshold t (ids with pre-activation > t,
// ascending). Lets pgd_attack_banded replace per-step queries with one query
// at a lowered cutoff.
using RangeFn = std::function<ActiveSet(const double* x, double t)>;

// Projects v onto B_2(x0, rho) intersect X by `rounds` alternations of
// (clip to the rho-ball) then (set last coord to 1/2, rescale the head to
// norm sqrt(3)/2). The final alternation ends on the domain, making the
// domain constraint exact; if the ball constraint still exceeds rho + 1e-9,
// the point is pulled toward x0 along the domain by bisection (x0 itself is
// feasible, so this always terminates).
std::vector<double> project_to_domain(const std::vector<double>& v, const double* x0, double rho,
                                      int rounds = 8);

// Projected gradient ascent on loss(y, f(.)) with best-so-far tracking over
// {x, projected iterates}; the returned point never has lower loss than x.
std::vector<double> pgd_attack(const NetworkParams& params, const ActiveSetFn& active_fn,
                               const double* x, double y, const AdversaryConfig& cfg,
                               const Loss& loss);

// pgd_attack with bit-identical iterates from a single range query. Every
// iterate stays within rho + 1e-9 of x (project_to_domain's guarantee), so a
// pre-activation moves by at most point_norm_bound * (rho + 1e-9) over the
// whole attack. Neurons that far below tau at x can never activate and ones
// that far above never deactivate; one query at the padded-down threshold
// therefore captures every candidate, and each step retests only that band
// with the same preactivation arithmetic the dense scan uses.
// point_norm_bound must dominate the norm of every stored point (see
// HsrIndex::norm_bound). When best_active is non-null it receives the active
// set of the returned point, saving the caller a fresh query.
std::vector<double> pgd_attack_banded(const NetworkParams& params, const RangeFn& range_fn,
                                      double point_norm_bound, const double* x, double y,
                                      const AdversaryConfig& cfg, const Loss& loss,
                                      ActiveSet* best_active = nullptr);

std::vector<double> null_attack(const double* x, int d);

// project_to_domain(x + rho*u, x, rho) for a uniform random direction u.
std::vector<double> random_attack(const double* x, int d, double rho, std::uint64_t seed,
                                  int rounds = 8);

}  // namespace hsrnet
