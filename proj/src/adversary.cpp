#include "hsrnet/adversary.hpp"

#include <cmath>
#include <stdexcept>

#include "hsrnet/rng.hpp"

namespace hsrnet {

namespace {
const double kHeadNorm = std::sqrt(3.0) / 2.0;

double dist(const double* a, const double* b, int d) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
        const double diff = a[j] - b[j];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

// Rescale onto X in place. Falls back to x0's head direction when the head
// degenerates to zero.
void domain_project(std::vector<double>& v, const double* x0) {
    const int d = static_cast<int>(v.size());
    double head2 = 0.0;
    for (int j = 0; j + 1 < d; ++j) head2 += v[j] * v[j];
    if (head2 == 0.0) {
        for (int j = 0; j + 1 < d; ++j) v[j] = x0[j];
    } else {
        const double scale = kHeadNorm / std::sqrt(head2);
        for (int j = 0; j + 1 < d; ++j) v[j] *= scale;
    }
    v[d - 1] = 0.5;
}

void check_on_domain(const double* x, int d, const char* who) {
    double norm2 = 0.0;
    for (int j = 0; j < d; ++j) norm2 += x[j] * x[j];
    if (std::fabs(x[d - 1] - 0.5) > 1e-9 || std::fabs(std::sqrt(norm2) - 1.0) > 1e-9)
        throw std::invalid_argument(std::string(who) + ": anchor point off the domain");
}
}  // namespace

std::vector<double> project_to_domain(const std::vector<double>& v, const double* x0, double rho,
                                      int rounds) {
    const int d = static_cast<int>(v.size());
    if (d < 2) throw std::invalid_argument("project_to_domain: d must be >= 2");
    if (rho < 0.0) throw std::invalid_argument("project_to_domain: rho must be >= 0");
    check_on_domain(x0, d, "project_to_domain");

    std::vector<double> out = v;
    for (int round = 0; round < rounds; ++round) {
        const double r = dist(out.data(), x0, d);
        if (r > rho) {
            const double scale = (r > 0.0) ? rho / r : 0.0;
            for (int j = 0; j < d; ++j) out[j] = x0[j] + (out[j] - x0[j]) * scale;
        }
        domain_project(out, x0);
    }

    if (dist(out.data(), x0, d) > rho + 1e-9) {
        // Walk back toward x0 along the domain: head(t) is the renormalized
        // chord between the two heads, so every candidate is exactly on X and
        // the distance to x0 increases monotonically in t.
        auto at = [&](double t) {
            std::vector<double> p(d);
            for (int j = 0; j + 1 < d; ++j) p[j] = (1.0 - t) * x0[j] + t * out[j];
            p[d - 1] = 0.5;
            domain_project(p, x0);
            return p;
        };
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (dist(at(mid).data(), x0, d) <= rho)
                lo = mid;
            else
                hi = mid;
        }
        out = at(lo);
    }
    return out;
}

std::vector<double> pgd_attack(const NetworkParams& params, const ActiveSetFn& active_fn,
                               const double* x, double y, const AdversaryConfig& cfg,
                               const Loss& loss) {
    if (cfg.steps < 1) throw std::invalid_argument("pgd_attack: steps must be >= 1");
    if (cfg.rho < 0.0) throw std::invalid_argument("pgd_attack: rho must be >= 0");
    const int d = params.d;
    const double step = cfg.step_size > 0.0 ? cfg.step_size : cfg.rho / cfg.steps;

    std::vector<double> best(x, x + d);
    std::vector<double> cur = best;
    ActiveSet active = active_fn(cur.data());
    double f = forward_sparse(params, cur.data(), active);
    double best_loss = loss.eval(y, f);

    for (int s = 0; s < cfg.steps; ++s) {
        // d loss / d x = subgrad * sum_{r active} a_r w_r.
        const double lp = loss.subgrad(y, f);
        std::vector<double> grad(d, 0.0);
        for (int r : active.ids) {
            const double* w = params.col(r);
            const double scale = params.a[r] * lp;
            for (int j = 0; j < d; ++j) grad[j] += scale * w[j];
        }
        for (int j = 0; j < d; ++j) cur[j] += step * grad[j];
        cur = project_to_domain(cur, x, cfg.rho, cfg.projection_rounds);

        active = active_fn(cur.data());
        f = forward_sparse(params, cur.data(), active);
        const double cur_loss = loss.eval(y, f);
        if (cur_loss > best_loss) {
            best_loss = cur_loss;
            best = cur;
        }
    }
    return best;
}

std::vector<double> pgd_attack_banded(const NetworkParams& params, const RangeFn& range_fn,
                                      double point_norm_bound, const double* x, double y,
                                      const AdversaryConfig& cfg, const Loss& loss,
                                      ActiveSet* best_active) {
    if (cfg.steps < 1) throw std::invalid_argument("pgd_attack_banded: steps must be >= 1");
    if (cfg.rho < 0.0) throw std::invalid_argument("pgd_attack_banded: rho must be >= 0");
    if (point_norm_bound < 0.0)
        throw std::invalid_argument("pgd_attack_banded: point_norm_bound must be >= 0");
    const int d = params.d;
    const double step = cfg.step_size > 0.0 ? cfg.step_size : cfg.rho / cfg.steps;

    // pad bounds how far any pre-activation can drift across the attack; the
    // guard swallows rounding in the comparisons and only widens the band.
    const double pad = point_norm_bound * (cfg.rho + 1e-9);
    const double guard = 1e-9 * (1.0 + std::fabs(params.tau) + pad);
    ActiveSet sup = range_fn(x, params.tau - pad - guard);

    // Gather the superset's columns once; every later pass (retests, forwards,
    // gradients) then streams this contiguous block instead of rereading
    // scattered columns of W. Row k holds (w || b || a) of sup.ids[k].
    const std::size_t stride = static_cast<std::size_t>(d) + 2;
    std::vector<double> rows(sup.ids.size() * stride);
    for (std::size_t k = 0; k < sup.ids.size(); ++k) {
        const int r = sup.ids[k];
        double* row = rows.data() + k * stride;
        const double* w = params.col(r);
        for (int j = 0; j < d; ++j) row[j] = w[j];
        row[d] = params.b[static_cast<std::size_t>(r)];
        row[d + 1] = params.a[static_cast<std::size_t>(r)];
    }
    // preactivation(), term for term, over a gathered row.
    const auto row_pre = [&](const double* row, const double* q) {
        double acc = 0.0;
        for (int j = 0; j < d; ++j) acc += row[j] * q[j];
        return acc + row[d];
    };

    // Neurons past the pad on the high side stay active at every iterate and
    // skip the per-step retest.
    std::vector<char> fixed(sup.ids.size(), 0);
    for (std::size_t k = 0; k < sup.ids.size(); ++k)
        if (row_pre(rows.data() + k * stride, x) > params.tau + pad + guard) fixed[k] = 1;

    // Selected superset offsets, ascending; forward_sparse's fold over them,
    // term for term.
    std::vector<std::size_t> sel;
    sel.reserve(sup.ids.size());
    const auto select_at = [&](const double* q) {
        sel.clear();
        for (std::size_t k = 0; k < sup.ids.size(); ++k) {
            if (fixed[k] || row_pre(rows.data() + k * stride, q) > params.tau) sel.push_back(k);
        }
    };
    const auto forward_sel = [&](const double* q) {
        double acc = 0.0;
        for (const std::size_t k : sel) {
            const double* row = rows.data() + k * stride;
            const double t = row[d + 1] * row_pre(row, q);
            acc += t;
        }
        return acc;
    };

    std::vector<double> best(x, x + d);
    std::vector<double> cur = best;
    select_at(cur.data());
    double f = forward_sel(cur.data());
    double best_loss = loss.eval(y, f);
    std::vector<std::size_t> best_sel = sel;

    for (int s = 0; s < cfg.steps; ++s) {
        const double lp = loss.subgrad(y, f);
        std::vector<double> grad(d, 0.0);
        for (const std::size_t k : sel) {
            const double* row = rows.data() + k * stride;
            const double scale = row[d + 1] * lp;
            for (int j = 0; j < d; ++j) grad[j] += scale * row[j];
        }
        for (int j = 0; j < d; ++j) cur[j] += step * grad[j];
        cur = project_to_domain(cur, x, cfg.rho, cfg.projection_rounds);

        select_at(cur.data());
        f = forward_sel(cur.data());
        const double cur_loss = loss.eval(y, f);
        if (cur_loss > best_loss) {
            best_loss = cur_loss;
            best = cur;
            best_sel = sel;
        }
    }
    if (best_active) {
        best_active->ids.clear();
        best_active->ids.reserve(best_sel.size());
        for (const std::size_t k : best_sel) best_active->ids.push_back(sup.ids[k]);
    }
    return best;
}

std::vector<double> null_attack(const double* x, int d) { return std::vector<double>(x, x + d); }

std::vector<double> random_attack(const double* x, int d, double rho, std::uint64_t seed,
                                  int rounds) {
    Rng rng(seed);
    std::vector<double> dir(d);
    double norm2 = 0.0;
    do {
        norm2 = 0.0;
        for (int j = 0; j < d; ++j) {
            dir[j] = rng.normal();
            norm2 += dir[j] * dir[j];
        }
    } while (norm2 == 0.0);
    const double scale = rho / std::sqrt(norm2);
    std::vector<double> v(d);
    for (int j = 0; j < d; ++j) v[j] = x[j] + scale * dir[j];
    return project_to_domain(v, x, rho, rounds);
}

}  // namespace hsrnet
