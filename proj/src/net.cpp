#include "hsrnet/net.hpp"

#include <cmath>
#include <stdexcept>

#include "hsrnet/rng.hpp"

namespace hsrnet {

InitResult init_params(int m, int d, double tau, std::uint64_t seed) {
    if (m < 1) throw std::invalid_argument("init_params: m must be >= 1");
    if (d < 2) throw std::invalid_argument("init_params: d must be >= 2");

    NetworkParams p;
    p.m = m;
    p.d = d;
    p.tau = tau;
    p.W.resize(static_cast<std::size_t>(m) * d);
    p.b.resize(m);
    p.a.resize(m);

    Rng rng(seed);
    const double sigma = 1.0 / std::sqrt(static_cast<double>(m));
    for (std::size_t i = 0; i < p.W.size(); ++i) p.W[i] = sigma * rng.normal();
    for (int r = 0; r < m; ++r) p.b[r] = sigma * rng.normal();
    const double amag = std::pow(static_cast<double>(m), -0.2);
    for (int r = 0; r < m; ++r) p.a[r] = rng.random_sign() * amag;

    InitialSnapshot s;
    s.m = m;
    s.d = d;
    s.tau = tau;
    s.a0 = p.a;
    s.W0 = p.W;
    s.b0 = p.b;
    return {std::move(p), std::move(s)};
}

double forward_dense(const NetworkParams& params, const double* x) {
    double acc = 0.0;
    for (int r = 0; r < params.m; ++r) {
        const double pre = preactivation(params.col(r), params.d, x, params.b[r]);
        const double t = params.a[r] * shifted_relu(pre, params.tau);
        acc += t;
    }
    return acc;
}

ActiveSet active_set_dense(const NetworkParams& params, const double* x) {
    ActiveSet out;
    for (int r = 0; r < params.m; ++r) {
        const double pre = preactivation(params.col(r), params.d, x, params.b[r]);
        if (pre > params.tau) out.ids.push_back(r);
    }
    return out;
}

double forward_sparse(const NetworkParams& params, const double* x, const ActiveSet& active) {
    double acc = 0.0;
    for (int r : active.ids) {
        const double pre = preactivation(params.col(r), params.d, x, params.b[r]);
        const double t = params.a[r] * pre;
        acc += t;
    }
    return acc;
}

double Loss::eval(double y, double yhat) const {
    switch (kind) {
        case LossKind::Absolute:
            return std::fabs(y - yhat);
    }
    return 0.0;
}

double Loss::subgrad(double y, double yhat) const {
    switch (kind) {
        case LossKind::Absolute:
            if (yhat > y) return 1.0;
            if (yhat < y) return -1.0;
            return 0.0;
    }
    return 0.0;
}

SparseGrad grad_loss_sparse(const NetworkParams& params, const double* x, double y,
                            const ActiveSet& active, const Loss& loss) {
    SparseGrad g;
    g.f_value = forward_sparse(params, x, active);
    g.loss_value = loss.eval(y, g.f_value);
    const double lp = loss.subgrad(y, g.f_value);
    g.ids = active.ids;
    g.cols.resize(g.ids.size() * static_cast<std::size_t>(params.d));
    for (std::size_t k = 0; k < g.ids.size(); ++k) {
        const double scale = params.a[g.ids[k]] * lp;
        double* col = g.cols.data() + k * params.d;
        for (int j = 0; j < params.d; ++j) col[j] = scale * x[j];
    }
    return g;
}

double pseudo_forward(const NetworkParams& params, const InitialSnapshot& snap, const double* x) {
    if (params.m != snap.m || params.d != snap.d)
        throw std::invalid_argument("pseudo_forward: dimension mismatch");
    const int d = params.d;
    double acc = 0.0;
    for (int r = 0; r < params.m; ++r) {
        const double pre0 = preactivation(snap.col0(r), d, x, snap.b0[r]);
        if (pre0 >= snap.tau) {
            const double* w = params.col(r);
            const double* w0 = snap.col0(r);
            double dw_x = 0.0;
            for (int j = 0; j < d; ++j) dw_x += (w[j] - w0[j]) * x[j];
            acc += snap.a0[r] * dw_x;
        }
    }
    return acc;
}

Decomposition decompose_f(const NetworkParams& params, const InitialSnapshot& snap, const double* x) {
    if (params.m != snap.m || params.d != snap.d)
        throw std::invalid_argument("decompose_f: dimension mismatch");
    const int d = params.d;
    Decomposition out;
    for (int r = 0; r < params.m; ++r) {
        const double pre = preactivation(params.col(r), d, x, params.b[r]);
        const double pre0 = preactivation(snap.col0(r), d, x, snap.b0[r]);
        const double phi = pre >= params.tau ? 1.0 : 0.0;
        const double phi0 = pre0 >= snap.tau ? 1.0 : 0.0;
        const double* w = params.col(r);
        const double* w0 = snap.col0(r);
        double dw_x = 0.0;
        for (int j = 0; j < d; ++j) dw_x += (w[j] - w0[j]) * x[j];
        out.A += snap.a0[r] * dw_x * phi;
        out.B += snap.a0[r] * pre0 * phi0;
        out.C += snap.a0[r] * pre0 * (phi - phi0);
    }
    return out;
}

double norm_2inf(const std::vector<double>& M, int d, int m) {
    double best = 0.0;
    for (int r = 0; r < m; ++r) {
        const double* col = M.data() + static_cast<std::size_t>(r) * d;
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += col[j] * col[j];
        best = std::max(best, s);
    }
    return std::sqrt(best);
}

double norm_21(const std::vector<double>& M, int d, int m) {
    double acc = 0.0;
    for (int r = 0; r < m; ++r) {
        const double* col = M.data() + static_cast<std::size_t>(r) * d;
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += col[j] * col[j];
        acc += std::sqrt(s);
    }
    return acc;
}

double max_col_dist(const std::vector<double>& Wcur, const std::vector<double>& Wref, int d, int m) {
    double best = 0.0;
    for (int r = 0; r < m; ++r) {
        const double* c = Wcur.data() + static_cast<std::size_t>(r) * d;
        const double* c0 = Wref.data() + static_cast<std::size_t>(r) * d;
        double s = 0.0;
        for (int j = 0; j < d; ++j) {
            const double diff = c[j] - c0[j];
            s += diff * diff;
        }
        best = std::max(best, s);
    }
    return std::sqrt(best);
}

}  // namespace hsrnet
