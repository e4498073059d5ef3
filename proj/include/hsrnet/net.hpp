#pragma once

#include <cstdint>
#include <vector>

namespace hsrnet {

// Sorted set of neuron indices whose pre-activation exceeds the threshold at
// some query point. Invariant: strictly increasing, values in [0, m).
struct ActiveSet {
    std::vector<int> ids;

    bool empty() const { return ids.empty(); }
    std::size_t size() const { return ids.size(); }
};

// Two-layer network state. W is stored column-major: column r (= neuron r's
// weight vector, length d) lives at &W[r*d]. Only W changes during training;
// a and b are fixed after init.
struct NetworkParams {
    int m = 0;
    int d = 0;
    double tau = 0.0;
    std::vector<double> a;  // length m, each entry exactly +-m^(-1/5)
    std::vector<double> W;  // d*m, column-major
    std::vector<double> b;  // length m

    const double* col(int r) const { return W.data() + static_cast<std::size_t>(r) * d; }
    double* col(int r) { return W.data() + static_cast<std::size_t>(r) * d; }
};

// Frozen copy of the parameters at iteration 0.
struct InitialSnapshot {
    int m = 0;
    int d = 0;
    double tau = 0.0;
    std::vector<double> a0;
    std::vector<double> W0;  // column-major, same layout as NetworkParams::W
    std::vector<double> b0;

    const double* col0(int r) const { return W0.data() + static_cast<std::size_t>(r) * d; }
};

// sigma_tau(z) = z * 1[z > tau]. Strict inequality; the subgradient is 1 when
// z > tau and 0 otherwise (including at z == tau).
inline double shifted_relu(double z, double tau) { return z > tau ? z : 0.0; }

// <w, x> + b with a fixed left-to-right accumulation order. Every pre-activation
// in the project flows through this function (or lifted_dot below, which
// performs the identical operation sequence), which is what makes sparse/dense
// and hsr/brute-force results bit-identical.
inline double preactivation(const double* w, int d, const double* x, double b) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) acc += w[j] * x[j];
    return acc + b;
}

// <p, (x || 1)> for a lifted point p = (w || b): same arithmetic as
// preactivation(w, d, x, b), term for term.
inline double lifted_dot(const double* p, int d, const double* x) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) acc += p[j] * x[j];
    return acc + p[d];
}

// Draw order: W entries column by column, then b, then a. Deterministic given
// seed. Throws std::invalid_argument on m < 1 or d < 2.
struct InitResult {
    NetworkParams params;
    InitialSnapshot snapshot;
};
InitResult init_params(int m, int d, double tau, std::uint64_t seed);

// Full sum over all m neurons, ascending r.
double forward_dense(const NetworkParams& params, const double* x);

// Exact active set for (params, x) by linear scan; strict > tau, ascending.
ActiveSet active_set_dense(const NetworkParams& params, const double* x);

// Sum restricted to the given active set, ascending r. Bit-identical to
// forward_dense when `active` is exact.
double forward_sparse(const NetworkParams& params, const double* x, const ActiveSet& active);

// Loss functions: absolute loss only. eval >= 0, eval(y,y) = 0, |subgrad| <= 1,
// convex in the second argument. subgrad is the derivative in yhat with the
// subgradient at yhat == y fixed to 0.
enum class LossKind { Absolute };
struct Loss {
    LossKind kind = LossKind::Absolute;
    double eval(double y, double yhat) const;
    double subgrad(double y, double yhat) const;
};

// Gradient of loss(y, f(x)) with respect to the columns of W, restricted to
// the active set. Column r of the gradient is a_r * subgrad * x; columns
// outside the active set are exactly zero because inactive neurons have zero
// output derivative.
struct SparseGrad {
    std::vector<int> ids;        // ascending
    std::vector<double> cols;    // ids.size() * d, column-major alongside ids
    double f_value = 0.0;        // forward value used for the subgradient
    double loss_value = 0.0;
};
SparseGrad grad_loss_sparse(const NetworkParams& params, const double* x, double y,
                            const ActiveSet& active, const Loss& loss);

// Pseudo-network g(x;W) = sum_r a0_r * <w_r - w0_r, x> * 1[<w0_r, x> + b0_r >= tau].
// The indicator is >= tau here, unlike the strict > of the forward pass.
double pseudo_forward(const NetworkParams& params, const InitialSnapshot& snap, const double* x);

// f(x;W) split into A + B + C:
//   A = sum a0_r <dw_r, x> Phi_r        (current-weight indicator, >= tau)
//   B = sum a0_r (<w0_r,x> + b0_r) Phi0_r
//   C = sum a0_r (<w0_r,x> + b0_r) (Phi_r - Phi0_r)
struct Decomposition {
    double A = 0.0;
    double B = 0.0;
    double C = 0.0;
};
Decomposition decompose_f(const NetworkParams& params, const InitialSnapshot& snap, const double* x);

// Column-norm aggregates over a d x m column-major matrix.
double norm_2inf(const std::vector<double>& M, int d, int m);
double norm_21(const std::vector<double>& M, int d, int m);

// max_r ||W_cur[:,r] - W_ref[:,r]||_2; the running maximum of this over
// iterations is the D_max diagnostic.
double max_col_dist(const std::vector<double>& Wcur, const std::vector<double>& Wref, int d, int m);

}  // namespace hsrnet
