#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hsrnet/adversary.hpp"
#include "hsrnet/dataset.hpp"
#include "hsrnet/hsr_index.hpp"
#include "hsrnet/net.hpp"

namespace hsrnet {

enum class EngineKind { Hsr, Dense };

struct TrainConfig {
    int m = 0;
    int d = 0;
    int n = 0;
    double tau = 0.0;
    double rho = 0.0;
    double eps = 0.5;  // target accuracy, in (0,1)
    double K = 1.0;    // radius scale for T and the boundary-band width
    double eta = 0.0;  // <= 0 derives eps * m^(-1/5)
    long long T = -1;  // < 0 derives ceil(K^2/eps^2)
    std::uint64_t seed = 0;
    AdversaryConfig adversary;
    EngineKind engine = EngineKind::Hsr;
    // Whether adversary-internal forward passes use the engine's active-set
    // source (index or scan) or always the dense scan. Either setting keeps
    // the two engines bit-identical.
    bool adversary_uses_index = true;
    int workers = 1;
    // Sign-flip and boundary-band diagnostics cost O(m n d) per iteration;
    // benchmarks turn them off. Never affects weights.
    bool compute_diagnostics = true;
    bool record_weight_snapshots = false;
    HsrConfig hsr;
    Loss loss;
};

struct TimingNs {
    long long attack = 0;
    long long query = 0;
    long long forward = 0;
    long long backward = 0;
    long long update = 0;

    long long total() const { return attack + query + forward + backward + update; }
};

struct IterationMetrics {
    long long t = 0;
    double robust_loss = 0.0;            // (1/n) sum loss(y_i, f_{W_t}(x~_i)), pre-update
    std::vector<int> k_per_example;      // |Q_{t,i}|
    int union_size = 0;                  // |union_i Q_{t,i}|
    long long flips = 0;                 // neurons whose init-vs-current sign differs on some x_i
    long long boundary_band = 0;         // sum over adversarial points of the K*m^(-3/5) band count
    double d_max = 0.0;                  // running max of ||W_t - W_0||_{2,inf}
    TimingNs timings;

    double mean_k() const;
};

struct TrainResult {
    NetworkParams params;
    InitialSnapshot snapshot;
    std::vector<IterationMetrics> metrics;
    std::vector<std::vector<double>> weight_snapshots;  // post-update copies of W when recorded
};

struct HParams {
    double eta = 0.0;
    long long T = 0;
};
// eta = eps * m^(-1/5), T = ceil(K^2 / eps^2); the order constants are fixed
// at 1 and overridable through TrainConfig.
HParams derive_hparams(double eps, double K, int m);

// Initializes parameters from the config's init stream and trains.
TrainResult train(const TrainConfig& cfg, const Dataset& ds);

// Trains from externally supplied parameters (tests inject hand instances).
TrainResult train_from(NetworkParams params, InitialSnapshot snapshot, const TrainConfig& cfg,
                       const Dataset& ds);

// Number of neurons r for which sgn(<x_i, w_r> + b_r - tau) differs from the
// initialization sign for at least one of the n points; sgn(0) = +1.
long long count_sign_flips(const NetworkParams& params, const InitialSnapshot& snap,
                           const std::vector<double>& xs, int n);

// Number of neurons with |<w0_r, x> + b0_r - tau| <= band.
long long count_boundary_band(const InitialSnapshot& snap, const double* x, double band);

// k_{i,0} for each point, strict > tau against the initial weights.
std::vector<long long> active_count_at_init(const InitialSnapshot& snap,
                                            const std::vector<double>& xs, int n);

std::string metrics_csv_header();
std::string metrics_csv_row(const IterationMetrics& row);

}  // namespace hsrnet
