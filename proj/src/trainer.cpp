#include "hsrnet/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "hsrnet/csv.hpp"
#include "hsrnet/rng.hpp"

namespace hsrnet {

namespace {

using Clock = std::chrono::steady_clock;

long long elapsed_ns(Clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
}

std::vector<double> lift_column(const NetworkParams& params, int r) {
    std::vector<double> p(static_cast<std::size_t>(params.d) + 1);
    const double* w = params.col(r);
    std::copy(w, w + params.d, p.begin());
    p[params.d] = params.b[r];
    return p;
}

std::vector<double> lift_query(const double* x, int d) {
    std::vector<double> q(static_cast<std::size_t>(d) + 1);
    std::copy(x, x + d, q.begin());
    q[d] = 1.0;
    return q;
}

// Runs fn(0..n-1) on up to `workers` threads. Each index writes only its own
// output slot, so the result is identical for any worker count.
void for_each_index(int n, int workers, const std::function<void(int)>& fn) {
    const int nw = std::min(std::max(workers, 1), std::max(n, 1));
    if (nw <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nw));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nw));
    for (int w = 0; w < nw; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

double IterationMetrics::mean_k() const {
    if (k_per_example.empty()) return 0.0;
    double acc = 0.0;
    for (int k : k_per_example) acc += k;
    return acc / static_cast<double>(k_per_example.size());
}

HParams derive_hparams(double eps, double K, int m) {
    if (!(eps > 0.0) || !(eps <= 1.0)) throw std::invalid_argument("derive_hparams: eps must be in (0,1]");
    if (!(K > 0.0)) throw std::invalid_argument("derive_hparams: K must be positive");
    if (m < 1) throw std::invalid_argument("derive_hparams: m must be >= 1");
    HParams hp;
    hp.eta = eps * std::pow(static_cast<double>(m), -0.2);
    hp.T = static_cast<long long>(std::ceil((K * K) / (eps * eps)));
    return hp;
}

TrainResult train(const TrainConfig& cfg, const Dataset& ds) {
    if (cfg.d != ds.d) throw std::invalid_argument("train: config dimension does not match dataset");
    if (cfg.n != 0 && cfg.n != ds.n) throw std::invalid_argument("train: config n does not match dataset");
    InitResult init = init_params(cfg.m, cfg.d, cfg.tau, stream_seed(cfg.seed, "init"));
    return train_from(std::move(init.params), std::move(init.snapshot), cfg, ds);
}

TrainResult train_from(NetworkParams params, InitialSnapshot snapshot, const TrainConfig& cfg,
                       const Dataset& ds) {
    const int m = params.m;
    const int d = params.d;
    const int n = ds.n;
    if (d != ds.d) throw std::invalid_argument("train_from: parameter dimension does not match dataset");
    if (snapshot.m != m || snapshot.d != d)
        throw std::invalid_argument("train_from: snapshot shape does not match parameters");
    if (n < 1) throw std::invalid_argument("train_from: dataset is empty");

    const HParams hp = derive_hparams(cfg.eps, cfg.K, m);
    const double eta = cfg.eta > 0.0 ? cfg.eta : hp.eta;
    const long long T = cfg.T >= 0 ? cfg.T : hp.T;
    const double band = cfg.K * std::pow(static_cast<double>(m), -0.6);
    const Loss& loss = cfg.loss;

    std::unique_ptr<HsrIndex> index;
    if (cfg.engine == EngineKind::Hsr) {
        std::vector<LiftedPoint> pts;
        pts.reserve(static_cast<std::size_t>(m));
        for (int r = 0; r < m; ++r) pts.push_back({r, lift_column(params, r)});
        index = std::make_unique<HsrIndex>(HsrIndex::build(d + 1, pts, cfg.hsr));
    }

    const auto engine_query = [&](const double* x) -> ActiveSet {
        if (index) return index->query(lift_query(x, d), params.tau);
        return active_set_dense(params, x);
    };
    const auto dense_query = [&](const double* x) -> ActiveSet { return active_set_dense(params, x); };
    const ActiveSetFn attack_fn =
        cfg.adversary_uses_index ? ActiveSetFn(engine_query) : ActiveSetFn(dense_query);
    // With the index available, PGD collapses to one range query per example
    // (pgd_attack_banded); the iterates stay bit-identical to pgd_attack's.
    const bool banded_attack = index != nullptr && cfg.adversary_uses_index;
    const RangeFn range_query = [&](const double* x, double t) -> ActiveSet {
        return index->query(lift_query(x, d), t);
    };

    TrainResult res;
    res.metrics.reserve(static_cast<std::size_t>(T));

    std::vector<std::vector<double>> xt(static_cast<std::size_t>(n));
    std::vector<ActiveSet> Q(static_cast<std::size_t>(n));
    std::vector<double> fval(static_cast<std::size_t>(n), 0.0);
    std::vector<int> union_ids;
    union_ids.reserve(static_cast<std::size_t>(m));
    std::vector<int> pos(static_cast<std::size_t>(m), -1);
    std::vector<double> grad;
    std::vector<double> col_dist(static_cast<std::size_t>(m), 0.0);
    std::vector<double> lifted(static_cast<std::size_t>(d) + 1, 0.0);
    double dmax_running = 0.0;

    for (long long t = 0; t < T; ++t) {
        IterationMetrics it;
        it.t = t;

        auto tic = Clock::now();
        const double pnorm = banded_attack ? index->norm_bound() : 0.0;
        for_each_index(n, cfg.workers, [&](int i) {
            switch (cfg.adversary.kind) {
                case AdversaryKind::Null:
                    xt[static_cast<std::size_t>(i)] = null_attack(ds.x(i), d);
                    break;
                case AdversaryKind::Random:
                    xt[static_cast<std::size_t>(i)] =
                        random_attack(ds.x(i), d, cfg.adversary.rho,
                                      stream_seed(cfg.seed, "adversary", static_cast<std::uint64_t>(t),
                                                  static_cast<std::uint64_t>(i)),
                                      cfg.adversary.projection_rounds);
                    break;
                case AdversaryKind::Pgd:
                    xt[static_cast<std::size_t>(i)] =
                        banded_attack
                            ? pgd_attack_banded(params, range_query, pnorm, ds.x(i),
                                                ds.ys[static_cast<std::size_t>(i)], cfg.adversary,
                                                loss, &Q[static_cast<std::size_t>(i)])
                            : pgd_attack(params, attack_fn, ds.x(i),
                                         ds.ys[static_cast<std::size_t>(i)], cfg.adversary, loss);
                    break;
            }
        });
        it.timings.attack = elapsed_ns(tic);

        tic = Clock::now();
        // The banded attack already reports the returned point's active set.
        if (!(banded_attack && cfg.adversary.kind == AdversaryKind::Pgd))
            for (int i = 0; i < n; ++i)
                Q[static_cast<std::size_t>(i)] = engine_query(xt[static_cast<std::size_t>(i)].data());
        it.timings.query = elapsed_ns(tic);

        tic = Clock::now();
        double loss_sum = 0.0;
        for (int i = 0; i < n; ++i) {
            fval[static_cast<std::size_t>(i)] =
                forward_sparse(params, xt[static_cast<std::size_t>(i)].data(), Q[static_cast<std::size_t>(i)]);
            loss_sum += loss.eval(ds.ys[static_cast<std::size_t>(i)], fval[static_cast<std::size_t>(i)]);
        }
        it.robust_loss = loss_sum / static_cast<double>(n);
        it.timings.forward = elapsed_ns(tic);

        // Averaged subgradient over the union of active sets; contributions
        // accumulate example by example, ascending neuron id within each, so
        // the sum has one fixed order no matter which engine produced Q.
        tic = Clock::now();
        union_ids.clear();
        for (int i = 0; i < n; ++i)
            for (int id : Q[static_cast<std::size_t>(i)].ids)
                if (pos[static_cast<std::size_t>(id)] == -1) {
                    pos[static_cast<std::size_t>(id)] = -2;
                    union_ids.push_back(id);
                }
        std::sort(union_ids.begin(), union_ids.end());
        for (std::size_t k = 0; k < union_ids.size(); ++k)
            pos[static_cast<std::size_t>(union_ids[k])] = static_cast<int>(k);
        grad.assign(union_ids.size() * static_cast<std::size_t>(d), 0.0);
        for (int i = 0; i < n; ++i) {
            const double lsub = loss.subgrad(ds.ys[static_cast<std::size_t>(i)], fval[static_cast<std::size_t>(i)]);
            const double* xi = xt[static_cast<std::size_t>(i)].data();
            for (int id : Q[static_cast<std::size_t>(i)].ids) {
                const double coef = params.a[static_cast<std::size_t>(id)] * lsub / static_cast<double>(n);
                double* g = grad.data() + static_cast<std::size_t>(pos[static_cast<std::size_t>(id)]) * d;
                for (int j = 0; j < d; ++j) g[j] += coef * xi[j];
            }
        }
        it.timings.backward = elapsed_ns(tic);

        tic = Clock::now();
        for (std::size_t k = 0; k < union_ids.size(); ++k) {
            const int r = union_ids[k];
            double* w = params.col(r);
            const double* g = grad.data() + k * static_cast<std::size_t>(d);
            for (int j = 0; j < d; ++j) w[j] -= eta * g[j];
            const double* w0 = snapshot.col0(r);
            double acc = 0.0;
            for (int j = 0; j < d; ++j) {
                const double diff = w[j] - w0[j];
                acc += diff * diff;
            }
            col_dist[static_cast<std::size_t>(r)] = std::sqrt(acc);
            if (index) {
                std::copy(w, w + d, lifted.begin());
                lifted[static_cast<std::size_t>(d)] = params.b[static_cast<std::size_t>(r)];
                index->update(r, lifted.data());
            }
        }
        it.timings.update = elapsed_ns(tic);

        it.k_per_example.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            it.k_per_example[static_cast<std::size_t>(i)] = static_cast<int>(Q[static_cast<std::size_t>(i)].size());
        it.union_size = static_cast<int>(union_ids.size());
        double cur = 0.0;
        for (int r = 0; r < m; ++r) cur = std::max(cur, col_dist[static_cast<std::size_t>(r)]);
        dmax_running = std::max(dmax_running, cur);
        it.d_max = dmax_running;
        if (cfg.compute_diagnostics) {
            it.flips = count_sign_flips(params, snapshot, ds.xs, n);
            long long bb = 0;
            for (int i = 0; i < n; ++i)
                bb += count_boundary_band(snapshot, xt[static_cast<std::size_t>(i)].data(), band);
            it.boundary_band = bb;
        }
        for (int id : union_ids) pos[static_cast<std::size_t>(id)] = -1;

        res.metrics.push_back(std::move(it));
        if (cfg.record_weight_snapshots) res.weight_snapshots.push_back(params.W);
    }

    res.params = std::move(params);
    res.snapshot = std::move(snapshot);
    return res;
}

long long count_sign_flips(const NetworkParams& params, const InitialSnapshot& snap,
                           const std::vector<double>& xs, int n) {
    const int m = params.m;
    const int d = params.d;
    long long flips = 0;
    for (int r = 0; r < m; ++r) {
        const double* w = params.col(r);
        const double* w0 = snap.col0(r);
        for (int i = 0; i < n; ++i) {
            const double* x = xs.data() + static_cast<std::size_t>(i) * d;
            const double cur = preactivation(w, d, x, params.b[static_cast<std::size_t>(r)]) - params.tau;
            const double ini = preactivation(w0, d, x, snap.b0[static_cast<std::size_t>(r)]) - snap.tau;
            const bool cur_pos = cur >= 0.0;  // sgn(0) = +1
            const bool ini_pos = ini >= 0.0;
            if (cur_pos != ini_pos) {
                ++flips;
                break;
            }
        }
    }
    return flips;
}

long long count_boundary_band(const InitialSnapshot& snap, const double* x, double band) {
    long long count = 0;
    for (int r = 0; r < snap.m; ++r) {
        const double z = preactivation(snap.col0(r), snap.d, x, snap.b0[static_cast<std::size_t>(r)]);
        if (std::fabs(z - snap.tau) <= band) ++count;
    }
    return count;
}

std::vector<long long> active_count_at_init(const InitialSnapshot& snap,
                                            const std::vector<double>& xs, int n) {
    std::vector<long long> counts(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
        const double* x = xs.data() + static_cast<std::size_t>(i) * snap.d;
        long long c = 0;
        for (int r = 0; r < snap.m; ++r) {
            const double z = preactivation(snap.col0(r), snap.d, x, snap.b0[static_cast<std::size_t>(r)]);
            if (z > snap.tau) ++c;
        }
        counts[static_cast<std::size_t>(i)] = c;
    }
    return counts;
}

std::string metrics_csv_header() {
    return "t,robust_loss,union_size,mean_k,flips,boundary_band,d_max,"
           "t_attack_ns,t_query_ns,t_forward_ns,t_backward_ns,t_update_ns";
}

std::string metrics_csv_row(const IterationMetrics& row) {
    std::ostringstream os;
    os << row.t << ',' << fmt_double(row.robust_loss) << ',' << row.union_size << ','
       << fmt_double(row.mean_k()) << ',' << row.flips << ',' << row.boundary_band << ','
       << fmt_double(row.d_max) << ',' << row.timings.attack << ',' << row.timings.query << ','
       << row.timings.forward << ',' << row.timings.backward << ',' << row.timings.update;
    return os.str();
}

}  // namespace hsrnet
