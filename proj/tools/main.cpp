#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hsrnet/checks.hpp"
#include "hsrnet/csv.hpp"
#include "hsrnet/dataset.hpp"
#include "hsrnet/hsr_index.hpp"
#include "hsrnet/net.hpp"
#include "hsrnet/rng.hpp"
#include "hsrnet/trainer.hpp"

namespace {

using namespace hsrnet;
using Clock = std::chrono::steady_clock;

// Output sink: "-" means stdout.
class Sink {
public:
    explicit Sink(const std::string& path) {
        if (path != "-") {
            file_.open(path);
            if (!file_) throw std::runtime_error("cannot open output file: " + path);
        }
    }
    std::ostream& out() { return file_.is_open() ? file_ : std::cout; }

private:
    std::ofstream file_;
};

double tau_for_active_frac(double frac, int m) {
    if (frac >= 1.0) return -std::numeric_limits<double>::infinity();
    return normal_upper_quantile(frac) * std::sqrt(2.0 / static_cast<double>(m));
}

std::vector<double> lift_column(const NetworkParams& params, int r) {
    std::vector<double> p(static_cast<std::size_t>(params.d) + 1);
    const double* w = params.col(r);
    std::copy(w, w + params.d, p.begin());
    p[params.d] = params.b[static_cast<std::size_t>(r)];
    return p;
}

std::vector<double> lift_query(const double* x, int d) {
    std::vector<double> q(static_cast<std::size_t>(d) + 1);
    std::copy(x, x + d, q.begin());
    q[d] = 1.0;
    return q;
}

double median_ll(std::vector<long long> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    if (v.size() % 2 == 1) return static_cast<double>(v[h]);
    return 0.5 * (static_cast<double>(v[h - 1]) + static_cast<double>(v[h]));
}

struct TrainArgs {
    int m = 64;
    int d = 8;
    int n = 8;
    double tau = std::numeric_limits<double>::quiet_NaN();  // default 2*sqrt(2/m)
    double rho = 0.05;
    double eps = 0.5;
    double K = 1.0;
    double eta = 0.0;   // 0 derives eps*m^(-1/5)
    long long T = -1;   // -1 derives ceil(K^2/eps^2)
    std::uint64_t seed = 0;
    std::string adversary = "pgd";
    std::string engine = "hsr";
    std::string labels = "smooth";
    double eps_sep = 0.5;
    int pgd_steps = 5;
    int workers = 1;
    bool no_diagnostics = false;
    bool adversary_scan = false;  // force dense scans inside the adversary
    std::string data;
    std::string out = "-";
};

TrainConfig to_config(const TrainArgs& a, const Dataset& ds) {
    TrainConfig cfg;
    cfg.m = a.m;
    cfg.d = ds.d;
    cfg.n = ds.n;
    cfg.tau = std::isnan(a.tau) ? 2.0 * std::sqrt(2.0 / static_cast<double>(a.m)) : a.tau;
    cfg.rho = a.rho;
    cfg.eps = a.eps;
    cfg.K = a.K;
    cfg.eta = a.eta;
    cfg.T = a.T;
    cfg.seed = a.seed;
    cfg.adversary.kind = a.adversary == "null"     ? AdversaryKind::Null
                         : a.adversary == "random" ? AdversaryKind::Random
                                                   : AdversaryKind::Pgd;
    cfg.adversary.rho = a.rho;
    cfg.adversary.steps = a.pgd_steps;
    cfg.engine = a.engine == "dense" ? EngineKind::Dense : EngineKind::Hsr;
    cfg.adversary_uses_index = !a.adversary_scan;
    cfg.workers = a.workers;
    cfg.compute_diagnostics = !a.no_diagnostics;
    return cfg;
}

Dataset dataset_for(const TrainArgs& a) {
    if (!a.data.empty()) {
        Dataset ds = load_dataset_csv(a.data);
        if (ds.d != a.d || ds.n != a.n)
            throw std::runtime_error("loaded dataset shape does not match --n/--d");
        return ds;
    }
    const LabelMode mode = a.labels == "random" ? LabelMode::RandomSign : LabelMode::Smooth;
    return generate_dataset(a.n, a.d, a.eps_sep, a.rho, mode, stream_seed(a.seed, "data"));
}

int cmd_train(const TrainArgs& a) {
    const Dataset ds = dataset_for(a);
    const TrainResult res = train(to_config(a, ds), ds);
    Sink sink(a.out);
    sink.out() << metrics_csv_header() << '\n';
    for (const auto& row : res.metrics) sink.out() << metrics_csv_row(row) << '\n';
    return 0;
}

struct BenchArgs {
    int d = 6;
    std::vector<int> m_list;
    double active_frac = 0.01;
    int trials = 16;
    std::uint64_t seed = 0;
    std::string out = "-";
    // bench-iteration extras
    int n = 16;
    double rho = 0.05;
    double eps_sep = 0.35;
    long long T = 5;
    int workers = 1;
};

struct QueryPoint {
    double query_ns = 0.0;
    double visits = 0.0;
    double reported = 0.0;
    double dense_ns = 0.0;
};

// Shared measurement: build the lifted index for one width and average query
// cost, visit count, report size, and the dense-scan time over `trials`
// sampled domain points.
QueryPoint measure_queries(const InitResult& ir, double tau, int trials, std::uint64_t seed) {
    const int d = ir.params.d;
    const int m = ir.params.m;
    std::vector<LiftedPoint> pts;
    pts.reserve(static_cast<std::size_t>(m));
    for (int r = 0; r < m; ++r) pts.push_back({r, lift_column(ir.params, r)});
    const HsrIndex idx = HsrIndex::build(d + 1, pts, {});

    Rng xr(stream_seed(seed, "bench-queries"));
    QueryPoint res;
    for (int t = 0; t < trials; ++t) {
        const std::vector<double> x = sample_sphere_cap(d, xr);
        const std::vector<double> q = lift_query(x.data(), d);

        QueryStats st;
        const auto t0 = Clock::now();
        const ActiveSet got = idx.query(q, tau, &st);
        const auto t1 = Clock::now();
        const ActiveSet ref = active_set_dense(ir.params, x.data());
        const auto t2 = Clock::now();
        if (got.ids != ref.ids) throw std::runtime_error("index query diverged from dense scan");

        res.query_ns += static_cast<double>(
            std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
        res.dense_ns += static_cast<double>(
            std::chrono::duration_cast<std::chrono::nanoseconds>(t2 - t1).count());
        res.visits += static_cast<double>(st.nodes_visited);
        res.reported += static_cast<double>(got.size());
    }
    const double k = static_cast<double>(trials);
    res.query_ns /= k;
    res.dense_ns /= k;
    res.visits /= k;
    res.reported /= k;
    return res;
}

void print_slope_line(const std::vector<double>& ms, const std::vector<double>& visits) {
    const double slope = fit_loglog_slope(ms, visits);
    std::cerr << "visit_slope=" << fmt_double(slope) << '\n';
}

int cmd_bench_hsr(const BenchArgs& a) {
    Sink sink(a.out);
    sink.out() << "m,d,mean_query_ns,mean_visits,mean_reported,dense_ns" << '\n';
    std::vector<double> ms, visits;
    for (const int m : a.m_list) {
        const double tau = tau_for_active_frac(a.active_frac, m);
        const InitResult ir = init_params(m, a.d, tau,
                                          stream_seed(a.seed, "bench-init",
                                                      static_cast<std::uint64_t>(m)));
        const QueryPoint qp =
            measure_queries(ir, tau, a.trials, stream_seed(a.seed, "bench-x",
                                                           static_cast<std::uint64_t>(m)));
        sink.out() << m << ',' << a.d << ',' << fmt_double(qp.query_ns) << ','
                   << fmt_double(qp.visits) << ',' << fmt_double(qp.reported) << ','
                   << fmt_double(qp.dense_ns) << '\n';
        ms.push_back(static_cast<double>(m));
        visits.push_back(qp.visits);
    }
    print_slope_line(ms, visits);
    return 0;
}

int cmd_bench_iteration(const BenchArgs& a) {
    Sink sink(a.out);
    sink.out() << "m,d,mean_query_ns,mean_visits,mean_reported,dense_ns,"
                  "hsr_iter_ns,dense_iter_ns,attack_ns,query_ns,forward_ns,backward_ns,update_ns"
               << '\n';
    std::vector<double> ms, visits;
    for (const int m : a.m_list) {
        const double tau = tau_for_active_frac(a.active_frac, m);
        const InitResult ir = init_params(m, a.d, tau,
                                          stream_seed(a.seed, "bench-init",
                                                      static_cast<std::uint64_t>(m)));
        const QueryPoint qp =
            measure_queries(ir, tau, a.trials, stream_seed(a.seed, "bench-x",
                                                           static_cast<std::uint64_t>(m)));

        const Dataset ds = generate_dataset(a.n, a.d, a.eps_sep, a.rho, LabelMode::Smooth,
                                            stream_seed(a.seed, "bench-data",
                                                        static_cast<std::uint64_t>(m)));
        TrainConfig cfg;
        cfg.m = m;
        cfg.d = a.d;
        cfg.n = a.n;
        cfg.tau = tau;
        cfg.rho = a.rho;
        cfg.eps = 0.5;
        cfg.K = 1.0;
        cfg.T = a.T;
        cfg.seed = stream_seed(a.seed, "bench-run", static_cast<std::uint64_t>(m));
        cfg.adversary.kind = AdversaryKind::Pgd;
        cfg.adversary.rho = a.rho;
        cfg.adversary.steps = 5;
        cfg.workers = a.workers;
        cfg.compute_diagnostics = false;

        cfg.engine = EngineKind::Hsr;
        const TrainResult rh = train_from(ir.params, ir.snapshot, cfg, ds);
        cfg.engine = EngineKind::Dense;
        const TrainResult rd = train_from(ir.params, ir.snapshot, cfg, ds);

        std::vector<long long> hsr_totals, dense_totals, at, qu, fw, bw, up;
        for (const auto& it : rh.metrics) {
            hsr_totals.push_back(it.timings.total());
            at.push_back(it.timings.attack);
            qu.push_back(it.timings.query);
            fw.push_back(it.timings.forward);
            bw.push_back(it.timings.backward);
            up.push_back(it.timings.update);
        }
        for (const auto& it : rd.metrics) dense_totals.push_back(it.timings.total());

        sink.out() << m << ',' << a.d << ',' << fmt_double(qp.query_ns) << ','
                   << fmt_double(qp.visits) << ',' << fmt_double(qp.reported) << ','
                   << fmt_double(qp.dense_ns) << ',' << fmt_double(median_ll(hsr_totals)) << ','
                   << fmt_double(median_ll(dense_totals)) << ',' << fmt_double(median_ll(at)) << ','
                   << fmt_double(median_ll(qu)) << ',' << fmt_double(median_ll(fw)) << ','
                   << fmt_double(median_ll(bw)) << ',' << fmt_double(median_ll(up)) << '\n';
        ms.push_back(static_cast<double>(m));
        visits.push_back(qp.visits);
    }
    print_slope_line(ms, visits);
    return 0;
}

int cmd_verify(const std::string& suite, const std::string& out) {
    const std::vector<CheckRow> rows = run_suite(suite);
    Sink sink(out);
    sink.out() << check_csv_header() << '\n';
    for (const auto& r : rows) sink.out() << check_csv_row(r) << '\n';
    return all_pass(rows) ? 0 : 1;
}

struct GenDataArgs {
    int n = 8;
    int d = 8;
    double eps_sep = 0.5;
    double rho = 0.05;
    std::string labels = "smooth";
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
    const LabelMode mode = a.labels == "random" ? LabelMode::RandomSign : LabelMode::Smooth;
    const Dataset ds = generate_dataset(a.n, a.d, a.eps_sep, a.rho, mode, stream_seed(a.seed, "data"));
    save_dataset_csv(ds, a.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adversarial training with a dynamic half-space reporting index"};
    app.require_subcommand(1);

    TrainArgs ta;
    CLI::App* train_cmd = app.add_subcommand("train", "run the training loop, emit metrics CSV");
    train_cmd->set_config("--config");
    train_cmd->add_option("--m", ta.m, "network width")->check(CLI::PositiveNumber);
    train_cmd->add_option("--d", ta.d, "input dimension")->check(CLI::Range(2, 1 << 20));
    train_cmd->add_option("--n", ta.n, "training set size")->check(CLI::PositiveNumber);
    train_cmd->add_option("--tau", ta.tau, "activation threshold (default 2*sqrt(2/m))");
    train_cmd->add_option("--rho", ta.rho, "perturbation radius")->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--eps", ta.eps, "target accuracy in (0,1]");
    train_cmd->add_option("--K", ta.K, "weight-motion scale")->check(CLI::PositiveNumber);
    train_cmd->add_option("--eta", ta.eta, "step size override (0 derives eps*m^(-1/5))");
    train_cmd->add_option("--T", ta.T, "iteration count override (-1 derives ceil(K^2/eps^2))");
    train_cmd->add_option("--seed", ta.seed, "master seed");
    train_cmd->add_option("--adversary", ta.adversary, "inner maximizer")
        ->check(CLI::IsMember({"null", "random", "pgd"}));
    train_cmd->add_option("--engine", ta.engine, "active-set engine")
        ->check(CLI::IsMember({"hsr", "dense"}));
    train_cmd->add_option("--labels", ta.labels, "label mode for generated data")
        ->check(CLI::IsMember({"smooth", "random"}));
    train_cmd->add_option("--eps-sep", ta.eps_sep, "pairwise separation for generated data");
    train_cmd->add_option("--pgd-steps", ta.pgd_steps, "PGD ascent steps")
        ->check(CLI::PositiveNumber);
    train_cmd->add_option("--workers", ta.workers, "attack-phase worker threads")
        ->check(CLI::PositiveNumber);
    train_cmd->add_flag("--no-diagnostics", ta.no_diagnostics,
                        "skip the O(mnd) per-iteration diagnostics");
    train_cmd->add_flag("--adversary-scan", ta.adversary_scan,
                        "adversary uses dense scans instead of the engine's index");
    train_cmd->add_option("--data", ta.data, "load dataset CSV instead of generating");
    train_cmd->add_option("--out", ta.out, "metrics CSV path ('-' = stdout)");

    BenchArgs ba;
    CLI::App* bench_hsr_cmd = app.add_subcommand("bench-hsr", "index query scaling benchmark");
    bench_hsr_cmd->set_config("--config");
    bench_hsr_cmd->add_option("--d", ba.d, "input dimension")->check(CLI::Range(2, 1 << 20));
    bench_hsr_cmd->add_option("--m-list", ba.m_list, "comma-separated widths")
        ->required()
        ->delimiter(',');
    bench_hsr_cmd->add_option("--active-frac", ba.active_frac, "target active fraction in (0,1]")
        ->check(CLI::Range(1e-12, 1.0));
    bench_hsr_cmd->add_option("--trials", ba.trials, "queries per width")
        ->check(CLI::PositiveNumber);
    bench_hsr_cmd->add_option("--seed", ba.seed, "master seed");
    bench_hsr_cmd->add_option("--out", ba.out, "CSV path ('-' = stdout)");

    BenchArgs bi;
    CLI::App* bench_iter_cmd =
        app.add_subcommand("bench-iteration", "per-iteration cost, hsr vs dense engine");
    bench_iter_cmd->set_config("--config");
    bench_iter_cmd->add_option("--d", bi.d, "input dimension")->check(CLI::Range(2, 1 << 20));
    bench_iter_cmd->add_option("--m-list", bi.m_list, "comma-separated widths")
        ->required()
        ->delimiter(',');
    bench_iter_cmd->add_option("--active-frac", bi.active_frac, "target active fraction in (0,1]")
        ->check(CLI::Range(1e-12, 1.0));
    bench_iter_cmd->add_option("--trials", bi.trials, "measurement queries per width")
        ->check(CLI::PositiveNumber);
    bench_iter_cmd->add_option("--n", bi.n, "training set size")->check(CLI::PositiveNumber);
    bench_iter_cmd->add_option("--rho", bi.rho, "perturbation radius")
        ->check(CLI::NonNegativeNumber);
    bench_iter_cmd->add_option("--eps-sep", bi.eps_sep, "pairwise separation for generated data");
    bench_iter_cmd->add_option("--T", bi.T, "iterations per engine")->check(CLI::PositiveNumber);
    bench_iter_cmd->add_option("--workers", bi.workers, "attack-phase worker threads")
        ->check(CLI::PositiveNumber);
    bench_iter_cmd->add_option("--seed", bi.seed, "master seed");
    bench_iter_cmd->add_option("--out", bi.out, "CSV path ('-' = stdout)");

    std::string suite = "all";
    std::string verify_out = "-";
    CLI::App* verify_cmd = app.add_subcommand("verify", "run a verification suite");
    verify_cmd->set_config("--config");
    verify_cmd->add_option("--suite", suite, "suite name")
        ->check(CLI::IsMember({"hsr", "poly", "coupling", "activation", "engine-equivalence", "all"}));
    verify_cmd->add_option("--out", verify_out, "CSV path ('-' = stdout)");

    GenDataArgs ga;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a separable dataset CSV");
    gen_cmd->set_config("--config");
    gen_cmd->add_option("--n", ga.n, "points")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--d", ga.d, "input dimension")->check(CLI::Range(2, 1 << 20));
    gen_cmd->add_option("--eps-sep", ga.eps_sep, "required pairwise separation");
    gen_cmd->add_option("--rho", ga.rho, "perturbation radius")->check(CLI::NonNegativeNumber);
    gen_cmd->add_option("--labels", ga.labels, "label mode")
        ->check(CLI::IsMember({"smooth", "random"}));
    gen_cmd->add_option("--seed", ga.seed, "master seed");
    gen_cmd->add_option("--out", ga.out, "dataset CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(ta);
        if (bench_hsr_cmd->parsed()) return cmd_bench_hsr(ba);
        if (bench_iter_cmd->parsed()) return cmd_bench_iteration(bi);
        if (verify_cmd->parsed()) return cmd_verify(suite, verify_out);
        if (gen_cmd->parsed()) return cmd_gen_data(ga);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
