#include "hsrnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "hsrnet/csv.hpp"

namespace hsrnet {

namespace {
const double kHeadNorm = std::sqrt(3.0) / 2.0;

double point_dist(const double* a, const double* b, int d) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
        const double diff = a[j] - b[j];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

double min_pairwise(const Dataset& ds) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < ds.n; ++i)
        for (int j = i + 1; j < ds.n; ++j) best = std::min(best, point_dist(ds.x(i), ds.x(j), ds.d));
    return best;
}
}  // namespace

std::vector<double> sample_sphere_cap(int d, Rng& rng) {
    if (d < 2) throw std::invalid_argument("sample_sphere_cap: d must be >= 2");
    std::vector<double> x(d);
    while (true) {
        double norm2 = 0.0;
        for (int j = 0; j + 1 < d; ++j) {
            x[j] = rng.normal();
            norm2 += x[j] * x[j];
        }
        if (norm2 == 0.0) continue;
        const double scale = kHeadNorm / std::sqrt(norm2);
        for (int j = 0; j + 1 < d; ++j) x[j] *= scale;
        x[d - 1] = 0.5;
        return x;
    }
}

Dataset generate_dataset(int n, int d, double eps_sep, double rho, LabelMode mode,
                         std::uint64_t seed, int max_attempts) {
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    if (d < 2) throw std::invalid_argument("generate_dataset: d must be >= 2");
    if (rho < 0.0) throw std::invalid_argument("generate_dataset: rho must be >= 0");
    if (!(eps_sep > 2.0 * rho))
        throw std::invalid_argument("generate_dataset: requires eps_sep > 2*rho");

    Rng rng(seed);
    Dataset ds;
    ds.n = n;
    ds.d = d;
    ds.rho = rho;
    ds.xs.reserve(static_cast<std::size_t>(n) * d);

    int attempts = 0;
    int accepted = 0;
    while (accepted < n) {
        if (++attempts > max_attempts)
            throw std::runtime_error(
                "generate_dataset: rejection budget exhausted (" + std::to_string(max_attempts) +
                " attempts) for n=" + std::to_string(n) + " eps_sep=" + fmt_double(eps_sep));
        std::vector<double> cand = sample_sphere_cap(d, rng);
        bool ok = true;
        for (int i = 0; i < accepted && ok; ++i)
            ok = point_dist(ds.x(i), cand.data(), d) >= eps_sep;
        if (!ok) continue;
        ds.xs.insert(ds.xs.end(), cand.begin(), cand.end());
        ++accepted;
    }

    ds.ys.resize(n);
    for (int i = 0; i < n; ++i) {
        if (mode == LabelMode::RandomSign)
            ds.ys[i] = rng.random_sign();
        else
            ds.ys[i] = std::clamp(ds.x(i)[0], -1.0, 1.0);
    }

    ds.eps_sep = (n >= 2) ? min_pairwise(ds) : eps_sep;
    ds.gamma = ds.eps_sep * (ds.eps_sep - 2.0 * rho);
    return ds;
}

double verify_separability(const Dataset& ds, double rho) {
    if (ds.n < 2) return std::numeric_limits<double>::infinity();
    const double eps = min_pairwise(ds);
    return eps * (eps - 2.0 * rho);
}

void validate_dataset(const Dataset& ds) {
    if (ds.n < 1 || ds.d < 2) throw std::invalid_argument("dataset: bad shape");
    if (ds.xs.size() != static_cast<std::size_t>(ds.n) * ds.d ||
        ds.ys.size() != static_cast<std::size_t>(ds.n))
        throw std::invalid_argument("dataset: buffer sizes inconsistent");
    for (int i = 0; i < ds.n; ++i) {
        const double* x = ds.x(i);
        if (std::fabs(x[ds.d - 1] - 0.5) > 1e-12)
            throw std::invalid_argument("dataset: point off the x_d = 1/2 plane");
        double norm2 = 0.0;
        for (int j = 0; j < ds.d; ++j) norm2 += x[j] * x[j];
        if (std::fabs(std::sqrt(norm2) - 1.0) > 1e-12)
            throw std::invalid_argument("dataset: point off the unit sphere");
        if (std::fabs(ds.ys[i]) > 1.0) throw std::invalid_argument("dataset: |y| > 1");
    }
    if (!(ds.eps_sep > 2.0 * ds.rho))
        throw std::invalid_argument("dataset: requires eps_sep > 2*rho");
    if (ds.n >= 2 && min_pairwise(ds) < ds.eps_sep - 1e-12)
        throw std::invalid_argument("dataset: pairwise separation below eps_sep");
}

void save_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dataset_csv: cannot open " + path);
    out << "d,n,eps_sep,rho\n";
    out << ds.d << ',' << ds.n << ',' << fmt_double(ds.eps_sep) << ',' << fmt_double(ds.rho)
        << '\n';
    for (int i = 0; i < ds.n; ++i) {
        const double* x = ds.x(i);
        for (int j = 0; j < ds.d; ++j) out << fmt_double(x[j]) << ',';
        out << fmt_double(ds.ys[i]) << '\n';
    }
    if (!out) throw std::runtime_error("save_dataset_csv: write failed for " + path);
}

Dataset load_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"d", "n", "eps_sep", "rho"})
        throw std::runtime_error("load_dataset_csv: bad header in " + path);
    if (!std::getline(in, line)) throw std::runtime_error("load_dataset_csv: missing meta row");
    auto meta = split_csv_line(line);
    if (meta.size() != 4) throw std::runtime_error("load_dataset_csv: bad meta row");
    Dataset ds;
    ds.d = std::stoi(meta[0]);
    ds.n = std::stoi(meta[1]);
    ds.eps_sep = std::stod(meta[2]);
    ds.rho = std::stod(meta[3]);
    ds.gamma = ds.eps_sep * (ds.eps_sep - 2.0 * ds.rho);
    for (int i = 0; i < ds.n; ++i) {
        if (!std::getline(in, line)) throw std::runtime_error("load_dataset_csv: truncated file");
        auto row = split_csv_line(line);
        if (row.size() != static_cast<std::size_t>(ds.d) + 1)
            throw std::runtime_error("load_dataset_csv: bad row width");
        for (int j = 0; j < ds.d; ++j) ds.xs.push_back(std::stod(row[j]));
        ds.ys.push_back(std::stod(row[ds.d]));
    }
    return ds;
}

}  // namespace hsrnet
