// Acceptance runner: executes the full-scale verification checks, printing
// every check row and one PASS/FAIL line per criterion. With no arguments it
// runs all criteria; otherwise each argument names one criterion. Exit code 0
// iff every selected criterion passes, 2 on an unknown name.

#include <chrono>
#include <iostream>
#include <string>
#include <vector>

#include "hsrnet/checks.hpp"

namespace {

using namespace hsrnet;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void add_elapsed(std::vector<CheckRow>& rows, const std::string& suite, double secs,
                 double bound) {
    CheckRow r;
    r.suite = suite;
    r.check = "elapsed_seconds";
    r.value = secs;
    r.bound = bound;
    r.pass = secs < bound;
    rows.push_back(r);
}

std::vector<CheckRow> run_hsr_exactness() {
    const auto t0 = Clock::now();
    std::vector<CheckRow> rows = check_hsr_exactness(200, 4096, 101);
    add_elapsed(rows, "hsr", seconds_since(t0), 60.0);
    return rows;
}

std::vector<CheckRow> run_engine_equivalence() {
    const auto t0 = Clock::now();
    std::vector<CheckRow> rows = check_engine_equivalence(4096, 50, 3, 202);
    add_elapsed(rows, "engine-equivalence", seconds_since(t0), 120.0);
    return rows;
}

std::vector<CheckRow> run_activation_tail() { return check_activation_tail(kActivationTailSeed); }

std::vector<CheckRow> run_sign_contract() {
    const auto t0 = Clock::now();
    std::vector<CheckRow> rows = check_sign_contract();
    // Budget: three contracts at under a second each.
    add_elapsed(rows, "poly", seconds_since(t0), 3.0);
    return rows;
}

std::vector<CheckRow> run_step_contract() { return check_step_contract(10, 404); }

std::vector<CheckRow> run_chebyshev() { return check_chebyshev(); }

std::vector<CheckRow> run_robust_fit() { return check_robust_fit(505); }

std::vector<CheckRow> run_sublinearity() { return check_sublinearity(12, 17, 606); }

std::vector<CheckRow> run_coupling() { return check_coupling(kCouplingSeed); }

std::vector<CheckRow> run_convergence() { return check_convergence(kConvergenceSeed); }

std::vector<CheckRow> run_gradient() { return check_gradient(100, 909); }

struct Criterion {
    const char* name;
    std::vector<CheckRow> (*run)();
};

const Criterion kCriteria[] = {
    {"hsr-exactness", run_hsr_exactness},
    {"engine-equivalence", run_engine_equivalence},
    {"activation-tail", run_activation_tail},
    {"sign-contract", run_sign_contract},
    {"step-contract", run_step_contract},
    {"chebyshev", run_chebyshev},
    {"robust-fit", run_robust_fit},
    {"sublinearity", run_sublinearity},
    {"coupling", run_coupling},
    {"convergence", run_convergence},
    {"gradient", run_gradient},
};

bool known(const std::string& name) {
    for (const auto& c : kCriteria)
        if (name == c.name) return true;
    return false;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> wanted(argv + 1, argv + argc);
    for (const auto& w : wanted) {
        if (!known(w)) {
            std::cerr << "unknown criterion: " << w << '\n';
            return 2;
        }
    }

    bool all_ok = true;
    for (const auto& c : kCriteria) {
        if (!wanted.empty()) {
            bool selected = false;
            for (const auto& w : wanted) selected = selected || w == c.name;
            if (!selected) continue;
        }

        std::vector<CheckRow> rows;
        bool ok = false;
        try {
            rows = c.run();
            ok = all_pass(rows);
        } catch (const std::exception& e) {
            std::cout << "  exception: " << e.what() << '\n';
            ok = false;
        }
        for (const auto& r : rows) std::cout << "  " << check_csv_row(r) << '\n';
        std::cout << (ok ? "PASS " : "FAIL ") << c.name << std::endl;
        all_ok = all_ok && ok;
    }
    return all_ok ? 0 : 1;
}
