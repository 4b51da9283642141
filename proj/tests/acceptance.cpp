// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.
// Usage: acceptance [criterion ...]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "polaron/asymptotics.hpp"
#include "polaron/cli.hpp"
#include "polaron/eig.hpp"
#include "polaron/folding.hpp"
#include "polaron/operators.hpp"
#include "polaron/renorm.hpp"
#include "polaron/scattering.hpp"

using namespace polaron;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

// 1 ------------------------------------------------------------------------

constexpr double c1_lo = -1.3, c1_hi = -0.7, c1_seconds = 60.0;

Outcome scattering_rate() {
    const auto v = PotentialSpec::gaussian(5.0, 0.6);
    const double a = free_space_scattering_length(v, 4000, 7.2);
    std::vector<std::pair<double, double>> pairs;
    std::string d;
    for (int n : {8, 16, 32, 64}) {
        auto lat = std::make_shared<const MomentumLattice>(build_lattice(3.0 * n / 0.6));
        const auto sol = solve_torus_scattering(v.scaled(n), lat);
        const double diff = std::abs(torus_scattering_length(sol, n) - a);
        pairs.emplace_back(n, diff);
        d += fmt("n=%d:%.4e ", n, diff);
    }
    const auto f = rate_fit(pairs);
    return {f.exponent >= c1_lo && f.exponent <= c1_hi,
            d + fmt("a_free=%.10f exponent=%.4f in [%.1f, %.1f]", a, f.exponent, c1_lo, c1_hi)};
}

// 2 ------------------------------------------------------------------------

constexpr double c2_e1_tol = 0.05, c2_e2_tol = 0.10;

Outcome counterterm_rates() {
    ModelParams p{1.0, 1.0, 0.0, 0.0, 2, {}};
    std::vector<double> r1;
    for (double L : {20.0, 40.0, 80.0}) {
        p.cutoff = L * two_pi;
        r1.push_back(e_lambda_1(p) / p.cutoff);
    }
    const double v1 = std::abs(r1[2] - r1[1]) / std::abs(r1[2]);
    std::vector<double> e2;
    for (double L : {10.0, 20.0, 40.0}) {
        p.cutoff = L * two_pi;
        e2.push_back(e_lambda_2(p));
    }
    const double d1 = e2[1] - e2[0], d2 = e2[2] - e2[1];
    const double v2 = std::abs(d2 - d1) / std::abs(d2);
    return {v1 < c2_e1_tol && v2 < c2_e2_tol,
            fmt("E1/L=%.6f,%.6f,%.6f var=%.2e (<%.2f); E2=%.6f,%.6f,%.6f increments %.6f,%.6f var=%.2e (<%.2f)",
                r1[0], r1[1], r1[2], v1, c2_e1_tol, e2[0], e2[1], e2[2], d1, d2, v2, c2_e2_tol)};
}

// 3 ------------------------------------------------------------------------

constexpr double c3_gap_tol = 0.02, c3_seconds = 600.0;

Outcome renorm_flow() {
    std::vector<double> diff, g1, g2;
    std::string d;
    for (double L : {6.0, 8.0, 10.0, 12.0}) {
        ModelParams p{1.0, 0.05, L * two_pi, 2.0 * two_pi, 2, {}};
        auto lat = std::make_shared<const MomentumLattice>(build_lattice(p.cutoff));
        ShellFolding fold(lat, p);
        FoldedOptions fo;
        fo.k = 3;
        fo.tol = 1e-11;
        const auto s = folded_lowest(fold, fo);
        if (!s.converged) return {false, fmt("no convergence at Lambda=%g*2pi", L)};
        const auto ct = counterterms(p);
        diff.push_back(s.eigenvalues[0] - ct.E_total);
        g1.push_back(s.eigenvalues[1] - s.eigenvalues[0]);
        g2.push_back(s.eigenvalues[2] - s.eigenvalues[0]);
        d += fmt("L=%g: dim=%zu e0-E=%.10f ", L, fold.full_dim(), diff.back());
    }
    bool improving = true;
    std::vector<double> dj;
    for (std::size_t j = 1; j < diff.size(); ++j) dj.push_back(diff[j] - diff[j - 1]);
    for (std::size_t j = 1; j < dj.size(); ++j) improving = improving && std::abs(dj[j]) < std::abs(dj[j - 1]);
    const double v1 = std::abs(g1[3] - g1[2]) / std::abs(g1[2]);
    const double v2 = std::abs(g2[3] - g2[2]) / std::abs(g2[2]);
    d += fmt("d=%.3e,%.3e,%.3e gap variation %.2e,%.2e (<%.2f)", dj[0], dj[1], dj[2], v1, v2, c3_gap_tol);
    return {improving && v1 < c3_gap_tol && v2 < c3_gap_tol, d};
}

// 4 ------------------------------------------------------------------------

constexpr double c4_tol = 1e-8;

Outcome weyl_identity() {
    double worst = 0.0;
    std::string d;
    for (IntVec3 P : {IntVec3{0, 0, 0}, IntVec3{1, 0, 0}, IntVec3{1, 1, 0}}) {
        auto lat = std::make_shared<const MomentumLattice>(build_lattice(two_pi));
        auto b = std::make_shared<const SectorBasis>(enumerate_sector(lat, 3, P));
        ModelParams p{1.0, 0.05, two_pi, 0.5 * two_pi, 3, P};
        const auto H = hbf_dense(b, p);
        const auto U = weyl_unitary(b, gross_profile_modes(*lat, p));
        const Matrix lhs = U.matrix.transpose() * H.matrix * U.matrix;
        const auto rhs = dressed_rhs(b, p);
        const auto keep = states_up_to(*b, 1);
        const double r = (restrict(lhs, keep) - restrict(rhs.matrix, keep)).cwiseAbs().maxCoeff() / H.max_abs();
        worst = std::max(worst, r);
        d += fmt("P=(%d,%d,%d):%.2e ", P.x, P.y, P.z, r);
    }
    return {worst <= c4_tol, d + fmt("modes=6 n_max=3 a_W=0.05 worst=%.2e (<=%.0e)", worst, c4_tol)};
}

// 5 ------------------------------------------------------------------------

constexpr double c5_tol = 1e-10;

Outcome sector_oracle() {
    const double a_W = 0.5;
    auto lat = std::make_shared<const MomentumLattice>(build_lattice(two_pi));
    const std::vector<IntVec3> window{{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}};
    ModelParams p{1.0, a_W, two_pi, 0.0, 1, {}};
    // Tensor product of impurity momentum and boson occupation, built directly.
    const std::size_t M = lat->size(), S = M + 1, D = window.size() * S;
    Matrix H = Matrix::Zero(D, D);
    auto slot = [&](const IntVec3& k) -> long {
        for (std::size_t i = 0; i < window.size(); ++i)
            if (window[i] == k) return long(i);
        return -1;
    };
    for (std::size_t i = 0; i < window.size(); ++i) {
        const IntVec3 k = window[i];
        H(i * S, i * S) = momentum_sq(k);
        for (std::size_t m = 0; m < M; ++m) {
            const IntVec3 q = (*lat)[m];
            H(i * S + 1 + m, i * S + 1 + m) = momentum_sq(k) + dispersion(q, 1.0);
            const long j = slot(k - q);
            if (j < 0) continue;
            const double w = form_factor(q, a_W, 1.0, two_pi);
            H(j * S + 1 + m, i * S) += w;
            H(i * S, j * S + 1 + m) += w;
        }
    }
    const auto full = dense_eigs(DenseOperator{nullptr, H, "tensor", true, false}, static_cast<int>(D));

    std::set<IntVec3> totals;
    for (const auto& k : window) {
        totals.insert(k);
        for (std::size_t m = 0; m < M; ++m) totals.insert(k + (*lat)[m]);
    }
    std::vector<double> merged;
    std::size_t dims = 0;
    SectorOptions so;
    so.impurity_window = window;
    for (const auto& P : totals) {
        auto b = std::make_shared<const SectorBasis>(enumerate_sector(lat, 1, P, so));
        if (b->size() == 0) continue;
        dims += b->size();
        p.total_momentum = P;
        const auto s = dense_eigs(hbf_dense(b, p), static_cast<int>(b->size()));
        merged.insert(merged.end(), s.eigenvalues.begin(), s.eigenvalues.end());
    }
    std::sort(merged.begin(), merged.end());
    if (merged.size() != D) return {false, fmt("sector dimensions sum to %zu, tensor dimension %zu", dims, D)};
    double worst = 0.0;
    for (std::size_t i = 0; i < D; ++i) worst = std::max(worst, std::abs(merged[i] - full.eigenvalues[i]));
    return {worst <= c5_tol, fmt("tensor dim=%zu sectors=%zu max|diff|=%.2e (<=%.0e)", D, totals.size(), worst, c5_tol)};
}

// 6 ------------------------------------------------------------------------

constexpr double c6_tol = 0.10;

Outcome log_term() {
    ModelParams p{1.0, 1.0, infinite_cutoff, 0.0, 0, {}};
    const double ref = log_coefficient(1.0);
    std::string d;
    double last = 0.0;
    for (double N : {1e2, 1e3, 1e4}) {
        const double e1 = e_n_sum(N, p, Interaction::coulomb_tail, std::sqrt(N));
        const double e2 = e_n_sum(2.0 * N, p, Interaction::coulomb_tail, std::sqrt(2.0 * N));
        last = (e2 - e1) / std::log(2.0);
        d += fmt("N=%g slope=%.6f ", N, last);
    }
    const double rel = std::abs(last - ref) / std::abs(ref);
    return {rel <= c6_tol, d + fmt("closed form %.10f deviation %.3f (<=%.2f)", ref, rel, c6_tol)};
}

// 7 ------------------------------------------------------------------------

constexpr double c7_rel = 1e-12, c7_heavy = 1e-5;

Outcome mass_consistency() {
    double worst = 0.0, heavy = 0.0;
    for (double a : {0.1, 0.5, 1.0, 2.0}) {
        worst = std::max(worst, std::abs(mass_coefficient(0.5, a) / log_coefficient(a) - 1.0));
        const double closed = -32.0 * std::numbers::pi * (2.0 * std::numbers::pi / 3.0 - std::sqrt(3.0)) * std::pow(a, 4);
        worst = std::max(worst, std::abs(mass_coefficient(0.5, a) / closed - 1.0));
        heavy = std::max(heavy, std::abs(mass_coefficient(1e6, a)) / std::abs(mass_coefficient(0.5, a)));
    }
    return {worst <= c7_rel && heavy <= c7_heavy,
            fmt("max rel dev %.2e (<=%.0e); |m=1e6|/|m=1/2| = %.2e (<=%.0e)", worst, c7_rel, heavy, c7_heavy)};
}

// 8 ------------------------------------------------------------------------

constexpr double c8_lo = -1.4, c8_hi = -0.6;

Outcome lhy_convergence() {
    std::vector<std::pair<double, double>> pairs;
    std::string d;
    for (double c : {10.0, 20.0, 40.0}) {
        const double r = c * two_pi;
        const double inc = lhy_sum(1.0, 2.0 * r).value - lhy_sum(1.0, r).value;
        pairs.emplace_back(r, inc);
        d += fmt("c=%g*2pi inc=%.6e ", c, inc);
    }
    const auto f = rate_fit(pairs);
    return {f.exponent >= c8_lo && f.exponent <= c8_hi,
            d + fmt("exponent=%.4f in [%.1f, %.1f]", f.exponent, c8_lo, c8_hi)};
}

// 9 ------------------------------------------------------------------------

constexpr double c9_eig = 1e-9, c9_lanczos_tol = 1e-12, c9_herm = 1e-12, c9_unit = 1e-9;

Outcome solver_contracts() {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_eig = 0.0, worst_herm = 0.0, worst_unit = 0.0;
    int contract_breaks = 0, instances = 0, physical = 0;
    std::size_t largest = 0;
    for (int t = 0; t < 50; ++t) {
        DenseOperator A;
        if (t % 2 == 0) {
            // Random physical sector.
            const double L = two_pi * (1.0 + 0.5 * (rng() % 3));
            const int n_max = 1 + static_cast<int>(rng() % 3);
            const IntVec3 P{int(rng() % 3) - 1, int(rng() % 3) - 1, int(rng() % 2)};
            auto lat = std::make_shared<const MomentumLattice>(build_lattice(L));
            if (fock_dimension(lat->size(), n_max) > 2000) {
                --t;
                continue;
            }
            auto b = std::make_shared<const SectorBasis>(enumerate_sector(lat, n_max, P));
            ModelParams p{0.2 + u(rng), 0.1 + u(rng), L, 0.0, n_max, P};
            A = hbf_dense(b, p);
            worst_herm = std::max(worst_herm, A.hermiticity_defect() / A.max_abs());
            if (b->size() <= 600) {
                std::vector<double> f(lat->size());
                for (double& x : f) x = 0.1 * (u(rng) - 0.5);
                worst_unit = std::max(worst_unit, weyl_unitary(b, f).unitarity_defect());
            }
            ++physical;
        } else {
            const int n = 50 + static_cast<int>(rng() % 1951);
            std::normal_distribution<double> g;
            Matrix m(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) m(i, j) = g(rng);
            A = DenseOperator{nullptr, 0.5 * (m + m.transpose()), "random", true, false};
        }
        largest = std::max(largest, A.dim());
        const int k = std::min<int>(4, static_cast<int>(A.dim()));
        const auto d = dense_eigs(A, k);
        LanczosOptions lo;
        lo.k = k;
        lo.tol = c9_lanczos_tol;
        lo.seed = static_cast<std::uint64_t>(t + 1);
        const auto r = lanczos_lowest(as_handle(A), lo);
        if (!r.converged) ++contract_breaks;
        for (int i = 0; i < k; ++i) {
            worst_eig = std::max(worst_eig, std::abs(r.eigenvalues[i] - d.eigenvalues[i]));
            if (r.residual_norms[i] > lo.tol * (std::abs(r.eigenvalues[i]) + r.norm_estimate)) ++contract_breaks;
        }
        ++instances;
    }
    const bool ok = worst_eig <= c9_eig && contract_breaks == 0 && worst_herm <= c9_herm && worst_unit <= c9_unit;
    return {ok, fmt("%d instances (%d physical, largest dim %zu): max|Lanczos-dense|=%.2e (<=%.0e) "
                    "residual breaks=%d hermiticity=%.2e (<=%.0e) unitarity=%.2e (<=%.0e)",
                    instances, physical, largest, worst_eig, c9_eig, contract_breaks, worst_herm, c9_herm,
                    worst_unit, c9_unit)};
}

// 10 -----------------------------------------------------------------------

int run_cli(const std::string& args) {
    const std::string cmd = std::string(POLARON_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "polaron_acceptance";
    fs::create_directories(root);
    const std::string dir = POLARON_CONFIG_DIR;
    // The scattering sweep runs at n <= 16 here; criterion 1 covers n = 64.
    {
        json j = load_config_file(dir + "/scatter.json");
        j["grid"]["n"] = {4, 8, 16};
        std::ofstream(root / "scatter.json") << j.dump(2);
    }
    const std::vector<std::pair<std::string, std::string>> runs{
        {"scatter", (root / "scatter.json").string()}, {"flow", dir + "/flow_small.json"},
        {"spectrum", dir + "/spectrum.json"},          {"weyl", dir + "/weyl.json"},
        {"logterm", dir + "/logterm.json"},            {"lhy", dir + "/lhy.json"},
        {"expand", dir + "/expand.json"}};
    int identical = 0;
    std::string d;
    for (const auto& [sub, cfg] : runs) {
        const std::string name = study_info(*study_from_subcommand(sub)).name;
        std::vector<std::string> csvs;
        for (const std::string w : {"1", "2", "4"}) {
            const fs::path out = root / (sub + "_" + w);
            fs::remove_all(out);
            const int rc = run_cli(sub + " --config " + cfg + " --out " + out.string() + " --seed 11 --workers " + w);
            if (rc != 0) return {false, fmt("%s exited with %d", sub.c_str(), rc)};
            csvs.push_back(slurp(out / (name + ".csv")));
        }
        const bool same = !csvs[0].empty() && csvs[0] == csvs[1] && csvs[0] == csvs[2];
        identical += same;
        if (!same) d += sub + " differs; ";
    }
    return {identical == static_cast<int>(runs.size()),
            d + fmt("%d/%zu studies byte-identical over workers 1, 2, 4", identical, runs.size())};
}

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "scattering rate", c1_seconds, scattering_rate},
        {2, "counterterm rates", 120.0, counterterm_rates},
        {3, "renormalization flow", c3_seconds, renorm_flow},
        {4, "Weyl dressing identity", 30.0, weyl_identity},
        {5, "sector reduction", 5.0, sector_oracle},
        {6, "log-term coefficient", 300.0, log_term},
        {7, "mass coefficient", 1.0, mass_consistency},
        {8, "LHY convergence", 30.0, lhy_convergence},
        {9, "solver contracts", 120.0, solver_contracts},
        {10, "determinism", 600.0, determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_seconds;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::printf("criterion %d %s: %s  %s  [%.1fs of %.0fs]\n", c.id, c.name, pass ? "PASS" : "FAIL",
                    o.detail.c_str(), secs, c.budget_seconds);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
