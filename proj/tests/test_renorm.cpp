#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "polaron/renorm.hpp"

using namespace polaron;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Unreduced double loop over the annulus, plain summation.
double brute_e2(const ModelParams& prm) {
    const auto pts = annulus_points(prm.kappa, prm.cutoff);
    const std::size_t M = pts.n.size();
    long double s = 0.0L;
    for (std::size_t i = 0; i < M; ++i) {
        const Vec3 p = to_physical(pts.n[i]);
        const double fp = gross_profile(p, prm);
        const double ep = dispersion_sq(pts.p2[i], prm.a_V);
        for (std::size_t j = 0; j < M; ++j) {
            const Vec3 q = to_physical(pts.n[j]);
            const double fq = gross_profile(q, prm);
            const double pq = dot(p, q);
            const Vec3 pq_sum{p[0] + q[0], p[1] + q[1], p[2] + q[2]};
            const double den = norm2(pq_sum) + ep + dispersion_sq(pts.p2[j], prm.a_V) + 1.0;
            s += static_cast<long double>(pq * pq * fp * fp * fq * fq / den);
        }
    }
    return -2.0 * static_cast<double>(s);
}

}  // namespace

TEST_CASE("Gross profile", "[renorm]") {
    ModelParams p{1.0, 0.3, 200.0 * two_pi, 0.0, 2, {}};
    const double k = 100.0 * two_pi;
    // Large momenta: f ~ -4 pi a_W / p^2.
    CHECK_THAT(gross_profile(Vec3{k, 0.0, 0.0}, p), WithinRel(-4.0 * std::numbers::pi * 0.3 / (k * k), 1e-2));
    CHECK(gross_profile(IntVec3{1, 0, 0}, p) < 0.0);
    p.kappa = two_pi;
    CHECK(gross_profile(IntVec3{1, 0, 0}, p) == 0.0);
    CHECK(gross_profile(IntVec3{1, 1, 0}, p) < 0.0);
    CHECK(gross_profile(IntVec3{201, 0, 0}, p) == 0.0);
    p.a_W = 0.0;
    CHECK(gross_profile(IntVec3{3, 0, 0}, p) == 0.0);
    CHECK_THROWS_AS(gross_profile_sq(0.0, p), domain_error);
}

TEST_CASE("annulus enumeration", "[renorm]") {
    const auto pts = annulus_points(two_pi, two_pi * 2.0);
    const auto reps = annulus_reps(two_pi, two_pi * 2.0);
    double w = 0.0;
    for (double x : reps.weight) w += x;
    CHECK(static_cast<double>(pts.n.size()) == w);
    // |n|^2 in {2, 3, 4}: 12 + 8 + 6.
    CHECK(pts.n.size() == 26);
    CHECK(annulus_points(0.0, two_pi).n.size() == 6);
    CHECK_THAT(annulus_sum(0.0, two_pi * 2.0, [](double) { return 1.0; }), WithinAbs(32.0, 0.0));
    CHECK_THROWS_AS(annulus_points(0.0, infinite_cutoff), contract_violation);
    CHECK_THROWS_AS(annulus_points(0.0, two_pi * 100.0, 1000), capacity_error);
}

TEST_CASE("counterterms on the smallest shell by hand", "[renorm]") {
    const double a_V = 1.0, a_W = 0.4;
    ModelParams prm{a_V, a_W, two_pi, 0.0, 2, {}};
    const double p2 = two_pi * two_pi;
    const double eps = dispersion_sq(p2, a_V);
    const double w = form_factor_sq(p2, a_W, a_V, two_pi);
    const double f = -w / (p2 + eps);
    CHECK_THAT(e_lambda_1(prm), WithinRel(6.0 * w * f, 1e-14));
    // Pairs within the six unit momenta: q = p and q = -p contribute.
    const double f4 = f * f * f * f;
    const double e2 = -2.0 * 6.0 * p2 * p2 * f4 * (1.0 / (4.0 * p2 + 2.0 * eps + 1.0) + 1.0 / (2.0 * eps + 1.0));
    CHECK_THAT(e_lambda_2(prm), WithinRel(e2, 1e-13));
    const auto r = counterterms(prm);
    CHECK(r.lattice_size == 6);
    CHECK_THAT(r.E_total, WithinRel(6.0 * w * f + e2, 1e-13));
}

TEST_CASE("reduced E2 matches the brute-force double sum", "[renorm]") {
    for (double kappa : {0.0, 1.5 * two_pi}) {
        ModelParams prm{0.7, 0.25, 4.0 * two_pi, kappa, 2, {}};
        const double ref = brute_e2(prm);
        SumOptions full;
        full.reduced = false;
        CHECK_THAT(e_lambda_2(prm), WithinRel(ref, 1e-10));
        CHECK_THAT(e_lambda_2(prm, full), WithinRel(ref, 1e-10));
        SumOptions threads;
        threads.workers = 3;
        CHECK(e_lambda_2(prm, threads) == e_lambda_2(prm));
    }
}

TEST_CASE("counterterm monotonicity", "[renorm]") {
    ModelParams prm{1.0, 0.25, two_pi, 2.0 * two_pi, 2, {}};
    CHECK(e_lambda_1(prm) == 0.0);
    CHECK(e_lambda_2(prm) == 0.0);
    double e1 = 0.0, e2 = 0.0;
    for (double L : {3.0, 4.0, 6.0, 8.0}) {
        prm.cutoff = L * two_pi;
        const double a = e_lambda_1(prm), b = e_lambda_2(prm);
        CHECK(a < e1);
        CHECK(b < e2);
        e1 = a;
        e2 = b;
    }
    prm.cutoff = infinite_cutoff;
    CHECK_THROWS_AS(e_lambda_2(prm), contract_violation);
    prm.cutoff = 40.0 * two_pi;
    SumOptions tiny;
    tiny.pair_budget = 1e6;
    CHECK_THROWS_AS(e_lambda_2(prm, tiny), capacity_error);
}

TEST_CASE("theta0", "[renorm]") {
    ModelParams prm{1.0, 0.2, 5.0 * two_pi, two_pi, 2, {}};
    const Vec3 zero{0.0, 0.0, 0.0};
    CHECK(theta0(prm, zero, 0.0).value == 0.0);
    CHECK(std::abs(theta0(prm, Vec3{two_pi, 0.0, 0.0}, 0.0).value) > 0.0);
    CHECK_THROWS_AS(theta0(prm, zero, -1.0), contract_violation);

    const double t = theta0(prm, zero, 3.0).value;
    CHECK(t > 0.0);
    Theta0Options full;
    full.sums.reduced = false;
    CHECK_THAT(theta0(prm, zero, 3.0, full).value, WithinRel(t, 1e-12));
    // The general path agrees with the K = 0 reduction in the limit.
    CHECK_THAT(theta0(prm, Vec3{1e-7, 0.0, 0.0}, 3.0).value, WithinRel(t, 1e-6));
    // Cubic covariance in K.
    const double kx = theta0(prm, Vec3{two_pi, 0.0, 0.0}, 2.0).value;
    CHECK_THAT(theta0(prm, Vec3{0.0, -two_pi, 0.0}, 2.0).value, WithinRel(kx, 1e-12));
    CHECK_THAT(theta0(prm, Vec3{0.0, 0.0, two_pi}, 2.0).value, WithinRel(kx, 1e-12));

    double prev = 0.0;
    for (double phi : {0.5, 1.0, 2.0, 4.0}) {
        const double cur = theta0(prm, zero, phi).value;
        CHECK(cur > prev);
        prev = cur;
    }
}

TEST_CASE("theta0 without a cutoff", "[renorm]") {
    ModelParams prm{1.0, 0.2, infinite_cutoff, two_pi, 2, {}};
    Theta0Options opt;
    opt.tol = 1e-6;
    const auto r = theta0(prm, Vec3{0.0, 0.0, 0.0}, 2.0, opt);
    CHECK(std::isfinite(r.cutoff_used));
    CHECK(r.tail_bound <= opt.tol * std::max(1.0, std::abs(r.value)));
    ModelParams half = prm;
    half.cutoff = r.cutoff_used / 2.0;
    CHECK_THAT(theta0(half, Vec3{0.0, 0.0, 0.0}, 2.0).value, WithinAbs(r.value, 3.0 * r.tail_bound + 1e-12 * std::abs(r.value)));

    opt.tol = 1e-30;
    opt.sums.pair_budget = 1e8;
    CHECK_THROWS_AS(theta0(prm, Vec3{0.0, 0.0, 0.0}, 2.0, opt), accuracy_error);
}
