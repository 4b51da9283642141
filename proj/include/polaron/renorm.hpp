#pragma once

// Gross profile, the counterterms E1 and E2, and the zero-particle kernel of
// the normal-ordered remainder.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "polaron/errors.hpp"
#include "polaron/lattice.hpp"
#include "polaron/parallel.hpp"
#include "polaron/summation.hpp"

namespace polaron {

/// Resolvent shift in the E2 and theta0 denominators.
inline constexpr double resolvent_shift = 1.0;

inline double gross_profile_sq(double p2, const ModelParams& prm) {
    if (p2 <= 0.0) throw domain_error("Gross profile undefined at the zero mode");
    if (within_radius(p2, prm.kappa) || !within_radius(p2, prm.cutoff)) return 0.0;
    const double eps = dispersion_sq(p2, prm.a_V);
    return -form_factor_sq(p2, prm.a_W, prm.a_V, prm.cutoff) / (p2 + eps);
}

/// -w(p)/(p^2 + eps(p)) for kappa < |p| <= cutoff, else 0.
inline double gross_profile(const Vec3& p, const ModelParams& prm) {
    return gross_profile_sq(norm2(p), prm);
}
inline double gross_profile(const IntVec3& n, const ModelParams& prm) {
    return gross_profile_sq(momentum_sq(n), prm);
}

// ---------------------------------------------------------------------------
// Lattice shells with cubic reduction

/// Integer points with r_lo < |2 pi n| <= r_hi (closed above, open below).
struct ShellPoints {
    std::vector<IntVec3> n;
    std::vector<double> kx, ky, kz, p2;
};

inline std::size_t count_ball_estimate(double r_hi) {
    const double R = r_hi / two_pi;
    return static_cast<std::size_t>(4.0 / 3.0 * std::numbers::pi * (R + 1.0) * (R + 1.0) * (R + 1.0));
}

inline ShellPoints annulus_points(double r_lo, double r_hi, std::size_t max_points = 20'000'000) {
    if (!std::isfinite(r_hi)) throw contract_violation("annulus needs a finite outer radius");
    if (count_ball_estimate(r_hi) > max_points)
        throw capacity_error("annulus points", count_ball_estimate(r_hi), max_points);
    ShellPoints s;
    const int R = static_cast<int>(std::floor(r_hi / two_pi)) + 1;
    for (int x = -R; x <= R; ++x)
        for (int y = -R; y <= R; ++y)
            for (int z = -R; z <= R; ++z) {
                const IntVec3 n{x, y, z};
                if (n.is_zero()) continue;
                const double p2 = momentum_sq(n);
                if (!within_radius(p2, r_hi) || within_radius(p2, r_lo)) continue;
                s.n.push_back(n);
                s.kx.push_back(two_pi * x);
                s.ky.push_back(two_pi * y);
                s.kz.push_back(two_pi * z);
                s.p2.push_back(p2);
            }
    return s;
}

/// Orbit representatives (n1 >= n2 >= n3 >= 0) with their orbit sizes.
struct ShellReps {
    std::vector<IntVec3> n;
    std::vector<double> weight;
};

inline ShellReps annulus_reps(double r_lo, double r_hi) {
    if (!std::isfinite(r_hi)) throw contract_violation("annulus needs a finite outer radius");
    ShellReps s;
    const int R = static_cast<int>(std::floor(r_hi / two_pi)) + 1;
    for (int x = 0; x <= R; ++x)
        for (int y = 0; y <= x; ++y)
            for (int z = 0; z <= y; ++z) {
                const IntVec3 n{x, y, z};
                if (n.is_zero()) continue;
                const double p2 = momentum_sq(n);
                if (!within_radius(p2, r_hi) || within_radius(p2, r_lo)) continue;
                s.n.push_back(n);
                s.weight.push_back(cubic_orbit_size(n));
            }
    return s;
}

/// Sum of term(p2) over the annulus, symmetry-reduced.
template <class Term>
double annulus_sum(double r_lo, double r_hi, Term term) {
    const ShellReps reps = annulus_reps(r_lo, r_hi);
    CascadeSum s;
    for (std::size_t i = 0; i < reps.n.size(); ++i) s.add(reps.weight[i] * term(momentum_sq(reps.n[i])));
    return s.value();
}

// ---------------------------------------------------------------------------
// Counterterms

struct SumOptions {
    unsigned workers = 1;
    double pair_budget = 1e10;
    bool reduced = true;  ///< use the cubic reduction of the outer index
};

/// E1 = sum w f = -(8 pi a_W)^2 sum p^2/(eps (p^2 + eps)) over kappa < |p| <= cutoff.
inline double e_lambda_1(const ModelParams& prm) {
    if (prm.a_W == 0.0 || !(prm.kappa < prm.cutoff)) return 0.0;
    const double c = 8.0 * std::numbers::pi * prm.a_W;
    return annulus_sum(prm.kappa, prm.cutoff, [&](double p2) {
        const double eps = dispersion_sq(p2, prm.a_V);
        return -c * c * p2 / (eps * (p2 + eps));
    });
}

namespace detail {

/// Per-point data of a pair sum: momenta, dispersion, and squared profile.
struct PairData {
    ShellPoints pts;
    std::vector<double> eps, F;
};

template <class Profile>
PairData pair_data(double r_lo, double r_hi, double a_V, Profile profile_sq) {
    PairData d;
    d.pts = annulus_points(r_lo, r_hi);
    const std::size_t M = d.pts.n.size();
    d.eps.resize(M);
    d.F.resize(M);
    for (std::size_t i = 0; i < M; ++i) {
        d.eps[i] = dispersion_sq(d.pts.p2[i], a_V);
        d.F[i] = profile_sq(d.pts.n[i], d.pts.p2[i]);
    }
    return d;
}

struct Outer {
    std::vector<Vec3> p;
    std::vector<double> w, eps, F;
};

/// Weighted sum over outer points i and all inner points j of
/// kernel(i, j, p.q, |p|^2, |q|^2); each inner sum is pairwise.
template <class Kernel>
double pair_sum(const PairData& d, const Outer& o, const SumOptions& opt, Kernel kernel) {
    const std::size_t M = d.pts.n.size();
    const double pairs = static_cast<double>(o.p.size()) * static_cast<double>(M);
    if (pairs > opt.pair_budget)
        throw capacity_error("pair sum over budget; use a coarser cutoff grid",
                             static_cast<std::size_t>(pairs), static_cast<std::size_t>(opt.pair_budget));
    return deterministic_sum(
        o.p.size(), opt.workers,
        [&](std::size_t i) {
            if (o.F[i] == 0.0) return 0.0;
            thread_local std::vector<double> buf;
            buf.resize(M);
            const double px = o.p[i][0], py = o.p[i][1], pz = o.p[i][2];
            const double pp = px * px + py * py + pz * pz;
            for (std::size_t j = 0; j < M; ++j) {
                const double pq = px * d.pts.kx[j] + py * d.pts.ky[j] + pz * d.pts.kz[j];
                buf[j] = kernel(i, j, pq, pp, d.pts.p2[j]);
            }
            return o.w[i] * pairwise_sum(buf);
        },
        1);
}

template <class Profile>
Outer outer_points(const PairData& d, double r_lo, double r_hi, double a_V, bool reduced,
                   Profile profile_sq) {
    Outer o;
    if (reduced) {
        const ShellReps reps = annulus_reps(r_lo, r_hi);
        for (std::size_t i = 0; i < reps.n.size(); ++i) {
            const double p2 = momentum_sq(reps.n[i]);
            o.p.push_back(to_physical(reps.n[i]));
            o.w.push_back(reps.weight[i]);
            o.eps.push_back(dispersion_sq(p2, a_V));
            o.F.push_back(profile_sq(reps.n[i], p2));
        }
    } else {
        for (std::size_t i = 0; i < d.pts.n.size(); ++i) {
            o.p.push_back(to_physical(d.pts.n[i]));
            o.w.push_back(1.0);
            o.eps.push_back(d.eps[i]);
            o.F.push_back(d.F[i]);
        }
    }
    return o;
}

}  // namespace detail

/// -2 sum_{p,q} (p.q)^2 F(p) F(q) / ((p+q)^2 + eps(p) + eps(q) + 1) over
/// r_lo < |p|,|q| <= r_hi, for a squared profile F(n, |p|^2). The reduced
/// form requires F to be invariant under the cubic group.
template <class Profile>
double quartic_pair_sum(double r_lo, double r_hi, double a_V, Profile profile_sq,
                        const SumOptions& opt = {}) {
    if (!(r_lo < r_hi)) return 0.0;
    const detail::PairData d = detail::pair_data(r_lo, r_hi, a_V, profile_sq);
    const detail::Outer o = detail::outer_points(d, r_lo, r_hi, a_V, opt.reduced, profile_sq);
    const double s = detail::pair_sum(d, o, opt, [&](std::size_t i, std::size_t j, double pq, double p2, double q2) {
        return pq * pq * o.F[i] * d.F[j] / (p2 + q2 + 2.0 * pq + o.eps[i] + d.eps[j] + resolvent_shift);
    });
    return -2.0 * s;
}

inline double e_lambda_2(const ModelParams& prm, const SumOptions& opt = {}) {
    if (prm.a_W == 0.0 || !(prm.kappa < prm.cutoff)) return 0.0;
    if (!std::isfinite(prm.cutoff)) throw contract_violation("E2 needs a finite cutoff");
    return quartic_pair_sum(prm.kappa, prm.cutoff, prm.a_V,
                            [&](const IntVec3&, double p2) {
                                const double f = gross_profile_sq(p2, prm);
                                return f * f;
                            },
                            opt);
}

// ---------------------------------------------------------------------------
// theta0

struct Theta0Result {
    double value = 0.0;
    double tail_bound = 0.0;  ///< 0 for a finite cutoff
    double cutoff_used = 0.0;
};

struct Theta0Options {
    SumOptions sums;
    double tol = 1e-6;          ///< on the tail bound, relative to max(1, |value|)
    double start_cutoff = 10.0 * two_pi;
};

namespace detail {

inline double theta0_finite(const ModelParams& prm, const Vec3& K, double phi, const SumOptions& opt) {
    if (prm.a_W == 0.0 || !(prm.kappa < prm.cutoff)) return 0.0;
    auto F = [&](const IntVec3&, double p2) {
        const double f = gross_profile_sq(p2, prm);
        return f * f;
    };
    const bool k_zero = K[0] == 0.0 && K[1] == 0.0 && K[2] == 0.0;
    const PairData d = pair_data(prm.kappa, prm.cutoff, prm.a_V, F);
    SumOptions o = opt;
    o.reduced = opt.reduced && k_zero;
    const Outer out = outer_points(d, prm.kappa, prm.cutoff, prm.a_V, o.reduced, F);
    if (k_zero) {
        return 2.0 * pair_sum(d, out, o, [&](std::size_t i, std::size_t j, double pq, double p2, double q2) {
            const double d0 = p2 + q2 + 2.0 * pq + out.eps[i] + d.eps[j] + resolvent_shift;
            return pq * pq * out.F[i] * d.F[j] * phi / ((d0 + phi) * d0);
        });
    }
    const double K2 = polaron::norm2(K);
    std::vector<double> Kk(out.p.size()), Kl(d.pts.n.size());
    for (std::size_t i = 0; i < Kk.size(); ++i) Kk[i] = polaron::dot(K, out.p[i]);
    for (std::size_t j = 0; j < Kl.size(); ++j)
        Kl[j] = K[0] * d.pts.kx[j] + K[1] * d.pts.ky[j] + K[2] * d.pts.kz[j];
    return 2.0 * pair_sum(d, out, o, [&](std::size_t i, std::size_t j, double pq, double p2, double q2) {
        const double s2 = p2 + q2 + 2.0 * pq;
        const double a2 = K2 + s2 + 2.0 * (Kk[i] + Kl[j]);
        const double e = out.eps[i] + d.eps[j] + resolvent_shift;
        return pq * pq * out.F[i] * d.F[j] * (a2 + phi - s2) / ((a2 + e + phi) * (s2 + e));
    });
}

}  // namespace detail

/// Zero-particle kernel at impurity momentum K and phonon energy phi. An
/// infinite cutoff doubles a finite one until the estimated tail is below tol.
inline Theta0Result theta0(const ModelParams& prm, const Vec3& K, double phi,
                           const Theta0Options& opt = {}) {
    if (!(phi >= 0.0)) throw contract_violation("phonon energy must be >= 0");
    Theta0Result r;
    if (std::isfinite(prm.cutoff)) {
        r.value = detail::theta0_finite(prm, K, phi, opt.sums);
        r.cutoff_used = prm.cutoff;
        return r;
    }
    if (prm.a_W == 0.0) return r;
    ModelParams p = prm;
    p.cutoff = std::max(opt.start_cutoff, 2.0 * prm.kappa);
    double prev = detail::theta0_finite(p, K, phi, opt.sums);
    double bound = std::numeric_limits<double>::infinity();
    double last_step = 0.0;
    while (true) {
        p.cutoff *= 2.0;
        double cur;
        try {
            cur = detail::theta0_finite(p, K, phi, opt.sums);
        } catch (const capacity_error&) {
            throw accuracy_error("theta0 tail bound not reached within the pair budget", bound);
        }
        // The remainder decays like cutoff^-2, so steps shrink by 4 asymptotically;
        // before that the observed ratio (at least 2) is used.
        const double step = std::abs(cur - prev);
        const double ratio = last_step > 0.0 && step > 0.0 ? std::clamp(last_step / step, 2.0, 4.0) : 2.0;
        bound = step / (ratio - 1.0);
        last_step = step;
        prev = cur;
        if (bound <= opt.tol * std::max(1.0, std::abs(cur))) break;
    }
    r.value = prev;
    r.tail_bound = bound;
    r.cutoff_used = p.cutoff;
    return r;
}

// ---------------------------------------------------------------------------
// Reports

struct CountertermReport {
    double cutoff = 0.0;
    double kappa = 0.0;
    double E1 = 0.0;
    double E2 = 0.0;
    double E_total = 0.0;
    double tail_bound = 0.0;
    std::size_t lattice_size = 0;
};

inline CountertermReport counterterms(const ModelParams& prm, const SumOptions& opt = {}) {
    CountertermReport r;
    r.cutoff = prm.cutoff;
    r.kappa = prm.kappa;
    r.E1 = e_lambda_1(prm);
    r.E2 = e_lambda_2(prm, opt);
    r.E_total = r.E1 + r.E2;
    const ShellReps reps = annulus_reps(prm.kappa, prm.cutoff);
    for (double w : reps.weight) r.lattice_size += static_cast<std::size_t>(w);
    return r;
}

}  // namespace polaron
