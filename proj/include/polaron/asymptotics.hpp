#pragma once

// Explicit scalars of the ground-state energy expansion of the N-boson system
// with one impurity: the log N coefficient, its general-mass form, the
// LHY-type sum, the order-one scalar e^(U), the divergent double sum E_N, and
// the dilute-units rewrite.

#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>

#include "polaron/errors.hpp"
#include "polaron/lattice.hpp"
#include "polaron/renorm.hpp"
#include "polaron/scattering.hpp"

namespace polaron {

/// 2 pi/3 - sqrt(3)
inline constexpr double log_bracket = 2.0 * std::numbers::pi / 3.0 - std::numbers::sqrt3;

/// Default momentum-split exponent.
inline constexpr double default_alpha = 0.1;

inline double log_coefficient(double a_W) {
    if (!(a_W >= 0.0)) throw domain_error("a_W must be >= 0");
    const double a2 = a_W * a_W;
    return -32.0 * std::numbers::pi * log_bracket * a2 * a2;
}

/// Log coefficient for impurity mass m; the boson mass is 1/2.
inline double mass_coefficient(double m, double a_eff) {
    if (!(m > 0.0)) throw domain_error("impurity mass must be > 0");
    const double mu = 1.0 / (1.0 / m + 2.0);
    const double r = mu / m;
    const double a2 = a_eff * a_eff;
    return -16.0 * std::numbers::pi / mu * a2 * a2 * (std::asin(r) / r - std::sqrt(1.0 - r * r));
}

// ---------------------------------------------------------------------------
// LHY-type sum

struct LhySum {
    double value = 0.0;
    double tail = 0.0;  ///< estimated remainder beyond the summed radius (infinite cutoff only)
    double radius = 0.0;
};

/// The summand in the cancellation-free form 4 g^3 (eps + 3 p^2)/(eps + p^2)^3, g = 4 pi a_V.
inline double lhy_summand(double p2, double a_V) {
    const double g = 4.0 * std::numbers::pi * a_V;
    const double eps = dispersion_sq(p2, a_V);
    const double s = eps + p2;
    return 4.0 * g * g * g * (eps + 3.0 * p2) / (s * s * s);
}

/// Sum of 1/2 eps - 1/2 p^2 - 4 pi a_V + (4 pi a_V)^2/p^2 over 0 < |p| <= cutoff.
/// An infinite cutoff sums to `radius` and adds the tail (4 pi a_V)^3/(pi^2 radius).
inline LhySum lhy_sum(double a_V, double cutoff, double radius = 80.0 * two_pi) {
    if (!(a_V >= 0.0)) throw domain_error("a_V must be >= 0");
    LhySum s;
    if (a_V == 0.0) return s;
    const double r = std::isfinite(cutoff) ? cutoff : radius;
    s.radius = r;
    s.value = annulus_sum(0.0, r, [&](double p2) { return lhy_summand(p2, a_V); });
    if (!std::isfinite(cutoff)) {
        const double g = 4.0 * std::numbers::pi * a_V;
        s.tail = g * g * g / (std::numbers::pi * std::numbers::pi * r);
        s.value += s.tail;
    }
    return s;
}

// ---------------------------------------------------------------------------
// E_N

enum class Interaction { exact_vN, coulomb_tail };

struct ENOptions {
    SumOptions sums;
    double alpha = default_alpha;
    /// Solved impurity scattering problem at this N (exact_vN only).
    const ScatteringSolution* impurity = nullptr;
    double coupling_scale = 1.0;  ///< sqrt(N) for W_N
};

/// -2 sum (p.q)^2 v(p)^2 v(q)^2/((p+q)^2 + eps(p) + eps(q) + 1) over |p|,|q| <= cutoff.
inline double e_n_sum(double N, const ModelParams& prm, Interaction mode, double cutoff,
                      const ENOptions& opt = {}) {
    if (!(N > 0.0)) throw domain_error("N must be > 0");
    if (prm.a_W == 0.0) return 0.0;
    if (mode == Interaction::coulomb_tail) {
        const double c = 4.0 * std::numbers::pi * prm.a_W;
        return quartic_pair_sum(0.0, cutoff, prm.a_V,
                                [c](const IntVec3&, double p2) {
                                    const double v = c / p2;
                                    return v * v;
                                },
                                opt.sums);
    }
    if (!opt.impurity) throw contract_violation("exact_vN needs a solved impurity scattering problem");
    const ScatteringSolution& sol = *opt.impurity;
    const MomentumLattice& lat = *sol.lattice;
    if (cutoff > lat.cutoff_radius() * (1.0 + detail::radius_slack))
        throw contract_violation("cutoff exceeds the scattering lattice");
    const double split = std::pow(N, opt.alpha);
    const ModelParams low{prm.a_V, prm.a_W, split, prm.kappa, 0, {}};
    return quartic_pair_sum(
        0.0, cutoff, prm.a_V,
        [&](const IntVec3& n, double p2) {
            const double v = within_radius(p2, split) ? gross_profile_sq(p2, low)
                                                      : opt.coupling_scale * sol.phi_hat[lat.index_of(n)];
            return v * v;
        },
        opt.sums);
}

// ---------------------------------------------------------------------------
// e^(U)

struct ScatteringInputs {
    std::optional<double> aV_torus;  ///< torus length of V_N, already multiplied by its scale
    std::optional<double> aW_torus;
};

struct EUBreakdown {
    double mean_field_V_shift = 0.0;  ///< 4 pi N (a~_V - a_V)
    double mean_field_W_shift = 0.0;  ///< 8 pi sqrt(N) (a~_W - a_W)
    double lhy = 0.0;
    double impurity_sum = 0.0;
    double total = 0.0;
    double split = 0.0;  ///< N^alpha
    double alpha = default_alpha;
};

inline EUBreakdown scalar_e_U(double N, const ModelParams& prm, const ScatteringInputs& in,
                              double alpha = default_alpha) {
    if (!(N > 0.0)) throw domain_error("N must be > 0");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw contract_violation("alpha must lie in (0, 1]");
    EUBreakdown b;
    b.alpha = alpha;
    b.split = std::pow(N, alpha);
    if (prm.a_V != 0.0 && !in.aV_torus) throw contract_violation("missing torus length of V_N");
    if (prm.a_W != 0.0 && !in.aW_torus) throw contract_violation("missing torus length of W_N");
    if (in.aV_torus) b.mean_field_V_shift = 4.0 * std::numbers::pi * N * (*in.aV_torus - prm.a_V);
    if (in.aW_torus)
        b.mean_field_W_shift = 8.0 * std::numbers::pi * std::sqrt(N) * (*in.aW_torus - prm.a_W);
    b.lhy = lhy_sum(prm.a_V, b.split).value;
    if (prm.a_W != 0.0) {
        const double c = 8.0 * std::numbers::pi * prm.a_W;
        b.impurity_sum = c * c * annulus_sum(0.0, b.split, [&](double p2) {
            double t = 0.5 / p2;
            if (!within_radius(p2, prm.kappa)) {
                const double eps = dispersion_sq(p2, prm.a_V);
                t -= p2 / ((p2 + eps) * eps);
            }
            return t;
        });
    }
    b.total = b.mean_field_V_shift + b.mean_field_W_shift + b.lhy + b.impurity_sum;
    return b;
}

// ---------------------------------------------------------------------------
// Expansion

struct ExpansionBreakdown {
    double N = 0.0;
    std::map<std::string, double> terms;
    double total = 0.0;
    std::string method_notes;
};

struct ExpansionOptions {
    ENOptions en;
    Interaction mode = Interaction::coulomb_tail;
    double alpha = default_alpha;
};

/// 4 pi a_V (N - 1) + 8 pi a_W sqrt(N) + E_N + e^(U), with E_N cut at |p| <= sqrt(N).
inline ExpansionBreakdown energy_expansion(double N, const ModelParams& prm,
                                           const ScatteringInputs& in,
                                           const ExpansionOptions& opt = {}) {
    ExpansionBreakdown e;
    e.N = N;
    e.terms["mean_field_V"] = 4.0 * std::numbers::pi * prm.a_V * (N - 1.0);
    e.terms["mean_field_W"] = 8.0 * std::numbers::pi * prm.a_W * std::sqrt(N);
    e.terms["log_term"] = e_n_sum(N, prm, opt.mode, std::sqrt(N), opt.en);
    e.terms["order_one"] = scalar_e_U(N, prm, in, opt.alpha).total;
    CascadeSum s;
    for (const auto& [k, v] : e.terms) s.add(v);
    e.total = s.value();
    e.method_notes = std::string("E_N,W replaced by E_N (O(1) difference); mode=") +
                     (opt.mode == Interaction::coulomb_tail ? "coulomb_tail" : "exact_vN") +
                     "; cutoff sqrt(N); alpha=" + std::to_string(opt.alpha);
    return e;
}

// ---------------------------------------------------------------------------
// Dilute units

struct DiluteUnits {
    double gas_parameter = 0.0;   ///< rho a^3
    double polaron_alpha = 0.0;   ///< a_W^2/(a l_GP)
    double N_equiv = 0.0;         ///< (rho a^3)^(-1/2)
    double length_GP = 0.0;       ///< (rho a)^(-1/2)
    double leading = 0.0;         ///< 4 pi a rho^2
    double correction_W = 0.0;    ///< relative to the leading term
    double correction_log = 0.0;  ///< relative to the leading term
};

inline DiluteUnits dilute_units(double rho, double a, double a_W) {
    if (!(rho > 0.0 && a > 0.0)) throw domain_error("density and scattering length must be > 0");
    if (!(a_W >= 0.0)) throw domain_error("a_W must be >= 0");
    DiluteUnits d;
    d.gas_parameter = rho * a * a * a;
    if (!(d.gas_parameter < 1.0)) throw domain_error("not dilute: rho a^3 >= 1");
    d.length_GP = 1.0 / std::sqrt(rho * a);
    d.polaron_alpha = a_W * a_W / (a * d.length_GP);
    d.N_equiv = 1.0 / std::sqrt(d.gas_parameter);
    d.leading = 4.0 * std::numbers::pi * a * rho * rho;
    const double al = d.polaron_alpha;
    d.correction_W = 2.0 * std::sqrt(al) * std::pow(d.gas_parameter, 0.25);
    d.correction_log = -8.0 * log_bracket * al * al * std::sqrt(d.gas_parameter) * std::log(d.N_equiv);
    return d;
}

inline std::map<std::string, double> to_map(const DiluteUnits& d) {
    return {{"gas_parameter", d.gas_parameter}, {"polaron_alpha", d.polaron_alpha},
            {"N_equiv", d.N_equiv},             {"length_GP", d.length_GP},
            {"leading", d.leading},             {"correction_W", d.correction_W},
            {"correction_log", d.correction_log}};
}

}  // namespace polaron
