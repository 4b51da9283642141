#pragma once

// Zero-energy scattering on the unit torus (Fourier space) and in free space
// (radial reduction), plus the norms and rate fits built on top of them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "polaron/convolution.hpp"
#include "polaron/errors.hpp"
#include "polaron/lattice.hpp"
#include "polaron/summation.hpp"

namespace polaron {

enum class PotentialKind { gaussian, compact_bump, tabulated_radial };

/// Radial potential v(r) and its scaled family v_n(x) = n^2 v(n x). On the
/// torus the potential is the periodization of v_n, so its Fourier
/// coefficients are the free-space transform sampled at lattice momenta.
struct PotentialSpec {
    PotentialKind kind = PotentialKind::gaussian;
    double amplitude = 0.0;
    double range = 1.0;  ///< Gaussian width sigma, or bump support radius
    int scale_n = 1;
    std::vector<std::pair<double, double>> table;  ///< (r, v) for tabulated_radial

    static PotentialSpec gaussian(double amplitude, double sigma, int scale_n = 1) {
        return {PotentialKind::gaussian, amplitude, sigma, scale_n, {}};
    }
    static PotentialSpec compact_bump(double amplitude, double radius, int scale_n = 1) {
        return {PotentialKind::compact_bump, amplitude, radius, scale_n, {}};
    }
    static PotentialSpec tabulated(std::vector<std::pair<double, double>> rows, int scale_n = 1) {
        PotentialSpec s{PotentialKind::tabulated_radial, 1.0, 1.0, scale_n, std::move(rows)};
        if (!s.table.empty()) s.range = s.table.back().first;
        return s;
    }

    PotentialSpec scaled(int n) const {
        PotentialSpec s = *this;
        s.scale_n = n;
        return s;
    }

    /// Support radius (or effective range) of the unscaled potential.
    double reach() const {
        switch (kind) {
            case PotentialKind::gaussian: return 8.0 * range;
            case PotentialKind::compact_bump: return range;
            case PotentialKind::tabulated_radial: return table.empty() ? 0.0 : table.back().first;
        }
        return 0.0;
    }

    /// Unscaled v(r).
    double value(double r) const {
        switch (kind) {
            case PotentialKind::gaussian:
                return amplitude * std::exp(-r * r / (2.0 * range * range));
            case PotentialKind::compact_bump: {
                if (r >= range) return 0.0;
                const double t = 1.0 - (r / range) * (r / range);
                return amplitude * t * t;
            }
            case PotentialKind::tabulated_radial: {
                if (table.empty() || r > table.back().first) return 0.0;
                if (r <= table.front().first) return amplitude * table.front().second;
                auto it = std::lower_bound(table.begin(), table.end(), r,
                                           [](const auto& row, double x) { return row.first < x; });
                const auto& [r1, v1] = *it;
                const auto& [r0, v0] = *(it - 1);
                const double t = (r - r0) / (r1 - r0);
                return amplitude * (v0 + t * (v1 - v0));
            }
        }
        return 0.0;
    }

    /// Free-space transform of the unscaled v at |k|.
    double transform(double k) const {
        if (kind == PotentialKind::gaussian) {
            const double s2 = range * range;
            return amplitude * std::pow(two_pi * s2, 1.5) * std::exp(-0.5 * s2 * k * k);
        }
        return radial_transform(k);
    }

    /// Fourier coefficient of the torus potential v_n at a momentum of length |p|.
    double fourier(double p) const {
        const double n = static_cast<double>(scale_n);
        return transform(p / n) / n;
    }

    void validate() const {
        if (scale_n < 1) throw contract_violation("potential scale_n must be >= 1");
        if (!(amplitude >= 0.0)) throw contract_violation("potential amplitude must be >= 0");
        if (!(range > 0.0)) throw contract_violation("potential range must be > 0");
        if (kind == PotentialKind::tabulated_radial) {
            if (table.size() < 2) throw contract_violation("tabulated potential needs >= 2 rows");
            bool nonzero = false;
            for (std::size_t i = 0; i < table.size(); ++i) {
                if (table[i].second < 0.0) {
                    throw contract_violation("tabulated potential is negative");
                }
                if (i > 0 && !(table[i].first > table[i - 1].first)) {
                    throw contract_violation("tabulated radii must be strictly ascending");
                }
                nonzero = nonzero || table[i].second > 0.0;
            }
            if (nonzero && !(transform(0.0) > 0.0)) {
                throw contract_violation("potential has vanishing zero mode but is not zero");
            }
        }
    }

private:
    // 4*pi * int r^2 v(r) sinc(k r) dr by composite Gauss-Legendre on the
    // support, with panels refined for oscillation.
    double radial_transform(double k) const {
        const double R = reach();
        if (R <= 0.0 || amplitude == 0.0) return 0.0;
        static constexpr std::array<double, 8> x{
            -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
            0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
        static constexpr std::array<double, 8> w{
            0.1012285362903763, 0.2223810344533745, 0.3137066115312141, 0.3626837833783620,
            0.3626837833783620, 0.3137066115312141, 0.2223810344533745, 0.1012285362903763};
        std::vector<double> edges;
        if (kind == PotentialKind::tabulated_radial) {
            edges.push_back(0.0);
            for (const auto& row : table)
                if (row.first > edges.back()) edges.push_back(row.first);
        } else {
            edges = {0.0, R};
        }
        CascadeSum sum;
        for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
            const double a = edges[e], b = edges[e + 1];
            const int panels = std::max(64, static_cast<int>(std::ceil(k * (b - a) / 2.0)) * 4);
            const double h = (b - a) / panels;
            for (int i = 0; i < panels; ++i) {
                const double c = a + (i + 0.5) * h;
                for (std::size_t j = 0; j < x.size(); ++j) {
                    const double r = c + 0.5 * h * x[j];
                    const double kr = k * r;
                    const double sinc = std::abs(kr) < 1e-8 ? 1.0 - kr * kr / 6.0 : std::sin(kr) / kr;
                    sum.add(0.5 * h * w[j] * r * r * value(r) * sinc);
                }
            }
        }
        return 4.0 * std::numbers::pi * sum.value();
    }
};

/// Two-column (r, v) text, radius ascending, '#' comments.
inline PotentialSpec read_tabulated_potential(const std::string& path, int scale_n = 1) {
    std::ifstream in(path);
    if (!in) throw usage_error("cannot open potential table: " + path);
    std::vector<std::pair<double, double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        double r, v;
        if (!(ss >> r)) continue;
        if (!(ss >> v)) {
            throw usage_error(path + ":" + std::to_string(lineno) + ": expected two columns");
        }
        rows.emplace_back(r, v);
    }
    auto spec = PotentialSpec::tabulated(std::move(rows), scale_n);
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// Torus scattering

struct ScatteringOptions {
    double tol = 1e-10;
    int max_iter = 2000;
    ConvolutionMethod method = ConvolutionMethod::automatic;
};

struct ScatteringSolution {
    std::shared_ptr<const MomentumLattice> lattice;
    PotentialSpec source;
    std::vector<double> v_hat;    ///< v_hat(p) on the lattice
    std::vector<double> phi_hat;  ///< solved coefficients (after truncation, if any)
    double v_hat0 = 0.0;          ///< v_hat(0)
    double residual_norm = 0.0;   ///< ||A phi - b||_2 of the untruncated solve
    double torus_length = 0.0;    ///< coupling scale 1
    double truncation = 0.0;      ///< m of the last truncate_solution (0 = none)
    int iterations = 0;
    std::vector<std::string> warnings;

    std::size_t size() const { return phi_hat.size(); }

    double sup_norm_hat() const {
        double m = 0.0;
        for (double v : phi_hat) m = std::max(m, std::abs(v));
        return m;
    }
    /// max_p p^2 |phi_hat(p)|
    double sup_p2_hat() const {
        double m = 0.0;
        for (std::size_t i = 0; i < phi_hat.size(); ++i)
            m = std::max(m, lattice->momentum_sq(i) * std::abs(phi_hat[i]));
        return m;
    }
    /// sum_p |phi_hat(p)|, an upper bound for sup_x |phi(x)|.
    double l1_norm_hat() const {
        std::vector<double> a(phi_hat.size());
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::abs(phi_hat[i]);
        return pairwise_sum(a);
    }
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> t(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) t[i] = a[i] * b[i];
    return pairwise_sum(t);
}

inline double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline void torus_operator(const LatticeConvolution& conv, const MomentumLattice& lat,
                           const std::vector<double>& x, std::vector<double>& y,
                           std::vector<double>& scratch) {
    conv.apply(x, scratch);
    y.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = lat.momentum_sq(i) * x[i] + 0.5 * scratch[i];
}

}  // namespace detail

/// Solves p^2 phi(p) + 1/2 sum_q v_hat(p - q) phi(q) = -1/2 v_hat(p) on the
/// lattice by preconditioned conjugate gradients.
inline ScatteringSolution solve_torus_scattering(const PotentialSpec& v,
                                                 std::shared_ptr<const MomentumLattice> lattice,
                                                 const ScatteringOptions& opt = {}) {
    v.validate();
    if (!lattice) throw contract_violation("null lattice");
    const MomentumLattice& lat = *lattice;
    const std::size_t M = lat.size();

    ScatteringSolution sol;
    sol.lattice = lattice;
    sol.source = v;
    sol.v_hat0 = v.fourier(0.0);

    std::map<std::int64_t, double> cache;
    auto v_of_n2 = [&](std::int64_t n2) {
        auto it = cache.find(n2);
        if (it != cache.end()) return it->second;
        const double val = v.fourier(two_pi * std::sqrt(static_cast<double>(n2)));
        cache.emplace(n2, val);
        return val;
    };
    sol.v_hat.resize(M);
    double outer = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        sol.v_hat[i] = v_of_n2(lat[i].norm2());
        if (lat.momentum_sq(i) > 0.81 * lat.cutoff_radius() * lat.cutoff_radius())
            outer = std::max(outer, std::abs(sol.v_hat[i]));
    }
    if (sol.v_hat0 > 0.0 && outer > 1e-6 * sol.v_hat0) {
        sol.warnings.push_back("potential transform not decayed at the lattice edge (ratio " +
                               std::to_string(outer / sol.v_hat0) + ")");
    }
    sol.phi_hat.assign(M, 0.0);
    if (M == 0 || v.amplitude == 0.0) {
        sol.torus_length = sol.v_hat0 / (8.0 * std::numbers::pi);
        return sol;
    }

    LatticeConvolution conv(lat, v_of_n2, opt.method);
    std::vector<double> b(M), r(M), z(M), p(M), Ap(M), scratch;
    for (std::size_t i = 0; i < M; ++i) b[i] = -0.5 * sol.v_hat[i];
    const double target = opt.tol * detail::norm(sol.v_hat);
    std::vector<double> precond(M);
    for (std::size_t i = 0; i < M; ++i) precond[i] = 1.0 / (lat.momentum_sq(i) + 0.5 * sol.v_hat0);

    std::vector<double>& x = sol.phi_hat;
    r = b;
    for (std::size_t i = 0; i < M; ++i) z[i] = precond[i] * r[i];
    p = z;
    double rz = detail::dot(r, z);
    double rnorm = detail::norm(r);
    int it = 0;
    while (rnorm > target) {
        if (it >= opt.max_iter) {
            throw accuracy_error("torus scattering CG did not converge", rnorm);
        }
        detail::torus_operator(conv, lat, p, Ap, scratch);
        const double alpha = rz / detail::dot(p, Ap);
        for (std::size_t i = 0; i < M; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * Ap[i];
        }
        ++it;
        // Refresh the true residual periodically to stop drift.
        if (it % 50 == 0) {
            detail::torus_operator(conv, lat, x, Ap, scratch);
            for (std::size_t i = 0; i < M; ++i) r[i] = b[i] - Ap[i];
        }
        for (std::size_t i = 0; i < M; ++i) z[i] = precond[i] * r[i];
        const double rz_new = detail::dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < M; ++i) p[i] = z[i] + beta * p[i];
        rnorm = detail::norm(r);
    }
    detail::torus_operator(conv, lat, x, Ap, scratch);
    for (std::size_t i = 0; i < M; ++i) r[i] = b[i] - Ap[i];
    sol.residual_norm = detail::norm(r);
    sol.iterations = it;

    std::vector<double> t(M);
    for (std::size_t i = 0; i < M; ++i) t[i] = sol.v_hat[i] * x[i];
    sol.torus_length = (sol.v_hat0 + pairwise_sum(t)) / (8.0 * std::numbers::pi);
    return sol;
}

inline ScatteringSolution solve_torus_scattering(const PotentialSpec& v,
                                                 const MomentumLattice& lattice,
                                                 const ScatteringOptions& opt = {}) {
    return solve_torus_scattering(v, std::make_shared<const MomentumLattice>(lattice), opt);
}

/// Residual ||A phi - b||_2 of the torus equation, recomputed from scratch.
inline double scattering_residual(const ScatteringSolution& sol,
                                  ConvolutionMethod method = ConvolutionMethod::automatic) {
    const auto& lat = *sol.lattice;
    if (lat.empty()) return 0.0;
    LatticeConvolution conv(
        lat,
        [&](std::int64_t n2) { return sol.source.fourier(two_pi * std::sqrt(double(n2))); },
        method);
    std::vector<double> y, scratch;
    detail::torus_operator(conv, lat, sol.phi_hat, y, scratch);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += 0.5 * sol.v_hat[i];
    return detail::norm(y);
}

/// (1/8pi) (s v_hat(0) + s sum_p v_hat(-p) phi_hat(p)) for a caller-supplied prefactor s.
inline double torus_scattering_length(const ScatteringSolution& sol, double coupling_scale) {
    std::vector<double> t(sol.phi_hat.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = sol.v_hat[i] * sol.phi_hat[i];
    return coupling_scale * (sol.v_hat0 + pairwise_sum(t)) / (8.0 * std::numbers::pi);
}

/// Keeps phi_hat(p) only for |p| > m.
inline ScatteringSolution truncate_solution(const ScatteringSolution& sol, double m) {
    if (m < 0.0) throw contract_violation("truncation radius must be >= 0");
    ScatteringSolution out = sol;
    out.truncation = m;
    for (std::size_t i = 0; i < out.phi_hat.size(); ++i) {
        if (within_radius(sol.lattice->momentum_sq(i), m)) out.phi_hat[i] = 0.0;
    }
    return out;
}

/// (sum_p |p|^{2s} |phi_hat(p)|^2)^{1/2}
inline double sobolev_norm(const ScatteringSolution& sol, double s) {
    if (s < -1.0 || s > 2.0) throw contract_violation("sobolev index must lie in [-1, 2]");
    std::vector<double> t(sol.phi_hat.size());
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = std::pow(sol.lattice->momentum_sq(i), s) * sol.phi_hat[i] * sol.phi_hat[i];
    return std::sqrt(pairwise_sum(t));
}

// ---------------------------------------------------------------------------
// Free space

namespace detail {
// Numerov integration of u'' = v(r)/2 u from u(0) = 0; returns r - u/u' at r_max.
inline double radial_length(const PotentialSpec& v, int points, double r_max) {
    const double h = r_max / points;
    auto g = [&](double r) { return 0.5 * v.value(r); };
    const double c = h * h / 12.0;
    double u_prev = 0.0;
    double u = h * (1.0 + g(0.0) * h * h / 6.0);
    double g_prev = g(0.0), g_cur = g(h);
    for (int i = 1; i < points; ++i) {
        const double r_next = (i + 1) * h;
        const double g_next = g(r_next);
        const double u_next =
            (2.0 * u * (1.0 + 5.0 * c * g_cur) - u_prev * (1.0 - c * g_prev)) / (1.0 - c * g_next);
        u_prev = u;
        u = u_next;
        g_prev = g_cur;
        g_cur = g_next;
    }
    const double du = (u - u_prev) / h;
    return r_max - u / du;
}
}  // namespace detail

/// Scattering length of the unscaled radial potential from the zero-energy
/// equation -u'' + v u / 2 = 0. The grid is refined once; a change larger than
/// tol (relative to max(1, |a|)) raises accuracy_error.
inline double free_space_scattering_length(const PotentialSpec& v, int grid_points, double r_max,
                                           double tol = 1e-7) {
    v.validate();
    if (grid_points < 16) throw contract_violation("grid_points must be >= 16");
    if (!(r_max > 0.0)) throw contract_violation("r_max must be > 0");
    if (v.amplitude == 0.0) return 0.0;
    if (r_max < v.reach()) throw contract_violation("r_max inside the potential range");
    const double coarse = detail::radial_length(v, grid_points, r_max);
    const double fine = detail::radial_length(v, 2 * grid_points, r_max);
    if (std::abs(fine - coarse) > tol * std::max(1.0, std::abs(fine))) {
        throw accuracy_error("free-space scattering length not converged in grid", fine - coarse);
    }
    return fine;
}

// ---------------------------------------------------------------------------
// Rate fit

struct RateFit {
    double exponent = 0.0;
    double constant = 0.0;
};

/// Least-squares line through (log n, log value).
inline RateFit rate_fit(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.size() < 3) throw contract_violation("rate_fit needs at least 3 pairs");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [n, val] : pairs) {
        if (!(val > 0.0)) throw domain_error("rate_fit value must be positive");
        if (!(n > 0.0)) throw domain_error("rate_fit abscissa must be positive");
        const double x = std::log(n), y = std::log(val);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double k = static_cast<double>(pairs.size());
    const double den = k * sxx - sx * sx;
    if (den == 0.0) throw domain_error("rate_fit abscissae are all equal");
    RateFit f;
    f.exponent = (k * sxy - sx * sy) / den;
    f.constant = std::exp((sy - f.exponent * sx) / k);
    return f;
}

}  // namespace polaron
