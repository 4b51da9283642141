#pragma once

// Momentum bookkeeping on the unit torus: momenta are 2*pi times an integer
// triple. Triples are stored exactly and the 2*pi factor is applied on demand.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "polaron/errors.hpp"

namespace polaron {

inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double infinite_cutoff = std::numeric_limits<double>::infinity();

/// Integer triple labelling the momentum 2*pi*(x, y, z).
struct IntVec3 {
    int x = 0;
    int y = 0;
    int z = 0;

    constexpr auto operator<=>(const IntVec3&) const = default;

    constexpr IntVec3 operator+(const IntVec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr IntVec3 operator-(const IntVec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr IntVec3 operator-() const { return {-x, -y, -z}; }
    constexpr IntVec3& operator+=(const IntVec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    constexpr IntVec3& operator-=(const IntVec3& o) {
        x -= o.x;
        y -= o.y;
        z -= o.z;
        return *this;
    }
    constexpr IntVec3 operator*(int s) const { return {s * x, s * y, s * z}; }

    constexpr std::int64_t norm2() const {
        return std::int64_t(x) * x + std::int64_t(y) * y + std::int64_t(z) * z;
    }
    constexpr bool is_zero() const { return x == 0 && y == 0 && z == 0; }
};

constexpr std::int64_t dot(const IntVec3& a, const IntVec3& b) {
    return std::int64_t(a.x) * b.x + std::int64_t(a.y) * b.y + std::int64_t(a.z) * b.z;
}

struct IntVec3Hash {
    std::size_t operator()(const IntVec3& v) const noexcept {
        std::uint64_t h = static_cast<std::uint32_t>(v.x);
        h = h * 0x100000001b3ull ^ static_cast<std::uint32_t>(v.y);
        h = h * 0x100000001b3ull ^ static_cast<std::uint32_t>(v.z);
        return static_cast<std::size_t>(h ^ (h >> 29));
    }
};

using Vec3 = std::array<double, 3>;

constexpr Vec3 to_physical(const IntVec3& n) {
    return {two_pi * n.x, two_pi * n.y, two_pi * n.z};
}

inline double norm2(const Vec3& p) { return p[0] * p[0] + p[1] * p[1] + p[2] * p[2]; }
inline double norm(const Vec3& p) { return std::sqrt(norm2(p)); }
inline double dot(const Vec3& a, const Vec3& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

/// Physical |p|^2 of the lattice momentum labelled by n.
constexpr double momentum_sq(const IntVec3& n) {
    return two_pi * two_pi * static_cast<double>(n.norm2());
}

/// Physical p.q of two lattice momenta.
constexpr double momentum_dot(const IntVec3& a, const IntVec3& b) {
    return two_pi * two_pi * static_cast<double>(dot(a, b));
}

namespace detail {
// Slack for closed-ball tests so that radii like 2*pi*2.0 include the n^2 = 4 shell.
inline constexpr double radius_slack = 1e-12;
}  // namespace detail

/// |p| <= radius for the closed ball, with the radius given in physical units.
inline bool within_radius(double p2, double radius) {
    if (std::isinf(radius)) return true;
    return p2 <= radius * radius * (1.0 + detail::radius_slack);
}

/// |p| > radius; the complement of within_radius.
inline bool beyond_radius(double p2, double radius) { return !within_radius(p2, radius); }

// ---------------------------------------------------------------------------
// Cubic point group

/// The 48 images of n under axis permutations and sign flips.
inline std::vector<IntVec3> cubic_images(const IntVec3& n) {
    std::vector<IntVec3> out;
    out.reserve(48);
    std::array<int, 3> c{n.x, n.y, n.z};
    std::array<int, 3> perm{0, 1, 2};
    do {
        for (int s = 0; s < 8; ++s) {
            IntVec3 v{c[perm[0]] * ((s & 1) ? -1 : 1), c[perm[1]] * ((s & 2) ? -1 : 1),
                      c[perm[2]] * ((s & 4) ? -1 : 1)};
            out.push_back(v);
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return out;
}

/// Canonical orbit representative: absolute values sorted descending.
inline IntVec3 cubic_representative(const IntVec3& n) {
    std::array<int, 3> a{std::abs(n.x), std::abs(n.y), std::abs(n.z)};
    std::sort(a.begin(), a.end(), std::greater<>());
    return {a[0], a[1], a[2]};
}

/// Number of distinct points in the cubic orbit of n.
inline int cubic_orbit_size(const IntVec3& n) {
    IntVec3 r = cubic_representative(n);
    int nonzero = (r.x != 0) + (r.y != 0) + (r.z != 0);
    int perms = 6;
    if (r.x == r.y && r.y == r.z) {
        perms = 1;
    } else if (r.x == r.y || r.y == r.z) {
        perms = 3;
    }
    return perms * (1 << nonzero);
}

// ---------------------------------------------------------------------------
// MomentumLattice

/// Nonzero lattice momenta 2*pi*n with |2*pi*n| <= cutoff_radius, in
/// lexicographic order of n.
class MomentumLattice {
public:
    static constexpr std::size_t default_max_points = 8'000'000;

    MomentumLattice() = default;

    explicit MomentumLattice(double cutoff_radius,
                             std::size_t max_points = default_max_points)
        : cutoff_(cutoff_radius) {
        if (!(cutoff_radius > 0.0) || std::isinf(cutoff_radius)) {
            throw contract_violation("lattice cutoff radius must be finite and positive");
        }
        const double r = cutoff_radius / two_pi;
        half_width_ = static_cast<int>(std::floor(r * (1.0 + detail::radius_slack)));
        const double estimate = 4.0 / 3.0 * std::numbers::pi * r * r * r;
        if (estimate > 1.05 * static_cast<double>(max_points) + 64.0) {
            throw capacity_error("momentum lattice too large",
                                 static_cast<std::size_t>(estimate), max_points);
        }
        const int w = 2 * half_width_ + 1;
        slot_.assign(static_cast<std::size_t>(w) * w * w, -1);
        for (int x = -half_width_; x <= half_width_; ++x) {
            for (int y = -half_width_; y <= half_width_; ++y) {
                for (int z = -half_width_; z <= half_width_; ++z) {
                    IntVec3 n{x, y, z};
                    if (n.is_zero() || !within_radius(momentum_sq(n), cutoff_radius)) continue;
                    if (points_.size() >= max_points) {
                        throw capacity_error("momentum lattice too large", points_.size() + 1,
                                             max_points);
                    }
                    slot_[slot_of(n)] = static_cast<std::int32_t>(points_.size());
                    points_.push_back(n);
                }
            }
        }
        p2_.reserve(points_.size());
        for (const auto& n : points_) p2_.push_back(momentum_sq(n));
    }

    double cutoff_radius() const noexcept { return cutoff_; }
    std::size_t size() const noexcept { return points_.size(); }
    bool empty() const noexcept { return points_.empty(); }

    const std::vector<IntVec3>& points() const noexcept { return points_; }
    const IntVec3& operator[](std::size_t i) const { return points_[i]; }
    double momentum_sq(std::size_t i) const { return p2_[i]; }
    const std::vector<double>& momenta_sq() const noexcept { return p2_; }

    /// Largest |component| of any listed point.
    int half_width() const noexcept { return half_width_; }

    std::optional<std::size_t> find(const IntVec3& n) const {
        if (std::abs(n.x) > half_width_ || std::abs(n.y) > half_width_ ||
            std::abs(n.z) > half_width_) {
            return std::nullopt;
        }
        const auto s = slot_[slot_of(n)];
        if (s < 0) return std::nullopt;
        return static_cast<std::size_t>(s);
    }

    bool contains(const IntVec3& n) const { return find(n).has_value(); }

    std::size_t index_of(const IntVec3& n) const {
        auto i = find(n);
        if (!i) throw lookup_error("momentum not on lattice");
        return *i;
    }

private:
    std::size_t slot_of(const IntVec3& n) const {
        const std::size_t w = static_cast<std::size_t>(2 * half_width_ + 1);
        return (static_cast<std::size_t>(n.x + half_width_) * w +
                static_cast<std::size_t>(n.y + half_width_)) *
                   w +
               static_cast<std::size_t>(n.z + half_width_);
    }

    static double momentum_sq(const IntVec3& n) { return polaron::momentum_sq(n); }

    double cutoff_ = 0.0;
    int half_width_ = 0;
    std::vector<IntVec3> points_;
    std::vector<double> p2_;
    std::vector<std::int32_t> slot_;
};

/// Lattice of all nonzero momenta with |p| <= cutoff_radius.
inline MomentumLattice build_lattice(double cutoff_radius,
                                     std::size_t max_points = MomentumLattice::default_max_points) {
    return MomentumLattice(cutoff_radius, max_points);
}

// ---------------------------------------------------------------------------
// Model parameters

struct ModelParams {
    double a_V = 0.0;          ///< boson-boson scattering length
    double a_W = 0.0;          ///< boson-impurity scattering length
    double cutoff = 0.0;       ///< UV cutoff Lambda
    double kappa = 0.0;        ///< infrared threshold of the Gross transform
    int n_max = 0;             ///< boson-number truncation
    IntVec3 total_momentum{};  ///< conserved total momentum (integer label)

    void validate() const {
        if (!(a_V >= 0.0)) throw contract_violation("a_V must be >= 0");
        if (!(a_W >= 0.0)) throw contract_violation("a_W must be >= 0");
        if (!(cutoff > 0.0)) throw contract_violation("cutoff must be > 0");
        if (!(kappa >= 0.0)) throw contract_violation("kappa must be >= 0");
        if (n_max < 0) throw contract_violation("n_max must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// Dispersion and form factor

/// Bogoliubov dispersion as a function of |p|^2.
inline double dispersion_sq(double p2, double a_V) {
    return std::sqrt(p2 * p2 + 16.0 * std::numbers::pi * a_V * p2);
}

inline double dispersion(const Vec3& p, double a_V) { return dispersion_sq(norm2(p), a_V); }
inline double dispersion(const IntVec3& n, double a_V) {
    return dispersion_sq(momentum_sq(n), a_V);
}

/// Coupling 8*pi*a_W*|p|/sqrt(eps(p)) for |p|^2 = p2 inside the cutoff, 0 outside.
inline double form_factor_sq(double p2, double a_W, double a_V, double cutoff) {
    if (p2 <= 0.0) throw domain_error("form factor undefined at the zero mode");
    if (!within_radius(p2, cutoff)) return 0.0;
    if (a_W == 0.0) return 0.0;
    const double eps = dispersion_sq(p2, a_V);
    return 8.0 * std::numbers::pi * a_W * std::sqrt(p2 / eps);
}

inline double form_factor(const Vec3& p, double a_W, double a_V, double cutoff) {
    return form_factor_sq(norm2(p), a_W, a_V, cutoff);
}
inline double form_factor(const IntVec3& n, double a_W, double a_V, double cutoff) {
    return form_factor_sq(momentum_sq(n), a_W, a_V, cutoff);
}

}  // namespace polaron
