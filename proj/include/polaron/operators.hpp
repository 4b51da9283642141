#pragma once

// Operators on a SectorBasis. Creation of a boson in mode p moves momentum p
// from the impurity to the field, so every amplitude below is real and the
// sector Hamiltonian is a real symmetric matrix.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "polaron/errors.hpp"
#include "polaron/fock.hpp"
#include "polaron/lattice.hpp"
#include "polaron/parallel.hpp"

namespace polaron {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Matrix-free symmetric operator: apply(x, y) sets y = A x.
struct OperatorHandle {
    std::shared_ptr<const SectorBasis> basis;  ///< may be null for bare operators
    std::size_t dim = 0;
    std::function<void(std::span<const double>, std::span<double>)> apply;
    std::vector<double> diag;  ///< empty when not cached
    std::string label;

    Vector operator*(const Vector& x) const {
        Vector y(static_cast<Eigen::Index>(dim));
        apply({x.data(), dim}, {y.data(), dim});
        return y;
    }
};

struct DenseOperator {
    std::shared_ptr<const SectorBasis> basis;
    Matrix matrix;
    std::string label;
    bool hermitian = true;
    bool unitary = false;

    std::size_t dim() const { return static_cast<std::size_t>(matrix.rows()); }
    double max_abs() const { return matrix.size() ? matrix.cwiseAbs().maxCoeff() : 0.0; }
    double hermiticity_defect() const {
        return matrix.size() ? (matrix - matrix.transpose()).cwiseAbs().maxCoeff() : 0.0;
    }
    double unitarity_defect() const {
        if (!matrix.size()) return 0.0;
        Matrix g = matrix.transpose() * matrix;
        g -= Matrix::Identity(g.rows(), g.cols());
        return g.cwiseAbs().maxCoeff();
    }
};

/// Wraps a dense matrix as a matrix-free handle.
inline OperatorHandle as_handle(const DenseOperator& d) {
    OperatorHandle h;
    h.basis = d.basis;
    h.dim = d.dim();
    h.label = d.label;
    auto m = std::make_shared<const Matrix>(d.matrix);
    h.apply = [m](std::span<const double> x, std::span<double> y) {
        Eigen::Map<const Vector> xv(x.data(), static_cast<Eigen::Index>(x.size()));
        Eigen::Map<Vector> yv(y.data(), static_cast<Eigen::Index>(y.size()));
        yv.noalias() = (*m) * xv;
    };
    h.diag.resize(h.dim);
    for (std::size_t i = 0; i < h.dim; ++i) h.diag[i] = d.matrix(i, i);
    return h;
}

/// Densifies a handle column by column.
inline Matrix to_dense(const OperatorHandle& op) {
    const auto n = static_cast<Eigen::Index>(op.dim);
    Matrix m(n, n);
    Vector e = Vector::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        e[j] = 1.0;
        op.apply({e.data(), op.dim}, {m.col(j).data(), op.dim});
        e[j] = 0.0;
    }
    return m;
}

// ---------------------------------------------------------------------------
// Single-boson moves

namespace detail {

/// Sorted modes of state i with mode p inserted.
inline void with_inserted(std::span<const std::uint32_t> s, std::uint32_t p,
                          std::vector<std::uint32_t>& out) {
    out.assign(s.begin(), s.end());
    out.insert(std::upper_bound(out.begin(), out.end(), p), p);
}

/// Sorted modes of state i with one copy of mode p removed (p must be present).
inline void with_removed(std::span<const std::uint32_t> s, std::uint32_t p,
                         std::vector<std::uint32_t>& out) {
    out.assign(s.begin(), s.end());
    out.erase(std::lower_bound(out.begin(), out.end(), p));
}

}  // namespace detail

/// Calls fn(j, mode, sqrt(n_mode + 1)) for every state j = a*_mode |i> in the
/// basis; modes with zero weight are skipped.
template <class Fn>
void for_each_creation(const SectorBasis& b, std::size_t i, const std::vector<double>& weight,
                       std::vector<std::uint32_t>& scratch, Fn&& fn) {
    if (b.count(i) >= b.n_max()) return;
    const auto s = b.modes(i);
    const std::uint32_t M = static_cast<std::uint32_t>(b.lattice().size());
    for (std::uint32_t p = 0; p < M; ++p) {
        if (weight[p] == 0.0) continue;
        detail::with_inserted(s, p, scratch);
        auto j = b.find(scratch);
        if (!j) continue;
        const int n = static_cast<int>(std::count(s.begin(), s.end(), p));
        fn(*j, p, std::sqrt(static_cast<double>(n + 1)));
    }
}

/// Calls fn(j, mode, sqrt(n_mode)) for every state j = a_mode |i> in the basis.
template <class Fn>
void for_each_annihilation(const SectorBasis& b, std::size_t i,
                           std::vector<std::uint32_t>& scratch, Fn&& fn) {
    const auto s = b.modes(i);
    for (std::size_t k = 0; k < s.size();) {
        const std::uint32_t p = s[k];
        std::size_t e = k;
        while (e < s.size() && s[e] == p) ++e;
        detail::with_removed(s, p, scratch);
        auto j = b.find(scratch);
        if (j) fn(*j, p, std::sqrt(static_cast<double>(e - k)));
        k = e;
    }
}

// ---------------------------------------------------------------------------
// Hamiltonian

struct ModeTables {
    std::vector<double> eps;     ///< dispersion per mode
    std::vector<double> w_hat;   ///< form factor per mode (0 outside the cutoff)
};

inline ModeTables mode_tables(const MomentumLattice& lat, const ModelParams& prm) {
    ModeTables t;
    t.eps.resize(lat.size());
    t.w_hat.resize(lat.size());
    for (std::size_t m = 0; m < lat.size(); ++m) {
        t.eps[m] = dispersion_sq(lat.momentum_sq(m), prm.a_V);
        t.w_hat[m] = form_factor_sq(lat.momentum_sq(m), prm.a_W, prm.a_V, prm.cutoff);
    }
    return t;
}

/// k_imp^2 + sum_k n_k eps(k) for state i.
inline double free_energy(const SectorBasis& b, std::size_t i, const std::vector<double>& eps) {
    double e = momentum_sq(b.impurity_momentum(i));
    for (auto m : b.modes(i)) e += eps[m];
    return e;
}

struct OperatorOptions {
    unsigned workers = 1;
};

namespace detail {
inline void check_cutoff(const SectorBasis& b, const ModelParams& prm) {
    prm.validate();
    const double lat_r = b.lattice().cutoff_radius();
    if (!std::isinf(prm.cutoff) && prm.cutoff > lat_r * (1.0 + radius_slack)) {
        // Modes between the lattice edge and the cutoff would be silently lost.
        const double next = lat_r / two_pi;
        const double want = prm.cutoff / two_pi;
        if (std::floor(want * want + 1e-9) > std::floor(next * next + 1e-9)) {
            throw contract_violation("cutoff exceeds the basis lattice");
        }
    }
    if (std::isinf(prm.cutoff)) throw contract_violation("cutoff must be finite for a sector operator");
}
}  // namespace detail

/// Cutoff Hamiltonian -Delta_x + dGamma(eps) + a(w) + a*(w) on the sector.
inline OperatorHandle hbf_operator(std::shared_ptr<const SectorBasis> basis, const ModelParams& prm,
                                   const OperatorOptions& opt = {}) {
    detail::check_cutoff(*basis, prm);
    auto tables = std::make_shared<const ModeTables>(mode_tables(basis->lattice(), prm));
    OperatorHandle h;
    h.basis = basis;
    h.dim = basis->size();
    h.label = "H_BF";
    h.diag.resize(h.dim);
    for (std::size_t i = 0; i < h.dim; ++i) h.diag[i] = free_energy(*basis, i, tables->eps);
    auto diag = std::make_shared<const std::vector<double>>(h.diag);
    const unsigned workers = opt.workers;
    h.apply = [basis, tables, diag, workers](std::span<const double> x, std::span<double> y) {
        const SectorBasis& b = *basis;
        const std::size_t n = b.size();
        constexpr std::size_t chunk = 64;
        parallel_for((n + chunk - 1) / chunk, workers, [&](std::size_t c) {
            std::vector<std::uint32_t> scratch;
            const std::size_t hi = std::min(n, (c + 1) * chunk);
            for (std::size_t i = c * chunk; i < hi; ++i) {
                double acc = (*diag)[i] * x[i];
                for_each_creation(b, i, tables->w_hat, scratch,
                                  [&](std::size_t j, std::uint32_t p, double amp) {
                                      acc += tables->w_hat[p] * amp * x[j];
                                  });
                for_each_annihilation(b, i, scratch,
                                      [&](std::size_t j, std::uint32_t p, double amp) {
                                          acc += tables->w_hat[p] * amp * x[j];
                                      });
                y[i] = acc;
            }
        });
    };
    return h;
}

inline OperatorHandle hbf_operator(const SectorBasis& basis, const ModelParams& prm,
                                   const OperatorOptions& opt = {}) {
    return hbf_operator(std::make_shared<const SectorBasis>(basis), prm, opt);
}

/// Dense assembly of the cutoff Hamiltonian.
inline DenseOperator hbf_dense(std::shared_ptr<const SectorBasis> basis, const ModelParams& prm,
                               std::size_t cap = 4000) {
    detail::check_cutoff(*basis, prm);
    if (basis->size() > cap) throw capacity_error("dense assembly", basis->size(), cap);
    const auto t = mode_tables(basis->lattice(), prm);
    const auto n = static_cast<Eigen::Index>(basis->size());
    DenseOperator d{basis, Matrix::Zero(n, n), "H_BF", true, false};
    std::vector<std::uint32_t> scratch;
    for (Eigen::Index i = 0; i < n; ++i) {
        d.matrix(i, i) = free_energy(*basis, i, t.eps);
        for_each_creation(*basis, i, t.w_hat, scratch, [&](std::size_t j, std::uint32_t p, double amp) {
            const double v = t.w_hat[p] * amp;
            d.matrix(j, i) += v;
            d.matrix(i, j) += v;
        });
    }
    return d;
}

/// Diagonal operator sum_k n_k symbol(k).
inline OperatorHandle dgamma_operator(std::shared_ptr<const SectorBasis> basis,
                                      const std::vector<double>& symbol) {
    if (symbol.size() != basis->lattice().size())
        throw contract_violation("symbol must be given on every lattice mode");
    OperatorHandle h;
    h.basis = basis;
    h.dim = basis->size();
    h.label = "dGamma";
    h.diag.resize(h.dim);
    for (std::size_t i = 0; i < h.dim; ++i) {
        double s = 0.0;
        for (auto m : basis->modes(i)) s += symbol[m];
        h.diag[i] = s;
    }
    auto diag = std::make_shared<const std::vector<double>>(h.diag);
    h.apply = [diag](std::span<const double> x, std::span<double> y) {
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = (*diag)[i] * x[i];
    };
    return h;
}

inline OperatorHandle dgamma_operator(std::shared_ptr<const SectorBasis> basis,
                                      const std::function<double(const IntVec3&)>& symbol) {
    std::vector<double> s(basis->lattice().size());
    for (std::size_t m = 0; m < s.size(); ++m) s[m] = symbol(basis->lattice()[m]);
    return dgamma_operator(basis, s);
}

inline OperatorHandle number_operator(std::shared_ptr<const SectorBasis> basis) {
    auto h = dgamma_operator(basis, std::vector<double>(basis->lattice().size(), 1.0));
    h.label = "N";
    return h;
}

// ---------------------------------------------------------------------------
// Field operators and the Weyl unitary

/// Dense a*(g): <i + p| a*(g) |i> = g(p) sqrt(n_p + 1).
inline Matrix creation_dense(const SectorBasis& b, const std::vector<double>& g) {
    const auto n = static_cast<Eigen::Index>(b.size());
    Matrix m = Matrix::Zero(n, n);
    std::vector<std::uint32_t> scratch;
    for (Eigen::Index i = 0; i < n; ++i)
        for_each_creation(b, i, g, scratch,
                          [&](std::size_t j, std::uint32_t p, double amp) { m(j, i) += g[p] * amp; });
    return m;
}

/// Dense a(g), the transpose of a*(g).
inline Matrix annihilation_dense(const SectorBasis& b, const std::vector<double>& g) {
    return creation_dense(b, g).transpose();
}

/// exp(a*(f) - a(f)) for a real per-mode profile f.
inline DenseOperator weyl_unitary(std::shared_ptr<const SectorBasis> basis,
                                  const std::vector<double>& profile, std::size_t cap = 4000) {
    if (basis->size() > cap) throw capacity_error("Weyl unitary", basis->size(), cap);
    if (profile.size() != basis->lattice().size())
        throw contract_violation("profile must be given on every lattice mode");
    Matrix a_star = creation_dense(*basis, profile);
    Matrix gen = a_star - a_star.transpose();
    DenseOperator d{basis, gen.exp(), "U", false, true};
    return d;
}

// ---------------------------------------------------------------------------
// Dressed right-hand side

/// Sum of the normal-ordered terms obtained by conjugating the cutoff
/// Hamiltonian with the Weyl unitary of the Gross profile. Here g = i grad f
/// has coefficients -p f(p), and i grad_x acts as minus the impurity momentum.
inline DenseOperator dressed_rhs(std::shared_ptr<const SectorBasis> basis, const ModelParams& prm,
                                 std::size_t cap = 4000) {
    detail::check_cutoff(*basis, prm);
    if (prm.kappa > prm.cutoff) throw contract_violation("kappa must not exceed the cutoff");
    if (basis->size() > cap) throw capacity_error("dressed operator", basis->size(), cap);
    const SectorBasis& b = *basis;
    const auto& lat = b.lattice();
    const std::size_t M = lat.size();
    const auto t = mode_tables(lat, prm);

    std::vector<double> w_low(M), f(M);
    for (std::size_t m = 0; m < M; ++m) {
        const double p2 = lat.momentum_sq(m);
        if (within_radius(p2, prm.kappa)) {
            w_low[m] = t.w_hat[m];
        } else {
            f[m] = -t.w_hat[m] / (p2 + t.eps[m]);
        }
    }
    std::vector<double> active(M);
    for (std::size_t m = 0; m < M; ++m) active[m] = f[m] != 0.0 ? 1.0 : 0.0;

    const auto n = static_cast<Eigen::Index>(b.size());
    Matrix H = Matrix::Zero(n, n);
    std::vector<std::uint32_t> s1, s2;

    double constant = 0.0;
    for (std::size_t m = 0; m < M; ++m) constant += t.w_hat[m] * f[m];

    for (Eigen::Index i = 0; i < n; ++i) {
        H(i, i) += free_energy(b, i, t.eps) + constant;
        const IntVec3 k_in = b.impurity_momentum(i);
        // a*(w_kappa) + a(w_kappa)
        for_each_creation(b, i, w_low, s1, [&](std::size_t j, std::uint32_t p, double amp) {
            H(j, i) += w_low[p] * amp;
            H(i, j) += w_low[p] * amp;
        });
        // -2 a*(g) i grad_x and its adjoint -2 i grad_x a(g).
        for_each_creation(b, i, active, s1, [&](std::size_t j, std::uint32_t p, double amp) {
            const double pk = two_pi * two_pi * static_cast<double>(dot(lat[p], k_in));
            const double v = -2.0 * f[p] * pk * amp;
            H(j, i) += v;
            H(i, j) += v;
        });
        // a*(g)^2 + a(g)^2 with coefficient (p.q) f(p) f(q).
        for_each_creation(b, i, active, s1, [&](std::size_t j, std::uint32_t p, double amp1) {
            for_each_creation(b, j, active, s2, [&](std::size_t l, std::uint32_t q, double amp2) {
                const double pq = momentum_dot(lat[p], lat[q]);
                const double v = pq * f[p] * f[q] * amp1 * amp2;
                H(l, i) += v;
                H(i, l) += v;
            });
        });
        // 2 a*(g) a(g)
        for_each_annihilation(b, i, s1, [&](std::size_t j, std::uint32_t q, double amp1) {
            if (f[q] == 0.0) return;
            for_each_creation(b, j, active, s2, [&](std::size_t l, std::uint32_t p, double amp2) {
                const double pq = momentum_dot(lat[p], lat[q]);
                H(l, i) += 2.0 * pq * f[p] * f[q] * amp1 * amp2;
            });
        });
    }
    return DenseOperator{basis, std::move(H), "dressed", true, false};
}

/// Gross profile vector on the basis lattice: -w(p)/(p^2 + eps(p)) for kappa < |p| <= cutoff.
inline std::vector<double> gross_profile_modes(const MomentumLattice& lat, const ModelParams& prm) {
    const auto t = mode_tables(lat, prm);
    std::vector<double> f(lat.size(), 0.0);
    for (std::size_t m = 0; m < lat.size(); ++m) {
        const double p2 = lat.momentum_sq(m);
        if (!within_radius(p2, prm.kappa)) f[m] = -t.w_hat[m] / (p2 + t.eps[m]);
    }
    return f;
}

/// Index mask of states with at most `max_bosons` bosons.
inline std::vector<Eigen::Index> states_up_to(const SectorBasis& b, int max_bosons) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < b.size(); ++i)
        if (b.count(i) <= max_bosons) idx.push_back(static_cast<Eigen::Index>(i));
    return idx;
}

inline Matrix restrict(const Matrix& m, const std::vector<Eigen::Index>& idx) {
    const auto k = static_cast<Eigen::Index>(idx.size());
    Matrix r(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index c = 0; c < k; ++c) r(a, c) = m(idx[a], idx[c]);
    return r;
}

// ---------------------------------------------------------------------------
// Binary dump: "PLRN" magic, uint32 version, uint64 rows, uint64 cols, then
// row-major float64 entries, all little-endian.

inline void dump_matrix(const std::string& path, const Matrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw usage_error("cannot write " + path);
    const char magic[4] = {'P', 'L', 'R', 'N'};
    const std::uint32_t version = 1;
    const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
    const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double v = m(i, j);
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
}

inline Matrix load_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw usage_error("cannot read " + path);
    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t rows = 0, cols = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&rows), sizeof rows);
    in.read(reinterpret_cast<char*>(&cols), sizeof cols);
    if (!in || std::string(magic, 4) != "PLRN" || version != 1)
        throw usage_error("not a matrix dump: " + path);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            double v;
            in.read(reinterpret_cast<char*>(&v), sizeof v);
            m(i, j) = v;
        }
    if (!in) throw usage_error("truncated matrix dump: " + path);
    return m;
}

/// Sector basis as text: one line per state, "index count mode:momentum...".
inline void dump_basis(const std::string& path, const SectorBasis& b) {
    std::ofstream out(path);
    if (!out) throw usage_error("cannot write " + path);
    const auto P = b.total_momentum();
    out << "# dim " << b.size() << " n_max " << b.n_max() << " P " << P.x << ' ' << P.y << ' '
        << P.z << '\n';
    for (std::size_t i = 0; i < b.size(); ++i) {
        out << i << ' ' << b.count(i);
        for (const auto& o : b.occupations(i))
            out << ' ' << o.momentum.x << ',' << o.momentum.y << ',' << o.momentum.z << 'x'
                << o.count;
        out << '\n';
    }
}

}  // namespace polaron
