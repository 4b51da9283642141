#pragma once

// Lowest eigenpairs of symmetric operators: a thick-restart block Lanczos
// iteration with full reorthogonalization, a dense reference solver, and the
// fixed-point solver for shell-folded Hamiltonians.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "polaron/errors.hpp"
#include "polaron/folding.hpp"
#include "polaron/operators.hpp"

namespace polaron {

struct BasisMeta {
    double cutoff = 0.0;
    int n_max = 0;
    IntVec3 total_momentum{};
    std::size_t dim = 0;
    std::string label;
};

struct SpectrumReport {
    std::vector<double> eigenvalues;
    std::vector<double> residual_norms;
    std::vector<int> multiplicities;  ///< cluster size around each eigenvalue
    int iterations = 0;
    int applies = 0;
    int block_size = 0;
    double norm_estimate = 0.0;
    bool converged = false;
    BasisMeta meta;
    Matrix vectors;  ///< columns are eigenvectors (may be empty)
};

struct LanczosOptions {
    int k = 1;
    double tol = 1e-10;
    int max_iter = 500;
    std::uint64_t seed = 1;
    int block = 0;       ///< 0 picks min(k, 4) but at least 2
    int max_basis = 0;   ///< 0 picks a size from k and the block
    int max_block = 64;
    Matrix initial;      ///< optional warm-start block
    bool keep_vectors = true;
};

namespace detail {

/// splitmix64-driven uniform numbers in [-1, 1); identical on every platform.
class SeededUniform {
public:
    explicit SeededUniform(std::uint64_t seed) : state_(seed) {}
    double operator()() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        z ^= z >> 31;
        return static_cast<double>(z >> 11) * 0x1.0p-52 - 1.0;
    }

private:
    std::uint64_t state_;
};

inline Matrix random_block(Eigen::Index n, Eigen::Index b, SeededUniform& rng) {
    Matrix X(n, b);
    for (Eigen::Index j = 0; j < b; ++j)
        for (Eigen::Index i = 0; i < n; ++i) X(i, j) = rng();
    return X;
}

/// Orthonormalizes the columns of X against V and among themselves
/// (two passes of classical Gram-Schmidt); columns that vanish are dropped.
inline Matrix orthonormalize_against(const Matrix& V, Matrix X) {
    Matrix out(X.rows(), 0);
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        Vector x = X.col(j);
        const double before = x.norm();
        if (before == 0.0) continue;
        for (int pass = 0; pass < 2; ++pass) {
            if (V.cols()) x -= V * (V.transpose() * x);
            if (out.cols()) x -= out * (out.transpose() * x);
        }
        const double after = x.norm();
        if (after <= 1e-10 * before) continue;
        out.conservativeResize(Eigen::NoChange, out.cols() + 1);
        out.col(out.cols() - 1) = x / after;
    }
    return out;
}

inline void apply_block(const OperatorHandle& op, const Matrix& X, Matrix& AX) {
    AX.resize(X.rows(), X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        op.apply({X.col(j).data(), op.dim}, {AX.col(j).data(), op.dim});
    }
}

inline std::vector<int> cluster_sizes(const Vector& theta, std::size_t count, double width) {
    std::vector<int> out(count, 0);
    for (std::size_t i = 0; i < count; ++i) {
        int c = 0;
        for (Eigen::Index j = 0; j < theta.size(); ++j)
            if (std::abs(theta[j] - theta[static_cast<Eigen::Index>(i)]) <= width) ++c;
        out[i] = c;
    }
    return out;
}

}  // namespace detail

/// Lowest k eigenpairs of a symmetric operator.
inline SpectrumReport lanczos_lowest(const OperatorHandle& op, const LanczosOptions& opt) {
    const auto n = static_cast<Eigen::Index>(op.dim);
    const int k = opt.k;
    if (k < 1 || k > n) throw contract_violation("lanczos_lowest needs 1 <= k <= dim");
    if (!(opt.tol > 0.0)) throw contract_violation("tolerance must be positive");

    SpectrumReport rep;
    rep.meta.dim = op.dim;
    rep.meta.label = op.label;
    if (op.basis) {
        rep.meta.n_max = op.basis->n_max();
        rep.meta.total_momentum = op.basis->total_momentum();
        rep.meta.cutoff = op.basis->lattice().cutoff_radius();
    }

    int b = opt.block > 0 ? opt.block : std::max(2, std::min(k, 4));
    b = static_cast<int>(std::min<Eigen::Index>(b, n));
    auto basis_cap = [&](int blk) {
        const int m = opt.max_basis > 0 ? opt.max_basis : std::max(2 * k + 4 * blk, 40);
        return static_cast<Eigen::Index>(std::min<Eigen::Index>(n, std::max(m, k + 2 * blk)));
    };

    detail::SeededUniform rng(opt.seed);
    Matrix V(n, 0), AV(n, 0);
    auto add_block = [&](const Matrix& X) {
        Matrix Q = detail::orthonormalize_against(V, X);
        if (Q.cols() == 0) return Eigen::Index{0};
        Matrix AQ;
        detail::apply_block(op, Q, AQ);
        rep.applies += static_cast<int>(Q.cols());
        const Eigen::Index c = V.cols();
        V.conservativeResize(Eigen::NoChange, c + Q.cols());
        AV.conservativeResize(Eigen::NoChange, c + Q.cols());
        V.rightCols(Q.cols()) = Q;
        AV.rightCols(Q.cols()) = AQ;
        return Q.cols();
    };

    {
        Matrix start(n, 0);
        if (opt.initial.size() && opt.initial.rows() == n) start = opt.initial;
        if (start.cols() < b) {
            Matrix r = detail::random_block(n, b - start.cols(), rng);
            Matrix s(n, start.cols() + r.cols());
            s << start, r;
            start = s;
        }
        add_block(start);
    }

    Vector theta;
    Matrix Y;
    std::vector<double> res;
    double anorm = 0.0;
    bool converged = false;
    int it = 0;
    const double cluster_tol = 1e3 * opt.tol;
    while (true) {
        Matrix T = V.transpose() * AV;
        T = 0.5 * (T + T.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Matrix> es(T);
        theta = es.eigenvalues();
        Y = es.eigenvectors();
        anorm = std::max(anorm, theta.cwiseAbs().maxCoeff());
        const Eigen::Index nk = std::min<Eigen::Index>(V.cols(), k + b);
        Matrix R = AV * Y.leftCols(nk) - V * (Y.leftCols(nk) * theta.head(nk).asDiagonal());
        res.assign(static_cast<std::size_t>(nk), 0.0);
        for (Eigen::Index i = 0; i < nk; ++i) res[i] = R.col(i).norm();

        converged = nk >= k;
        for (Eigen::Index i = 0; i < std::min<Eigen::Index>(k, nk); ++i)
            if (res[i] > opt.tol * (std::abs(theta[i]) + anorm)) converged = false;

        // A block method sees at most b copies of an eigenvalue.
        const auto sizes = detail::cluster_sizes(theta.head(nk), static_cast<std::size_t>(std::min<Eigen::Index>(nk, k + 1)),
                                                 cluster_tol * std::max(1.0, anorm));
        const int largest = *std::max_element(sizes.begin(), sizes.end());
        bool grew = false;
        if (largest >= b && b < opt.max_block && b < n && V.cols() < n) {
            const int nb = static_cast<int>(std::min<Eigen::Index>(std::min(2 * b, opt.max_block), n));
            if (nb > b) {
                b = nb;
                grew = true;
            }
        }
        if (converged && !grew) break;
        if (V.cols() == n && !grew) {
            converged = true;  // full space; Ritz pairs are exact to rounding
            break;
        }
        if (it >= opt.max_iter) break;
        ++it;

        const Eigen::Index cap = basis_cap(b);
        if (V.cols() + b > cap) {
            const Eigen::Index keep = std::min<Eigen::Index>(
                V.cols(), std::max<Eigen::Index>(k + b, cap / 2));
            V = (V * Y.leftCols(keep)).eval();
            AV = (AV * Y.leftCols(keep)).eval();
            Matrix R2 = AV.leftCols(nk) - V.leftCols(nk) * theta.head(nk).asDiagonal();
            R = R2;
        }
        // Expand with the residuals of the lowest unconverged Ritz pairs.
        std::vector<Eigen::Index> pick;
        for (Eigen::Index i = 0; i < nk && static_cast<int>(pick.size()) < b; ++i)
            if (res[i] > opt.tol * (std::abs(theta[i]) + anorm)) pick.push_back(i);
        for (Eigen::Index i = 0; i < nk && static_cast<int>(pick.size()) < b; ++i)
            if (std::find(pick.begin(), pick.end(), i) == pick.end()) pick.push_back(i);
        Matrix X(n, static_cast<Eigen::Index>(pick.size()));
        for (std::size_t c = 0; c < pick.size(); ++c) X.col(c) = R.col(pick[c]);
        if (grew || static_cast<int>(pick.size()) < b) {
            const Eigen::Index extra = b - static_cast<Eigen::Index>(pick.size()) + (grew ? b / 2 : 0);
            Matrix r = detail::random_block(n, extra, rng);
            Matrix s(n, X.cols() + r.cols());
            s << X, r;
            X = s;
        }
        if (add_block(X) == 0) {
            Matrix r = detail::random_block(n, b, rng);
            if (add_block(r) == 0) break;
        }
    }

    rep.iterations = it;
    rep.block_size = b;
    rep.norm_estimate = anorm;
    Matrix X = V * Y.leftCols(k);
    Matrix AX;
    detail::apply_block(op, X, AX);
    rep.applies += k;
    rep.eigenvalues.resize(k);
    rep.residual_norms.resize(k);
    bool ok = true;
    for (int i = 0; i < k; ++i) {
        rep.eigenvalues[i] = theta[i];
        rep.residual_norms[i] = (AX.col(i) - theta[i] * X.col(i)).norm();
        if (rep.residual_norms[i] > opt.tol * (std::abs(theta[i]) + anorm)) ok = false;
    }
    rep.multiplicities = detail::cluster_sizes(theta.head(std::min<Eigen::Index>(theta.size(), k + b)),
                                               static_cast<std::size_t>(k),
                                               cluster_tol * std::max(1.0, anorm));
    rep.converged = converged && ok;
    if (opt.keep_vectors) rep.vectors = std::move(X);
    return rep;
}

inline SpectrumReport lanczos_lowest(const OperatorHandle& op, int k, double tol, int max_iter,
                                     std::uint64_t seed) {
    LanczosOptions opt;
    opt.k = k;
    opt.tol = tol;
    opt.max_iter = max_iter;
    opt.seed = seed;
    return lanczos_lowest(op, opt);
}

/// Full symmetric eigendecomposition; lowest k returned.
inline SpectrumReport dense_eigs(const DenseOperator& op, int k, std::size_t cap = 8000) {
    const auto n = static_cast<Eigen::Index>(op.dim());
    if (op.dim() > cap) throw capacity_error("dense eigensolver", op.dim(), cap);
    if (k < 1 || k > n) throw contract_violation("dense_eigs needs 1 <= k <= dim");
    Matrix sym = 0.5 * (op.matrix + op.matrix.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.info() != Eigen::Success) throw accuracy_error("dense eigensolver failed", 0.0);
    SpectrumReport rep;
    rep.meta.dim = op.dim();
    rep.meta.label = op.label;
    if (op.basis) {
        rep.meta.n_max = op.basis->n_max();
        rep.meta.total_momentum = op.basis->total_momentum();
        rep.meta.cutoff = op.basis->lattice().cutoff_radius();
    }
    const Vector& ev = es.eigenvalues();
    rep.norm_estimate = ev.cwiseAbs().maxCoeff();
    rep.vectors = es.eigenvectors().leftCols(k);
    for (int i = 0; i < k; ++i) {
        rep.eigenvalues.push_back(ev[i]);
        rep.residual_norms.push_back((sym * rep.vectors.col(i) - ev[i] * rep.vectors.col(i)).norm());
    }
    rep.multiplicities = detail::cluster_sizes(ev, static_cast<std::size_t>(k),
                                               1e-9 * std::max(1.0, rep.norm_estimate));
    rep.block_size = 0;
    rep.converged = true;
    return rep;
}

// ---------------------------------------------------------------------------
// Folded fixed-point solver

struct FoldedOptions {
    int k = 3;
    double tol = 1e-9;       ///< on the energies, relative to max(1, |E|)
    double inner_tol = 1e-11;
    int max_newton = 60;
    std::uint64_t seed = 1;
};

/// Lowest k eigenvalues of the capped Hamiltonian below the top-shell
/// threshold, from E = lambda_j(H_eff(E)) by safeguarded Newton steps.
inline SpectrumReport folded_lowest(const ShellFolding& fold, const FoldedOptions& opt) {
    const int k = opt.k;
    const double Dmin = fold.min_top_energy();
    SpectrumReport rep;
    rep.meta.dim = fold.full_dim();
    rep.meta.n_max = fold.lower_basis().n_max() + 1;
    rep.meta.total_momentum = fold.lower_basis().total_momentum();
    rep.meta.cutoff = fold.lower_basis().lattice().cutoff_radius();
    rep.meta.label = "H_BF folded";
    if (k < 1 || static_cast<std::size_t>(k) > fold.lower_dim())
        throw contract_violation("folded_lowest needs 1 <= k <= lower dimension");

    LanczosOptions lo;
    lo.k = k;
    lo.tol = opt.inner_tol;
    lo.seed = opt.seed;
    const SpectrumReport a = lanczos_lowest(fold.lower_operator(), lo);
    rep.applies += a.applies;
    Matrix warm = a.vectors;

    const double margin = 1e-6 * std::max(1.0, std::abs(Dmin));
    rep.converged = true;
    std::optional<SpectrumReport> last;
    double last_E = 0.0;
    for (int j = 0; j < k; ++j) {
        // A root shared with the previous level (degenerate cluster) is reused.
        if (last && j > 0) {
            const double g = last->eigenvalues[j] - last_E;
            if (std::abs(g) <= opt.tol * std::max(1.0, std::abs(last_E)) && last->converged) {
                rep.eigenvalues.push_back(last_E);
                rep.residual_norms.push_back(rep.residual_norms.back());
                continue;
            }
        }
        double E = std::min(a.eigenvalues[j], Dmin - margin);
        if (j > 0) E = std::max(E, rep.eigenvalues.back());
        double lo_E = -std::numeric_limits<double>::infinity();
        double hi_E = Dmin - margin;
        bool done = false;
        double resid = 0.0;
        for (int it = 0; it < opt.max_newton; ++it) {
            LanczosOptions o = lo;
            o.initial = warm;
            SpectrumReport s = lanczos_lowest(fold.effective(E), o);
            rep.applies += s.applies;
            ++rep.iterations;
            warm = s.vectors;
            const double lam = s.eigenvalues[j];
            const double g = lam - E;
            Eigen::Map<const Vector> v(s.vectors.col(j).data(), s.vectors.rows());
            const double wt = fold.top_weight(E, {v.data(), static_cast<std::size_t>(v.size())});
            resid = (std::abs(g) + s.residual_norms[j]) / std::sqrt(1.0 + wt);
            last = s;
            last_E = E;
            if (g > 0.0) lo_E = E; else hi_E = E;
            const double step = -g / (-wt - 1.0);
            double next = E + step;
            if (!(next > lo_E && next < hi_E)) {
                next = std::isfinite(lo_E) ? 0.5 * (lo_E + hi_E) : E - 2.0 * std::abs(g) - 1.0;
            }
            if (std::abs(next - E) <= opt.tol * std::max(1.0, std::abs(E)) && s.converged) {
                done = true;
                break;
            }
            E = next;
        }
        if (!done) rep.converged = false;
        rep.eigenvalues.push_back(last_E);
        rep.residual_norms.push_back(resid);
    }
    rep.multiplicities.assign(static_cast<std::size_t>(k), 1);
    for (int i = 0; i < k; ++i) {
        int c = 0;
        for (int j = 0; j < k; ++j)
            if (std::abs(rep.eigenvalues[i] - rep.eigenvalues[j]) <=
                1e3 * opt.tol * std::max(1.0, std::abs(rep.eigenvalues[i])))
                ++c;
        rep.multiplicities[i] = c;
    }
    rep.norm_estimate = Dmin;
    return rep;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const SpectrumReport& r) {
    nlohmann::ordered_json j;
    j["eigenvalues"] = r.eigenvalues;
    j["residual_norms"] = r.residual_norms;
    j["multiplicities"] = r.multiplicities;
    j["iterations"] = r.iterations;
    j["applies"] = r.applies;
    j["block_size"] = r.block_size;
    j["norm_estimate"] = r.norm_estimate;
    j["converged"] = r.converged;
    j["basis"] = {{"cutoff", r.meta.cutoff},
                  {"n_max", r.meta.n_max},
                  {"total_momentum", {r.meta.total_momentum.x, r.meta.total_momentum.y,
                                      r.meta.total_momentum.z}},
                  {"dim", r.meta.dim},
                  {"label", r.meta.label}};
    return j;
}

}  // namespace polaron
