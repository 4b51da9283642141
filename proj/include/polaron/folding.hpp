#pragma once

// Exact elimination of the top boson shell. With the cap at n_max the block
// of the Hamiltonian on n_max-boson states is diagonal (D), so for E below
// min D the spectrum of H is given by the fixed points E = lambda_j(H_eff(E)),
// H_eff(E) = A + B (E - D)^{-1} B^T on the states with at most n_max - 1
// bosons. Top-shell states are generated on the fly and never stored.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "polaron/errors.hpp"
#include "polaron/fock.hpp"
#include "polaron/operators.hpp"
#include "polaron/parallel.hpp"

namespace polaron {

class ShellFolding {
public:
    /// `params.n_max` is the cap of the full problem; the lower basis is
    /// enumerated internally with cap n_max - 1.
    ShellFolding(std::shared_ptr<const MomentumLattice> lattice, const ModelParams& params,
                 const SectorOptions& sector = {}, const OperatorOptions& opt = {})
        : params_(params), workers_(opt.workers) {
        if (params.n_max < 1) throw contract_violation("shell folding needs n_max >= 1");
        if (sector.impurity_window) throw contract_violation("shell folding needs an unfiltered basis");
        lower_ = std::make_shared<const SectorBasis>(
            enumerate_sector(lattice, params.n_max - 1, params.total_momentum, sector));
        ModelParams lower_params = params;
        lower_params.n_max = params.n_max - 1;
        A_ = hbf_operator(lower_, lower_params, opt);
        tables_ = mode_tables(*lattice, params);
        first_ = lower_->shell_offset(params.n_max - 1);
        const std::size_t M = lattice->size();
        kx_.resize(M);
        ky_.resize(M);
        kz_.resize(M);
        beta_.resize(M);
        for (std::size_t m = 0; m < M; ++m) {
            const Vec3 k = to_physical((*lattice)[m]);
            kx_[m] = k[0];
            ky_[m] = k[1];
            kz_[m] = k[2];
            beta_[m] = lattice->momentum_sq(m) + tables_.eps[m];
        }
        top_size_ = 0;
        min_top_ = std::numeric_limits<double>::infinity();
        for (std::size_t L = first_; L < lower_->size(); ++L) {
            const auto s = lower_->modes(L);
            const std::uint32_t start = s.empty() ? 0 : s.back();
            for (std::uint32_t q = start; q < M; ++q) {
                ++top_size_;
                min_top_ = std::min(min_top_, top_energy(L, q));
            }
        }
    }

    const SectorBasis& lower_basis() const { return *lower_; }
    std::shared_ptr<const SectorBasis> lower_basis_ptr() const { return lower_; }
    const OperatorHandle& lower_operator() const { return A_; }
    std::size_t lower_dim() const { return lower_->size(); }
    std::size_t top_size() const { return top_size_; }
    /// Full dimension of the capped sector.
    std::size_t full_dim() const { return lower_->size() + top_size_; }
    double min_top_energy() const { return min_top_; }

    /// y = H_eff(E) x
    void apply(double E, std::span<const double> x, std::span<double> y) const {
        check_energy(E);
        A_.apply(x, y);
        if (params_.n_max == 2) {
            apply_two(E, x, y);
            return;
        }
        const std::size_t n = lower_->size() - first_;
        constexpr std::size_t chunk = 16;
        parallel_for((n + chunk - 1) / chunk, workers_, [&](std::size_t c) {
            std::vector<std::uint32_t> top, rest;
            const std::size_t lo = first_ + c * chunk;
            const std::size_t hi = std::min(lower_->size(), lo + chunk);
            const std::uint32_t M = static_cast<std::uint32_t>(tables_.eps.size());
            for (std::size_t L = lo; L < hi; ++L) {
                double acc = 0.0;
                for (std::uint32_t q = 0; q < M; ++q) {
                    const double wq = tables_.w_hat[q];
                    if (wq == 0.0) continue;
                    detail::with_inserted(lower_->modes(L), q, top);
                    const double nq = static_cast<double>(std::count(top.begin(), top.end(), q));
                    const double bt = project(top, x, rest);
                    acc += wq * std::sqrt(nq) * bt / (E - top_energy(L, q));
                }
                y[L] += acc;
            }
        });
    }

    OperatorHandle effective(double E) const {
        OperatorHandle h;
        h.basis = lower_;
        h.dim = lower_->size();
        h.label = "H_eff";
        h.apply = [this, E](std::span<const double> x, std::span<double> y) { apply(E, x, y); };
        return h;
    }

    /// ||(E - D)^{-1} B^T x||^2, the norm of the top-shell component of the
    /// eigenvector lifted from x.
    double top_weight(double E, std::span<const double> x) const {
        check_energy(E);
        if (params_.n_max == 2) return top_weight_two(E, x);
        const std::size_t n = lower_->size() - first_;
        const std::uint32_t M = static_cast<std::uint32_t>(tables_.eps.size());
        return deterministic_sum(
            n, workers_,
            [&](std::size_t i) {
                const std::size_t L = first_ + i;
                std::vector<std::uint32_t> top, rest;
                const auto s = lower_->modes(L);
                const std::uint32_t start = s.empty() ? 0 : s.back();
                double acc = 0.0;
                for (std::uint32_t q = start; q < M; ++q) {
                    detail::with_inserted(s, q, top);
                    const double u = project(top, x, rest) / (E - top_energy(L, q));
                    acc += u * u;
                }
                return acc;
            },
            1);
    }

private:
    // n_max = 2: lower shell states are {a} at index 1 + a, top states {a, q}.
    // With c = 1/(E - D_aq) the folded term is
    //   y_a += w_a sum_q c w_q x_q + x_a sum_q c w_q^2,
    // which also covers q = a, where the two sqrt(2) factors combine to 2.
    void apply_two(double E, std::span<const double> x, std::span<double> y) const {
        const std::size_t M = kx_.size();
        const Vec3 P = to_physical(params_.total_momentum);
        std::vector<double> wx(M);
        for (std::size_t q = 0; q < M; ++q) wx[q] = tables_.w_hat[q] * x[1 + q];
        constexpr std::size_t chunk = 32;
        parallel_for((M + chunk - 1) / chunk, workers_, [&](std::size_t c) {
            const std::size_t hi = std::min(M, (c + 1) * chunk);
            for (std::size_t a = c * chunk; a < hi; ++a) {
                const double Qx = P[0] - kx_[a], Qy = P[1] - ky_[a], Qz = P[2] - kz_[a];
                const double alpha = Qx * Qx + Qy * Qy + Qz * Qz + tables_.eps[a];
                double s1 = 0.0, s2 = 0.0;
                for (std::size_t q = 0; q < M; ++q) {
                    const double d =
                        alpha + beta_[q] - 2.0 * (Qx * kx_[q] + Qy * ky_[q] + Qz * kz_[q]);
                    const double inv = 1.0 / (E - d);
                    s1 += inv * wx[q];
                    s2 += inv * tables_.w_hat[q] * tables_.w_hat[q];
                }
                y[1 + a] += tables_.w_hat[a] * s1 + x[1 + a] * s2;
            }
        });
    }

    double top_weight_two(double E, std::span<const double> x) const {
        const std::size_t M = kx_.size();
        const Vec3 P = to_physical(params_.total_momentum);
        const auto& w = tables_.w_hat;
        return deterministic_sum(
            M, workers_,
            [&](std::size_t a) {
                const double Qx = P[0] - kx_[a], Qy = P[1] - ky_[a], Qz = P[2] - kz_[a];
                const double alpha = Qx * Qx + Qy * Qy + Qz * Qz + tables_.eps[a];
                const double xa = x[1 + a];
                double acc = 0.0;
                for (std::size_t q = a; q < M; ++q) {
                    const double d =
                        alpha + beta_[q] - 2.0 * (Qx * kx_[q] + Qy * ky_[q] + Qz * kz_[q]);
                    const double bt = q == a ? std::sqrt(2.0) * w[a] * xa
                                             : w[a] * x[1 + q] + w[q] * xa;
                    const double u = bt / (E - d);
                    acc += u * u;
                }
                return acc;
            },
            1);
    }

    void check_energy(double E) const {
        if (!(E < min_top_)) throw domain_error("energy not below the top-shell spectrum");
    }

    // (B^T x)_T for the sorted top state T.
    double project(const std::vector<std::uint32_t>& top, std::span<const double> x,
                   std::vector<std::uint32_t>& rest) const {
        double s = 0.0;
        for (std::size_t k = 0; k < top.size();) {
            const std::uint32_t m = top[k];
            std::size_t e = k;
            while (e < top.size() && top[e] == m) ++e;
            const double wm = tables_.w_hat[m];
            if (wm != 0.0) {
                rest.assign(top.begin(), top.end());
                rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(k));
                s += wm * std::sqrt(static_cast<double>(e - k)) * x[lower_->rank(rest)];
            }
            k = e;
        }
        return s;
    }

    double top_energy(std::size_t L, std::uint32_t q) const {
        const auto& lat = lower_->lattice();
        const IntVec3 k_imp = params_.total_momentum - lower_->boson_momentum(L) - lat[q];
        double e = momentum_sq(k_imp) + tables_.eps[q];
        for (auto m : lower_->modes(L)) e += tables_.eps[m];
        return e;
    }

    ModelParams params_;
    unsigned workers_ = 1;
    std::shared_ptr<const SectorBasis> lower_;
    OperatorHandle A_;
    ModeTables tables_;
    std::vector<double> kx_, ky_, kz_, beta_;
    std::size_t first_ = 0;
    std::size_t top_size_ = 0;
    double min_top_ = 0.0;
};

}  // namespace polaron
