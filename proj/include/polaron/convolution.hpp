#pragma once

// Lattice convolution (K * phi)(p) = sum_q K(p - q) phi(q) over a
// MomentumLattice, with a radial kernel K(d) = kernel(|d|^2) given on integer
// squared lengths. Small lattices use a direct double loop, large ones a
// zero-padded FFTW transform that reproduces the linear convolution exactly.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <vector>

#include "polaron/errors.hpp"
#include "polaron/lattice.hpp"

namespace polaron {

enum class ConvolutionMethod { automatic, direct, fft };

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

/// Smallest n >= lo whose prime factors are all in {2, 3, 5, 7}.
inline int fft_friendly_size(int lo) {
    for (int n = std::max(lo, 1);; ++n) {
        int m = n;
        for (int f : {2, 3, 5, 7})
            while (m % f == 0) m /= f;
        if (m == 1) return n;
    }
}

class LatticeConvolution {
public:
    static constexpr std::size_t direct_limit = 10'000;

    LatticeConvolution(const MomentumLattice& lattice,
                       const std::function<double(std::int64_t)>& kernel_of_n2,
                       ConvolutionMethod method = ConvolutionMethod::automatic)
        : lattice_(&lattice) {
        const int R = lattice.half_width();
        const std::int64_t max_d2 = 12ll * R * R;
        kernel_.resize(static_cast<std::size_t>(max_d2) + 1);
        for (std::int64_t d2 = 0; d2 <= max_d2; ++d2) kernel_[d2] = kernel_of_n2(d2);
        if (method == ConvolutionMethod::automatic) {
            method = lattice.size() < direct_limit ? ConvolutionMethod::direct
                                                   : ConvolutionMethod::fft;
        }
        method_ = method;
        if (method_ == ConvolutionMethod::fft && !lattice.empty()) setup_fft();
    }

    LatticeConvolution(const LatticeConvolution&) = delete;
    LatticeConvolution& operator=(const LatticeConvolution&) = delete;

    ~LatticeConvolution() {
        if (fft_) {
            std::lock_guard lock(fftw_planner_mutex());
            fftw_destroy_plan(fft_->forward);
            fftw_destroy_plan(fft_->backward);
            fftw_free(fft_->real);
            fftw_free(fft_->spec);
            fftw_free(fft_->kernel_hat);
        }
    }

    ConvolutionMethod method() const noexcept { return method_; }
    int grid_size() const noexcept { return fft_ ? fft_->G : 0; }

    /// Kernel value at an integer squared length.
    double kernel(std::int64_t n2) const { return kernel_.at(static_cast<std::size_t>(n2)); }

    void apply(const std::vector<double>& in, std::vector<double>& out) const {
        const auto& pts = lattice_->points();
        const std::size_t M = pts.size();
        if (in.size() != M) throw contract_violation("convolution input has wrong length");
        out.assign(M, 0.0);
        if (M == 0) return;
        if (method_ == ConvolutionMethod::direct) {
            for (std::size_t i = 0; i < M; ++i) {
                const IntVec3 p = pts[i];
                double s = 0.0;
                for (std::size_t j = 0; j < M; ++j) {
                    s += kernel_[static_cast<std::size_t>((p - pts[j]).norm2())] * in[j];
                }
                out[i] = s;
            }
            return;
        }
        std::lock_guard lock(fft_->work_mu);
        const int G = fft_->G;
        const std::size_t total = static_cast<std::size_t>(G) * G * G;
        std::fill(fft_->real, fft_->real + total, 0.0);
        for (std::size_t j = 0; j < M; ++j) fft_->real[slot(pts[j])] = in[j];
        fftw_execute(fft_->forward);
        const std::size_t nspec = static_cast<std::size_t>(G) * G * (G / 2 + 1);
        for (std::size_t k = 0; k < nspec; ++k) {
            const double ar = fft_->spec[k][0], ai = fft_->spec[k][1];
            const double br = fft_->kernel_hat[k][0], bi = fft_->kernel_hat[k][1];
            fft_->spec[k][0] = ar * br - ai * bi;
            fft_->spec[k][1] = ar * bi + ai * br;
        }
        fftw_execute(fft_->backward);
        const double scale = 1.0 / static_cast<double>(total);
        for (std::size_t i = 0; i < M; ++i) out[i] = fft_->real[slot(pts[i])] * scale;
    }

private:
    struct FftState {
        int G = 0;
        double* real = nullptr;
        fftw_complex* spec = nullptr;
        fftw_complex* kernel_hat = nullptr;
        fftw_plan forward = nullptr;
        fftw_plan backward = nullptr;
        std::mutex work_mu;
    };

    std::size_t slot(const IntVec3& n) const {
        const int G = fft_->G;
        auto wrap = [G](int c) { return static_cast<std::size_t>(c < 0 ? c + G : c); };
        return (wrap(n.x) * G + wrap(n.y)) * G + wrap(n.z);
    }

    void setup_fft() {
        const int R = lattice_->half_width();
        fft_ = std::make_unique<FftState>();
        const int G = fft_friendly_size(4 * R + 1);
        fft_->G = G;
        const std::size_t total = static_cast<std::size_t>(G) * G * G;
        const std::size_t nspec = static_cast<std::size_t>(G) * G * (G / 2 + 1);
        {
            std::lock_guard lock(fftw_planner_mutex());
            fft_->real = static_cast<double*>(fftw_malloc(sizeof(double) * total));
            fft_->spec = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * nspec));
            fft_->kernel_hat =
                static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * nspec));
            if (!fft_->real || !fft_->spec || !fft_->kernel_hat) {
                throw capacity_error("FFT work arrays", total, 0);
            }
            // FFTW_ESTIMATE keeps the plan, and so the rounding, independent of timing.
            fft_->forward =
                fftw_plan_dft_r2c_3d(G, G, G, fft_->real, fft_->spec, FFTW_ESTIMATE);
            fft_->backward =
                fftw_plan_dft_c2r_3d(G, G, G, fft_->spec, fft_->real, FFTW_ESTIMATE);
        }
        std::fill(fft_->real, fft_->real + total, 0.0);
        for (int x = -2 * R; x <= 2 * R; ++x)
            for (int y = -2 * R; y <= 2 * R; ++y)
                for (int z = -2 * R; z <= 2 * R; ++z) {
                    IntVec3 d{x, y, z};
                    fft_->real[slot(d)] = kernel_[static_cast<std::size_t>(d.norm2())];
                }
        fftw_execute_dft_r2c(fft_->forward, fft_->real, fft_->kernel_hat);
    }

    const MomentumLattice* lattice_;
    std::vector<double> kernel_;
    ConvolutionMethod method_ = ConvolutionMethod::direct;
    std::unique_ptr<FftState> fft_;
};

}  // namespace polaron
