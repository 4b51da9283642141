#pragma once

// Deterministic pairwise (tree) summation. The reduction tree depends only on
// the number of terms, never on thread count or timing.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace polaron {

namespace detail {
inline constexpr std::size_t pairwise_leaf = 32;
}

inline double pairwise_sum(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n <= detail::pairwise_leaf) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

inline double pairwise_sum(const std::vector<double>& x) {
    return pairwise_sum(std::span<const double>(x.data(), x.size()));
}

/// Streaming cascade sum: blocks of fixed length are summed directly and the
/// block totals are merged like a binary counter. Same tree for the same
/// sequence of terms.
class CascadeSum {
public:
    void add(double v) {
        block_ += v;
        if (++in_block_ == block_len) {
            push(block_);
            block_ = 0.0;
            in_block_ = 0;
        }
    }

    CascadeSum& operator+=(double v) {
        add(v);
        return *this;
    }

    double value() const {
        double s = block_;
        for (std::size_t l = 0; l < levels_.size(); ++l) {
            if (used_[l]) s += levels_[l];
        }
        return s;
    }

private:
    static constexpr std::size_t block_len = 16;

    void push(double v) {
        std::size_t l = 0;
        while (true) {
            if (l == levels_.size()) {
                levels_.push_back(0.0);
                used_.push_back(false);
            }
            if (!used_[l]) {
                levels_[l] = v;
                used_[l] = true;
                return;
            }
            v += levels_[l];
            used_[l] = false;
            ++l;
        }
    }

    double block_ = 0.0;
    std::size_t in_block_ = 0;
    std::vector<double> levels_;
    std::vector<bool> used_;
};

}  // namespace polaron
