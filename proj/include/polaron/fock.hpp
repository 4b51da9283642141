#pragma once

// Occupation-number basis of the boson Fock space over a MomentumLattice, at
// fixed boson cap and fixed total momentum. A state is the sorted list of
// occupied mode indices with repetition; the impurity carries the remaining
// momentum P_total - sum_k n_k k, so it never appears as a degree of freedom.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "polaron/errors.hpp"
#include "polaron/lattice.hpp"

namespace polaron {

/// Table of binomial coefficients C(y, r) for y <= ymax, r <= rmax, saturating
/// at the largest uint64 value.
class BinomialTable {
public:
    BinomialTable() = default;
    BinomialTable(std::size_t ymax, int rmax) : rmax_(rmax), table_((ymax + 1) * (rmax + 1), 0) {
        for (std::size_t y = 0; y <= ymax; ++y) {
            at(y, 0) = 1;
            for (int r = 1; r <= rmax; ++r) {
                if (y == 0) continue;
                const std::uint64_t a = at(y - 1, r - 1), b = at(y - 1, r);
                at(y, r) = (a > max - b) ? max : a + b;
            }
        }
    }
    std::uint64_t operator()(std::int64_t y, int r) const {
        if (y < 0 || r < 0 || r > rmax_) return 0;
        return table_[static_cast<std::size_t>(y) * (rmax_ + 1) + r];
    }

private:
    static constexpr std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    std::uint64_t& at(std::size_t y, int r) { return table_[y * (rmax_ + 1) + r]; }
    int rmax_ = 0;
    std::vector<std::uint64_t> table_;
};

/// Dimension sum_{j<=n_max} C(M+j-1, j) as a double (no overflow).
inline double fock_dimension(std::size_t modes, int n_max) {
    double total = 0.0, term = 1.0;
    for (int j = 0; j <= n_max; ++j) {
        if (j > 0) term *= static_cast<double>(modes + j - 1) / j;
        total += term;
        if (modes == 0) break;
    }
    return total;
}

/// One occupied mode: lattice momentum label and occupation count >= 1.
struct ModeOccupation {
    IntVec3 momentum;
    int count = 1;
};

struct SectorOptions {
    std::size_t max_dim = 4'000'000;
    /// When set, only states whose implied impurity momentum lies in this set are kept.
    std::optional<std::vector<IntVec3>> impurity_window;
};

class SectorBasis {
public:
    static constexpr std::uint32_t empty_slot = std::numeric_limits<std::uint32_t>::max();

    const MomentumLattice& lattice() const { return *lattice_; }
    std::shared_ptr<const MomentumLattice> lattice_ptr() const { return lattice_; }
    int n_max() const noexcept { return n_max_; }
    const IntVec3& total_momentum() const noexcept { return total_; }
    std::size_t size() const noexcept { return counts_.size(); }
    std::size_t dim() const noexcept { return counts_.size(); }
    bool filtered() const noexcept { return filtered_; }

    /// Sorted mode indices (with repetition) of state i.
    std::span<const std::uint32_t> modes(std::size_t i) const {
        return {modes_.data() + i * stride(), static_cast<std::size_t>(counts_[i])};
    }
    int count(std::size_t i) const { return counts_[i]; }
    const IntVec3& boson_momentum(std::size_t i) const { return boson_momentum_[i]; }
    IntVec3 impurity_momentum(std::size_t i) const { return total_ - boson_momentum_[i]; }

    int occupation(std::size_t i, std::uint32_t mode) const {
        auto m = modes(i);
        auto [lo, hi] = std::equal_range(m.begin(), m.end(), mode);
        return static_cast<int>(hi - lo);
    }

    /// Index of the state with these sorted mode indices, if present.
    std::optional<std::size_t> find(std::span<const std::uint32_t> sorted) const {
        if (static_cast<int>(sorted.size()) > n_max_) return std::nullopt;
        for (auto m : sorted)
            if (m >= lattice_->size()) return std::nullopt;
        if (!filtered_) return rank(sorted);
        if (slots_.empty()) return std::nullopt;
        const std::size_t mask = slots_.size() - 1;
        for (std::size_t h = hash(sorted) & mask;; h = (h + 1) & mask) {
            const std::uint32_t s = slots_[h];
            if (s == empty_slot) return std::nullopt;
            auto m = modes(s);
            if (m.size() == sorted.size() && std::equal(m.begin(), m.end(), sorted.begin()))
                return s;
        }
    }

    /// Rank of a sorted mode list in the unfiltered enumeration order.
    std::size_t rank(std::span<const std::uint32_t> sorted) const {
        const int j = static_cast<int>(sorted.size());
        const std::int64_t N = static_cast<std::int64_t>(lattice_->size()) + j - 1;
        std::uint64_t r = shell_offset_[j];
        std::int64_t prev = -1;
        for (int i = 0; i < j; ++i) {
            const std::int64_t t = static_cast<std::int64_t>(sorted[i]) + i;
            const int rr = j - i - 1;
            r += binom_(N - 1 - prev, rr + 1) - binom_(N - t, rr + 1);
            prev = t;
        }
        return static_cast<std::size_t>(r);
    }

    /// Index of the first state with exactly j bosons (unfiltered bases only).
    std::size_t shell_offset(int j) const { return static_cast<std::size_t>(shell_offset_[j]); }

    std::size_t state_index(std::span<const std::uint32_t> sorted) const {
        if (!std::is_sorted(sorted.begin(), sorted.end())) {
            throw contract_violation("state modes must be sorted");
        }
        auto i = find(sorted);
        if (!i) throw lookup_error("state not in sector basis");
        return *i;
    }

    /// Index of an occupation multiset given by momenta; off-lattice momenta raise lookup_error.
    std::size_t state_index(const std::vector<ModeOccupation>& occ) const {
        std::vector<std::uint32_t> m;
        for (const auto& o : occ) {
            if (o.count < 1) throw contract_violation("occupation counts must be >= 1");
            auto idx = lattice_->find(o.momentum);
            if (!idx) throw lookup_error("mode not on lattice");
            for (int c = 0; c < o.count; ++c) m.push_back(static_cast<std::uint32_t>(*idx));
        }
        std::sort(m.begin(), m.end());
        return state_index(m);
    }

    std::vector<ModeOccupation> occupations(std::size_t i) const {
        std::vector<ModeOccupation> out;
        for (auto m : modes(i)) {
            const IntVec3& k = (*lattice_)[m];
            if (!out.empty() && out.back().momentum == k) {
                ++out.back().count;
            } else {
                out.push_back({k, 1});
            }
        }
        return out;
    }

    const BinomialTable& binomials() const { return binom_; }

private:
    friend SectorBasis enumerate_sector(std::shared_ptr<const MomentumLattice>, int, IntVec3,
                                        const SectorOptions&);

    std::size_t stride() const { return static_cast<std::size_t>(std::max(n_max_, 1)); }

    static std::uint64_t hash(std::span<const std::uint32_t> sorted) {
        std::uint64_t h = 0x9e3779b97f4a7c15ull ^ sorted.size();
        for (auto m : sorted) {
            h ^= m + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
            h *= 0xbf58476d1ce4e5b9ull;
            h ^= h >> 31;
        }
        return h;
    }

    void push(std::span<const std::uint32_t> sorted, const IntVec3& k) {
        const std::size_t base = modes_.size();
        modes_.resize(base + stride(), empty_slot);
        std::copy(sorted.begin(), sorted.end(), modes_.begin() + base);
        counts_.push_back(static_cast<std::uint8_t>(sorted.size()));
        boson_momentum_.push_back(k);
    }

    void build_hash() {
        std::size_t cap = 16;
        while (cap < 2 * size()) cap <<= 1;
        slots_.assign(cap, empty_slot);
        const std::size_t mask = cap - 1;
        for (std::size_t i = 0; i < size(); ++i) {
            std::size_t h = hash(modes(i)) & mask;
            while (slots_[h] != empty_slot) h = (h + 1) & mask;
            slots_[h] = static_cast<std::uint32_t>(i);
        }
    }

    std::shared_ptr<const MomentumLattice> lattice_;
    int n_max_ = 0;
    IntVec3 total_{};
    bool filtered_ = false;
    std::vector<std::uint32_t> modes_;
    std::vector<std::uint8_t> counts_;
    std::vector<IntVec3> boson_momentum_;
    std::vector<std::uint64_t> shell_offset_;
    BinomialTable binom_;
    std::vector<std::uint32_t> slots_;
};

/// All states with at most n_max bosons, ordered by boson count and then
/// lexicographically in the sorted mode list. The vacuum is state 0.
inline SectorBasis enumerate_sector(std::shared_ptr<const MomentumLattice> lattice, int n_max,
                                    IntVec3 total_momentum, const SectorOptions& opt = {}) {
    if (!lattice) throw contract_violation("null lattice");
    if (n_max < 0) throw contract_violation("n_max must be >= 0");
    if (n_max > 255) throw contract_violation("n_max must be <= 255");
    const std::size_t M = lattice->size();
    const double full = fock_dimension(M, n_max);
    if (full > static_cast<double>(opt.max_dim)) {
        throw capacity_error("sector basis too large",
                             full >= 1.8e19 ? std::numeric_limits<std::size_t>::max()
                                            : static_cast<std::size_t>(full),
                             opt.max_dim);
    }

    SectorBasis b;
    b.lattice_ = lattice;
    b.n_max_ = n_max;
    b.total_ = total_momentum;
    b.filtered_ = opt.impurity_window.has_value();
    b.binom_ = BinomialTable(M + static_cast<std::size_t>(n_max) + 1, n_max + 1);
    b.shell_offset_.assign(static_cast<std::size_t>(n_max) + 2, 0);
    for (int j = 0; j <= n_max; ++j) {
        b.shell_offset_[j + 1] =
            b.shell_offset_[j] + (M == 0 ? (j == 0 ? 1 : 0)
                                         : b.binom_(static_cast<std::int64_t>(M) + j - 1, j));
    }

    std::unordered_set<IntVec3, IntVec3Hash> window;
    if (b.filtered_) window.insert(opt.impurity_window->begin(), opt.impurity_window->end());
    auto keep = [&](const IntVec3& k) {
        return !b.filtered_ || window.count(total_momentum - k) > 0;
    };

    if (!b.filtered_) {
        b.modes_.reserve(static_cast<std::size_t>(full) * b.stride());
        b.counts_.reserve(static_cast<std::size_t>(full));
        b.boson_momentum_.reserve(static_cast<std::size_t>(full));
    }
    std::vector<std::uint32_t> cur;
    for (int j = 0; j <= n_max; ++j) {
        if (j > 0 && M == 0) break;
        // Non-decreasing sequences of length j in lexicographic order.
        cur.assign(static_cast<std::size_t>(j), 0);
        while (true) {
            IntVec3 k{};
            for (auto m : cur) k += (*lattice)[m];
            if (keep(k)) b.push(cur, k);
            int pos = j - 1;
            while (pos >= 0 && cur[pos] + 1 >= M) --pos;
            if (pos < 0) break;
            const std::uint32_t v = cur[pos] + 1;
            for (int q = pos; q < j; ++q) cur[q] = v;
        }
    }
    if (b.filtered_) b.build_hash();
    return b;
}

inline SectorBasis enumerate_sector(const MomentumLattice& lattice, int n_max,
                                    IntVec3 total_momentum, const SectorOptions& opt = {}) {
    return enumerate_sector(std::make_shared<const MomentumLattice>(lattice), n_max,
                            total_momentum, opt);
}

}  // namespace polaron
