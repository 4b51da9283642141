#include <catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "polaron/fock.hpp"

using namespace polaron;

namespace {

// Brute-force oracle: all multisets of size <= n_max as occupation maps.
std::set<std::map<std::uint32_t, int>> brute_states(std::uint32_t M, int n_max) {
    std::set<std::map<std::uint32_t, int>> out{{}};
    std::set<std::map<std::uint32_t, int>> layer{{}};
    for (int j = 1; j <= n_max; ++j) {
        std::set<std::map<std::uint32_t, int>> next;
        for (const auto& s : layer)
            for (std::uint32_t m = 0; m < M; ++m) {
                auto t = s;
                ++t[m];
                next.insert(t);
            }
        out.insert(next.begin(), next.end());
        layer = std::move(next);
    }
    return out;
}

}  // namespace

TEST_CASE("sector dimensions", "[fock]") {
    auto lat = std::make_shared<const MomentumLattice>(build_lattice(two_pi));
    CHECK(enumerate_sector(lat, 0, {}).size() == 1);
    CHECK(enumerate_sector(lat, 1, {}).size() == 7);
    CHECK(enumerate_sector(lat, 2, {}).size() == 28);
    CHECK(brute_states(6, 2).size() == 28);
    CHECK(brute_states(6, 3).size() == enumerate_sector(lat, 3, {}).size());
}

TEST_CASE("stars and bars", "[fock]") {
    auto lat = std::make_shared<const MomentumLattice>(build_lattice(two_pi * 2.0));
    for (int n = 0; n <= 3; ++n) {
        const auto b = enumerate_sector(lat, n, {1, 0, 0});
        CHECK(static_cast<double>(b.size()) == fock_dimension(lat->size(), n));
        for (int j = 0; j <= n; ++j) CHECK(b.count(b.shell_offset(j)) == j);
    }
}

TEST_CASE("enumeration against brute force", "[fock]") {
    auto lat = std::make_shared<const MomentumLattice>(build_lattice(two_pi * 1.5));
    const auto b = enumerate_sector(lat, 3, {});
    std::set<std::map<std::uint32_t, int>> got;
    for (std::size_t i = 0; i < b.size(); ++i) {
        std::map<std::uint32_t, int> occ;
        for (auto m : b.modes(i)) ++occ[m];
        got.insert(occ);
        CHECK(b.count(i) <= 3);
    }
    CHECK(got == brute_states(static_cast<std::uint32_t>(lat->size()), 3));
    CHECK(got.size() == b.size());
}

TEST_CASE("state index round trip", "[fock]") {
    auto lat = std::make_shared<const MomentumLattice>(build_lattice(two_pi * 2.0));
    const auto b = enumerate_sector(lat, 3, {});
    CHECK(b.state_index(std::vector<ModeOccupation>{}) == 0);
    CHECK(b.count(0) == 0);
    std::mt19937_64 rng(7);
    for (int t = 0; t < 200; ++t) {
        const std::size_t i = rng() % b.size();
        CHECK(b.state_index(b.modes(i)) == i);
        CHECK(b.state_index(b.occupations(i)) == i);
    }
    CHECK_THROWS_AS(b.state_index(std::vector<ModeOccupation>{{{3, 0, 0}, 1}}), lookup_error);
    std::vector<std::uint32_t> too_many{0, 0, 0, 0};
    CHECK_THROWS_AS(b.state_index(too_many), lookup_error);
}

TEST_CASE("boson and impurity momenta", "[fock]") {
    auto lat = std::make_shared<const MomentumLattice>(build_lattice(two_pi * 2.0));
    const IntVec3 P{1, -1, 0};
    const auto b = enumerate_sector(lat, 2, P);
    for (std::size_t i = 0; i < b.size(); ++i) {
        IntVec3 k{};
        for (auto m : b.modes(i)) k += (*lat)[m];
        CHECK(b.boson_momentum(i) == k);
        CHECK(b.impurity_momentum(i) + k == P);
    }
}

TEST_CASE("impurity window", "[fock]") {
    auto lat = std::make_shared<const MomentumLattice>(build_lattice(two_pi));
    SectorOptions opt;
    opt.impurity_window = std::vector<IntVec3>(lat->points());
    const auto b = enumerate_sector(lat, 1, {}, opt);
    CHECK(b.filtered());
    // The vacuum would put the impurity at rest, which is outside the window.
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(lat->contains(b.impurity_momentum(i)));
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(b.state_index(b.modes(i)) == i);
    CHECK(b.size() == 6);
    CHECK_FALSE(b.find(std::vector<std::uint32_t>{}));
    CHECK(enumerate_sector(lat, 1, {1, 0, 0}, opt).size() == 1);
}

TEST_CASE("determinism and capacity", "[fock]") {
    auto lat = std::make_shared<const MomentumLattice>(build_lattice(two_pi * 2.0));
    const auto a = enumerate_sector(lat, 2, {});
    const auto c = enumerate_sector(lat, 2, {});
    REQUIRE(a.size() == c.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(std::ranges::equal(a.modes(i), c.modes(i)));
    SectorOptions small;
    small.max_dim = 100;
    try {
        enumerate_sector(lat, 2, {}, small);
        FAIL("expected capacity_error");
    } catch (const capacity_error& e) {
        CHECK(e.requested() == 561);
        CHECK(e.limit() == 100);
    }
    CHECK_THROWS_AS(enumerate_sector(lat, -1, {}), contract_violation);
}
