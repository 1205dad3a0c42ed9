#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "npd/ph.hpp"
#include "support/naive_ph.hpp"

using namespace npd;
using namespace npd::ph;

namespace {

Cloud random_cloud(std::mt19937_64& rng, int n, bool lattice = false) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> g(0, 2);
    Cloud c(n);
    for (auto& p : c)
        for (auto& x : p) x = lattice ? static_cast<double>(g(rng)) : u(rng);
    if (lattice) {
        std::sort(c.begin(), c.end());
        c.erase(std::unique(c.begin(), c.end()), c.end());
    }
    return c;
}

// Exhaustive W1 between small finite diagrams: try every partial injection.
double brute_force_w1(const std::vector<Pair>& a, const std::vector<Pair>& b) {
    const double r2 = std::sqrt(2.0);
    double best = kInfinity;
    std::vector<char> used(b.size(), 0);
    std::function<void(std::size_t, double)> rec = [&](std::size_t i, double acc) {
        if (i == a.size()) {
            for (std::size_t j = 0; j < b.size(); ++j)
                if (!used[j]) acc += b[j].persistence() / r2;
            best = std::min(best, acc);
            return;
        }
        rec(i + 1, acc + a[i].persistence() / r2);
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (used[j]) continue;
            used[j] = 1;
            rec(i + 1, acc + std::hypot(a[i].birth - b[j].birth, a[i].death - b[j].death));
            used[j] = 0;
        }
    };
    rec(0, 0.0);
    return best;
}

double brute_force_bottleneck(const std::vector<Pair>& a, const std::vector<Pair>& b) {
    double best = kInfinity;
    std::vector<char> used(b.size(), 0);
    std::function<void(std::size_t, double)> rec = [&](std::size_t i, double acc) {
        if (i == a.size()) {
            for (std::size_t j = 0; j < b.size(); ++j)
                if (!used[j]) acc = std::max(acc, b[j].persistence() / 2.0);
            best = std::min(best, acc);
            return;
        }
        rec(i + 1, std::max(acc, a[i].persistence() / 2.0));
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (used[j]) continue;
            used[j] = 1;
            rec(i + 1, std::max({acc, std::abs(a[i].birth - b[j].birth), std::abs(a[i].death - b[j].death)}));
            used[j] = 0;
        }
    };
    rec(0, 0.0);
    return best;
}

std::vector<Pair> random_pairs(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::vector<Pair> out;
    for (int i = 0; i < n; ++i) {
        const double b = u(rng);
        out.push_back({b, b + u(rng)});
    }
    return out;
}

}  // namespace

TEST_CASE("unit square filtration") {
    const Cloud sq{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
    const auto f = build_rips(sq, 2);
    CHECK(f.threshold == doctest::Approx(std::sqrt(2.0)));
    int counts[4] = {0, 0, 0, 0};
    for (const auto& s : f.simplices) ++counts[s.dim()];
    CHECK(counts[0] == 4);
    CHECK(counts[1] == 6);
    CHECK(counts[2] == 4);
    CHECK(counts[3] == 1);
    CHECK(f.simplices.back().value == doctest::Approx(std::sqrt(2.0)));
    for (std::size_t i = 1; i < f.simplices.size(); ++i) CHECK(f.simplices[i - 1].value <= f.simplices[i].value);

    const auto dgms = persistence(f);
    REQUIRE(dgms.size() == 3);
    REQUIRE(dgms[1].pairs.size() == 1);
    CHECK(dgms[1].pairs[0].birth == doctest::Approx(1.0));
    CHECK(dgms[1].pairs[0].death == doctest::Approx(std::sqrt(2.0)));
    CHECK(dgms[0].pairs.size() == 4);
    CHECK(dgms[0].infinite_count() == 1);
    CHECK(dgms[2].pairs.empty());
    CHECK(rips_persistence(sq, {2, {}, kDefaultPointCapDim2}) == dgms);
}

TEST_CASE("collinear points") {
    const Cloud c{{0, 0, 0}, {1, 0, 0}, {3, 0, 0}};
    const auto d = rips_persistence(c, {0, {}, kDefaultPointCapDim2});
    REQUIRE(d.size() == 1);
    const std::vector<Pair> expected{{0, 1}, {0, 2}, {0, kInfinity}};
    CHECK(d[0].pairs == expected);
}

TEST_CASE("degenerate clouds") {
    const auto one = rips_persistence({{0.5, 0.5, 0.5}});
    CHECK(one[0].pairs == std::vector<Pair>{{0, kInfinity}});
    CHECK(one[1].pairs.empty());
    const auto none = rips_persistence({});
    CHECK(none.size() == 2);
    CHECK(none[0].pairs.empty());
}

TEST_CASE("matches textbook reduction") {
    std::mt19937_64 rng(2024);
    int checked = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const bool lattice = trial % 3 == 0;
        const Cloud c = random_cloud(rng, 4 + trial % 7, lattice);
        if (c.size() < 2) continue;
        const DistanceMatrix d(c);
        for (double thr : {enclosing_radius(d), 10.0, 0.8 * enclosing_radius(d)}) {
            const RipsOptions opt{2, thr, kDefaultPointCapDim2};
            const auto fast = rips_persistence(c, opt);
            const auto slow = testing::naive_persistence(c, 2, thr);
            CAPTURE(trial);
            CAPTURE(thr);
            REQUIRE(fast.size() == slow.size());
            for (std::size_t k = 0; k < fast.size(); ++k) CHECK(fast[k].pairs == slow[k].pairs);
            CHECK(persistence(build_rips(c, 2, thr)) == fast);
        }
        ++checked;
    }
    CHECK(checked >= 50);
}

TEST_CASE("dimension zero counts") {
    std::mt19937_64 rng(5);
    for (int n : {2, 7, 40, 120}) {
        const Cloud c = random_cloud(rng, n);
        const auto d = rips_persistence(c, {0, 100.0, kDefaultPointCapDim2});
        CHECK(d[0].pairs.size() == static_cast<std::size_t>(n));
        CHECK(d[0].infinite_count() == 1);
        for (const auto& p : d[0].pairs) CHECK(p.birth == 0.0);
    }
}

TEST_CASE("relabelling points leaves diagrams unchanged") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        Cloud c = random_cloud(rng, 30);
        const auto before = rips_persistence(c);
        std::shuffle(c.begin(), c.end(), rng);
        CHECK(rips_persistence(c) == before);
    }
}

TEST_CASE("diagram distances on small examples") {
    PersistenceDiagram empty{1, {}};
    PersistenceDiagram a{1, {{0, 2}}};
    CHECK(bottleneck(a, empty) == doctest::Approx(1.0));
    CHECK(bottleneck(empty, a) == doctest::Approx(1.0));
    CHECK(wasserstein1(PersistenceDiagram{1, {{0, 1}}}, empty) == doctest::Approx(1.0 / std::sqrt(2.0)));
    for (double h : {0.1, 0.5, 3.0})
        CHECK(wasserstein1(PersistenceDiagram{1, {{1, 1 + h}}}, empty) == doctest::Approx(h / std::sqrt(2.0)));
    PersistenceDiagram b{1, {{0.1, 2.2}}};
    CHECK(bottleneck(a, b) == doctest::Approx(0.2));
    CHECK(wasserstein1(a, b) == doctest::Approx(std::hypot(0.1, 0.2)));
    CHECK(bottleneck(a, a) == 0.0);
    CHECK(wasserstein1(a, a) == 0.0);

    PersistenceDiagram ess1{0, {{0, kInfinity}, {0, 1}}};
    PersistenceDiagram ess2{0, {{0.5, kInfinity}}};
    PersistenceDiagram ess0{0, {{0, 1}}};
    CHECK(bottleneck(ess1, ess2) == doctest::Approx(0.5));
    CHECK(wasserstein1(ess1, ess2) == doctest::Approx(0.5 + 1.0 / std::sqrt(2.0)));
    CHECK(bottleneck(ess1, ess0) == kInfinity);
    CHECK(wasserstein1(ess1, ess0) == kInfinity);
}

TEST_CASE("diagram distances against exhaustive matching") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const auto pa = random_pairs(rng, trial % 5);
        const auto pb = random_pairs(rng, (trial / 5) % 5);
        const PersistenceDiagram a{1, pa}, b{1, pb};
        CAPTURE(trial);
        CHECK(wasserstein1(a, b) == doctest::Approx(brute_force_w1(pa, pb)).epsilon(1e-12));
        CHECK(bottleneck(a, b) == doctest::Approx(brute_force_bottleneck(pa, pb)).epsilon(1e-12));
        CHECK(wasserstein1(a, b) >= bottleneck(a, b) - 1e-12);
    }
}

TEST_CASE("point set matching against permutations") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const Cloud p = random_cloud(rng, 6), q = random_cloud(rng, 6);
        const double brute = testing::brute_force_matching(p, q);
        CHECK(pointset_wasserstein1(p, q, false) == doctest::Approx(brute).epsilon(1e-12));
        CHECK(pointset_wasserstein1(p, q) == doctest::Approx(brute / 6.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(pointset_wasserstein1(Cloud(3), Cloud(4)), std::invalid_argument);
}

TEST_CASE("bottleneck is bounded by the distance perturbation") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> noise(0.0, 0.02);
    for (int trial = 0; trial < 20; ++trial) {
        const Cloud p = random_cloud(rng, 25);
        Cloud q = p;
        for (auto& x : q)
            for (auto& v : x) v += noise(rng);
        const DistanceMatrix dp(p), dq(q);
        double delta = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i)
            for (std::size_t j = 0; j < p.size(); ++j) delta = std::max(delta, std::abs(dp(i, j) - dq(i, j)));
        const RipsOptions opt{2, 100.0, kDefaultPointCapDim2};
        const auto a = rips_persistence(p, opt), b = rips_persistence(q, opt);
        for (int k = 0; k <= 2; ++k) CHECK(bottleneck(a[k], b[k]) <= delta + 1e-12);
    }
}

TEST_CASE("point cap for dimension two") {
    const Cloud big(kDefaultPointCapDim2 + 1);
    CHECK_THROWS_WITH_AS(rips_persistence(big, {2, {}, kDefaultPointCapDim2}),
                         doctest::Contains("cap"), std::invalid_argument);
    CHECK_THROWS_AS(build_rips(big, 2), std::invalid_argument);
    CHECK_THROWS_AS(rips_persistence({}, {3, {}, kDefaultPointCapDim2}), std::invalid_argument);
}

TEST_CASE("parallel kernels agree with serial") {
    std::mt19937_64 rng(10);
    std::vector<Cloud> clouds;
    for (int i = 0; i < 12; ++i) clouds.push_back(random_cloud(rng, 20 + 5 * i));
    const RipsOptions opt{1, {}, kDefaultPointCapDim2};
    CHECK(rips_persistence_batch(clouds, opt) == rips_persistence_batch_serial(clouds, opt));
    std::vector<double> s, p;
    const Cloud big = random_cloud(rng, 400);
    kernels::distance_matrix_serial(big, s);
    kernels::distance_matrix(big, p);
    CHECK(s == p);
}
