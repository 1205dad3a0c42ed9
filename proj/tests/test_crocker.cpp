#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "npd/crocker.hpp"
#include "npd/metrics.hpp"

using namespace npd;
using namespace npd::crocker;
using ph::PersistenceDiagram;

namespace {

std::vector<std::vector<PersistenceDiagram>> random_sequence(std::mt19937_64& rng, int n_obs, int points) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<std::vector<PersistenceDiagram>> seq;
    Cloud c(points);
    for (auto& p : c)
        for (auto& x : p) x = u(rng);
    for (int t = 0; t < n_obs; ++t) {
        for (auto& p : c)
            for (auto& x : p) x += 0.05 * u(rng);
        seq.push_back(ph::rips_persistence(c, {1, {}, ph::kDefaultPointCapDim2}));
    }
    return seq;
}

}  // namespace

TEST_CASE("betti curves") {
    const Cloud far{{0, 0, 0}, {10, 0, 0}, {0, 10, 0}, {0, 0, 10}, {10, 10, 10}};
    const auto d = ph::rips_persistence(far, {0, 100.0, ph::kDefaultPointCapDim2});
    CHECK(betti_curve(d[0], {0.0, 5.0, 9.99}) == std::vector<int>{5, 5, 5});
    const PersistenceDiagram square{1, {{1.0, std::sqrt(2.0)}}};
    CHECK(betti_curve(square, {1.2}) == std::vector<int>{1});
    CHECK(betti_curve(square, {1.5}) == std::vector<int>{0});
    CHECK(betti_curve(PersistenceDiagram{1, {}}, {0.0, 1.0}) == std::vector<int>{0, 0});
    const PersistenceDiagram ess{0, {{0.0, ph::kInfinity}}};
    CHECK(betti_curve(ess, {0.0, 1e9}, 1e12) == std::vector<int>{1, 1});
}

TEST_CASE("stack structure") {
    std::mt19937_64 rng(1);
    const auto seq = random_sequence(rng, 12, 30);
    const auto s = build_stack(seq);
    REQUIRE(s.dims() == 2);
    CHECK(s.eps_steps == 25);
    CHECK(s.n_obs == 12);
    CHECK(s.alpha_steps == 18);
    CHECK(s.counts[0].size() == 25u * 12 * 18);
    CHECK(s.flatten().size() == 2u * 25 * 12 * 18);
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(s.eps_grid[k].back() == doctest::Approx(s.max_persistence[k] / 3.0));
        CHECK(s.alpha_grid[k].back() == doctest::Approx(s.max_persistence[k] / 2.0));
        for (int t = 0; t < s.n_obs; ++t) {
            // alpha = 0 is the plain crocker plot
            const auto plain = betti_curve(seq[t][k], s.eps_grid[k]);
            for (int e = 0; e < s.eps_steps; ++e) CHECK(s.at(k, e, t, 0) == plain[e]);
            for (int e = 0; e < s.eps_steps; ++e)
                for (int a = 1; a < s.alpha_steps; ++a) CHECK(s.at(k, e, t, a) <= s.at(k, e, t, a - 1));
            if (k == 0)
                for (int e = 1; e < s.eps_steps; ++e)
                    for (int a = 0; a < s.alpha_steps; ++a) CHECK(s.at(k, e, t, a) <= s.at(k, e - 1, t, a));
        }
    }
}

TEST_CASE("smoothing past the largest bar leaves only infinite bars") {
    std::mt19937_64 rng(2);
    const auto seq = random_sequence(rng, 5, 20);
    auto s = build_stack(seq, 25, 3);
    const double maxp = s.max_persistence[0];
    for (int t = 0; t < 5; ++t) {
        const auto c0 = betti_curve(seq[t][0], s.eps_grid[0], maxp);
        for (int v : c0) CHECK(v == 1);
        const auto c1 = betti_curve(seq[t][1], s.eps_grid[1], s.max_persistence[1]);
        for (int v : c1) CHECK(v == 0);
    }
}

TEST_CASE("ridge on constant targets") {
    std::mt19937_64 rng(3);
    std::normal_distribution<float> n(0.0f, 1.0f);
    ridge::Rows x(20, std::vector<float>(6)), xt(5, std::vector<float>(6));
    for (auto& r : x)
        for (auto& v : r) v = n(rng);
    for (auto& r : xt)
        for (auto& v : r) v = n(rng);
    const metrics::Matrix y(20, {2.5});
    const auto r = ridge::fit_predict(x, y, xt);
    for (const auto& p : r.predictions) CHECK(p[0] == doctest::Approx(2.5).epsilon(1e-12));
    metrics::Matrix yt(5, {2.5});
    CHECK(metrics::variance_explained(yt, r.predictions) == 0.0);
}

TEST_CASE("duplicate columns leave the unregularized optimum unchanged") {
    // Five samples, two features; with n > p the lambda -> 0 limit is least
    // squares, whose fitted values do not depend on repeated columns.
    const ridge::Rows x{{0.1f, 1.0f}, {0.7f, -0.3f}, {1.3f, 0.4f}, {-0.6f, 0.9f}, {0.2f, -1.2f}};
    const metrics::Matrix y{{1.0}, {0.3}, {2.0}, {-0.4}, {0.5}};
    ridge::Rows xd = x;
    for (auto& r : xd) r.push_back(r[0]);
    const auto a = ridge::predict_fixed(x, y, x, 1e-9);
    const auto b = ridge::predict_fixed(xd, y, xd, 1e-9);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i][0] == doctest::Approx(b[i][0]).epsilon(1e-6));
}

TEST_CASE("noiseless linear target is recovered as lambda shrinks") {
    std::mt19937_64 rng(4);
    std::normal_distribution<float> n(0.0f, 1.0f);
    ridge::Rows x(60, std::vector<float>(8)), xt(30, std::vector<float>(8));
    for (auto& r : x)
        for (auto& v : r) v = n(rng);
    for (auto& r : xt)
        for (auto& v : r) v = n(rng);
    metrics::Matrix y, yt;
    for (const auto& r : x) y.push_back({3.0 * r[5] + 1.0});
    for (const auto& r : xt) yt.push_back({3.0 * r[5] + 1.0});
    double prev = -1e9;
    for (double lambda : {1e2, 1e0, 1e-2, 1e-4, 1e-6}) {
        const double ve = metrics::variance_explained(yt, ridge::predict_fixed(x, y, xt, lambda));
        CHECK(ve >= prev - 1e-12);
        prev = ve;
    }
    CHECK(prev > 1.0 - 1e-6);
    const auto cv = ridge::fit_predict(x, y, xt);
    CHECK(cv.lambda[0] == 1e-3);
}

TEST_CASE("parallel gram agrees with serial") {
    std::mt19937_64 rng(5);
    std::normal_distribution<float> n(0.0f, 1.0f);
    ridge::Rows x(50, std::vector<float>(3000)), xt(13, std::vector<float>(3000));
    for (auto& r : x)
        for (auto& v : r) v = n(rng);
    for (auto& r : xt)
        for (auto& v : r) v = n(rng);
    for (auto& r : x) r[7] = 1.0f;  // constant column is dropped
    std::vector<double> a1, b1, a2, b2;
    ridge::kernels::gram_serial(x, xt, a1, b1);
    ridge::kernels::gram(x, xt, a2, b2);
    CHECK(a1 == a2);
    CHECK(b1 == b2);
    CHECK_THROWS_AS(ridge::kernels::gram(x, {std::vector<float>(5)}, a1, b1), std::invalid_argument);
}
