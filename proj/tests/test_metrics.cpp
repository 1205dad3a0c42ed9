#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "npd/metrics.hpp"

using namespace npd::metrics;
using V = std::vector<double>;

TEST_CASE("variance explained examples") {
    const std::vector<double> y{0, 1, 2};
    CHECK(variance_explained(y, y) == 1.0);
    CHECK(variance_explained(y, {1, 1, 1}) == 0.0);
    CHECK(std::abs(variance_explained(y, {0, 1, 1}) - 2.0 / 3.0) <= 1e-12);
    CHECK(variance_explained({3, 3, 3}, {1, 2, 3}) == 0.0);
    CHECK_THROWS_AS(variance_explained(std::vector<double>{1.0}, std::vector<double>{1.0}), std::invalid_argument);
    CHECK(variance_explained(y, {5, 1, -3}) < 0.0);
}

TEST_CASE("variance explained averages parameters") {
    const Matrix y{{0, 10}, {1, 20}, {2, 30}};
    const Matrix yhat{{0, 10}, {1, 20}, {1, 30}};
    CHECK(std::abs(variance_explained(y, yhat) - (2.0 / 3.0 + 1.0) / 2.0) <= 1e-12);
}

TEST_CASE("variance explained ignores a common offset") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> y(20), yh(20), y2(20), yh2(20);
        const double c = 10 * n(rng);
        for (int i = 0; i < 20; ++i) {
            y[i] = n(rng);
            yh[i] = y[i] + 0.3 * n(rng);
            y2[i] = y[i] + c;
            yh2[i] = yh[i] + c;
        }
        CHECK(variance_explained(y, yh) == doctest::Approx(variance_explained(y2, yh2)).epsilon(1e-9));
    }
}

TEST_CASE("smape examples") {
    CHECK(smape({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(smape(V{1.0}, V{0.0}) == 1.0);
    CHECK(std::abs(smape(V{2.0}, V{1.0}) - 1.0 / 3.0) <= 1e-12);
    CHECK(smape(V{0.0}, V{0.0}) == 0.0);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> a(7), b(7);
        for (int i = 0; i < 7; ++i) {
            a[i] = n(rng);
            b[i] = n(rng);
        }
        CHECK(smape(a, b) == smape(b, a));
        CHECK(smape(a, b) >= 0.0);
        CHECK(smape(a, b) <= 1.0);
    }
}

TEST_CASE("splits") {
    EvalProtocol p;
    p.seed = 42;
    const auto s = make_splits(100, p);
    REQUIRE(s.size() == 5);
    for (const auto& sp : s) {
        CHECK(sp.train.size() == 80);
        CHECK(sp.test.size() == 20);
        std::set<std::size_t> all(sp.train.begin(), sp.train.end());
        all.insert(sp.test.begin(), sp.test.end());
        CHECK(all.size() == 100);
    }
    CHECK(s[0].test != s[1].test);
    const auto again = make_splits(100, p);
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(s[i].train == again[i].train);
        CHECK(s[i].test == again[i].test);
    }
    CHECK_THROWS_AS(make_splits(4, p), std::invalid_argument);
}

TEST_CASE("time-point subsampling") {
    EvalProtocol p;
    p.seed = 3;
    CHECK(kept_times(p, 0, 1.0, 7, 100).size() == 100);
    CHECK(kept_count(0.2, 100) == 20);
    CHECK(kept_count(0.5, 100) == 50);
    CHECK(kept_count(0.8, 100) == 80);
    CHECK(kept_count(0.2, 3) == 1);
    CHECK(kept_count(0.01, 10) == 1);
    for (std::size_t seq = 0; seq < 30; ++seq) {
        const auto k = kept_times(p, 1, 0.2, seq, 100);
        CHECK(k.size() == 20);
        CHECK(std::set<std::size_t>(k.begin(), k.end()).size() == 20);
        CHECK(std::is_sorted(k.begin(), k.end()));
        CHECK(k.back() < 100);
        CHECK(k == kept_times(p, 1, 0.2, seq, 100));
    }
    CHECK(kept_times(p, 1, 0.2, 0, 100) != kept_times(p, 2, 0.2, 0, 100));
    CHECK(kept_times(p, 1, 0.2, 0, 100) != kept_times(p, 1, 0.2, 1, 100));
}

TEST_CASE("aggregation over cells") {
    std::vector<CellScore> cells;
    int i = 0;
    for (int s = 0; s < 5; ++s)
        for (double r : {0.2, 0.5, 0.8}) {
            CellScore c;
            c.method = "ours";
            c.split = s;
            c.rate = r;
            c.ve_mean = 0.5 + 0.01 * i;
            c.smape_mean = 0.1;
            cells.push_back(c);
            ++i;
        }
    cells.push_back({"crocker", 0, 1.0, {}, {}, 0.3, 0.2});
    const auto a = aggregate(cells);
    REQUIRE(a.size() == 2);
    CHECK(a[0].method == "ours");
    CHECK(a[0].cells == 15);
    CHECK(a[0].ve_mean == doctest::Approx(0.57));
    // sample std of 0.5, 0.51, ..., 0.64
    CHECK(a[0].ve_std == doctest::Approx(0.01 * std::sqrt(20.0)));
    CHECK(a[0].smape_std == doctest::Approx(0.0));
    CHECK(a[1].cells == 1);
    CHECK(a[1].ve_std == 0.0);
    CHECK(format_mean_std(0.8512, 0.0081) == "0.851\xc2\xb1" "0.008");
}

TEST_CASE("cell scoring") {
    const Matrix y{{0, 1}, {1, 2}, {2, 4}};
    const auto c = score_cell("m", 2, 0.5, y, y);
    CHECK(c.ve == std::vector<double>{1.0, 1.0});
    CHECK(c.smape_mean == 0.0);
    CHECK(c.split == 2);
}
