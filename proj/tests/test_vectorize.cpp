#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "npd/vectorize.hpp"

using namespace npd;
using namespace npd::vec;
using ph::Pair;
using ph::PersistenceDiagram;

namespace {

std::vector<PersistenceDiagram> sample_diagrams(std::mt19937_64& rng, int count, int dim, int points) {
    std::vector<PersistenceDiagram> out;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < count; ++i) {
        Cloud c(points);
        for (auto& p : c)
            for (auto& x : p) x = u(rng);
        out.push_back(ph::rips_persistence(c, {dim, {}, ph::kDefaultPointCapDim2})[dim]);
    }
    return out;
}

ElementSet single_element(Point2 c, double sigma, double nu) {
    ElementSet e;
    e.centers = {c};
    e.sigma = {sigma};
    e.nu = nu;
    e.cap = 10.0;
    return e;
}

// Every point moved by at most eps in each coordinate, staying off the diagonal.
PersistenceDiagram jitter(const PersistenceDiagram& d, double eps, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-eps, eps);
    PersistenceDiagram out = d;
    for (auto& p : out.pairs) {
        p.birth = std::max(0.0, p.birth + u(rng));
        if (!p.infinite()) p.death = std::max(p.birth + eps, p.death + u(rng));
    }
    return out;
}

}  // namespace

TEST_CASE("k-means on exactly k distinct points") {
    std::vector<Point2> pts;
    for (int i = 0; i < 20; ++i) pts.push_back({0.1 * i, std::sin(i)});
    std::mt19937_64 rng(1);
    const auto r = kmeans(pts, {}, rng);
    CHECK(r.cost == 0.0);
    const std::set<Point2> got(r.centers.begin(), r.centers.end()), want(pts.begin(), pts.end());
    CHECK(got == want);
}

TEST_CASE("k-means++ seeding probabilities") {
    const std::vector<Point2> pts{{0, 0}, {1, 0}, {3, 0}};
    // P(first = i, second = j) = 1/3 * d(i,j)^2 / sum_l d(i,l)^2
    const double d2[3][3] = {{0, 1, 9}, {1, 0, 4}, {9, 4, 0}};
    std::map<std::pair<std::size_t, std::size_t>, int> counts;
    std::mt19937_64 rng(2);
    const int runs = 10000;
    for (int r = 0; r < runs; ++r) {
        const auto s = kmeanspp_seeds(pts, 2, rng);
        ++counts[{s[0], s[1]}];
    }
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            const double row = d2[i][0] + d2[i][1] + d2[i][2];
            const double p = d2[i][j] / row / 3.0;
            const double se = std::sqrt(p * (1 - p) / runs);
            const double freq = counts[{i, j}] / static_cast<double>(runs);
            CAPTURE(i);
            CAPTURE(j);
            CHECK(std::abs(freq - p) <= 4 * se + 1e-12);
        }
}

TEST_CASE("element scales") {
    CHECK(element_scales({{0, 0}, {1, 0}}) == std::vector<double>{0.5, 0.5});
    const auto s = element_scales({{0, 0}, {0, 0}, {4, 0}});
    CHECK(s[0] == kSigmaFloor);
    CHECK(s[1] == kSigmaFloor);
    CHECK(s[2] == 2.0);
}

TEST_CASE("fit on a diagram corpus") {
    std::mt19937_64 rng(3);
    std::vector<std::vector<PersistenceDiagram>> corpus{sample_diagrams(rng, 30, 0, 25),
                                                        sample_diagrams(rng, 30, 1, 25), {}};
    const auto m = fit(corpus, rng);
    REQUIRE(m.dims.size() == 3);
    CHECK(m.output_size() == 60);
    for (const auto& d : m.dims) {
        CHECK(d.size() == 20);
        for (double s : d.sigma) CHECK(s >= kSigmaFloor);
        CHECK(d.nu > 0.0);
    }
    double maxdeath = 0.0;
    for (const auto& dg : corpus[0])
        for (const auto& p : dg.pairs)
            if (!p.infinite()) maxdeath = std::max(maxdeath, p.death);
    CHECK(m.dims[0].cap == maxdeath);
    // The empty dimension gets centers at the origin and yields zeros.
    for (const auto& c : m.dims[2].centers) CHECK(c == Point2{0.0, 0.0});
    const auto v = transform(std::vector<PersistenceDiagram>{corpus[0][0], corpus[1][0], {2, {}}}, m);
    CHECK(v.size() == 60);
    for (int i = 40; i < 60; ++i) CHECK(v[i] == 0.0);

    SUBCASE("serialization round trip") {
        const auto back = VectorizerModel::from_json(m.to_json());
        CHECK(back.to_json() == m.to_json());
        CHECK(back.fingerprint() == m.fingerprint());
        CHECK(transform(std::vector<PersistenceDiagram>{corpus[0][1], corpus[1][1], {2, {}}}, back) ==
              transform(std::vector<PersistenceDiagram>{corpus[0][1], corpus[1][1], {2, {}}}, m));
        auto other = m;
        other.dims[1].sigma[3] *= 1.0000001;
        CHECK(other.fingerprint() != m.fingerprint());
    }
    SUBCASE("subsampled fit is seeded") {
        FitOptions small;
        small.sample_size = 100;
        std::mt19937_64 r1(9), r2(9);
        CHECK(fit(corpus, r1, small).to_json() == fit(corpus, r2, small).to_json());
    }
}

TEST_CASE("transform examples") {
    const auto e = single_element({0.5, 2.0}, 0.3, 0.1);
    CHECK(transform(PersistenceDiagram{1, {}}, e) == std::vector<double>{0.0});
    CHECK(transform(PersistenceDiagram{1, {{0.5, 2.5}}}, e)[0] == 1.0);
    CHECK(transform(PersistenceDiagram{1, {{0.7, 0.7}, {1.0, 1.0}}}, e)[0] == 0.0);
    // Infinite death is capped.
    const auto inf = transform(PersistenceDiagram{0, {{0.0, ph::kInfinity}}}, single_element({0.0, 10.0}, 1.0, 0.1));
    CHECK(inf[0] == 1.0);
}

TEST_CASE("taper is monotone near the diagonal") {
    const double nu = 0.2;
    double prev = -1.0;
    for (int s = 0; s <= 50; ++s) {
        const double pers = nu * s / 50.0;
        const auto e = single_element({0.3, pers}, 0.05, nu);
        const double v = transform(PersistenceDiagram{1, {{0.3, 0.3 + pers}}}, e)[0];
        CHECK(v >= prev);
        prev = v;
    }
    CHECK(prev == doctest::Approx(1.0));
}

TEST_CASE("point order does not matter") {
    std::mt19937_64 rng(4);
    const auto corpus = sample_diagrams(rng, 10, 1, 30);
    const auto m = fit({{}, corpus}, rng);
    for (auto d : corpus) {
        const auto a = transform(d, m.dims[1]);
        std::shuffle(d.pairs.begin(), d.pairs.end(), rng);
        const auto b = transform(d, m.dims[1]);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    }
}

TEST_CASE("empirical Lipschitz probe") {
    std::mt19937_64 rng(5);
    const auto train = sample_diagrams(rng, 40, 1, 30);
    const auto m = fit({{}, train}, rng);
    auto probe = [&](const ElementSet& e, double min_pers) {
        std::mt19937_64 r(6);
        double k = 0.0;
        for (int t = 0; t < 10000; ++t) {
            PersistenceDiagram f = train[t % train.size()];
            std::erase_if(f.pairs, [&](const Pair& p) { return p.persistence() < min_pers; });
            if (f.pairs.empty()) continue;
            const auto g = jitter(f, 1e-6, r);
            if (ph::wasserstein1(f, g) == 0.0) continue;
            const double ratio = lipschitz_ratio(e, f, g);
            REQUIRE(std::isfinite(ratio));
            k = std::max(k, ratio);
        }
        return k;
    };
    auto wide = m.dims[1];
    for (auto& s : wide.sigma) s *= 2.0;
    const double k1 = probe(m.dims[1], 0.0);
    CHECK(k1 > 0.0);
    CHECK(std::isfinite(k1));
    const double k1_far = probe(m.dims[1], 2 * m.dims[1].nu);
    const double k2_far = probe(wide, 2 * m.dims[1].nu);
    MESSAGE("K: " << k1 << "; away from the taper, sigma: " << k1_far << ", 2 sigma: " << k2_far
                  << "; near it, 2 sigma: " << probe(wide, 0.0));
    CHECK(k2_far <= k1_far);

    const PersistenceDiagram f{1, {{0.1, 0.5}}};
    CHECK_THROWS_AS(lipschitz_ratio(m.dims[1], f, f), std::invalid_argument);
}

TEST_CASE("parallel assignment agrees with serial") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point2> pts(20000), centers(20);
    for (auto& p : pts) p = {u(rng), u(rng)};
    for (auto& c : centers) c = {u(rng), u(rng)};
    std::vector<int> l1, l2;
    std::vector<double> d1, d2;
    kernels::assign_serial(pts, centers, l1, d1);
    kernels::assign(pts, centers, l2, d2);
    CHECK(l1 == l2);
    CHECK(d1 == d2);
}
