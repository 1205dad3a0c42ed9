#include "npd/crocker.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace npd::crocker {

std::vector<double> linspace(double lo, double hi, int steps) {
    std::vector<double> out(steps);
    for (int i = 0; i < steps; ++i) out[i] = steps == 1 ? lo : lo + (hi - lo) * i / (steps - 1);
    return out;
}

std::vector<int> betti_curve(const ph::PersistenceDiagram& diagram, const std::vector<double>& eps,
                             double min_persistence) {
    std::vector<int> out(eps.size(), 0);
    for (const auto& p : diagram.pairs) {
        if (!(p.persistence() > min_persistence)) continue;
        for (std::size_t j = 0; j < eps.size(); ++j)
            if (p.birth <= eps[j] && eps[j] < p.death) ++out[j];
    }
    return out;
}

CrockerStack build_stack(const std::vector<std::vector<ph::PersistenceDiagram>>& sequence, int eps_steps,
                         int alpha_steps) {
    if (eps_steps < 1 || alpha_steps < 1) throw std::invalid_argument("build_stack: grid sizes must be positive");
    CrockerStack s;
    s.eps_steps = eps_steps;
    s.alpha_steps = alpha_steps;
    s.n_obs = static_cast<int>(sequence.size());
    std::size_t dims = 0;
    for (const auto& t : sequence) dims = std::max(dims, t.size());
    s.max_persistence.assign(dims, 0.0);
    for (const auto& t : sequence)
        for (std::size_t k = 0; k < t.size(); ++k)
            for (const auto& p : t[k].pairs)
                if (!p.infinite()) s.max_persistence[k] = std::max(s.max_persistence[k], p.persistence());
    for (std::size_t k = 0; k < dims; ++k) {
        s.eps_grid.push_back(linspace(0.0, s.max_persistence[k] / 3.0, eps_steps));
        s.alpha_grid.push_back(linspace(0.0, 0.5 * s.max_persistence[k], alpha_steps));
        std::vector<std::uint16_t> c(static_cast<std::size_t>(eps_steps) * s.n_obs * alpha_steps, 0);
        for (int t = 0; t < s.n_obs; ++t) {
            if (k >= sequence[t].size()) continue;
            for (int a = 0; a < alpha_steps; ++a) {
                const auto curve = betti_curve(sequence[t][k], s.eps_grid[k], s.alpha_grid[k][a]);
                for (int e = 0; e < eps_steps; ++e)
                    c[(static_cast<std::size_t>(e) * s.n_obs + t) * alpha_steps + a] =
                        static_cast<std::uint16_t>(curve[e]);
            }
        }
        s.counts.push_back(std::move(c));
    }
    return s;
}

std::vector<float> CrockerStack::flatten() const {
    std::vector<float> out;
    for (const auto& c : counts) out.insert(out.end(), c.begin(), c.end());
    return out;
}

}  // namespace npd::crocker

namespace npd::ridge {

namespace {

constexpr std::size_t kChunk = 1024;

// Four partial sums keep the dependency chain short; both Gram kernels use
// this, so they agree bitwise.
inline double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

struct Standardizer {
    std::vector<std::size_t> keep;
    std::vector<double> mean, inv_std;

    explicit Standardizer(const Rows& x) {
        if (x.empty()) return;
        const std::size_t f = x[0].size();
        const double n = static_cast<double>(x.size());
        for (std::size_t j = 0; j < f; ++j) {
            double m = 0.0;
            for (const auto& r : x) m += r[j];
            m /= n;
            double v = 0.0;
            for (const auto& r : x) v += (r[j] - m) * (r[j] - m);
            v /= n;
            // Round-off on a constant float column leaves a tiny nonzero variance.
            if (v > 1e-10 * std::max(1.0, m * m)) {
                keep.push_back(j);
                mean.push_back(m);
                inv_std.push_back(1.0 / std::sqrt(v));
            }
        }
    }

    // Rows x [begin, end) of the kept columns, standardized, row-major.
    void block(const Rows& x, std::size_t begin, std::size_t end, std::vector<double>& out) const {
        const std::size_t w = end - begin;
        out.resize(x.size() * w);
        for (std::size_t i = 0; i < x.size(); ++i)
            for (std::size_t c = begin; c < end; ++c)
                out[i * w + (c - begin)] = (x[i][keep[c]] - mean[c]) * inv_std[c];
    }
};

void check_rows(const Rows& train_x, const Rows& test_x) {
    if (train_x.empty()) throw std::invalid_argument("ridge: empty training set");
    const std::size_t f = train_x[0].size();
    for (const auto& r : train_x)
        if (r.size() != f) throw std::invalid_argument("ridge: ragged training features");
    for (const auto& r : test_x)
        if (r.size() != f) throw std::invalid_argument("ridge: test feature count differs from training");
}

template <bool Parallel>
void gram_impl(const Rows& train_x, const Rows& test_x, std::vector<double>& k_train, std::vector<double>& k_cross) {
    check_rows(train_x, test_x);
    const Standardizer st(train_x);
    const std::size_t n = train_x.size(), m = test_x.size(), kept = st.keep.size();
    k_train.assign(n * n, 0.0);
    k_cross.assign(m * n, 0.0);
    std::vector<double> ztr, zte;
    for (std::size_t begin = 0; begin < kept; begin += kChunk) {
        const std::size_t end = std::min(kept, begin + kChunk), w = end - begin;
        st.block(train_x, begin, end, ztr);
        st.block(test_x, begin, end, zte);
        const long rows = static_cast<long>(n + m);
#pragma omp parallel for schedule(dynamic, 4) if (Parallel)
        for (long r = 0; r < rows; ++r) {
            const std::size_t i = static_cast<std::size_t>(r);
            if (i < n) {
                for (std::size_t j = i; j < n; ++j) k_train[i * n + j] += dot(&ztr[i * w], &ztr[j * w], w);
            } else {
                const std::size_t t = i - n;
                for (std::size_t j = 0; j < n; ++j) k_cross[t * n + j] += dot(&zte[t * w], &ztr[j * w], w);
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) k_train[i * n + j] = k_train[j * n + i];
}

using Mat = Eigen::MatrixXd;

// (K + lambda I)^-1 Y, raising lambda tenfold while the factorization fails.
Mat solve(const Mat& k, const Mat& y, double lambda) {
    for (int attempt = 0; attempt < 12; ++attempt, lambda *= 10.0) {
        Mat a = k;
        a.diagonal().array() += lambda;
        Eigen::LDLT<Mat> ldlt(a);
        if (ldlt.info() != Eigen::Success) continue;
        Mat x = ldlt.solve(y);
        if (x.allFinite()) return x;
    }
    throw std::runtime_error("ridge: normal equations stayed singular");
}

Mat to_matrix(const metrics::Matrix& y, std::size_t cols) {
    Mat out(static_cast<long>(y.size()), static_cast<long>(cols));
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i].size() != cols) throw std::invalid_argument("ridge: ragged targets");
        for (std::size_t j = 0; j < cols; ++j) out(static_cast<long>(i), static_cast<long>(j)) = y[i][j];
    }
    return out;
}

struct Grams {
    Mat train, cross;
};

Grams grams(const Rows& train_x, const Rows& test_x) {
    std::vector<double> kt, kc;
    kernels::gram(train_x, test_x, kt, kc);
    const long n = static_cast<long>(train_x.size()), m = static_cast<long>(test_x.size());
    Grams g{Mat(n, n), Mat(m, n)};
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < n; ++j) g.train(i, j) = kt[i * n + j];
    for (long i = 0; i < m; ++i)
        for (long j = 0; j < n; ++j) g.cross(i, j) = kc[i * n + j];
    return g;
}

Mat predict(const Mat& k_train, const Mat& k_cross, const Mat& y, double lambda) {
    const Eigen::RowVectorXd mean = y.colwise().mean();
    const Mat centered = y.rowwise() - mean;
    Mat pred = k_cross * solve(k_train, centered, lambda);
    return pred.rowwise() + mean;
}

metrics::Matrix to_rows(const Mat& m) {
    metrics::Matrix out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (long i = 0; i < m.rows(); ++i)
        for (long j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
    return out;
}

}  // namespace

namespace kernels {

void gram_serial(const Rows& train_x, const Rows& test_x, std::vector<double>& k_train,
                 std::vector<double>& k_cross) {
    gram_impl<false>(train_x, test_x, k_train, k_cross);
}

void gram(const Rows& train_x, const Rows& test_x, std::vector<double>& k_train, std::vector<double>& k_cross) {
    gram_impl<true>(train_x, test_x, k_train, k_cross);
}

}  // namespace kernels

metrics::Matrix predict_fixed(const Rows& train_x, const metrics::Matrix& train_y, const Rows& test_x,
                              double lambda) {
    if (train_y.size() != train_x.size()) throw std::invalid_argument("ridge: target count differs from samples");
    const Grams g = grams(train_x, test_x);
    const Mat y = to_matrix(train_y, train_y.empty() ? 0 : train_y[0].size());
    return to_rows(predict(g.train, g.cross, y, lambda));
}

Result fit_predict(const Rows& train_x, const metrics::Matrix& train_y, const Rows& test_x, const Options& options) {
    if (train_y.size() != train_x.size()) throw std::invalid_argument("ridge: target count differs from samples");
    if (options.lambdas.empty()) throw std::invalid_argument("ridge: empty regularization grid");
    const Grams g = grams(train_x, test_x);
    const std::size_t p = train_y[0].size();
    const Mat y = to_matrix(train_y, p);
    const long n = static_cast<long>(train_x.size());

    // Cross-validated squared error per (lambda, column).
    const int folds = static_cast<int>(std::min<long>(options.folds, n));
    std::vector<int> fold_of(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) fold_of[i] = static_cast<int>(i % folds);
    std::mt19937_64 rng(options.seed);
    std::shuffle(fold_of.begin(), fold_of.end(), rng);

    std::vector<std::vector<double>> cv_error(options.lambdas.size(), std::vector<double>(p, 0.0));
    if (folds >= 2) {
        for (int f = 0; f < folds; ++f) {
            std::vector<long> tr, va;
            for (long i = 0; i < n; ++i) (fold_of[i] == f ? va : tr).push_back(i);
            const Mat kt = g.train(tr, tr), kv = g.train(va, tr);
            const Mat yt = y(tr, Eigen::all), yv = y(va, Eigen::all);
            for (std::size_t l = 0; l < options.lambdas.size(); ++l) {
                const Mat err = predict(kt, kv, yt, options.lambdas[l]) - yv;
                for (std::size_t j = 0; j < p; ++j) cv_error[l][j] += err.col(static_cast<long>(j)).squaredNorm();
            }
        }
    }

    Result r;
    r.lambda.assign(p, options.lambdas[0]);
    for (std::size_t j = 0; j < p; ++j) {
        std::size_t best = 0;
        for (std::size_t l = 1; l < options.lambdas.size(); ++l)
            if (cv_error[l][j] < cv_error[best][j]) best = l;
        r.lambda[j] = options.lambdas[best];
    }
    Mat pred(g.cross.rows(), static_cast<long>(p));
    for (std::size_t j = 0; j < p; ++j) {
        const long c = static_cast<long>(j);
        pred.col(c) = predict(g.train, g.cross, y.col(c), r.lambda[j]);
    }
    r.predictions = to_rows(pred);
    return r;
}

}  // namespace npd::ridge
