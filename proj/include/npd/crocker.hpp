#pragma once

// Crocker plots/stacks (Betti counts over scale, time and a persistence
// smoothing level) and the ridge regressor used on their flattened form.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "npd/metrics.hpp"
#include "npd/ph.hpp"

namespace npd::crocker {

inline constexpr int kEpsSteps = 25;
inline constexpr int kAlphaSteps = 18;

// count_j = #{(b, d) : b <= eps_j < d, d - b > min_persistence}.
std::vector<int> betti_curve(const ph::PersistenceDiagram& diagram, const std::vector<double>& eps,
                             double min_persistence = -1.0);

std::vector<double> linspace(double lo, double hi, int steps);

struct CrockerStack {
    int eps_steps = kEpsSteps;
    int n_obs = 0;
    int alpha_steps = kAlphaSteps;
    std::vector<double> max_persistence;           // per dim, finite bars of the sequence
    std::vector<std::vector<double>> eps_grid;     // per dim, [0, max_pers / 3]
    std::vector<std::vector<double>> alpha_grid;   // per dim, [0, max_pers / 2]
    std::vector<std::vector<std::uint16_t>> counts;  // per dim, index (e * n_obs + t) * alpha_steps + a

    std::size_t dims() const { return counts.size(); }
    std::uint16_t at(std::size_t dim, int e, int t, int a) const {
        return counts[dim][(static_cast<std::size_t>(e) * n_obs + t) * alpha_steps + a];
    }
    // All dims concatenated in storage order.
    std::vector<float> flatten() const;
};

// sequence[t][k] is the dimension-k diagram at observation t.
CrockerStack build_stack(const std::vector<std::vector<ph::PersistenceDiagram>>& sequence, int eps_steps = kEpsSteps,
                         int alpha_steps = kAlphaSteps);

}  // namespace npd::crocker

namespace npd::ridge {

using Rows = std::vector<std::vector<float>>;

struct Options {
    std::vector<double> lambdas{1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
    int folds = 5;
    std::uint64_t seed = 0;
};

struct Result {
    metrics::Matrix predictions;  // one row per test sample
    std::vector<double> lambda;   // chosen per target column
};

// One ridge model per target column on standardized features (train-split
// statistics; constant columns are dropped), intercept from the target mean.
// Solved in the dual, so cost is driven by the sample count.
Result fit_predict(const Rows& train_x, const metrics::Matrix& train_y, const Rows& test_x, const Options& options = {});

// Same model at a fixed regularization for every column.
metrics::Matrix predict_fixed(const Rows& train_x, const metrics::Matrix& train_y, const Rows& test_x, double lambda);

namespace kernels {
// Standardized Gram blocks: k_train = Z_tr Z_tr^T, k_cross = Z_te Z_tr^T.
void gram_serial(const Rows& train_x, const Rows& test_x, std::vector<double>& k_train,
                 std::vector<double>& k_cross);
void gram(const Rows& train_x, const Rows& test_x, std::vector<double>& k_train, std::vector<double>& k_cross);
}  // namespace kernels

}  // namespace npd::ridge
