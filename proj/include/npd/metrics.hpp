#pragma once

// Regression scores and the split/subsampling protocol.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace npd::metrics {

// Rows are samples, columns are parameters.
using Matrix = std::vector<std::vector<double>>;

// 1 - Var(y - yhat) / Var(y) with population variances; 0 when Var(y) = 0.
double variance_explained(const std::vector<double>& y, const std::vector<double>& yhat);
// Mean of the per-parameter scores.
double variance_explained(const Matrix& y, const Matrix& yhat);
std::vector<double> variance_explained_per_param(const Matrix& y, const Matrix& yhat);

// Mean of |yhat - y| / (|y| + |yhat|), with 0/0 taken as 0.
double smape(const std::vector<double>& y, const std::vector<double>& yhat);
double smape(const Matrix& y, const Matrix& yhat);
std::vector<double> smape_per_param(const Matrix& y, const Matrix& yhat);

struct EvalProtocol {
    int n_splits = 5;
    double train_fraction = 0.8;
    std::vector<double> rates{0.2, 0.5, 0.8};
    std::uint64_t seed = 0;
};

struct Split {
    std::vector<std::size_t> train;  // ascending sequence indices
    std::vector<std::size_t> test;
};

// Each split is an independent random partition of 0..n-1.
std::vector<Split> make_splits(std::size_t n, const EvalProtocol& protocol);

// ceil(rate * n_obs) distinct indices in ascending order, at least one.
std::size_t kept_count(double rate, std::size_t n_obs);
// Kept time indices for one sequence in one (split, rate) cell. Depends only
// on its arguments, so train and test sequences use the same procedure and
// results do not depend on visiting order.
std::vector<std::size_t> kept_times(const EvalProtocol& protocol, int split, double rate, std::size_t sequence,
                                    std::size_t n_obs);

struct CellScore {
    std::string method;
    int split = 0;
    double rate = 1.0;
    std::vector<double> ve;     // per parameter
    std::vector<double> smape;  // per parameter
    double ve_mean = 0.0;
    double smape_mean = 0.0;
};

CellScore score_cell(const std::string& method, int split, double rate, const Matrix& y, const Matrix& yhat);

struct Aggregate {
    std::string method;
    std::size_t cells = 0;
    double ve_mean = 0.0, ve_std = 0.0;
    double smape_mean = 0.0, smape_std = 0.0;
};

// Mean and sample standard deviation over cells of the parameter-averaged
// scores, grouped by method in order of first appearance.
std::vector<Aggregate> aggregate(const std::vector<CellScore>& cells);

std::string format_mean_std(double mean, double std);

}  // namespace npd::metrics
