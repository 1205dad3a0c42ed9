#include "npd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>

namespace npd::metrics {

namespace {

double population_variance(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double s = 0.0;
    for (double v : x) s += (v - mean) * (v - mean);
    return s / n;
}

void check_shapes(const Matrix& y, const Matrix& yhat, const char* op) {
    if (y.size() != yhat.size()) throw std::invalid_argument(std::string(op) + ": sample counts differ");
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i].size() != y[0].size() || yhat[i].size() != y[0].size())
            throw std::invalid_argument(std::string(op) + ": parameter counts differ");
}

std::vector<double> column(const Matrix& m, std::size_t j) {
    std::vector<double> out(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i][j];
    return out;
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    // splitmix64 step on the combined value
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h += 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
}

}  // namespace

double variance_explained(const std::vector<double>& y, const std::vector<double>& yhat) {
    if (y.size() != yhat.size()) throw std::invalid_argument("variance_explained: lengths differ");
    if (y.size() < 2) throw std::invalid_argument("variance_explained: need at least two samples");
    const double vy = population_variance(y);
    if (vy == 0.0) return 0.0;
    std::vector<double> r(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) r[i] = y[i] - yhat[i];
    return 1.0 - population_variance(r) / vy;
}

std::vector<double> variance_explained_per_param(const Matrix& y, const Matrix& yhat) {
    check_shapes(y, yhat, "variance_explained");
    std::vector<double> out;
    if (y.empty()) return out;
    for (std::size_t j = 0; j < y[0].size(); ++j) out.push_back(variance_explained(column(y, j), column(yhat, j)));
    return out;
}

double variance_explained(const Matrix& y, const Matrix& yhat) {
    const auto per = variance_explained_per_param(y, yhat);
    return per.empty() ? 0.0 : std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

double smape(const std::vector<double>& y, const std::vector<double>& yhat) {
    if (y.size() != yhat.size()) throw std::invalid_argument("smape: lengths differ");
    if (y.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double den = std::abs(y[i]) + std::abs(yhat[i]);
        if (den > 0.0) s += std::abs(yhat[i] - y[i]) / den;
    }
    return s / static_cast<double>(y.size());
}

std::vector<double> smape_per_param(const Matrix& y, const Matrix& yhat) {
    check_shapes(y, yhat, "smape");
    std::vector<double> out;
    if (y.empty()) return out;
    for (std::size_t j = 0; j < y[0].size(); ++j) out.push_back(smape(column(y, j), column(yhat, j)));
    return out;
}

double smape(const Matrix& y, const Matrix& yhat) {
    const auto per = smape_per_param(y, yhat);
    return per.empty() ? 0.0 : std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

std::vector<Split> make_splits(std::size_t n, const EvalProtocol& protocol) {
    if (n < 5) throw std::invalid_argument("make_splits: need at least 5 sequences");
    const std::size_t n_train = static_cast<std::size_t>(std::llround(protocol.train_fraction * n));
    std::vector<Split> out;
    for (int s = 0; s < protocol.n_splits; ++s) {
        std::mt19937_64 rng(mix(protocol.seed, static_cast<std::uint64_t>(s)));
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Split split;
        split.train.assign(perm.begin(), perm.begin() + static_cast<long>(n_train));
        split.test.assign(perm.begin() + static_cast<long>(n_train), perm.end());
        std::sort(split.train.begin(), split.train.end());
        std::sort(split.test.begin(), split.test.end());
        out.push_back(std::move(split));
    }
    return out;
}

std::size_t kept_count(double rate, std::size_t n_obs) {
    if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("subsampling rate must lie in (0, 1]");
    // Guard against 0.2 * 100 landing a hair above 20.
    const auto k = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n_obs) - 1e-9));
    return std::clamp<std::size_t>(k, 1, n_obs);
}

std::vector<std::size_t> kept_times(const EvalProtocol& protocol, int split, double rate, std::size_t sequence,
                                    std::size_t n_obs) {
    const std::size_t k = kept_count(rate, n_obs);
    std::vector<std::size_t> idx(n_obs);
    std::iota(idx.begin(), idx.end(), 0);
    if (k == n_obs) return idx;
    std::uint64_t h = mix(protocol.seed ^ 0x5bd1e995ull, static_cast<std::uint64_t>(split));
    h = mix(h, static_cast<std::uint64_t>(std::llround(rate * 1e6)));
    h = mix(h, sequence);
    std::mt19937_64 rng(h);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = std::uniform_int_distribution<std::size_t>(i, n_obs - 1)(rng);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

CellScore score_cell(const std::string& method, int split, double rate, const Matrix& y, const Matrix& yhat) {
    CellScore c;
    c.method = method;
    c.split = split;
    c.rate = rate;
    c.ve = variance_explained_per_param(y, yhat);
    c.smape = smape_per_param(y, yhat);
    if (!c.ve.empty()) {
        c.ve_mean = std::accumulate(c.ve.begin(), c.ve.end(), 0.0) / static_cast<double>(c.ve.size());
        c.smape_mean = std::accumulate(c.smape.begin(), c.smape.end(), 0.0) / static_cast<double>(c.smape.size());
    }
    return c;
}

std::vector<Aggregate> aggregate(const std::vector<CellScore>& cells) {
    std::vector<Aggregate> out;
    std::vector<std::vector<const CellScore*>> groups;
    for (const auto& c : cells) {
        auto it = std::find_if(out.begin(), out.end(), [&](const Aggregate& a) { return a.method == c.method; });
        if (it == out.end()) {
            out.push_back({c.method});
            groups.emplace_back();
            it = out.end() - 1;
        }
        groups[static_cast<std::size_t>(it - out.begin())].push_back(&c);
    }
    for (std::size_t g = 0; g < out.size(); ++g) {
        const auto& members = groups[g];
        const double n = static_cast<double>(members.size());
        double ve = 0.0, sm = 0.0;
        for (const auto* c : members) {
            ve += c->ve_mean;
            sm += c->smape_mean;
        }
        out[g].cells = members.size();
        out[g].ve_mean = ve / n;
        out[g].smape_mean = sm / n;
        if (members.size() > 1) {
            double sv = 0.0, ss = 0.0;
            for (const auto* c : members) {
                sv += (c->ve_mean - out[g].ve_mean) * (c->ve_mean - out[g].ve_mean);
                ss += (c->smape_mean - out[g].smape_mean) * (c->smape_mean - out[g].smape_mean);
            }
            out[g].ve_std = std::sqrt(sv / (n - 1));
            out[g].smape_std = std::sqrt(ss / (n - 1));
        }
    }
    return out;
}

std::string format_mean_std(double mean, double std) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f\xc2\xb1%.3f", mean, std);
    return buf;
}

}  // namespace npd::metrics
