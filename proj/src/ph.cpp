#include "npd/ph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "npd/assignment.hpp"

namespace npd::ph {

std::size_t PersistenceDiagram::infinite_count() const {
    return static_cast<std::size_t>(
        std::count_if(pairs.begin(), pairs.end(), [](const Pair& p) { return p.infinite(); }));
}

PersistenceDiagram PersistenceDiagram::sorted() const {
    PersistenceDiagram out = *this;
    std::sort(out.pairs.begin(), out.pairs.end());
    return out;
}

namespace kernels {

void distance_matrix_serial(const Cloud& cloud, std::vector<double>& out) {
    const std::size_t n = cloud.size();
    out.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = distance(cloud[i], cloud[j]);
}

void distance_matrix(const Cloud& cloud, std::vector<double>& out) {
    const std::size_t n = cloud.size();
    out.assign(n * n, 0.0);
    const long rows = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n > 256)
    for (long i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = distance(cloud[i], cloud[j]);
}

}  // namespace kernels

DistanceMatrix::DistanceMatrix(const Cloud& cloud) : n_(cloud.size()) {
    kernels::distance_matrix(cloud, d_);
}

double enclosing_radius(const DistanceMatrix& d) {
    const std::size_t n = d.size();
    if (n < 2) return 0.0;
    double best = kInfinity;
    for (std::size_t i = 0; i < n; ++i) {
        double far = 0.0;
        for (std::size_t j = 0; j < n; ++j) far = std::max(far, d(i, j));
        best = std::min(best, far);
    }
    return best;
}

namespace {

void check_cap(std::size_t n, int max_dim, std::size_t cap) {
    if (max_dim < 0 || max_dim > 2)
        throw std::invalid_argument("rips: max_dim must be 0, 1 or 2, got " + std::to_string(max_dim));
    if (max_dim == 2 && n > cap)
        throw std::invalid_argument("rips: " + std::to_string(n) +
                                    " points exceed the dimension-2 cap of " + std::to_string(cap) +
                                    "; lower the threshold, the homology dimension, or raise the cap");
}

double resolve_threshold(const DistanceMatrix& d, std::optional<double> threshold) {
    if (threshold) {
        if (!(*threshold > 0.0)) throw std::invalid_argument("rips: threshold must be positive");
        return *threshold;
    }
    return enclosing_radius(d);
}

// Binomial coefficients C(n, k) for k <= 4, used for the combinatorial number
// system index of a simplex: vertices v_0 > ... > v_k map to sum C(v_i, k+1-i).
class Binomials {
public:
    explicit Binomials(std::size_t n) : n_(n + 1), table_((n + 1) * 5, 0) {
        for (std::size_t i = 0; i <= n; ++i) {
            table_[i * 5] = 1;
            for (std::size_t k = 1; k <= 4 && k <= i; ++k)
                table_[i * 5 + k] = table_[(i - 1) * 5 + k - 1] + (k <= i - 1 ? table_[(i - 1) * 5 + k] : 0);
        }
    }
    std::int64_t operator()(std::size_t n, std::size_t k) const { return k > n ? 0 : table_[n * 5 + k]; }

private:
    std::size_t n_;
    std::vector<std::int64_t> table_;
};

struct Entry {
    double diam;
    std::int64_t idx;
};

inline bool operator<(const Entry& a, const Entry& b) {
    return a.diam < b.diam || (a.diam == b.diam && a.idx < b.idx);
}

struct Column {
    double diam;
    std::int64_t idx;
    std::array<int, 3> v;  // descending; first dim+1 used
};

class CohomologyReducer {
public:
    CohomologyReducer(const DistanceMatrix& d, double threshold)
        : d_(d), threshold_(threshold), binom_(d.size()) {}

    // k-simplices (k = 1, 2) with diameter <= threshold, in reverse
    // filtration order.
    std::vector<Column> columns(int k) const {
        const int n = static_cast<int>(d_.size());
        std::vector<Column> out;
        if (k == 1) {
            for (int j = 1; j < n; ++j)
                for (int i = 0; i < j; ++i) {
                    const double diam = d_(i, j);
                    if (diam <= threshold_) out.push_back({diam, binom_(j, 2) + i, {j, i, 0}});
                }
        } else {
            for (int c = 2; c < n; ++c)
                for (int b = 1; b < c; ++b) {
                    const double dbc = d_(b, c);
                    if (dbc > threshold_) continue;
                    for (int a = 0; a < b; ++a) {
                        const double diam = std::max({dbc, d_(a, b), d_(a, c)});
                        if (diam <= threshold_)
                            out.push_back({diam, binom_(c, 3) + binom_(b, 2) + a, {c, b, a}});
                    }
                }
        }
        std::sort(out.begin(), out.end(), [](const Column& x, const Column& y) {
            return x.diam > y.diam || (x.diam == y.diam && x.idx > y.idx);
        });
        return out;
    }

    std::int64_t coface_index(const Column& col, int k, int w) const {
        std::int64_t idx = 0;
        int pos = k + 2;
        bool placed = false;
        for (int i = 0; i <= k; ++i) {
            if (!placed && w > col.v[i]) {
                idx += binom_(w, pos--);
                placed = true;
            }
            idx += binom_(col.v[i], pos--);
        }
        if (!placed) idx += binom_(w, pos);
        return idx;
    }

    // Smallest coface by (diameter, index). For a fixed facet the coface
    // index grows with the added vertex, so scanning vertices upwards the
    // first hit at a given diameter is the smallest one there.
    bool min_coface(const Column& col, int k, Entry& out) const {
        const int n = static_cast<int>(d_.size());
        const double* rows[3] = {d_.row(col.v[0]), d_.row(col.v[1]), k == 2 ? d_.row(col.v[2]) : nullptr};
        double best = kInfinity;
        int best_w = -1;
        for (int w = 0; w < n; ++w) {
            if (w == col.v[0] || w == col.v[1] || (k == 2 && w == col.v[2])) continue;
            double diam = std::max(col.diam, std::max(rows[0][w], rows[1][w]));
            if (k == 2) diam = std::max(diam, rows[2][w]);
            if (diam > threshold_ || diam >= best) continue;
            best = diam;
            best_w = w;
            if (diam == col.diam) break;
        }
        if (best_w < 0) return false;
        out = Entry{best, coface_index(col, k, best_w)};
        return true;
    }

    template <class F>
    void for_each_coface(const Column& col, int k, F&& f) const {
        const int n = static_cast<int>(d_.size());
        for (int w = n - 1; w >= 0; --w) {
            bool member = false;
            double diam = col.diam;
            for (int i = 0; i <= k; ++i) {
                if (col.v[i] == w) {
                    member = true;
                    break;
                }
                diam = std::max(diam, d_(w, col.v[i]));
            }
            if (member || diam > threshold_) continue;
            f(Entry{diam, coface_index(col, k, w)});
        }
    }

    std::vector<Entry> coboundary(const Column& col, int k) const {
        std::vector<Entry> out;
        for_each_coface(col, k, [&](const Entry& e) { out.push_back(e); });
        std::sort(out.begin(), out.end());
        return out;
    }

    // Reduces dimension-k cohomology. `cleared` holds the indices of
    // k-simplices that already kill a class one dimension down; on return it
    // holds the (k+1)-simplices paired here.
    void reduce(int k, std::unordered_set<std::int64_t>& cleared, std::vector<Pair>& pairs) const {
        const auto cols = columns(k);
        std::unordered_map<std::int64_t, std::size_t> pivot_of;
        std::vector<std::vector<Entry>> stored(cols.size());
        std::unordered_set<std::int64_t> next_cleared;
        std::vector<Entry> working, scratch;
        pivot_of.reserve(cols.size());
        next_cleared.reserve(cols.size());

        for (std::size_t c = 0; c < cols.size(); ++c) {
            const Column& col = cols[c];
            if (cleared.count(col.idx)) continue;

            Entry lowest{kInfinity, 0};
            if (!min_coface(col, k, lowest)) {
                pairs.push_back({col.diam, kInfinity});
                continue;
            }
            if (!pivot_of.count(lowest.idx)) {
                pivot_of.emplace(lowest.idx, c);
                next_cleared.insert(lowest.idx);
                pairs.push_back({col.diam, lowest.diam});
                continue;
            }

            working = coboundary(col, k);
            while (!working.empty()) {
                const auto it = pivot_of.find(working.front().idx);
                if (it == pivot_of.end()) break;
                auto& other = stored[it->second];
                if (other.empty()) other = coboundary(cols[it->second], k);
                scratch.clear();
                // Z/2 sum of two sorted columns.
                std::size_t i = 0, j = 0;
                while (i < working.size() || j < other.size()) {
                    if (j == other.size() || (i < working.size() && working[i] < other[j]))
                        scratch.push_back(working[i++]);
                    else if (i == working.size() || other[j] < working[i])
                        scratch.push_back(other[j++]);
                    else {
                        ++i;
                        ++j;
                    }
                }
                working.swap(scratch);
            }
            if (working.empty()) {
                pairs.push_back({col.diam, kInfinity});
            } else {
                pivot_of.emplace(working.front().idx, c);
                next_cleared.insert(working.front().idx);
                pairs.push_back({col.diam, working.front().diam});
                stored[c] = working;
            }
        }
        cleared.swap(next_cleared);
    }

    // Dimension 0 via union-find over edges in filtration order. Returns the
    // indices of edges that merged two components.
    std::unordered_set<std::int64_t> components(std::vector<Pair>& pairs) const {
        const int n = static_cast<int>(d_.size());
        std::vector<Column> edges;
        for (int j = 1; j < n; ++j)
            for (int i = 0; i < j; ++i)
                if (d_(i, j) <= threshold_) edges.push_back({d_(i, j), binom_(j, 2) + i, {j, i, 0}});
        std::sort(edges.begin(), edges.end(), [](const Column& x, const Column& y) {
            return x.diam < y.diam || (x.diam == y.diam && x.idx < y.idx);
        });
        std::vector<int> parent(n);
        std::iota(parent.begin(), parent.end(), 0);
        auto find = [&parent](int x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        std::unordered_set<std::int64_t> merged;
        merged.reserve(2 * static_cast<std::size_t>(n));
        for (const auto& e : edges) {
            const int a = find(e.v[0]), b = find(e.v[1]);
            if (a == b) continue;
            // Every vertex is born at 0, so either root may absorb the other.
            parent[std::max(a, b)] = std::min(a, b);
            pairs.push_back({0.0, e.diam});
            merged.insert(e.idx);
        }
        for (int v = 0; v < n; ++v)
            if (find(v) == v) pairs.push_back({0.0, kInfinity});
        return merged;
    }

private:
    const DistanceMatrix& d_;
    double threshold_;
    Binomials binom_;
};

std::vector<PersistenceDiagram> compute(const DistanceMatrix& d, double threshold, int max_dim) {
    std::vector<PersistenceDiagram> out(max_dim + 1);
    for (int k = 0; k <= max_dim; ++k) out[k].dim = k;
    if (d.size() == 0) return out;
    CohomologyReducer reducer(d, threshold);
    std::vector<std::vector<Pair>> raw(max_dim + 1);
    auto cleared = reducer.components(raw[0]);
    for (int k = 1; k <= max_dim; ++k) reducer.reduce(k, cleared, raw[k]);
    for (int k = 0; k <= max_dim; ++k) {
        for (const auto& p : raw[k])
            if (p.death > p.birth) out[k].pairs.push_back(p);
        std::sort(out[k].pairs.begin(), out[k].pairs.end());
    }
    return out;
}

void extend_cliques(const DistanceMatrix& d, double threshold, int top_dim, Simplex& current,
                    std::vector<Simplex>& out) {
    out.push_back(current);
    if (current.dim() == top_dim) return;
    const int n = static_cast<int>(d.size());
    for (int w = current.vertices.back() + 1; w < n; ++w) {
        double value = current.value;
        for (int v : current.vertices) value = std::max(value, d(v, w));
        if (value > threshold) continue;
        Simplex next{current.vertices, value};
        next.vertices.push_back(w);
        extend_cliques(d, threshold, top_dim, next, out);
    }
}

}  // namespace

Filtration build_rips(const Cloud& cloud, int max_dim, std::optional<double> threshold,
                      std::size_t point_cap_dim2) {
    check_cap(cloud.size(), max_dim, point_cap_dim2);
    Filtration f;
    f.distances = DistanceMatrix(cloud);
    f.max_dim = max_dim;
    f.threshold = resolve_threshold(f.distances, threshold);
    for (int v = 0; v < static_cast<int>(cloud.size()); ++v) {
        Simplex s{{v}, 0.0};
        extend_cliques(f.distances, f.threshold, max_dim + 1, s, f.simplices);
    }
    std::sort(f.simplices.begin(), f.simplices.end(), [](const Simplex& a, const Simplex& b) {
        if (a.value != b.value) return a.value < b.value;
        if (a.dim() != b.dim()) return a.dim() < b.dim();
        return a.vertices < b.vertices;
    });
    return f;
}

std::vector<PersistenceDiagram> persistence(const Filtration& filtration) {
    return compute(filtration.distances, filtration.threshold, filtration.max_dim);
}

std::vector<PersistenceDiagram> rips_persistence(const Cloud& cloud, const RipsOptions& options) {
    check_cap(cloud.size(), options.max_dim, options.point_cap_dim2);
    DistanceMatrix d(cloud);
    return compute(d, resolve_threshold(d, options.threshold), options.max_dim);
}

std::vector<std::vector<PersistenceDiagram>> rips_persistence_batch_serial(
    const std::vector<Cloud>& clouds, const RipsOptions& options) {
    std::vector<std::vector<PersistenceDiagram>> out(clouds.size());
    for (std::size_t i = 0; i < clouds.size(); ++i) out[i] = rips_persistence(clouds[i], options);
    return out;
}

std::vector<std::vector<PersistenceDiagram>> rips_persistence_batch(
    const std::vector<Cloud>& clouds, const RipsOptions& options) {
    std::vector<std::vector<PersistenceDiagram>> out(clouds.size());
    const long n = static_cast<long>(clouds.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < n; ++i) out[i] = rips_persistence(clouds[i], options);
    return out;
}

namespace {

struct SplitDiagram {
    std::vector<Pair> finite;
    std::vector<double> infinite_births;
};

SplitDiagram split(const PersistenceDiagram& dgm) {
    SplitDiagram s;
    for (const auto& p : dgm.pairs) {
        if (p.infinite())
            s.infinite_births.push_back(p.birth);
        else if (p.death > p.birth)
            s.finite.push_back(p);
    }
    std::sort(s.infinite_births.begin(), s.infinite_births.end());
    return s;
}

}  // namespace

double bottleneck(const PersistenceDiagram& f, const PersistenceDiagram& g) {
    const SplitDiagram a = split(f), b = split(g);
    if (a.infinite_births.size() != b.infinite_births.size()) return kInfinity;
    double essential = 0.0;
    for (std::size_t i = 0; i < a.infinite_births.size(); ++i)
        essential = std::max(essential, std::abs(a.infinite_births[i] - b.infinite_births[i]));

    // Rows: points of a, then diagonal copies of b. Columns: points of b,
    // then diagonal copies of a. A point may only go to its own projection.
    const std::size_t na = a.finite.size(), nb = b.finite.size(), n = na + nb;
    if (n == 0) return essential;
    std::vector<double> cost(n * n, kInfinity);
    for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = 0; j < nb; ++j)
            cost[i * n + j] = std::max(std::abs(a.finite[i].birth - b.finite[j].birth),
                                       std::abs(a.finite[i].death - b.finite[j].death));
        cost[i * n + nb + i] = a.finite[i].persistence() / 2.0;
    }
    for (std::size_t j = 0; j < nb; ++j) {
        cost[(na + j) * n + j] = b.finite[j].persistence() / 2.0;
        for (std::size_t i = 0; i < na; ++i) cost[(na + j) * n + nb + i] = 0.0;
    }
    std::vector<double> candidates;
    for (double c : cost)
        if (c != kInfinity) candidates.push_back(c);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    std::size_t lo = 0, hi = candidates.size() - 1;
    std::vector<char> allowed(n * n);
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        for (std::size_t k = 0; k < n * n; ++k) allowed[k] = cost[k] <= candidates[mid];
        if (has_perfect_matching(n, allowed))
            hi = mid;
        else
            lo = mid + 1;
    }
    return std::max(essential, candidates[lo]);
}

double wasserstein1(const PersistenceDiagram& f, const PersistenceDiagram& g) {
    const SplitDiagram a = split(f), b = split(g);
    if (a.infinite_births.size() != b.infinite_births.size()) return kInfinity;
    double essential = 0.0;
    for (std::size_t i = 0; i < a.infinite_births.size(); ++i)
        essential += std::abs(a.infinite_births[i] - b.infinite_births[i]);

    const std::size_t na = a.finite.size(), nb = b.finite.size(), n = na + nb;
    if (n == 0) return essential;
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CostMatrix c{n, std::vector<double>(n * n, 0.0)};
    for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = 0; j < nb; ++j)
            c(i, j) = std::hypot(a.finite[i].birth - b.finite[j].birth,
                                 a.finite[i].death - b.finite[j].death);
        for (std::size_t j = nb; j < n; ++j) c(i, j) = a.finite[i].persistence() * inv_sqrt2;
    }
    for (std::size_t i = na; i < n; ++i)
        for (std::size_t j = 0; j < nb; ++j) c(i, j) = b.finite[j].persistence() * inv_sqrt2;
    return essential + solve_assignment(c).total;
}

double pointset_wasserstein1(const Cloud& p, const Cloud& q, bool normalized) {
    if (p.size() != q.size())
        throw std::invalid_argument("pointset_wasserstein1: cardinalities differ (" +
                                    std::to_string(p.size()) + " vs " + std::to_string(q.size()) + ")");
    const std::size_t n = p.size();
    if (n == 0) return 0.0;
    CostMatrix c{n, std::vector<double>(n * n)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) c(i, j) = distance(p[i], q[j]);
    const double total = solve_assignment(c).total;
    return normalized ? total / static_cast<double>(n) : total;
}

}  // namespace npd::ph
