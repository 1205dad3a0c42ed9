#pragma once

// Vietoris-Rips persistent homology of point clouds in dimensions 0..2 and
// matching distances between persistence diagrams.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "npd/geometry.hpp"

namespace npd::ph {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();
inline constexpr std::size_t kDefaultPointCapDim2 = 512;

struct Pair {
    double birth = 0.0;
    double death = kInfinity;

    bool infinite() const { return death == kInfinity; }
    double persistence() const { return death - birth; }
    friend bool operator==(const Pair&, const Pair&) = default;
    friend auto operator<=>(const Pair&, const Pair&) = default;
};

struct PersistenceDiagram {
    int dim = 0;
    std::vector<Pair> pairs;

    std::size_t infinite_count() const;
    // Pairs in (birth, death) order; diagrams compare as multisets this way.
    PersistenceDiagram sorted() const;
    friend bool operator==(const PersistenceDiagram&, const PersistenceDiagram&) = default;
};

class DistanceMatrix {
public:
    DistanceMatrix() = default;
    explicit DistanceMatrix(const Cloud& cloud);

    std::size_t size() const { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
    const double* row(std::size_t i) const { return d_.data() + i * n_; }

private:
    std::size_t n_ = 0;
    std::vector<double> d_;
};

// min_x max_y d(x, y); 0 for fewer than two points.
double enclosing_radius(const DistanceMatrix& d);

struct Simplex {
    std::vector<int> vertices;  // ascending
    double value = 0.0;

    int dim() const { return static_cast<int>(vertices.size()) - 1; }
};

struct Filtration {
    DistanceMatrix distances;
    int max_dim = 1;
    double threshold = 0.0;
    // Every simplex of dimension <= max_dim + 1 with value <= threshold,
    // ordered by (value, dimension, lexicographic vertices).
    std::vector<Simplex> simplices;
};

struct RipsOptions {
    int max_dim = 1;
    std::optional<double> threshold;  // default: enclosing radius
    std::size_t point_cap_dim2 = kDefaultPointCapDim2;
};

Filtration build_rips(const Cloud& cloud, int max_dim, std::optional<double> threshold = {},
                      std::size_t point_cap_dim2 = kDefaultPointCapDim2);

// Diagrams for dimensions 0..max_dim. Dimension 0 uses union-find with the
// elder rule; higher dimensions reduce the coboundary matrix with clearing.
// Zero-persistence pairs are dropped.
std::vector<PersistenceDiagram> persistence(const Filtration& filtration);

// Same result without materializing the simplex list.
std::vector<PersistenceDiagram> rips_persistence(const Cloud& cloud, const RipsOptions& options = {});

// One entry per cloud. The parallel version distributes clouds over threads.
std::vector<std::vector<PersistenceDiagram>> rips_persistence_batch_serial(
    const std::vector<Cloud>& clouds, const RipsOptions& options);
std::vector<std::vector<PersistenceDiagram>> rips_persistence_batch(
    const std::vector<Cloud>& clouds, const RipsOptions& options);

// Diagram distances. Infinite bars are matched to infinite bars only; unequal
// infinite counts give +inf.
double bottleneck(const PersistenceDiagram& f, const PersistenceDiagram& g);
// Sum of Euclidean matching costs, unmatched points going to their
// orthogonal projection on the diagonal.
double wasserstein1(const PersistenceDiagram& f, const PersistenceDiagram& g);

// min over bijections of sum ||p_i - q_pi(i)||, divided by |P| when normalized.
double pointset_wasserstein1(const Cloud& p, const Cloud& q, bool normalized = true);

namespace kernels {
void distance_matrix_serial(const Cloud& cloud, std::vector<double>& out);
void distance_matrix(const Cloud& cloud, std::vector<double>& out);
}  // namespace kernels

}  // namespace npd::ph
