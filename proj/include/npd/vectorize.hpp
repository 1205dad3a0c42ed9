#pragma once

// Fixed-length vectors from persistence diagrams: sums of Gaussian structure
// elements in (birth, persistence) coordinates, tapered to zero at the
// diagonal. Element centers come from k-means++ on a training corpus.

#include <array>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "npd/ph.hpp"

namespace npd::vec {

using Point2 = std::array<double, 2>;  // (birth, persistence)

inline constexpr int kDefaultElements = 20;
inline constexpr double kSigmaFloor = 1e-3;
inline constexpr std::size_t kDefaultSampleSize = 50000;

struct ElementSet {
    int dim = 0;
    std::vector<Point2> centers;
    std::vector<double> sigma;
    double nu = 1.0;   // taper: w(p) = min(pers / nu, 1)
    double cap = 0.0;  // replaces infinite deaths

    std::size_t size() const { return centers.size(); }
};

struct VectorizerModel {
    std::vector<ElementSet> dims;  // one per homology dimension, in order

    std::size_t output_size() const;
    // Hex digest of the serialized model; stored with everything that
    // depends on it.
    std::string fingerprint() const;
    std::string to_json() const;
    static VectorizerModel from_json(const std::string& text);
};

struct KMeansOptions {
    int k = kDefaultElements;
    double tolerance = 1e-6;  // max center displacement
    int max_iterations = 200;
};

struct KMeansResult {
    std::vector<Point2> centers;
    double cost = 0.0;  // sum of squared distances to the nearest center
    int iterations = 0;
};

// Indices of the k seeds. The first is uniform; each next one is drawn with
// probability proportional to the squared distance to the nearest seed so far
// (uniform when every point already coincides with a seed).
std::vector<std::size_t> kmeanspp_seeds(const std::vector<Point2>& points, int k, std::mt19937_64& rng);
KMeansResult kmeans(const std::vector<Point2>& points, const KMeansOptions& options, std::mt19937_64& rng);

// Half the distance to the nearest other center, floored at kSigmaFloor.
std::vector<double> element_scales(const std::vector<Point2>& centers);

struct FitOptions {
    KMeansOptions kmeans;
    std::size_t sample_size = kDefaultSampleSize;
};

// corpus[k] holds the training diagrams of homology dimension k.
VectorizerModel fit(const std::vector<std::vector<ph::PersistenceDiagram>>& corpus, std::mt19937_64& rng,
                    const FitOptions& options = {});

std::vector<double> transform(const ph::PersistenceDiagram& diagram, const ElementSet& elements);
// Concatenation over the model's dimensions; diagrams[k] must have dim k.
std::vector<double> transform(const std::vector<ph::PersistenceDiagram>& diagrams, const VectorizerModel& model);

// ||transform(F) - transform(G)|| / W1(F, G); throws when W1 is zero.
double lipschitz_ratio(const ElementSet& elements, const ph::PersistenceDiagram& f, const ph::PersistenceDiagram& g);

namespace kernels {
// Nearest center per point (lowest index on ties).
void assign_serial(const std::vector<Point2>& points, const std::vector<Point2>& centers,
                   std::vector<int>& label, std::vector<double>& sqdist);
void assign(const std::vector<Point2>& points, const std::vector<Point2>& centers, std::vector<int>& label,
            std::vector<double>& sqdist);
}  // namespace kernels

}  // namespace npd::vec
