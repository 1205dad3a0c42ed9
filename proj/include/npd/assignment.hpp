#pragma once

#include <cstddef>
#include <vector>

namespace npd {

// Dense square cost matrix, row-major.
struct CostMatrix {
    std::size_t n = 0;
    std::vector<double> cost;

    double operator()(std::size_t i, std::size_t j) const { return cost[i * n + j]; }
    double& operator()(std::size_t i, std::size_t j) { return cost[i * n + j]; }
};

struct Assignment {
    std::vector<int> row_to_col;
    double total = 0.0;
};

// Minimum-cost perfect matching (Hungarian method with potentials), O(n^3).
Assignment solve_assignment(const CostMatrix& c);

// True if the bipartite graph with edges {(i, j) : allowed(i, j)} has a
// perfect matching. `allowed` is row-major n x n.
bool has_perfect_matching(std::size_t n, const std::vector<char>& allowed);

}  // namespace npd
