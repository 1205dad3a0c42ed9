#pragma once

#include <vector>

#include "npd/ph.hpp"

namespace npd::testing {

// Textbook persistence: every simplex of dimension <= max_dim + 1 below the
// threshold, left-to-right reduction of the full boundary matrix over Z/2.
// Intended for n <= 10.
std::vector<ph::PersistenceDiagram> naive_persistence(const Cloud& cloud, int max_dim, double threshold);

// Brute force min over all bijections of sum ||p_i - q_pi(i)||; n <= 8.
double brute_force_matching(const Cloud& p, const Cloud& q);

}  // namespace npd::testing
