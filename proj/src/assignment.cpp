#include "npd/assignment.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace npd {

Assignment solve_assignment(const CostMatrix& c) {
    const std::size_t n = c.n;
    if (c.cost.size() != n * n) throw std::invalid_argument("solve_assignment: cost matrix is not square");
    Assignment out;
    if (n == 0) return out;
    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based potentials u (rows) and v (columns); p[j] is the row matched to column j.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    out.row_to_col.assign(n, -1);
    for (std::size_t j = 1; j <= n; ++j) out.row_to_col[p[j] - 1] = static_cast<int>(j - 1);
    for (std::size_t i = 0; i < n; ++i) out.total += c(i, out.row_to_col[i]);
    return out;
}

namespace {

bool augment(std::size_t row, std::size_t n, const std::vector<char>& allowed,
             std::vector<char>& visited, std::vector<int>& col_owner) {
    for (std::size_t j = 0; j < n; ++j) {
        if (!allowed[row * n + j] || visited[j]) continue;
        visited[j] = 1;
        if (col_owner[j] < 0 || augment(col_owner[j], n, allowed, visited, col_owner)) {
            col_owner[j] = static_cast<int>(row);
            return true;
        }
    }
    return false;
}

}  // namespace

bool has_perfect_matching(std::size_t n, const std::vector<char>& allowed) {
    std::vector<int> col_owner(n, -1);
    std::vector<char> visited(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(visited.begin(), visited.end(), 0);
        if (!augment(i, n, allowed, visited, col_owner)) return false;
    }
    return true;
}

}  // namespace npd
