#pragma once

#include <array>
#include <cmath>
#include <vector>

namespace npd {

using Point3 = std::array<double, 3>;
using Cloud = std::vector<Point3>;

inline double distance(const Point3& a, const Point3& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline double norm(const Point3& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }

}  // namespace npd
