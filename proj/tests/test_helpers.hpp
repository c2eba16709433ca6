#pragma once

#include "pcdnf/geometry.hpp"
#include "pcdnf/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace pcdnf::testing {

inline MatX3 random_points(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
    MatX3 pts(n, 3);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) pts(i, c) = rng.uniform(lo, hi);
    return pts;
}

inline MatX3 random_unit_normals(Rng& rng, int n) {
    MatX3 normals(n, 3);
    for (int i = 0; i < n; ++i) {
        Vec3 v;
        do {
            v = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        } while (v.norm() < 1e-6);
        normals.row(i) = v.normalized().transpose();
    }
    return normals;
}

inline PointCloud random_cloud(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
    return PointCloud(random_points(rng, n, lo, hi), random_unit_normals(rng, n));
}

// snap coordinates to multiples of 2^-16 so that translating by another
// multiple is exact in double precision
inline MatX3 quantize(const MatX3& pts) {
    MatX3 out = pts;
    for (int i = 0; i < out.size(); ++i)
        out.data()[i] = std::round(out.data()[i] * 65536.0) / 65536.0;
    return out;
}

// exhaustive O(N^2) kNN oracle with the same (distance, index) tie rule
inline std::vector<int> brute_knn(const MatX3& pts, const Vec3& q, int k) {
    std::vector<std::pair<double, int>> all(pts.rows());
    for (int i = 0; i < pts.rows(); ++i)
        all[i] = {(pts.row(i).transpose() - q).squaredNorm(), i};
    std::sort(all.begin(), all.end());
    std::vector<int> out(k);
    for (int i = 0; i < k; ++i) out[i] = all[i].second;
    return out;
}

}  // namespace pcdnf::testing
