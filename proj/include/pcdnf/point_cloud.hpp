#pragma once

#include "pcdnf/common.hpp"

namespace pcdnf {

// A whole model: positions plus optional unit normals. Normals are "absent"
// when the normals matrix has zero rows.
struct PointCloud {
    MatX3 points;
    MatX3 normals;

    PointCloud() = default;
    explicit PointCloud(MatX3 pts) : points(std::move(pts)) {}
    PointCloud(MatX3 pts, MatX3 nrm) : points(std::move(pts)), normals(std::move(nrm)) {}

    int size() const { return static_cast<int>(points.rows()); }
    bool has_normals() const { return normals.rows() == points.rows() && points.rows() > 0; }

    // Euclidean length of (max - min) over axis-aligned coordinates.
    double bbox_diag() const {
        if (points.rows() == 0) return 0.0;
        Vec3 lo = points.colwise().minCoeff();
        Vec3 hi = points.colwise().maxCoeff();
        return (hi - lo).norm();
    }
};

}  // namespace pcdnf
