#include "pcdnf/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace pcdnf {

std::vector<std::vector<int>> knn_indices(const MatX3& points, const MatX3& queries, int k) {
    if (k > points.rows())
        throw std::invalid_argument("knn_indices: k exceeds point count");
    if (!points.allFinite() || !queries.allFinite())
        throw std::invalid_argument("knn_indices: coordinates must be finite");
    KdTree3 tree(points);
    std::vector<std::vector<int>> out(queries.rows());
    for (int q = 0; q < queries.rows(); ++q)
        out[q] = tree.knn(queries.row(q).transpose(), k);
    return out;
}

NormalEstimate estimate_normals_pca(const PointCloud& cloud, int k) {
    if (k < 3) throw std::invalid_argument("estimate_normals_pca: k must be >= 3");
    if (k > cloud.size())
        throw std::invalid_argument("estimate_normals_pca: k exceeds point count");

    const int n = cloud.size();
    NormalEstimate result;
    result.normals.resize(n, 3);
    result.degenerate.assign(n, 0);

    // sign anchor: pointing away from the cloud centroid keeps flat regions
    // from flipping on per-point noise
    const Vec3 cloud_centroid = cloud.points.colwise().mean().transpose();

    KdTree3 tree(cloud.points);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
    for (int i = 0; i < n; ++i) {
        Vec3 p = cloud.points.row(i).transpose();
        std::vector<int> nbrs = tree.knn(p, k);

        Vec3 centroid = Vec3::Zero();
        for (int j : nbrs) centroid += cloud.points.row(j).transpose();
        centroid /= static_cast<double>(nbrs.size());

        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (int j : nbrs) {
            Vec3 d = cloud.points.row(j).transpose() - centroid;
            cov += d * d.transpose();
        }

        solver.computeDirect(cov);
        const Vec3 evals = solver.eigenvalues();  // ascending
        if (evals[2] <= 0.0) {
            result.normals.row(i) = Vec3(0, 0, 1).transpose();
            result.degenerate[i] = 1;
            result.any_degenerate = true;
            continue;
        }
        Vec3 normal = solver.eigenvectors().col(0);
        if (evals[1] <= 1e-12 * evals[2]) {  // rank-one neighborhood
            result.degenerate[i] = 1;
            result.any_degenerate = true;
        }

        double side = normal.dot(p - cloud_centroid);
        if (side < 0.0) {
            normal = -normal;
        } else if (side == 0.0) {
            for (int c = 0; c < 3; ++c) {
                if (normal[c] != 0.0) {
                    if (normal[c] < 0.0) normal = -normal;
                    break;
                }
            }
        }
        result.normals.row(i) = normal.normalized().transpose();
    }
    return result;
}

Patch extract_patch(const PointCloud& cloud, int center_index, double r, int m_rows,
                    uint64_t seed) {
    KdTree3 tree(cloud.points);
    return extract_patch(cloud, tree, center_index, r, m_rows, seed);
}

Patch extract_patch(const PointCloud& cloud, const KdTree3& tree, int center_index, double r,
                    int m_rows, uint64_t seed) {
    if (r <= 0.0) throw std::invalid_argument("extract_patch: radius must be positive");
    if (!cloud.has_normals())
        throw std::invalid_argument("extract_patch: cloud has no raw normals");
    if (center_index < 0 || center_index >= cloud.size())
        throw std::invalid_argument("extract_patch: center index out of range");

    const Vec3 center = cloud.points.row(center_index).transpose();
    std::vector<int> in_radius = tree.radius(center, r);

    std::vector<int> others;
    others.reserve(in_radius.size());
    for (int idx : in_radius)
        if (idx != center_index) others.push_back(idx);

    if (static_cast<int>(others.size()) > m_rows - 1) {
        Rng rng(seed);
        rng.shuffle(others);
        others.resize(m_rows - 1);
        std::sort(others.begin(), others.end());
    }

    Patch patch;
    patch.center_index = center_index;
    patch.radius = r;
    patch.frame.translation = center;
    patch.frame.scale = r;
    patch.points.setZero(m_rows, 3);
    patch.normals.resize(m_rows, 3);
    patch.row_source.assign(m_rows, -1);

    const Vec3 center_normal = cloud.normals.row(center_index).transpose();
    int row = 0;
    patch.points.row(row).setZero();
    patch.normals.row(row) = center_normal.transpose();
    patch.row_source[row] = center_index;
    ++row;
    for (int idx : others) {
        patch.points.row(row) = ((cloud.points.row(idx).transpose() - center) / r).transpose();
        patch.normals.row(row) = cloud.normals.row(idx);
        patch.row_source[row] = idx;
        ++row;
    }
    patch.pad_count = m_rows - row;
    for (; row < m_rows; ++row) {
        patch.points.row(row).setZero();
        patch.normals.row(row) = center_normal.transpose();
    }
    return patch;
}

}  // namespace pcdnf
