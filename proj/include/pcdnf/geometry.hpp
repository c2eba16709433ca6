#pragma once

#include "pcdnf/kdtree.hpp"
#include "pcdnf/point_cloud.hpp"

#include <vector>

namespace pcdnf {

// Local frame of a patch: local = (model - translation) / scale.
struct PatchFrame {
    Vec3 translation = Vec3::Zero();  // the center point p_i
    double scale = 1.0;               // the patch radius r
};

// A fixed-size neighborhood around one point, expressed in the local frame
// (center at origin, real points inside the unit ball). Rows are ordered
// center first, then the remaining real points by ascending source index,
// then padded rows. Padded rows sit at the origin and carry the center's
// raw normal.
struct Patch {
    int center_index = -1;
    MatX3 points;                 // M x 3, local frame
    MatX3 normals;                // M x 3, raw unit normals
    double radius = 0.0;          // r in model units
    PatchFrame frame;
    int pad_count = 0;
    std::vector<int> row_source;  // source cloud index per row, -1 for pads

    int rows() const { return static_cast<int>(points.rows()); }
    int real_count() const { return rows() - pad_count; }
};

// Row q holds the k indices of points nearest to queries row q, sorted
// ascending by distance, distance ties broken by ascending index.
std::vector<std::vector<int>> knn_indices(const MatX3& points, const MatX3& queries, int k);

struct NormalEstimate {
    MatX3 normals;
    std::vector<uint8_t> degenerate;  // per-point rank-deficiency flag
    bool any_degenerate = false;
};

// PCA normal per point from its k-neighborhood (self included): eigenvector
// of the covariance with smallest eigenvalue, oriented along the
// neighborhood-centroid-to-point direction. A fully degenerate neighborhood
// (all points identical) yields (0,0,1) and sets the flag; a rank-one
// neighborhood keeps the eigenvector but also flags.
NormalEstimate estimate_normals_pca(const PointCloud& cloud, int k);

// Collects all points with ||p_j - p_i|| < r; subsamples to m_rows keeping
// the center when over-full (uniformly at random under `seed`), pads at the
// origin when under-full. The cloud must carry raw normals.
Patch extract_patch(const PointCloud& cloud, int center_index, double r, int m_rows,
                    uint64_t seed);
Patch extract_patch(const PointCloud& cloud, const KdTree3& tree, int center_index, double r,
                    int m_rows, uint64_t seed);

inline Vec3 denormalize(const PatchFrame& frame, const Vec3& local_point) {
    return local_point * frame.scale + frame.translation;
}

}  // namespace pcdnf
