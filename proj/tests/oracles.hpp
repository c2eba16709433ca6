#pragma once

// Naive scalar-loop oracles, kept deliberately independent of the library's
// vectorized/taped implementations.

#include "pcdnf/losses.hpp"
#include "pcdnf/point_cloud.hpp"

#include <cmath>

namespace pcdnf::testing {

inline double point_loss_oracle(const Vec3& p_hat, const GroundTruthPatch& gt,
                                const LossConfig& cfg, double radius_model) {
    const double sigma = cfg.sigma_phi_local * radius_model;
    const double theta_denom = 1.0 - std::cos(cfg.theta_angle_deg * M_PI / 180.0);
    double num = 0.0, den = 0.0, max_dist = 0.0, proj_sum = 0.0;
    const int rows = static_cast<int>(gt.points.rows());
    for (int j = 0; j < rows; ++j) {
        Vec3 diff = p_hat - Vec3(gt.points.row(j).transpose());
        Vec3 nj = gt.normals.row(j).transpose();
        double proj = std::abs(diff.dot(nj));
        double d = diff.norm();
        double phi = std::exp(-(d * d) / (sigma * sigma));
        double theta = std::exp(-(1.0 - gt.center_normal.dot(nj)) / theta_denom);
        num += proj * phi * theta;
        den += phi * theta;
        proj_sum += proj;
        if (d > max_dist) max_dist = d;
    }
    double projection = den < 1e-12 ? proj_sum / rows : num / den;
    return cfg.alpha * projection + (1.0 - cfg.alpha) * max_dist;
}

inline double ortho_loss_oracle(const Vec3& p_hat, const Vec3& n_hat, const GroundTruthPatch& gt,
                                const VecX& weights) {
    double total = 0.0;
    for (int j = 0; j < gt.points.rows(); ++j) {
        Vec3 diff = p_hat - Vec3(gt.points.row(j).transpose());
        double term = weights[j] * std::abs(diff.dot(n_hat));
        total += term * term;
    }
    return total;
}

inline double normal_loss_oracle(const Vec3& n_hat, const Vec3& n_bar) {
    return (n_hat - n_bar).squaredNorm();
}

inline double chamfer_oracle(const PointCloud& a, const PointCloud& b) {
    const double scale = 1.0 / b.bbox_diag();
    double sum_ab = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < b.size(); ++j) {
            double d = (a.points.row(i) * scale - b.points.row(j) * scale).squaredNorm();
            if (d < best) best = d;
        }
        sum_ab += best;
    }
    double sum_ba = 0.0;
    for (int j = 0; j < b.size(); ++j) {
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < a.size(); ++i) {
            double d = (b.points.row(j) * scale - a.points.row(i) * scale).squaredNorm();
            if (d < best) best = d;
        }
        sum_ba += best;
    }
    return 0.5 * sum_ab / a.size() + 0.5 * sum_ba / b.size();
}

}  // namespace pcdnf::testing
