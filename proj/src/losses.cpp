#include "pcdnf/losses.hpp"

#include <algorithm>
#include <cmath>

namespace pcdnf {

using ad::Tape;
using ad::Var;

GroundTruthPatch build_gt_patch(const PointCloud& clean, const KdTree3& clean_tree,
                                const Vec3& query, double r, int max_rows) {
    std::vector<int> inside = clean_tree.radius(query, r);
    std::vector<std::pair<double, int>> by_dist;
    by_dist.reserve(inside.size());
    for (int idx : inside)
        by_dist.push_back({(clean.points.row(idx).transpose() - query).squaredNorm(), idx});
    std::sort(by_dist.begin(), by_dist.end());
    if (static_cast<int>(by_dist.size()) > max_rows) by_dist.resize(max_rows);

    GroundTruthPatch gt;
    if (by_dist.empty()) {
        int nearest = clean_tree.nearest(query);
        by_dist.push_back({0.0, nearest});
    }
    gt.points.resize(by_dist.size(), 3);
    gt.normals.resize(by_dist.size(), 3);
    for (size_t i = 0; i < by_dist.size(); ++i) {
        gt.points.row(i) = clean.points.row(by_dist[i].second);
        gt.normals.row(i) = clean.normals.row(by_dist[i].second);
    }
    gt.center_normal = gt.normals.row(0).transpose();
    return gt;
}

double theta_kernel(const Vec3& a, const Vec3& b, double angle_deg) {
    const double denom = 1.0 - std::cos(angle_deg * M_PI / 180.0);
    return std::exp(-(1.0 - a.dot(b)) / denom);
}

Var point_denoise_loss(Tape& tape, Var p_hat, const GroundTruthPatch& gt, const LossConfig& cfg,
                       double radius_model, bool* denominator_fallback) {
    const int rows = static_cast<int>(gt.points.rows());
    const double sigma = cfg.sigma_phi_local * radius_model;

    Var gt_pts = tape.constant(gt.points);
    Var diffs = tape.sub(tape.broadcast_row(p_hat, rows), gt_pts);
    Var proj = tape.abs(tape.rowwise_sum(tape.cmul(diffs, tape.constant(gt.normals))));
    Var d2 = tape.rowwise_sum(tape.square(diffs));
    Var phi = tape.exp(tape.scale(d2, -1.0 / (sigma * sigma)));

    Mat theta(rows, 1);
    for (int j = 0; j < rows; ++j)
        theta(j, 0) = theta_kernel(gt.center_normal, gt.normals.row(j).transpose(),
                                   cfg.theta_angle_deg);
    Var kernels = tape.cmul(phi, tape.constant(theta));

    Var den = tape.sum_all(kernels);
    Var projection;
    bool fallback = tape.scalar(den) < 1e-12;
    if (fallback) {
        projection = tape.scale(tape.sum_all(proj), 1.0 / rows);
    } else {
        projection = tape.div_scalar(tape.sum_all(tape.cmul(proj, kernels)), den);
    }
    if (denominator_fallback) *denominator_fallback = fallback;

    Var repulsion = tape.colwise_max(tape.sqrt(d2));
    return tape.add_scaled(projection, repulsion, cfg.alpha, 1.0 - cfg.alpha);
}

Var normal_filter_loss(Tape& tape, Var n_hat, const Vec3& gt_normal) {
    Var diff = tape.sub(n_hat, tape.constant(gt_normal.transpose()));
    return tape.sum_all(tape.square(diff));
}

Var orthogonality_loss(Tape& tape, Var p_hat, Var n_hat, const GroundTruthPatch& gt,
                       Var row_weights) {
    const int rows = static_cast<int>(gt.points.rows());
    Var diffs = tape.sub(tape.broadcast_row(p_hat, rows), tape.constant(gt.points));
    Var dots = tape.abs(tape.rowwise_sum(tape.cmul(diffs, tape.broadcast_row(n_hat, rows))));
    return tape.sum_all(tape.square(tape.cmul(row_weights, dots)));
}

Var joint_loss(Tape& tape, Var l_point, Var l_normal, Var l_ortho, const LossConfig& cfg) {
    Var weighted = tape.add_scaled(l_point, l_normal, cfg.lambda1, cfg.lambda2);
    return tape.add_scaled(weighted, l_ortho, 1.0, cfg.lambda3);
}

JointLossValue eval_joint_loss(const Vec3& p_hat, const Vec3& n_hat, const GroundTruthPatch& gt,
                               const VecX& row_weights, const LossConfig& cfg,
                               double radius_model, bool with_grad) {
    Tape tape;
    Mat p_val = p_hat.transpose();
    Mat n_val = n_hat.transpose();
    Var p = tape.leaf(&p_val, with_grad);
    Var n = tape.leaf(&n_val, with_grad);

    JointLossValue out;
    Var lp = point_denoise_loss(tape, p, gt, cfg, radius_model, &out.denominator_fallback);
    Var ln = normal_filter_loss(tape, n, gt.center_normal);
    Mat w = row_weights;
    Var lo = orthogonality_loss(tape, p, n, gt, tape.constant(w));
    Var total = joint_loss(tape, lp, ln, lo, cfg);

    out.point = tape.scalar(lp);
    out.normal = tape.scalar(ln);
    out.ortho = tape.scalar(lo);
    out.total = tape.scalar(total);
    if (with_grad) {
        tape.backward(total);
        out.grad_p = tape.grad_of(p).row(0).transpose();
        out.grad_n = tape.grad_of(n).row(0).transpose();
    }
    return out;
}

}  // namespace pcdnf
