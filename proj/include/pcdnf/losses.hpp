#pragma once

#include "pcdnf/geometry.hpp"
#include "pcdnf/tape.hpp"

namespace pcdnf {

struct LossConfig {
    double lambda1 = 100.0;        // point-denoise weight
    double lambda2 = 10.0;         // normal-filter weight
    double lambda3 = 10.0;         // orthogonality weight
    double alpha = 0.97;           // projection vs repulsion balance
    double theta_angle_deg = 15.0; // normal-similarity kernel threshold
    double sigma_phi_local = 0.5;  // Gaussian kernel std, units of patch radius
};

// Clean-surface neighborhood of a denoised point, in model units.
struct GroundTruthPatch {
    MatX3 points;        // up to max_rows nearest clean points within r
    MatX3 normals;
    Vec3 center_normal;  // normal of the clean point nearest to the query
};

// The nearest clean points within radius r of `query` (at least the single
// nearest when none fall inside), closest first, capped at max_rows.
GroundTruthPatch build_gt_patch(const PointCloud& clean, const KdTree3& clean_tree,
                                const Vec3& query, double r, int max_rows = 512);

// normal-similarity kernel exp(-(1 - a.b) / (1 - cos(threshold)))
double theta_kernel(const Vec3& a, const Vec3& b, double angle_deg);

// Tape builders; every input except the Vars is captured as a constant.
// point_denoise_loss flags (and falls back to the unweighted projection
// mean) when the bilateral denominator collapses.
ad::Var point_denoise_loss(ad::Tape& tape, ad::Var p_hat, const GroundTruthPatch& gt,
                           const LossConfig& cfg, double radius_model,
                           bool* denominator_fallback = nullptr);
ad::Var normal_filter_loss(ad::Tape& tape, ad::Var n_hat, const Vec3& gt_normal);
ad::Var orthogonality_loss(ad::Tape& tape, ad::Var p_hat, ad::Var n_hat,
                           const GroundTruthPatch& gt, ad::Var row_weights);
ad::Var joint_loss(ad::Tape& tape, ad::Var l_point, ad::Var l_normal, ad::Var l_ortho,
                   const LossConfig& cfg);

// Scalar conveniences over a private tape (weights aligned to gt rows).
struct JointLossValue {
    double point = 0, normal = 0, ortho = 0, total = 0;
    Vec3 grad_p = Vec3::Zero();  // d total / d p_hat
    Vec3 grad_n = Vec3::Zero();  // d total / d n_hat
    bool denominator_fallback = false;
};
JointLossValue eval_joint_loss(const Vec3& p_hat, const Vec3& n_hat, const GroundTruthPatch& gt,
                               const VecX& row_weights, const LossConfig& cfg,
                               double radius_model, bool with_grad = false);

}  // namespace pcdnf
