#include "pcdnf/losses.hpp"

#include "oracles.hpp"
#include "test_helpers.hpp"

#include <doctest.h>

using namespace pcdnf;
using namespace pcdnf::testing;

namespace {

GroundTruthPatch random_gt(Rng& rng, int rows) {
    GroundTruthPatch gt;
    gt.points = random_points(rng, rows);
    gt.normals = random_unit_normals(rng, rows);
    gt.center_normal = gt.normals.row(0).transpose();
    return gt;
}

GroundTruthPatch planar_gt(Rng& rng, int rows) {
    GroundTruthPatch gt;
    gt.points = random_points(rng, rows);
    gt.points.col(2).setZero();
    gt.normals.resize(rows, 3);
    for (int i = 0; i < rows; ++i) gt.normals.row(i) << 0, 0, 1;
    gt.center_normal = Vec3(0, 0, 1);
    return gt;
}

}  // namespace

TEST_SUITE_BEGIN("losses");

TEST_CASE("theta kernel: identical normals give exp(0) = 1") {
    CHECK(theta_kernel(Vec3(0, 0, 1), Vec3(0, 0, 1), 15.0) == doctest::Approx(1.0));
    // decreasing in normal deviation
    double prev = 2.0;
    for (double deg = 0.0; deg <= 90.0; deg += 5.0) {
        Vec3 b(std::sin(deg * M_PI / 180), 0, std::cos(deg * M_PI / 180));
        double v = theta_kernel(Vec3(0, 0, 1), b, 15.0);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("point loss: on-plane prediction leaves only the repulsion term") {
    Rng rng(1);
    GroundTruthPatch gt = planar_gt(rng, 40);
    LossConfig cfg;
    Vec3 p_hat(0.2, -0.1, 0.0);  // on the plane

    double max_dist = 0.0;
    for (int j = 0; j < gt.points.rows(); ++j)
        max_dist = std::max(max_dist, (p_hat - Vec3(gt.points.row(j).transpose())).norm());

    JointLossValue value = eval_joint_loss(p_hat, Vec3(0, 0, 1), gt, VecX::Zero(40), cfg, 1.0);
    CHECK(value.point == doctest::Approx((1.0 - cfg.alpha) * max_dist).epsilon(1e-12));
    CHECK(value.ortho == 0.0);
    CHECK(value.normal == 0.0);
}

TEST_CASE("point loss: denominator collapse falls back to the unweighted mean") {
    GroundTruthPatch gt;
    gt.points.resize(2, 3);
    gt.points << 100, 0, 0, -100, 0, 0;  // far outside the phi kernel support
    gt.normals.resize(2, 3);
    gt.normals << 1, 0, 0, 1, 0, 0;
    gt.center_normal = Vec3(1, 0, 0);
    LossConfig cfg;

    ad::Tape tape;
    Mat p_val = Mat::Zero(1, 3);
    bool fallback = false;
    ad::Var lp = point_denoise_loss(tape, tape.leaf(&p_val, false), gt, cfg, 1.0, &fallback);
    CHECK(fallback);
    CHECK(tape.scalar(lp) == doctest::Approx(cfg.alpha * 100.0 + (1 - cfg.alpha) * 100.0));
}

TEST_CASE("point loss: 100 random instances match the loop oracle within 1e-10") {
    Rng rng(2);
    LossConfig cfg;
    for (int trial = 0; trial < 100; ++trial) {
        int rows = 1 + rng.uniform_int(64);
        GroundTruthPatch gt = random_gt(rng, rows);
        Vec3 p_hat = random_points(rng, 1).row(0).transpose();
        double radius = rng.uniform(0.5, 2.0);

        ad::Tape tape;
        Mat p_val = p_hat.transpose();
        ad::Var lp = point_denoise_loss(tape, tape.leaf(&p_val, false), gt, cfg, radius);
        CHECK(std::abs(tape.scalar(lp) - point_loss_oracle(p_hat, gt, cfg, radius)) <= 1e-10);
    }
}

TEST_CASE("normal loss analytic values: 0, 2, 4") {
    Vec3 n(0.6, 0.8, 0.0);
    Vec3 orth(-0.8, 0.6, 0.0);
    ad::Tape tape;
    Mat same = n.transpose(), flipped = (-n).transpose(), perp = orth.transpose();
    CHECK(tape.scalar(normal_filter_loss(tape, tape.leaf(&same, false), n)) == 0.0);
    CHECK(tape.scalar(normal_filter_loss(tape, tape.leaf(&flipped, false), n)) ==
          doctest::Approx(4.0));
    CHECK(tape.scalar(normal_filter_loss(tape, tape.leaf(&perp, false), n)) ==
          doctest::Approx(2.0));
}

TEST_CASE("ortho loss: planar zero case and zero weights") {
    Rng rng(3);
    GroundTruthPatch gt = planar_gt(rng, 30);
    VecX w = VecX::Constant(30, 0.7);
    JointLossValue planar =
        eval_joint_loss(Vec3(0.1, 0.2, 0.0), Vec3(0, 0, 1), gt, w, LossConfig{}, 1.0);
    CHECK(planar.ortho == doctest::Approx(0.0));

    GroundTruthPatch gt2 = random_gt(rng, 30);
    JointLossValue zero_w = eval_joint_loss(Vec3(0.1, 0.2, 0.3), Vec3(0, 0, 1), gt2,
                                            VecX::Zero(30), LossConfig{}, 1.0);
    CHECK(zero_w.ortho == 0.0);
}

TEST_CASE("ortho loss: 100 random instances match the loop oracle within 1e-10") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        int rows = 1 + rng.uniform_int(64);
        GroundTruthPatch gt = random_gt(rng, rows);
        Vec3 p_hat = random_points(rng, 1).row(0).transpose();
        Vec3 n_hat = random_unit_normals(rng, 1).row(0).transpose();
        VecX w(rows);
        for (int j = 0; j < rows; ++j) w[j] = rng.uniform01();

        ad::Tape tape;
        Mat p_val = p_hat.transpose(), n_val = n_hat.transpose();
        ad::Var lo = orthogonality_loss(tape, tape.leaf(&p_val, false), tape.leaf(&n_val, false),
                                        gt, tape.constant(Mat(w)));
        CHECK(std::abs(tape.scalar(lo) - ortho_loss_oracle(p_hat, n_hat, gt, w)) <= 1e-10);
    }
}

TEST_CASE("joint loss: weighting and zero case") {
    Rng rng(5);
    GroundTruthPatch gt = random_gt(rng, 20);
    Vec3 p_hat = random_points(rng, 1).row(0).transpose();
    Vec3 n_hat = random_unit_normals(rng, 1).row(0).transpose();
    VecX w(20);
    for (int j = 0; j < 20; ++j) w[j] = rng.uniform01();
    LossConfig cfg;

    JointLossValue v = eval_joint_loss(p_hat, n_hat, gt, w, cfg, 1.0);
    CHECK(v.total ==
          doctest::Approx(100.0 * v.point + 10.0 * v.normal + 10.0 * v.ortho).epsilon(1e-12));

    // exact zero: planar ground truth, prediction on the plane, matching normal,
    // single ground-truth row at the prediction itself
    GroundTruthPatch zero_gt;
    zero_gt.points = MatX3::Zero(1, 3);
    zero_gt.normals.resize(1, 3);
    zero_gt.normals << 0, 0, 1;
    zero_gt.center_normal = Vec3(0, 0, 1);
    JointLossValue z = eval_joint_loss(Vec3(0, 0, 0), Vec3(0, 0, 1), zero_gt, VecX::Zero(1),
                                       cfg, 1.0);
    CHECK(z.total == 0.0);
}

TEST_CASE("joint loss gradient matches central differences at 1e-6") {
    Rng rng(6);
    LossConfig cfg;
    for (int trial = 0; trial < 10; ++trial) {
        GroundTruthPatch gt = random_gt(rng, 24);
        Vec3 p_hat = random_points(rng, 1).row(0).transpose();
        Vec3 n_hat = random_unit_normals(rng, 1).row(0).transpose();
        VecX w(24);
        for (int j = 0; j < 24; ++j) w[j] = rng.uniform01();

        JointLossValue v = eval_joint_loss(p_hat, n_hat, gt, w, cfg, 1.0, true);
        const double eps = 1e-7;
        for (int c = 0; c < 3; ++c) {
            Vec3 dp = p_hat;
            dp[c] += eps;
            double up = eval_joint_loss(dp, n_hat, gt, w, cfg, 1.0).total;
            dp[c] -= 2 * eps;
            double down = eval_joint_loss(dp, n_hat, gt, w, cfg, 1.0).total;
            double fd = (up - down) / (2 * eps);
            CHECK(std::abs(v.grad_p[c] - fd) /
                      std::max({1.0, std::abs(v.grad_p[c]), std::abs(fd)}) <=
                  1e-6);

            Vec3 dn = n_hat;
            dn[c] += eps;
            double nup = eval_joint_loss(p_hat, dn, gt, w, cfg, 1.0).total;
            dn[c] -= 2 * eps;
            double ndown = eval_joint_loss(p_hat, dn, gt, w, cfg, 1.0).total;
            double nfd = (nup - ndown) / (2 * eps);
            CHECK(std::abs(v.grad_n[c] - nfd) /
                      std::max({1.0, std::abs(v.grad_n[c]), std::abs(nfd)}) <=
                  1e-6);
        }
    }
}

TEST_CASE("all terms are translation invariant (quantized data, exact)") {
    Rng rng(7);
    GroundTruthPatch gt = random_gt(rng, 32);
    gt.points = quantize(gt.points);
    Vec3 p_hat = quantize(random_points(rng, 1)).row(0).transpose();
    Vec3 n_hat = random_unit_normals(rng, 1).row(0).transpose();
    VecX w(32);
    for (int j = 0; j < 32; ++j) w[j] = rng.uniform01();
    LossConfig cfg;

    const Vec3 t(5.25, -3.5, 0.75);
    GroundTruthPatch moved = gt;
    moved.points.rowwise() += t.transpose();

    JointLossValue a = eval_joint_loss(p_hat, n_hat, gt, w, cfg, 1.0);
    JointLossValue b = eval_joint_loss(p_hat + t, n_hat, moved, w, cfg, 1.0);
    CHECK(a.point == b.point);
    CHECK(a.normal == b.normal);
    CHECK(a.ortho == b.ortho);
    CHECK(a.total == b.total);
}

TEST_CASE("phi kernel monotonically decreases with distance") {
    LossConfig cfg;
    const double sigma = cfg.sigma_phi_local * 1.0;
    double prev = 2.0;
    for (double d = 0.0; d <= 2.0; d += 0.05) {
        double phi = std::exp(-d * d / (sigma * sigma));
        CHECK(phi < prev);
        prev = phi;
    }
}

TEST_CASE("build_gt_patch: radius, cap, and nearest normal") {
    Rng rng(8);
    PointCloud clean = random_cloud(rng, 400);
    KdTree3 tree(clean.points);
    Vec3 q = clean.points.row(7).transpose();

    GroundTruthPatch gt = build_gt_patch(clean, tree, q, 0.4, 16);
    CHECK(gt.points.rows() <= 16);
    CHECK(gt.points.rows() >= 1);
    for (int j = 0; j < gt.points.rows(); ++j)
        CHECK((Vec3(gt.points.row(j).transpose()) - q).norm() < 0.4);
    // rows sorted by distance; nearest is the query point itself
    CHECK(gt.points.row(0) == clean.points.row(7));
    CHECK(gt.center_normal == Vec3(clean.normals.row(7).transpose()));

    // no clean point within the radius: the nearest one is still returned
    Vec3 far(100, 100, 100);
    GroundTruthPatch fallback = build_gt_patch(clean, tree, far, 0.4, 16);
    CHECK(fallback.points.rows() == 1);
}

TEST_SUITE_END();
