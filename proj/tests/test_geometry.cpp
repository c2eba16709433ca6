#include "pcdnf/geometry.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

using namespace pcdnf;
using namespace pcdnf::testing;

TEST_SUITE_BEGIN("geometry");

TEST_CASE("knn: three collinear points") {
    MatX3 pts(3, 3);
    pts << 0, 0, 0, 1, 0, 0, 3, 0, 0;
    MatX3 q(1, 3);
    q << 0.9, 0, 0;
    auto idx = knn_indices(pts, q, 2);
    REQUIRE(idx[0] == std::vector<int>{1, 0});
}

TEST_CASE("knn: query coinciding with a data point comes first") {
    Rng rng(7);
    MatX3 pts = random_points(rng, 16);
    MatX3 q(1, 3);
    q = pts.row(5);
    auto idx = knn_indices(pts, q, 1);
    CHECK(idx[0][0] == 5);
}

TEST_CASE("knn: matches the exhaustive oracle") {
    Rng rng(11);
    MatX3 pts = random_points(rng, 64);
    MatX3 queries = random_points(rng, 20);
    auto idx = knn_indices(pts, queries, 8);
    for (int q = 0; q < queries.rows(); ++q)
        CHECK(idx[q] == brute_knn(pts, queries.row(q).transpose(), 8));
}

TEST_CASE("knn: random instances up to N=256, including duplicated points") {
    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        int n = 2 + rng.uniform_int(255);
        MatX3 pts = random_points(rng, n);
        for (int d = 0; d < n / 4; ++d)  // force distance ties
            pts.row(rng.uniform_int(n)) = pts.row(rng.uniform_int(n));
        int k = 1 + rng.uniform_int(n);
        KdTree3 tree(pts);
        for (int q = 0; q < 5; ++q) {
            Vec3 query = random_points(rng, 1).row(0).transpose();
            CHECK(tree.knn(query, k) == brute_knn(pts, query, k));
        }
    }
}

TEST_CASE("knn: k greater than N") {
    Rng rng(3);
    MatX3 pts = random_points(rng, 4);
    CHECK_THROWS_AS(knn_indices(pts, pts, 5), std::invalid_argument);
}

TEST_CASE("kdtree radius query is strict and sorted") {
    MatX3 pts(4, 3);
    pts << 0, 0, 0, 1, 0, 0, 2, 0, 0, 0.5, 0, 0;
    KdTree3 tree(pts);
    auto in = tree.radius(Vec3(0, 0, 0), 1.0);
    CHECK(in == std::vector<int>{0, 3});  // the point at exactly r=1 is excluded
}

TEST_CASE("pca normals: exact plane") {
    Rng rng(17);
    PointCloud cloud;
    cloud.points = random_points(rng, 100);
    cloud.points.col(2).setZero();
    auto est = estimate_normals_pca(cloud, 10);
    for (int i = 0; i < 100; ++i) {
        CHECK(std::abs(est.normals(i, 2)) >= 1.0 - 1e-9);
        CHECK(std::abs(est.normals.row(i).norm() - 1.0) <= 1e-9);
    }
}

TEST_CASE("pca normals: sphere directions") {
    Rng rng(19);
    PointCloud cloud;
    cloud.points.resize(2000, 3);
    for (int i = 0; i < 2000; ++i) {
        double z = rng.uniform(-1, 1);
        double phi = rng.uniform(0, 2 * M_PI);
        double rho = std::sqrt(std::max(0.0, 1 - z * z));
        cloud.points.row(i) << rho * std::cos(phi), rho * std::sin(phi), z;
    }
    auto est = estimate_normals_pca(cloud, 16);
    int good = 0;
    for (int i = 0; i < 2000; ++i) {
        Vec3 radial = cloud.points.row(i).transpose().normalized();
        double c = std::abs(est.normals.row(i).dot(radial.transpose()));
        if (std::acos(std::clamp(c, 0.0, 1.0)) <= 5.0 * M_PI / 180.0) ++good;
    }
    CHECK(good >= 1900);  // 95%
}

TEST_CASE("pca normals: degenerate neighborhoods") {
    SUBCASE("collinear cloud flags") {
        PointCloud cloud;
        cloud.points.resize(3, 3);
        cloud.points << 0, 0, 0, 1, 0, 0, 2, 0, 0;
        auto est = estimate_normals_pca(cloud, 3);
        CHECK(est.any_degenerate);
        for (int i = 0; i < 3; ++i) CHECK(est.degenerate[i] == 1);
    }
    SUBCASE("identical cloud maps to (0,0,1)") {
        PointCloud cloud;
        cloud.points = MatX3::Zero(5, 3);
        auto est = estimate_normals_pca(cloud, 5);
        CHECK(est.any_degenerate);
        CHECK(est.normals.row(0) == Eigen::RowVector3d(0, 0, 1));
    }
}

TEST_CASE("patch: single-point cloud pads everything but the center") {
    PointCloud cloud;
    cloud.points.resize(1, 3);
    cloud.points.row(0) << 2, 3, 4;
    cloud.normals.resize(1, 3);
    cloud.normals.row(0) << 0, 0, 1;
    Patch patch = extract_patch(cloud, 0, 0.5, 512, 1);
    CHECK(patch.pad_count == 511);
    CHECK(patch.real_count() == 1);
    CHECK(patch.points.row(0) == Eigen::RowVector3d(0, 0, 0));
    for (int j = 1; j < 512; ++j) {
        CHECK(patch.points.row(j) == Eigen::RowVector3d(0, 0, 0));
        CHECK(patch.normals.row(j) == Eigen::RowVector3d(0, 0, 1));
        CHECK(patch.row_source[j] == -1);
    }
}

TEST_CASE("patch: subsample branch keeps the center and fills M rows") {
    Rng rng(23);
    PointCloud cloud = random_cloud(rng, 700);
    cloud.points *= 0.1;  // densely packed: everything within radius
    Patch patch = extract_patch(cloud, 42, 1.0, 512, 99);
    CHECK(patch.rows() == 512);
    CHECK(patch.pad_count == 0);
    CHECK(patch.row_source[0] == 42);
    CHECK(patch.points.row(0).norm() == 0.0);
    for (int j = 0; j < patch.real_count(); ++j)
        CHECK(patch.points.row(j).norm() <= 1.0 + 1e-12);
    // non-center rows keep ascending source order
    for (int j = 2; j < patch.real_count(); ++j)
        CHECK(patch.row_source[j] > patch.row_source[j - 1]);
}

TEST_CASE("patch: in-radius count matches a direct counting oracle") {
    Rng rng(29);
    PointCloud cloud = random_cloud(rng, 800);
    double r = 0.05 * cloud.bbox_diag();
    for (int center = 0; center < 50; ++center) {
        int expected = 0;
        for (int j = 0; j < cloud.size(); ++j)
            if ((cloud.points.row(j) - cloud.points.row(center)).norm() < r) ++expected;
        Patch patch = extract_patch(cloud, center, r, 512, 5);
        CHECK(patch.real_count() == std::min(expected, 512));
    }
}

TEST_CASE("patch: translation equivariance is bitwise on quantized data") {
    Rng rng(31);
    PointCloud cloud = random_cloud(rng, 300);
    cloud.points = quantize(cloud.points);
    const Vec3 t(3.25, -7.5, 0.125);

    PointCloud moved = cloud;
    moved.points.rowwise() += t.transpose();

    for (int center : {0, 17, 131}) {
        Patch a = extract_patch(cloud, center, 0.4, 128, 7);
        Patch b = extract_patch(moved, center, 0.4, 128, 7);
        CHECK(a.points == b.points);
        CHECK(a.normals == b.normals);
        CHECK(a.pad_count == b.pad_count);
        CHECK(a.row_source == b.row_source);
    }
}

TEST_CASE("denormalize") {
    PatchFrame frame;
    frame.translation = Vec3(5, 5, 5);
    frame.scale = 2.0;
    CHECK(denormalize(frame, Vec3(0, 0, 0)) == Vec3(5, 5, 5));
    CHECK(denormalize(frame, Vec3(1, 0, 0)) == Vec3(7, 5, 5));

    Rng rng(37);
    PointCloud cloud = random_cloud(rng, 120);
    Patch patch = extract_patch(cloud, 3, 0.7, 64, 11);
    double max_err = 0.0;
    for (int j = 0; j < patch.real_count(); ++j) {
        Vec3 model = denormalize(patch.frame, patch.points.row(j).transpose());
        Vec3 original = cloud.points.row(patch.row_source[j]).transpose();
        max_err = std::max(max_err, (model - original).cwiseAbs().maxCoeff());
    }
    CHECK(max_err <= 1e-12);
}

TEST_CASE("patch preconditions") {
    Rng rng(41);
    PointCloud cloud = random_cloud(rng, 10);
    CHECK_THROWS_AS(extract_patch(cloud, 0, -1.0, 16, 0), std::invalid_argument);
    PointCloud bare(cloud.points);
    CHECK_THROWS_AS(extract_patch(bare, 0, 0.5, 16, 0), std::invalid_argument);
}

TEST_SUITE_END();
