#include "pcdnf/inference.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

using namespace pcdnf;
using namespace pcdnf::testing;

namespace {

NetConfig tiny_net() {
    NetConfig cfg;
    cfg.k1 = 4;
    cfg.k2 = 6;
    cfg.k3 = 6;
    cfg.k4 = 3;
    cfg.top_k = 16;
    return cfg;
}

InferenceConfig tiny_inference() {
    InferenceConfig cfg;
    cfg.patch_rows = 32;
    cfg.workers = 2;
    cfg.seed = 5;
    return cfg;
}

}  // namespace

TEST_SUITE_BEGIN("inference");

TEST_CASE("shape contract: one cloud per iteration, unit normals") {
    Rng rng(1);
    PointCloud cloud = random_cloud(rng, 150);
    ParamSet params = make_network_params();
    params.init_fan_in(3);

    InferenceConfig cfg = tiny_inference();
    cfg.iterations = 2;
    auto results = denoise_cloud(cloud, params, tiny_net(), cfg);
    REQUIRE(results.size() == 2);
    for (const PointCloud& out : results) {
        CHECK(out.size() == cloud.size());
        REQUIRE(out.has_normals());
        for (int i = 0; i < out.size(); ++i)
            CHECK(std::abs(out.normals.row(i).norm() - 1.0) <= 1e-9);
    }
}

TEST_CASE("determinism across runs, including multi-iteration") {
    Rng rng(2);
    PointCloud cloud = random_cloud(rng, 120);
    ParamSet params = make_network_params();
    params.init_fan_in(4);
    InferenceConfig cfg = tiny_inference();
    cfg.iterations = 2;

    auto a = denoise_cloud(cloud, params, tiny_net(), cfg);
    auto b = denoise_cloud(cloud, params, tiny_net(), cfg);
    for (size_t it = 0; it < a.size(); ++it) {
        CHECK(a[it].points == b[it].points);
        CHECK(a[it].normals == b[it].normals);
    }
}

TEST_CASE("denoise_point equals the matching row of a one-iteration run") {
    Rng rng(3);
    PointCloud cloud = random_cloud(rng, 100);
    ParamSet params = make_network_params();
    params.init_fan_in(5);
    InferenceConfig cfg = tiny_inference();
    cfg.iterations = 1;

    auto cloud_result = denoise_cloud(cloud, params, tiny_net(), cfg)[0];
    for (int index : {0, 17, 99}) {
        auto [p, n] = denoise_point(cloud, index, params, tiny_net(), cfg);
        CHECK(p == Vec3(cloud_result.points.row(index).transpose()));
        CHECK(n == Vec3(cloud_result.normals.row(index).transpose()));
    }
}

TEST_CASE("zero-weight displacement head keeps positions") {
    Rng rng(4);
    PointCloud cloud = random_cloud(rng, 80);
    ParamSet params = make_network_params();
    params.init_fan_in(6);
    params.at("dec.disp.l3.w").setZero();
    params.at("dec.disp.l3.b").setZero();

    InferenceConfig cfg = tiny_inference();
    auto out = denoise_cloud(cloud, params, tiny_net(), cfg)[0];
    CHECK(out.points == cloud.points);
}

TEST_CASE("input without normals bootstraps from PCA") {
    Rng rng(5);
    PointCloud cloud(random_points(rng, 90));
    REQUIRE(!cloud.has_normals());
    ParamSet params = make_network_params();
    params.init_fan_in(7);
    auto out = denoise_cloud(cloud, params, tiny_net(), tiny_inference());
    CHECK(out[0].size() == 90);
}

TEST_CASE("whole-cloud translation equivariance") {
    Rng rng(6);
    PointCloud cloud = random_cloud(rng, 100);
    cloud.points = quantize(cloud.points);
    ParamSet params = make_network_params();
    params.init_fan_in(8);

    const Vec3 t(1.5, -2.25, 0.5);
    PointCloud moved = cloud;
    moved.points.rowwise() += t.transpose();

    InferenceConfig cfg = tiny_inference();
    auto a = denoise_cloud(cloud, params, tiny_net(), cfg)[0];
    auto b = denoise_cloud(moved, params, tiny_net(), cfg)[0];
    CHECK(a.normals == b.normals);
    CHECK(((b.points - a.points).rowwise() - t.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("error handling") {
    ParamSet params = make_network_params();
    PointCloud empty;
    empty.points.resize(0, 3);
    CHECK_THROWS_AS(denoise_cloud(empty, params, tiny_net(), tiny_inference()),
                    std::invalid_argument);

    Rng rng(7);
    PointCloud cloud = random_cloud(rng, 10);
    CHECK_THROWS_AS(denoise_point(cloud, 10, params, tiny_net(), tiny_inference()),
                    std::invalid_argument);
    InferenceConfig zero_iter = tiny_inference();
    zero_iter.iterations = 0;
    CHECK_THROWS_AS(denoise_cloud(cloud, params, tiny_net(), zero_iter), std::invalid_argument);
}

TEST_SUITE_END();
