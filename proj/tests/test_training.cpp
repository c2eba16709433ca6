#include "pcdnf/training.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <fstream>

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

TrainConfig tiny_train() {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.centers_per_cloud = 4;
    cfg.patch_rows = 32;
    cfg.workers = 2;
    cfg.seed = 99;
    return cfg;
}

std::vector<NoisySample> plane_dataset(int n_points, double level) {
    PointCloud clean;
    Rng rng(12);
    clean.points = random_points(rng, n_points);
    clean.points.col(2).setZero();
    clean.normals.resize(n_points, 3);
    for (int i = 0; i < n_points; ++i) clean.normals.row(i) << 0, 0, 1;
    std::vector<NoisySample> dataset;
    dataset.push_back(add_gaussian_noise(clean, level, 7));
    return dataset;
}

}  // namespace

TEST_SUITE_BEGIN("training");

TEST_CASE("lr schedule endpoints and geometric midpoint") {
    TrainConfig cfg;
    cfg.epochs = 45;
    CHECK(lr_schedule(0, cfg) == doctest::Approx(1e-4));
    CHECK(lr_schedule(44, cfg) == doctest::Approx(1e-8).epsilon(1e-12));

    cfg.epochs = 11;  // midpoint epoch 5 sits at the geometric mean
    CHECK(lr_schedule(5, cfg) == doctest::Approx(1e-6).epsilon(1e-12));

    cfg.epochs = 1;
    CHECK(lr_schedule(0, cfg) == 1e-4);
    CHECK_THROWS_AS(lr_schedule(1, cfg), std::invalid_argument);
}

TEST_CASE("momentum update matches a hand-rolled two-step oracle") {
    const double lr = 0.1, mu = 0.9;
    const double g1 = 0.5, g2 = -0.25, w0 = 1.0;

    std::vector<Mat> w{Mat::Constant(1, 1, w0)};
    std::vector<Mat> vel{Mat::Zero(1, 1)};
    sgd_momentum_step(w, vel, {Mat::Constant(1, 1, g1)}, lr, mu);
    sgd_momentum_step(w, vel, {Mat::Constant(1, 1, g2)}, lr, mu);

    double v1 = mu * 0.0 + g1;
    double w1 = w0 - lr * v1;
    double v2 = mu * v1 + g2;
    double w2 = w1 - lr * v2;
    CHECK(w[0](0, 0) == doctest::Approx(w2).epsilon(1e-15));
    CHECK(vel[0](0, 0) == doctest::Approx(v2).epsilon(1e-15));
}

TEST_CASE("one step at zero learning rate leaves parameters bitwise unchanged") {
    auto dataset = plane_dataset(300, 0.01);
    TrainConfig cfg = tiny_train();
    cfg.epochs = 1;
    cfg.lr_start = 0.0;
    cfg.centers_per_cloud = 2;
    cfg.batch_size = 2;

    ParamSet init = make_network_params();
    init.init_fan_in(5);
    ParamSet reference = make_network_params();
    reference.init_fan_in(5);

    TrainResult result = train(dataset, cfg, tiny_net(), LossConfig{}, std::move(init));
    for (int i = 0; i < result.params.count(); ++i)
        CHECK(result.params.tensor(i) == reference.tensor(i));
    CHECK(result.history.size() == 1);
    CHECK(std::isfinite(result.history[0].loss));
}

TEST_CASE("training is deterministic under a fixed seed") {
    auto dataset = plane_dataset(300, 0.005);
    TrainConfig cfg = tiny_train();

    TrainResult a = train(dataset, cfg, tiny_net(), LossConfig{});
    TrainResult b = train(dataset, cfg, tiny_net(), LossConfig{});
    REQUIRE(a.history.size() == b.history.size());
    for (size_t e = 0; e < a.history.size(); ++e) {
        CHECK(a.history[e].loss == b.history[e].loss);
        CHECK(a.history[e].loss_point == b.history[e].loss_point);
    }
    for (int i = 0; i < a.params.count(); ++i) CHECK(a.params.tensor(i) == b.params.tensor(i));
}

TEST_CASE("fixed-center training drives the planar joint loss down") {
    auto dataset = plane_dataset(600, 0.005);
    TrainConfig cfg = tiny_train();
    cfg.epochs = 80;
    cfg.batch_size = 1;
    cfg.fixed_centers = {{0, 17}};
    cfg.lr_start = 1e-4;
    cfg.lr_end = 1e-6;

    TrainResult result = train(dataset, cfg, tiny_net(), LossConfig{});
    REQUIRE(result.steps.size() == 80);
    double first = result.steps.front().loss;
    double last = result.steps.back().loss;
    CHECK(last < first);
    CHECK(last < 0.7 * first);  // the full 500-step bar lives in the acceptance suite
    for (const EpochStats& e : result.history) CHECK(std::isfinite(e.loss));
}

TEST_CASE("history csv layout") {
    std::vector<EpochStats> history{{0, 1e-4, 3.0, 1.0, 2.0, 0.5}};
    write_history_csv("history_test.csv", history);
    PointCloud dummy;  // reuse read helpers? plain check instead
    std::ifstream in("history_test.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "epoch,lr,loss,L_point,L_normal,L_ortho");
    CHECK(row.rfind("0,", 0) == 0);
    std::remove("history_test.csv");
}

TEST_CASE("empty dataset and missing normals are rejected") {
    CHECK_THROWS_AS(train({}, tiny_train(), tiny_net(), LossConfig{}), std::invalid_argument);
    auto dataset = plane_dataset(200, 0.01);
    dataset[0].noisy.normals.resize(0, 3);
    CHECK_THROWS_AS(train(dataset, tiny_train(), tiny_net(), LossConfig{}),
                    std::invalid_argument);
}

TEST_SUITE_END();
