#include "failband/flow.hpp"
#include "failband/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"

using namespace failband;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

/// Velocity net computing W [x; s] + b with identity activation.
flow::FlowModel linear_field(int d, const Mat& w, const Vec& b) {
    flow::FlowModel m;
    m.data_dim = d;
    m.normalizer = Normalizer::identity(d);
    m.velocity = nn::init_mlp({d + 1, d}, nn::Activation::Identity, 0);
    m.velocity.weights[0] = w;
    m.velocity.biases[0] = b;
    return m;
}

flow::FlowModel zero_field(int d) {
    return linear_field(d, Mat(d, Vec(d + 1, 0.0)), Vec(d, 0.0));
}

/// f(x, s) = -x regardless of s.
flow::FlowModel contracting_field(int d) {
    Mat w(d, Vec(d + 1, 0.0));
    for (int i = 0; i < d; ++i) w[i][i] = -1.0;
    return linear_field(d, w, Vec(d, 0.0));
}

} // namespace

TEST_CASE("noise_estimate and logpzo on hand-set fields") {
    auto z = zero_field(2);
    CHECK(flow::noise_estimate(z, {3.0, 4.0}) == Vec{3.0, 4.0});
    CHECK(flow::logpzo_score(z, {3.0, 4.0}) == doctest::Approx(25.0));

    auto c = contracting_field(3);
    Vec est = flow::noise_estimate(c, {1.0, -2.0, 0.5});
    for (double v : est) CHECK(v == doctest::Approx(0.0));
    CHECK(flow::logpzo_score(c, {1.0, -2.0, 0.5}) == doctest::Approx(0.0));
}

TEST_CASE("logpo: zero velocity field equals the standard-normal density") {
    auto z = zero_field(2);
    Vec x = {0.7, -1.1};
    double want = 0.5 * 2.0 * kLog2Pi + 0.5 * (x[0] * x[0] + x[1] * x[1]);
    for (int steps : {4, 16, 64}) {
        flow::IntegratorConfig cfg;
        cfg.steps = steps;
        CHECK(flow::logpo_score(z, x, cfg) == doctest::Approx(want).epsilon(1e-8));
    }
}

TEST_CASE("logpo: closed-form solution of the contracting linear ODE") {
    // x' = -x: x(1) = x/e, div f = -d, log p = log N(x/e; 0, I) - d
    int d = 2;
    auto c = contracting_field(d);
    Vec x = {0.5, -1.2};
    double e = std::numbers::e;
    double xn = (x[0] / e) * (x[0] / e) + (x[1] / e) * (x[1] / e);
    double want = 0.5 * d * kLog2Pi + 0.5 * xn + d;

    flow::IntegratorConfig exact;
    exact.steps = 16;
    double got16 = flow::logpo_score(c, x, exact);
    CHECK(got16 == doctest::Approx(want).epsilon(1e-5));

    // RK4 convergence: doubling steps moves the value by <= 1e-3
    exact.steps = 32;
    CHECK(std::abs(flow::logpo_score(c, x, exact) - got16) <= 1e-3);

    // Hutchinson probes agree on the linear field (v^T J v = -d exactly)
    flow::IntegratorConfig hutch = exact;
    hutch.divergence = flow::Divergence::Hutchinson;
    hutch.probes = 8;
    CHECK(flow::logpo_score(c, x, hutch) == doctest::Approx(want).epsilon(1e-4));
}

TEST_CASE("logpo: config validation and non-finite detection") {
    auto z = zero_field(2);
    flow::IntegratorConfig cfg;
    cfg.steps = 3;
    CHECK_THROWS_AS(flow::logpo_score(z, {0.0, 0.0}, cfg), ConfigError);

    auto big = linear_field(1, {{1e308, 0.0}}, {0.0});
    flow::IntegratorConfig ok;
    CHECK_THROWS_AS(flow::logpo_score(big, {1.0}, ok), NumericError);
}

TEST_CASE("default_integrator picks exact trace for small dims") {
    CHECK(flow::default_integrator(38).divergence == flow::Divergence::Exact);
    CHECK(flow::default_integrator(64).divergence == flow::Divergence::Exact);
    CHECK(flow::default_integrator(65).divergence == flow::Divergence::Hutchinson);
}

TEST_CASE("train_flow: determinism and degenerate data") {
    Rng rng(41);
    Mat data(64, Vec(2));
    for (auto& r : data) r = {rng.gaussian(), rng.gaussian()};
    flow::TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 5;
    cfg.hidden = {16};
    auto a = flow::train_flow(data, cfg);
    auto b = flow::train_flow(data, cfg);
    CHECK(a.velocity.weights == b.velocity.weights);
    CHECK(a.velocity.biases == b.velocity.biases);

    Mat constant(8, Vec(2, 3.0));
    CHECK_THROWS_AS(flow::train_flow(constant, cfg), DataError);
}

TEST_CASE("train_flow: 1-D gaussian data gives chi-square-1 logpzo scale") {
    Rng rng(43);
    Mat data(512, Vec(1));
    for (auto& r : data) r[0] = rng.gaussian();
    flow::TrainConfig cfg;
    cfg.epochs = 150;
    cfg.seed = 7;
    cfg.hidden = {32, 32};
    auto model = flow::train_flow(data, cfg);
    double mean = 0.0;
    for (const auto& r : data) mean += flow::logpzo_score(model, r);
    mean /= static_cast<double>(data.size());
    CHECK(mean > 0.4);
    CHECK(mean < 1.6);
}

TEST_CASE("flow model save/load round trip preserves scores") {
    Rng rng(47);
    Mat data(64, Vec(3));
    for (auto& r : data) r = {rng.gaussian(), 2.0 * rng.gaussian(), rng.gaussian() - 1.0};
    flow::TrainConfig cfg;
    cfg.epochs = 5;
    cfg.hidden = {16};
    auto model = flow::train_flow(data, cfg);
    test::TempDir dir("flow_io");
    flow::save_flow_model(model, dir.file("f.bin"));
    auto back = flow::load_flow_model(dir.file("f.bin"));
    CHECK(back.data_dim == model.data_dim);
    CHECK(back.normalizer.mean == model.normalizer.mean);
    CHECK(back.normalizer.std == model.normalizer.std);
    Vec probe = {0.2, -0.7, 1.1};
    CHECK(flow::logpzo_score(back, probe) == flow::logpzo_score(model, probe));
    flow::IntegratorConfig integ;
    CHECK(flow::logpo_score(back, probe, integ) == flow::logpo_score(model, probe, integ));
}
