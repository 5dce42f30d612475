#include "failband/flow.hpp"

#include "failband/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

namespace failband::flow {

namespace {

Vec velocity_at(const FlowModel& model, const Vec& x, double s) {
    Vec input(x);
    input.push_back(s);
    return nn::forward(model.velocity, input);
}

} // namespace

FlowModel train_flow_consistent(const Mat& observations, const TrainConfig& config,
                                double consistency_weight) {
    if (observations.size() < 2) throw DataError("train_flow: need at least 2 observations");
    int d = static_cast<int>(observations[0].size());

    FlowModel model;
    model.data_dim = d;
    model.normalizer = Normalizer::fit(observations);

    Mat normalized(observations.size());
    for (size_t i = 0; i < observations.size(); ++i)
        normalized[i] = model.normalizer.apply(observations[i]);

    std::vector<int> dims;
    dims.push_back(d + 1);
    for (int h : config.hidden) dims.push_back(h);
    dims.push_back(d);
    model.velocity = nn::init_mlp(dims, nn::Activation::SmoothRelu, config.seed);

    auto adam = nn::AdamState::init(model.velocity, config.lr);
    Rng rng(config.seed ^ 0x7f1de5c3a9b40e21ULL);

    std::vector<size_t> order(normalized.size());
    std::iota(order.begin(), order.end(), size_t{0});

    nn::ForwardCache cache, cache2;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_in_place(order, rng);
        for (size_t start = 0; start < order.size(); start += config.batch) {
            size_t end = std::min(order.size(), start + config.batch);
            double inv_b = 1.0 / static_cast<double>(end - start);
            auto grads = nn::Gradients::zeros_like(model.velocity);
            for (size_t k = start; k < end; ++k) {
                const Vec& x = normalized[order[k]];
                Vec z(d);
                for (double& v : z) v = rng.gaussian();
                double s = rng.uniform();
                Vec input(d + 1);
                for (int i = 0; i < d; ++i) input[i] = x[i] + s * (z[i] - x[i]);
                input[d] = s;
                Vec out = nn::forward_cached(model.velocity, input, cache);
                Vec og(d);
                for (int i = 0; i < d; ++i) og[i] = 2.0 * (out[i] - (z[i] - x[i])) * inv_b;
                nn::backward(model.velocity, cache, og, grads);

                if (consistency_weight > 0.0) {
                    double s1 = rng.uniform();
                    double s2 = rng.uniform();
                    Vec in1(d + 1), in2(d + 1);
                    for (int i = 0; i < d; ++i) {
                        in1[i] = x[i] + s1 * (z[i] - x[i]);
                        in2[i] = x[i] + s2 * (z[i] - x[i]);
                    }
                    in1[d] = s1;
                    in2[d] = s2;
                    Vec f1 = nn::forward_cached(model.velocity, in1, cache);
                    Vec f2 = nn::forward_cached(model.velocity, in2, cache2);
                    Vec diff(d), og1(d), og2(d);
                    for (int i = 0; i < d; ++i) {
                        double z1 = in1[i] + (1.0 - s1) * f1[i];
                        double z2 = in2[i] + (1.0 - s2) * f2[i];
                        diff[i] = z1 - z2;
                        og1[i] = consistency_weight * 2.0 * diff[i] * (1.0 - s1) * inv_b;
                        og2[i] = -consistency_weight * 2.0 * diff[i] * (1.0 - s2) * inv_b;
                    }
                    nn::backward(model.velocity, cache, og1, grads);
                    nn::backward(model.velocity, cache2, og2, grads);
                }
            }
            nn::adam_step(model.velocity, grads, adam);
        }
    }
    return model;
}

FlowModel train_flow(const Mat& observations, const TrainConfig& config) {
    return train_flow_consistent(observations, config, 0.0);
}

Vec noise_estimate(const FlowModel& model, const Vec& obs) {
    if (static_cast<int>(obs.size()) != model.data_dim)
        throw NumericError("noise_estimate: observation dim mismatch");
    Vec x = model.normalizer.apply(obs);
    Vec f = velocity_at(model, x, 0.0);
    for (size_t i = 0; i < x.size(); ++i) x[i] += f[i];
    return x;
}

double logpzo_score(const FlowModel& model, const Vec& obs) {
    Vec z = noise_estimate(model, obs);
    double acc = 0.0;
    for (double v : z) acc += v * v;
    return acc;
}

IntegratorConfig default_integrator(int data_dim) {
    IntegratorConfig c;
    if (data_dim > 64) c.divergence = Divergence::Hutchinson;
    return c;
}

namespace {

constexpr double kFdStep = 1e-6;

/// (f(x, s), div f(x, s)) with the divergence from forward differences.
std::pair<Vec, double> field_and_divergence(const FlowModel& model, const Vec& x, double s,
                                            const IntegratorConfig& integ, const Mat& probes) {
    Vec f = velocity_at(model, x, s);
    double div = 0.0;
    if (integ.divergence == Divergence::Exact) {
        Vec xp = x;
        for (size_t i = 0; i < x.size(); ++i) {
            xp[i] = x[i] + kFdStep;
            Vec fp = velocity_at(model, xp, s);
            div += (fp[i] - f[i]) / kFdStep;
            xp[i] = x[i];
        }
    } else {
        for (const Vec& v : probes) {
            Vec xp(x.size());
            for (size_t i = 0; i < x.size(); ++i) xp[i] = x[i] + kFdStep * v[i];
            Vec fp = velocity_at(model, xp, s);
            double dot = 0.0;
            for (size_t i = 0; i < x.size(); ++i) dot += (fp[i] - f[i]) * v[i];
            div += dot / kFdStep;
        }
        div /= static_cast<double>(probes.size());
    }
    return {std::move(f), div};
}

} // namespace

double logpo_score(const FlowModel& model, const Vec& obs, const IntegratorConfig& integ) {
    if (integ.steps < 4) throw ConfigError("logpo integrator needs at least 4 steps");
    if (static_cast<int>(obs.size()) != model.data_dim)
        throw NumericError("logpo_score: observation dim mismatch");

    Mat probes;
    if (integ.divergence == Divergence::Hutchinson) {
        if (integ.probes < 1) throw ConfigError("Hutchinson divergence needs >= 1 probe");
        Rng rng(integ.probe_seed ^ 0x51c6f2d30aa1b7e9ULL);
        probes.assign(integ.probes, Vec(obs.size()));
        for (auto& v : probes)
            for (double& e : v) e = rng.rademacher();
    }

    Vec x = model.normalizer.apply(obs);
    double div_integral = 0.0;
    double dt = 1.0 / static_cast<double>(integ.steps);
    for (int step = 0; step < integ.steps; ++step) {
        double s = step * dt;
        // RK4 on the augmented state (x, integral of div f)
        auto [k1, d1] = field_and_divergence(model, x, s, integ, probes);
        Vec x2(x.size());
        for (size_t i = 0; i < x.size(); ++i) x2[i] = x[i] + 0.5 * dt * k1[i];
        auto [k2, d2] = field_and_divergence(model, x2, s + 0.5 * dt, integ, probes);
        Vec x3(x.size());
        for (size_t i = 0; i < x.size(); ++i) x3[i] = x[i] + 0.5 * dt * k2[i];
        auto [k3, d3] = field_and_divergence(model, x3, s + 0.5 * dt, integ, probes);
        Vec x4(x.size());
        for (size_t i = 0; i < x.size(); ++i) x4[i] = x[i] + dt * k3[i];
        auto [k4, d4] = field_and_divergence(model, x4, s + dt, integ, probes);
        for (size_t i = 0; i < x.size(); ++i)
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        div_integral += dt / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
        for (double v : x)
            if (!std::isfinite(v)) throw NumericError("logpo: integration diverged");
    }

    double d = static_cast<double>(model.data_dim);
    double sq = 0.0;
    for (double v : x) sq += v * v;
    double log_p_norm = -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * sq + div_integral;
    double log_det = 0.0;
    for (double sd : model.normalizer.std) log_det += std::log(sd);
    // p_data(O) = p_norm(x~) / prod(std)
    return -(log_p_norm - log_det);
}

void save_flow_model(const FlowModel& model, const std::string& path) {
    auto out = io::create_model(path, io::ModelKind::Flow);
    io::write_mlp(out, model.velocity);
    out.flush();
    if (!out) throw DataError("I/O failure writing '" + path + "'");

    nlohmann::json side = {{"mean", model.normalizer.mean}, {"std", model.normalizer.std}};
    std::ofstream sf(path + ".normalizer.json");
    if (!sf) throw DataError("cannot write '" + path + ".normalizer.json'");
    sf << side.dump() << '\n';
}

FlowModel load_flow_model(const std::string& path) {
    auto in = io::open_model(path, io::ModelKind::Flow);
    FlowModel model;
    model.velocity = io::read_mlp(in);
    model.data_dim = model.velocity.output_dim();

    std::ifstream sf(path + ".normalizer.json");
    if (!sf) throw DataError("missing sidecar '" + path + ".normalizer.json'");
    nlohmann::json side = nlohmann::json::parse(sf);
    model.normalizer.mean = side.at("mean").get<Vec>();
    model.normalizer.std = side.at("std").get<Vec>();
    if (static_cast<int>(model.normalizer.mean.size()) != model.data_dim)
        throw DataError("normalizer sidecar dim mismatch for '" + path + "'");
    return model;
}

} // namespace failband::flow
