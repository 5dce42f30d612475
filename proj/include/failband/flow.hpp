#pragma once

#include "failband/model_io.hpp"
#include "failband/nn.hpp"

#include <cstdint>
#include <string>

namespace failband::flow {

/// Velocity field over z-normalized observations. Input is [x, s] with the
/// flow time s appended as a raw scalar; output has the data dimension.
struct FlowModel {
    nn::Mlp velocity;
    int data_dim = 0;
    Normalizer normalizer;
};

struct TrainConfig {
    int epochs = 200;
    int batch = 128;
    double lr = 1e-4;
    uint64_t seed = 0;
    std::vector<int> hidden = {128, 128};
};

/// Minimizes E || f(x_s, s) - (Z - x) ||^2 with x_s = x + s(Z - x),
/// s ~ U[0,1], Z ~ N(0, I), on normalized observations.
FlowModel train_flow(const Mat& observations, const TrainConfig& config);

/// Same loop plus consistency_weight * E || zhat(s1) - zhat(s2) ||^2 where
/// zhat(s) = x_s + (1-s) f(x_s, s). With weight 0 this is train_flow exactly
/// (same RNG stream, bit-identical model).
FlowModel train_flow_consistent(const Mat& observations, const TrainConfig& config,
                                double consistency_weight);

/// One-step latent estimate Z = x~ + f(x~, 0) on the normalized observation.
Vec noise_estimate(const FlowModel& model, const Vec& obs);

/// ||Z||^2; higher indicates failure.
double logpzo_score(const FlowModel& model, const Vec& obs);

enum class Divergence { Exact, Hutchinson };

struct IntegratorConfig {
    int steps = 16;
    Divergence divergence = Divergence::Exact;
    int probes = 8;            // Hutchinson only
    uint64_t probe_seed = 0;   // probes are fixed per config, scoring stays pure
};

/// Picks exact trace for d <= 64, Hutchinson with 8 probes beyond.
IntegratorConfig default_integrator(int data_dim);

/// -log p(O) in data space via the instantaneous change-of-variables formula
/// along x'(s) = f(x, s) from the normalized observation at s=0 to s=1,
/// integrated with classical RK4. Includes the normalizer log-det so the
/// value is comparable to densities of the raw observation.
double logpo_score(const FlowModel& model, const Vec& obs, const IntegratorConfig& integ);

void save_flow_model(const FlowModel& model, const std::string& path);
FlowModel load_flow_model(const std::string& path);

} // namespace failband::flow
