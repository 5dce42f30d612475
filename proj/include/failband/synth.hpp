#pragma once

#include "failband/rng.hpp"
#include "failband/types.hpp"

#include <cstdint>

namespace failband::synth {

struct FailureSpec {
    FailureMode mode;
    double probability = 0.0;
    double param = 0.0; // mode-specific; 0 picks the built-in default
};

struct SynthConfig {
    int n_rollouts = 100;
    int t_max = 8;        // max execution steps (chunks) per rollout
    int horizon = 16;     // H
    int exec_horizon = 8; // H'
    int obs_window = 2;   // T_O
    double noise = 0.005; // uniform action noise half-width
    int d_feature = 16;   // random linear "visual" embedding dim
    double success_eps = 0.05;
    double step_size = 0.025; // max effector move per control step
    std::vector<FailureSpec> failure_spec;
    uint64_t seed = 0;
    // the frozen "vision encoder"; independent of `seed` so datasets generated
    // with different seeds share one feature space
    uint64_t embedding_seed = 0x8f1bbcdcbfa53e0bULL;

    void validate() const;
};

/// Ground-truth environment state for the 2-D pick-and-place task.
struct EnvState {
    double ex = 0.0, ey = 0.0; // effector
    bool gripper_closed = false;
    double ox = 0.0, oy = 0.0; // object
    double tx = 0.0, ty = 0.0; // target
    bool carrying = false;
};

enum class Phase { Approach, Grasp, Carry, Release, Hold };

/// Environment plus the scripted controller's internal state. The planner
/// simulates this struct forward, so plans and execution share dynamics.
struct SimState {
    EnvState env;
    Phase phase = Phase::Approach;
    // perceived object/target offsets (sensor corruption; env unaffected)
    double perceive_dx = 0.0, perceive_dy = 0.0;
    bool grasp_disabled = false; // Slip injected before pickup
    int stall_remaining = 0;
    bool jitter_active = false;
    double jitter_amp = 0.0;
    int control_step = 0; // parity drives the jitter sign
};

bool success_oracle(const EnvState& final_state, double eps);

/// B noisy H-step plans from the scripted policy; deterministic for noise 0.
std::vector<Mat> policy_sample(const SimState& state, const SynthConfig& config, int B,
                               uint64_t seed);

Dataset generate_dataset(const SynthConfig& config);

/// Rebuilds the controller state from a recorded observation via the saved
/// linear embedding; lets STAC sample plans for offline rollouts.
SimState state_from_obs(const Vec& obs, const DatasetHeader& header,
                        const SynthConfig& config);

/// Defaults used when FailureSpec.param is 0.
inline constexpr double kDefaultJitterAmp = 0.06;
inline constexpr double kDefaultSensorShiftSigmas = 3.0;
inline constexpr int kDefaultStallSteps = 24;
inline constexpr double kDefaultOodOffset = 0.45;
inline constexpr double kPerceptionShift = 0.3; // SensorShift's effect on the policy
inline constexpr double kGraspEps = 0.03;
inline constexpr double kDropEps = 0.02;
inline constexpr int kRawStateDim = 8;

} // namespace failband::synth
