#include "failband/synth.hpp"

#include <algorithm>
#include <cmath>

namespace failband::synth {

namespace {

constexpr double kEffectorStartX = 0.1, kEffectorStartY = 0.1;
constexpr double kNominalObjX = 0.3, kNominalObjY = 0.5;
constexpr double kTargetX = 0.8, kTargetY = 0.8;
constexpr double kInitJitter = 0.05;
constexpr int kProbeEpisodes = 8;

double dist(double ax, double ay, double bx, double by) {
    return std::hypot(ax - bx, ay - by);
}

struct Action {
    double dx = 0.0, dy = 0.0, g = 0.0;
};

Action nominal_action(const SimState& st, const SynthConfig& config) {
    Action a;
    if (st.stall_remaining > 0) return a;
    double pox = st.env.ox + st.perceive_dx;
    double poy = st.env.oy + st.perceive_dy;
    double ptx = st.env.tx + st.perceive_dx;
    double pty = st.env.ty + st.perceive_dy;
    auto move_toward = [&](double gx, double gy) {
        double vx = gx - st.env.ex;
        double vy = gy - st.env.ey;
        double d = std::hypot(vx, vy);
        if (d > config.step_size) {
            vx *= config.step_size / d;
            vy *= config.step_size / d;
        }
        a.dx = vx;
        a.dy = vy;
    };
    switch (st.phase) {
    case Phase::Approach: move_toward(pox, poy); break;
    case Phase::Grasp: a.g = 1.0; break;
    case Phase::Carry: move_toward(ptx, pty); break;
    case Phase::Release: a.g = -1.0; break;
    case Phase::Hold: break;
    }
    if (st.jitter_active && st.phase != Phase::Hold) {
        double sign = (st.control_step % 2 == 0) ? 1.0 : -1.0;
        a.dx += sign * st.jitter_amp;
        a.dy -= sign * st.jitter_amp;
    }
    return a;
}

void step_sim(SimState& st, const Action& a, const SynthConfig& config) {
    if (st.stall_remaining > 0) st.stall_remaining -= 1;
    st.env.ex += std::clamp(a.dx, -2.0 * config.step_size, 2.0 * config.step_size);
    st.env.ey += std::clamp(a.dy, -2.0 * config.step_size, 2.0 * config.step_size);
    if (a.g > 0.5) {
        st.env.gripper_closed = true;
        if (!st.grasp_disabled &&
            dist(st.env.ex, st.env.ey, st.env.ox, st.env.oy) <= kGraspEps)
            st.env.carrying = true;
    } else if (a.g < -0.5) {
        st.env.gripper_closed = false;
        st.env.carrying = false;
    }
    if (st.env.carrying) {
        st.env.ox = st.env.ex;
        st.env.oy = st.env.ey;
    }
    st.control_step += 1;
    switch (st.phase) {
    case Phase::Approach:
        // stricter than kGraspEps so noise cannot push the grasp out of reach
        if (dist(st.env.ex, st.env.ey, st.env.ox + st.perceive_dx,
                 st.env.oy + st.perceive_dy) <= 0.5 * kGraspEps)
            st.phase = Phase::Grasp;
        break;
    case Phase::Grasp: st.phase = Phase::Carry; break;
    case Phase::Carry:
        if (dist(st.env.ex, st.env.ey, st.env.tx + st.perceive_dx,
                 st.env.ty + st.perceive_dy) <= kDropEps)
            st.phase = Phase::Release;
        break;
    case Phase::Release: st.phase = Phase::Hold; break;
    case Phase::Hold: break;
    }
}

Mat plan_chunk(const SimState& st, const SynthConfig& config, Rng& rng) {
    Mat chunk;
    chunk.reserve(config.horizon);
    SimState sim = st;
    for (int r = 0; r < config.horizon; ++r) {
        Action a = nominal_action(sim, config);
        if (config.noise > 0.0 && sim.stall_remaining == 0 && sim.phase != Phase::Hold &&
            a.g == 0.0) {
            a.dx += rng.uniform(-config.noise, config.noise);
            a.dy += rng.uniform(-config.noise, config.noise);
        }
        chunk.push_back({a.dx, a.dy, a.g});
        step_sim(sim, a, config);
    }
    return chunk;
}

Vec raw_state(const EnvState& e) {
    return {e.ex,
            e.ey,
            e.gripper_closed ? 1.0 : -1.0,
            e.ox,
            e.oy,
            e.carrying ? 1.0 : 0.0,
            e.tx,
            e.ty};
}

Vec make_frame(const EnvState& e, const Mat& embedding, const Vec* sensor_shift) {
    Vec raw = raw_state(e);
    Vec frame;
    frame.reserve(embedding.size() + 3);
    for (size_t r = 0; r < embedding.size(); ++r) {
        double acc = 0.0;
        for (size_t i = 0; i < raw.size(); ++i) acc += embedding[r][i] * raw[i];
        if (sensor_shift) acc += (*sensor_shift)[r];
        frame.push_back(acc);
    }
    frame.push_back(e.ex);
    frame.push_back(e.ey);
    frame.push_back(e.gripper_closed ? 1.0 : -1.0);
    return frame;
}

Vec window_obs(const std::vector<Vec>& frames, int obs_window) {
    Vec obs;
    int n = static_cast<int>(frames.size());
    for (int k = n - obs_window; k < n; ++k) {
        const Vec& f = frames[std::max(k, 0)];
        obs.insert(obs.end(), f.begin(), f.end());
    }
    return obs;
}

struct EpisodePlan {
    std::optional<FailureMode> mode;
    double param = 0.0;
    int injection_chunk = 0;
};

EpisodePlan pick_failure(const SynthConfig& config, Rng& rng) {
    EpisodePlan plan;
    double u = rng.uniform();
    double acc = 0.0;
    for (const auto& spec : config.failure_spec) {
        acc += spec.probability;
        if (u < acc) {
            plan.mode = spec.mode;
            plan.param = spec.param;
            break;
        }
    }
    // injection chunk draws happen unconditionally to keep the per-episode
    // stream layout identical across modes
    int mid = std::max(1, config.t_max / 2);
    int slip_chunk = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(mid)));
    int early = std::max(1, config.t_max / 3);
    int jitter_chunk = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(early)));
    if (plan.mode) {
        switch (*plan.mode) {
        case FailureMode::Slip: plan.injection_chunk = slip_chunk; break;
        case FailureMode::Jitter: plan.injection_chunk = jitter_chunk; break;
        case FailureMode::SensorShift: plan.injection_chunk = std::max(1, config.t_max / 3); break;
        case FailureMode::OodInit: plan.injection_chunk = 0; break;
        case FailureMode::Stall: plan.injection_chunk = std::max(1, config.t_max / 3); break;
        }
    }
    return plan;
}

SimState init_state(const SynthConfig& config, Rng& rng, bool ood_init) {
    SimState st;
    st.env.ex = kEffectorStartX;
    st.env.ey = kEffectorStartY;
    st.env.tx = kTargetX;
    st.env.ty = kTargetY;
    double jx = rng.uniform(-kInitJitter, kInitJitter);
    double jy = rng.uniform(-kInitJitter, kInitJitter);
    if (ood_init) {
        st.env.ox = 0.75 + jx;
        st.env.oy = 0.15 + jy;
        // the policy has only seen nominal starts; it perceives the object there
        st.perceive_dx = kNominalObjX - st.env.ox;
        st.perceive_dy = kNominalObjY - st.env.oy;
    } else {
        st.env.ox = kNominalObjX + jx;
        st.env.oy = kNominalObjY + jy;
    }
    return st;
}

Rollout run_episode(const SynthConfig& config, const Mat& embedding, const Vec& sensor_shift_vec,
                    uint64_t episode_index, Rng episode_rng) {
    EpisodePlan plan = pick_failure(config, episode_rng);
    SimState st = init_state(config, episode_rng,
                             plan.mode && *plan.mode == FailureMode::OodInit);
    bool sensor_active = false;
    Vec shift = sensor_shift_vec;
    if (plan.mode && *plan.mode == FailureMode::SensorShift && plan.param > 0.0) {
        double scale = plan.param / kDefaultSensorShiftSigmas;
        for (double& v : shift) v *= scale;
    }

    Rollout rollout;
    rollout.id = "ep" + std::to_string(episode_index);
    std::vector<Vec> frames;
    for (int k = 0; k < config.t_max; ++k) {
        if (plan.mode && k == plan.injection_chunk) {
            switch (*plan.mode) {
            case FailureMode::Slip:
                if (st.env.carrying)
                    st.env.carrying = false; // dropped; gripper stays closed
                else
                    st.grasp_disabled = true;
                break;
            case FailureMode::Jitter:
                st.jitter_active = true;
                st.jitter_amp = plan.param > 0.0 ? plan.param : kDefaultJitterAmp;
                break;
            case FailureMode::SensorShift:
                sensor_active = true;
                st.perceive_dx += kPerceptionShift;
                st.perceive_dy += kPerceptionShift;
                break;
            case FailureMode::OodInit: break; // applied at init
            case FailureMode::Stall:
                st.stall_remaining =
                    plan.param > 0.0 ? static_cast<int>(plan.param) : kDefaultStallSteps;
                break;
            }
        }
        frames.push_back(make_frame(st.env, embedding, sensor_active ? &shift : nullptr));
        Step step;
        step.t = k * config.exec_horizon;
        step.obs = window_obs(frames, config.obs_window);
        step.action_chunk = plan_chunk(st, config, episode_rng);
        for (int r = 0; r < config.exec_horizon; ++r) {
            Action a{step.action_chunk[r][0], step.action_chunk[r][1], step.action_chunk[r][2]};
            step_sim(st, a, config);
        }
        rollout.steps.push_back(std::move(step));
        if (success_oracle(st.env, config.success_eps)) break;
    }

    bool success = success_oracle(st.env, config.success_eps);
    rollout.label = success ? Label::Success : Label::Failure;
    if (!success && plan.mode) {
        rollout.failure_mode = plan.mode;
        int t_inject = plan.injection_chunk * config.exec_horizon;
        rollout.injection_time = std::min(t_inject, rollout.steps.back().t);
    }
    return rollout;
}

Mat make_embedding(const SynthConfig& config) {
    Rng rng(config.embedding_seed);
    Mat e(config.d_feature, Vec(kRawStateDim));
    double scale = 1.0 / std::sqrt(static_cast<double>(kRawStateDim));
    for (auto& row : e)
        for (double& v : row) v = scale * rng.gaussian();
    return e;
}

} // namespace

void SynthConfig::validate() const {
    if (exec_horizon >= horizon) throw ConfigError("synth: requires H' < H");
    if (exec_horizon < 1 || obs_window < 1) throw ConfigError("synth: H' and T_O must be >= 1");
    if (t_max < 1 || n_rollouts < 0) throw ConfigError("synth: bad horizon or rollout count");
    if (d_feature < 1) throw ConfigError("synth: d_feature must be >= 1");
    if (noise < 0.0 || step_size <= 0.0) throw ConfigError("synth: bad noise or step size");
    double total = 0.0;
    for (const auto& spec : failure_spec) {
        if (spec.probability < 0.0 || spec.probability > 1.0)
            throw ConfigError("synth: failure probability out of [0,1]");
        total += spec.probability;
    }
    if (total > 1.0 + 1e-12) throw ConfigError("synth: failure probabilities sum past 1");
}

bool success_oracle(const EnvState& final_state, double eps) {
    return !final_state.gripper_closed &&
           dist(final_state.ox, final_state.oy, final_state.tx, final_state.ty) <= eps;
}

std::vector<Mat> policy_sample(const SimState& state, const SynthConfig& config, int B,
                               uint64_t seed) {
    if (B < 1) throw ConfigError("policy_sample: B must be >= 1");
    Rng base(seed);
    std::vector<Mat> batch;
    batch.reserve(B);
    for (int b = 0; b < B; ++b) {
        Rng rng = base.fork(static_cast<uint64_t>(b));
        batch.push_back(plan_chunk(state, config, rng));
    }
    return batch;
}

Dataset generate_dataset(const SynthConfig& config) {
    config.validate();
    Rng root(config.seed);
    Mat embedding = make_embedding(config);

    // Per-dim std of embedded features over nominal probe episodes; fixes the
    // SensorShift offset at 3 training-feature standard deviations.
    SynthConfig probe_cfg = config;
    probe_cfg.failure_spec.clear();
    Vec mean(config.d_feature, 0.0), m2(config.d_feature, 0.0);
    long count = 0;
    for (int p = 0; p < kProbeEpisodes; ++p) {
        Rollout r = run_episode(probe_cfg, embedding, Vec(config.d_feature, 0.0),
                                1000000 + p, root.fork(0xabcd0000ULL + p));
        for (const auto& step : r.steps) {
            // first frame of the window is enough for the std estimate
            ++count;
            for (int i = 0; i < config.d_feature; ++i) {
                double x = step.obs[i];
                double delta = x - mean[i];
                mean[i] += delta / static_cast<double>(count);
                m2[i] += delta * (x - mean[i]);
            }
        }
    }
    Vec shift(config.d_feature, 0.0);
    for (int i = 0; i < config.d_feature; ++i) {
        double sd = count > 1 ? std::sqrt(m2[i] / static_cast<double>(count - 1)) : 1.0;
        shift[i] = kDefaultSensorShiftSigmas * (sd > 0.0 ? sd : 1.0);
    }

    Dataset ds;
    ds.header.d_obs = config.obs_window * (config.d_feature + 3);
    ds.header.d_action = 3;
    ds.header.horizon = config.horizon;
    ds.header.exec_horizon = config.exec_horizon;
    ds.header.obs_window = config.obs_window;
    ds.header.embedding = embedding;
    ds.rollouts.reserve(config.n_rollouts);
    // episodes draw from independent forked streams: embarrassingly parallel,
    // and the output is identical either way
#pragma omp parallel for schedule(static) if (config.n_rollouts > 8)
    for (long i = 0; i < config.n_rollouts; ++i) {
        Rollout r = run_episode(config, embedding, shift, static_cast<uint64_t>(i),
                                root.fork(static_cast<uint64_t>(i)));
#pragma omp critical
        {
            ds.rollouts.push_back(std::move(r));
        }
    }
    std::sort(ds.rollouts.begin(), ds.rollouts.end(), [](const Rollout& a, const Rollout& b) {
        return std::stol(a.id.substr(2)) < std::stol(b.id.substr(2));
    });
    return ds;
}

namespace {

/// Solves the 8x8 normal equations (E^T E) s = E^T f for the raw state.
Vec decode_raw(const Mat& embedding, const Vec& features) {
    size_t d = kRawStateDim;
    Mat ata(d, Vec(d, 0.0));
    Vec atb(d, 0.0);
    for (size_t r = 0; r < embedding.size(); ++r) {
        for (size_t i = 0; i < d; ++i) {
            atb[i] += embedding[r][i] * features[r];
            for (size_t j = 0; j < d; ++j) ata[i][j] += embedding[r][i] * embedding[r][j];
        }
    }
    // Gaussian elimination with partial pivoting
    for (size_t col = 0; col < d; ++col) {
        size_t piv = col;
        for (size_t r = col + 1; r < d; ++r)
            if (std::abs(ata[r][col]) > std::abs(ata[piv][col])) piv = r;
        std::swap(ata[col], ata[piv]);
        std::swap(atb[col], atb[piv]);
        double diag = ata[col][col];
        if (std::abs(diag) < 1e-12) throw NumericError("state decode: singular embedding");
        for (size_t r = 0; r < d; ++r) {
            if (r == col) continue;
            double f = ata[r][col] / diag;
            for (size_t c = col; c < d; ++c) ata[r][c] -= f * ata[col][c];
            atb[r] -= f * atb[col];
        }
    }
    Vec s(d);
    for (size_t i = 0; i < d; ++i) s[i] = atb[i] / ata[i][i];
    return s;
}

} // namespace

SimState state_from_obs(const Vec& obs, const DatasetHeader& header, const SynthConfig& config) {
    if (!header.embedding) throw DataError("state_from_obs: dataset has no embedding");
    int frame_dim = header.d_obs / header.obs_window;
    if (frame_dim != config.d_feature + 3)
        throw DataError("state_from_obs: frame dim does not match config");
    size_t off = obs.size() - static_cast<size_t>(frame_dim); // latest frame
    Vec features(obs.begin() + off, obs.begin() + off + config.d_feature);
    Vec raw = decode_raw(*header.embedding, features);

    SimState st;
    st.env.ex = obs[off + config.d_feature];
    st.env.ey = obs[off + config.d_feature + 1];
    st.env.gripper_closed = obs[off + config.d_feature + 2] > 0.0;
    st.env.ox = raw[3];
    st.env.oy = raw[4];
    st.env.carrying = raw[5] > 0.5;
    st.env.tx = raw[6];
    st.env.ty = raw[7];

    if (st.env.gripper_closed) {
        st.phase = dist(st.env.ex, st.env.ey, st.env.tx, st.env.ty) <= kDropEps ? Phase::Release
                                                                                : Phase::Carry;
    } else if (success_oracle(st.env, config.success_eps)) {
        st.phase = Phase::Hold;
    } else if (dist(st.env.ex, st.env.ey, st.env.ox, st.env.oy) <= kGraspEps) {
        st.phase = Phase::Grasp;
    } else {
        st.phase = Phase::Approach;
    }
    return st;
}

} // namespace failband::synth
