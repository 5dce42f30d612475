#include "failband/backend.hpp"

#include <chrono>

namespace failband::backend {

using scores::ScoreMethodId;

namespace {

uint64_t fnv64(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

ScoreBackend ScoreBackend::load(ScoreMethodId method, const std::string& model_path) {
    ScoreBackend b(method);
    switch (method) {
    case ScoreMethodId::LogpZO: b.flow_ = flow::load_flow_model(model_path); break;
    case ScoreMethodId::LogpO:
        b.flow_ = flow::load_flow_model(model_path);
        b.integrator_ = flow::default_integrator(b.flow_->data_dim);
        break;
    case ScoreMethodId::Rnd: b.rnd_ = scores::load_rnd_model(model_path); break;
    case ScoreMethodId::Cfm: b.cfm_ = scores::load_cfm_model(model_path); break;
    case ScoreMethodId::PcaKmeans: b.pca_ = scores::load_pca_kmeans_model(model_path); break;
    case ScoreMethodId::Sparc:
    case ScoreMethodId::Stac:
        throw ConfigError("method '" + scores::to_string(method) + "' has no model to load");
    }
    return b;
}

ScoreBackend ScoreBackend::make_sparc(scores::SparcParams params) {
    ScoreBackend b(ScoreMethodId::Sparc);
    b.sparc_params_ = params;
    return b;
}

ScoreBackend ScoreBackend::make_stac(const DatasetHeader& header, StacOptions options) {
    if (!header.embedding)
        throw DataError("stac: dataset header carries no embedding; cannot resample plans");
    ScoreBackend b(ScoreMethodId::Stac);
    b.header_ = header;
    int frame_dim = header.d_obs / header.obs_window;
    synth::SynthConfig env;
    env.horizon = header.horizon;
    env.exec_horizon = header.exec_horizon;
    env.obs_window = header.obs_window;
    env.d_feature = frame_dim - 3;
    env.noise = options.noise;
    env.validate();
    b.stac_env_ = env;
    b.stac_config_.batch_size = options.batch_size;
    b.stac_seed_ = options.seed;
    return b;
}

double ScoreBackend::score_step(const Step& step, scores::StacScorer* stac,
                                uint64_t stac_step_seed) const {
    switch (method_) {
    case ScoreMethodId::LogpZO: return flow::logpzo_score(*flow_, step.obs);
    case ScoreMethodId::LogpO: return flow::logpo_score(*flow_, step.obs, *integrator_);
    case ScoreMethodId::Rnd: return scores::rnd_score(*rnd_, step.action_chunk, step.obs);
    case ScoreMethodId::Cfm: return scores::cfm_score(*cfm_, step.obs);
    case ScoreMethodId::Sparc:
        return scores::sparc(scores::speed_profile(step.action_chunk), sparc_params_);
    case ScoreMethodId::PcaKmeans: return scores::pca_kmeans_score(*pca_, step.obs);
    case ScoreMethodId::Stac: {
        synth::SimState state = synth::state_from_obs(step.obs, header_, *stac_env_);
        auto batch = synth::policy_sample(state, *stac_env_, stac_config_.batch_size,
                                          stac_step_seed);
        return stac->step(batch);
    }
    }
    throw ConfigError("unknown score method");
}

ScoreSeries ScoreBackend::score_rollout(const Rollout& rollout,
                                        std::vector<double>* latency_ms) const {
    ScoreSeries series;
    series.rollout_id = rollout.id;
    series.method = scores::to_string(method_);
    series.values.reserve(rollout.steps.size());

    std::optional<scores::StacScorer> stac;
    if (method_ == ScoreMethodId::Stac)
        stac.emplace(stac_config_, header_.horizon, header_.exec_horizon);
    uint64_t rollout_seed = stac_seed_ ^ fnv64(rollout.id);

    for (size_t i = 0; i < rollout.steps.size(); ++i) {
        uint64_t step_seed = rollout_seed + 0x9e3779b97f4a7c15ULL * (i + 1);
        auto t0 = std::chrono::steady_clock::now();
        double value = score_step(rollout.steps[i], stac ? &*stac : nullptr, step_seed);
        auto t1 = std::chrono::steady_clock::now();
        if (latency_ms)
            latency_ms->push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        series.values.emplace_back(rollout.steps[i].t, value);
    }
    return series;
}

std::vector<ScoreSeries> ScoreBackend::score_dataset(const Dataset& dataset,
                                                     std::vector<double>* latency_ms) const {
    std::vector<ScoreSeries> out;
    out.reserve(dataset.rollouts.size());
    for (const auto& r : dataset.rollouts) out.push_back(score_rollout(r, latency_ms));
    return out;
}

} // namespace failband::backend
