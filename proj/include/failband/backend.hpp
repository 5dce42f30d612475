#pragma once

#include "failband/flow.hpp"
#include "failband/scores.hpp"
#include "failband/synth.hpp"
#include "failband/types.hpp"

#include <optional>
#include <string>

namespace failband::backend {

/// Per-method scoring bundle: loads whatever model a method needs and turns
/// rollouts into score series. One place owns the method -> input routing
/// (logpZO/logpO/CFM/PCA-kmeans read O_t, RND reads (A_t, O_t), SPARC reads
/// A_t, STAC resamples plans from the reconstructed state).
class ScoreBackend {
public:
    struct StacOptions {
        int batch_size = 64;
        double noise = 0.005;
        uint64_t seed = 0;
    };

    static ScoreBackend load(scores::ScoreMethodId method, const std::string& model_path);
    static ScoreBackend make_sparc(scores::SparcParams params = {});
    static ScoreBackend make_stac(const DatasetHeader& header, StacOptions options);

    scores::ScoreMethodId method() const { return method_; }

    /// Scores every step in order. When `latency_ms` is non-null, appends the
    /// per-step scoring wall time in milliseconds.
    ScoreSeries score_rollout(const Rollout& rollout, std::vector<double>* latency_ms = nullptr) const;

    std::vector<ScoreSeries> score_dataset(const Dataset& dataset,
                                           std::vector<double>* latency_ms = nullptr) const;

private:
    explicit ScoreBackend(scores::ScoreMethodId method) : method_(method) {}

    double score_step(const Step& step, scores::StacScorer* stac, uint64_t stac_step_seed) const;

    scores::ScoreMethodId method_;
    std::optional<flow::FlowModel> flow_;
    std::optional<flow::IntegratorConfig> integrator_;
    std::optional<scores::RndModel> rnd_;
    std::optional<scores::CfmModel> cfm_;
    std::optional<scores::PcaKmeansModel> pca_;
    scores::SparcParams sparc_params_;
    std::optional<synth::SynthConfig> stac_env_;
    DatasetHeader header_;
    scores::StacConfig stac_config_;
    uint64_t stac_seed_ = 0;
};

} // namespace failband::backend
