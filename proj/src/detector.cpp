#include "failband/detector.hpp"

#include <chrono>
#include <cmath>

namespace failband::detector {

double threshold_at(const CPBand& band, size_t step_index) {
    if (band.upper.empty()) throw DataError("detector: band has empty grid");
    if (step_index >= band.upper.size()) step_index = band.upper.size() - 1;
    return band.upper[step_index];
}

bool DetectorState::step(double score) {
    if (!std::isfinite(score)) throw NumericError("detector: non-finite score");
    bool crossed = score > threshold_at(*band_, cursor_);
    ++cursor_;
    if (crossed) raised_ = true;
    return crossed;
}

DetectionResult detect_rollout(const CPBand& band, const ScoreSeries& series) {
    if (series.values.empty()) throw DataError("detect_rollout: empty series");
    DetectionResult result;
    result.rollout_id = series.rollout_id;
    result.per_step.reserve(series.values.size());
    for (size_t i = 0; i < series.values.size(); ++i) {
        const auto& [t, score] = series.values[i];
        bool crossed = score > threshold_at(band, i);
        result.per_step.push_back(crossed);
        if (crossed && !result.flagged) {
            result.flagged = true;
            result.detection_time = t;
        }
    }
    return result;
}

DetectionResult detect_cumulative(double threshold, const ScoreSeries& series) {
    if (series.values.empty()) throw DataError("detect_cumulative: empty series");
    DetectionResult result;
    result.rollout_id = series.rollout_id;
    double acc = 0.0;
    for (const auto& [t, score] : series.values) {
        acc += score;
        bool crossed = acc > threshold;
        result.per_step.push_back(crossed);
        if (crossed && !result.flagged) {
            result.flagged = true;
            result.detection_time = t;
        }
    }
    return result;
}

std::vector<DetectionResult> run_stream(
    const CPBand& band, const std::vector<Rollout>& rollouts,
    const std::function<double(const Rollout&, const Step&)>& score_fn,
    std::vector<double>* latency_ms) {
    std::vector<DetectionResult> results;
    results.reserve(rollouts.size());
    for (const auto& rollout : rollouts) {
        DetectorState state(band);
        DetectionResult result;
        result.rollout_id = rollout.id;
        for (const auto& step : rollout.steps) {
            auto t0 = std::chrono::steady_clock::now();
            double score = score_fn(rollout, step);
            auto t1 = std::chrono::steady_clock::now();
            if (latency_ms)
                latency_ms->push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            bool crossed = state.step(score);
            result.per_step.push_back(crossed);
            if (crossed && !result.flagged) {
                result.flagged = true;
                result.detection_time = step.t;
            }
        }
        results.push_back(std::move(result));
    }
    return results;
}

} // namespace failband::detector
