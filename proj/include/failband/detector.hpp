#pragma once

#include "failband/types.hpp"

#include <functional>

namespace failband::detector {

/// Threshold at step index i, clamped to the band's last value when the
/// rollout outruns the calibration horizon.
double threshold_at(const CPBand& band, size_t step_index);

/// Sequential decision engine; latches once raised. One instance per rollout.
class DetectorState {
public:
    explicit DetectorState(const CPBand& band) : band_(&band) {}

    /// Feeds the next score; returns true when this step crosses the band.
    /// Strict inequality: a score exactly at the threshold does not flag.
    bool step(double score);

    bool raised() const { return raised_; }
    size_t cursor() const { return cursor_; }

private:
    const CPBand* band_;
    size_t cursor_ = 0;
    bool raised_ = false;
};

/// Batch evaluation of a precomputed series against the band. First crossing
/// wins; bit-exact equal to feeding DetectorState step by step.
DetectionResult detect_rollout(const CPBand& band, const ScoreSeries& series);

/// STAC's single time-invariant rule: running cumulative sum vs threshold.
DetectionResult detect_cumulative(double threshold, const ScoreSeries& series);

/// Streaming driver: scores each rollout step by step through `score_fn`
/// (called in step order per rollout) and applies the band. Per-step scoring
/// latency in milliseconds is appended to `latency_ms` when non-null.
std::vector<DetectionResult> run_stream(
    const CPBand& band, const std::vector<Rollout>& rollouts,
    const std::function<double(const Rollout&, const Step&)>& score_fn,
    std::vector<double>* latency_ms = nullptr);

} // namespace failband::detector
