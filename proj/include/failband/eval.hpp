#pragma once

#include "failband/types.hpp"

#include <string>

namespace failband::eval {

/// Confusion counts and derived metrics. "Positive" = failure that got
/// flagged. Detection times average over flagged failures only; the count of
/// never-flagged failures is reported alongside.
MetricsReport metrics(const std::vector<DetectionResult>& detections,
                      const std::vector<Label>& labels, double alpha_used);

/// 10 equally spaced values in [0.01, 0.1].
Vec default_alpha_grid();

struct SweepEntry {
    double alpha = 0.0;
    CPBand band;
    MetricsReport report;
};

/// Recalibrates the band per alpha on the same calibration series (same
/// split) and re-evaluates the test series. Grid values must lie in (0,1).
std::vector<SweepEntry> alpha_sweep(const std::vector<ScoreSeries>& calibration,
                                    const std::vector<ScoreSeries>& test,
                                    const std::vector<Label>& test_labels, const Vec& grid,
                                    ModulationVariant variant, double split_ratio, uint64_t seed);

enum class ReportFormat { Csv, Text };

struct ReportRow {
    std::string method;
    std::string setting;
    MetricsReport report;
};

/// Writes rows sorted by (method, alpha). Columns: method, setting, alpha,
/// tpr, tnr, balanced, weighted, mean_detection_time, n_test. Absent values
/// are empty cells (csv) or "-" (text).
void emit_report(std::vector<ReportRow> rows, ReportFormat format, const std::string& path);

} // namespace failband::eval
