#include "failband/eval.hpp"

#include "failband/conformal.hpp"
#include "failband/detector.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace failband::eval {

MetricsReport metrics(const std::vector<DetectionResult>& detections,
                      const std::vector<Label>& labels, double alpha_used) {
    if (detections.size() != labels.size())
        throw DataError("metrics: detections/labels size mismatch");
    MetricsReport r;
    r.alpha_used = alpha_used;
    r.n_test = static_cast<long>(detections.size());
    double time_sum = 0.0;
    long time_count = 0;
    for (size_t i = 0; i < detections.size(); ++i) {
        bool flagged = detections[i].flagged;
        switch (labels[i]) {
        case Label::Failure:
            if (flagged) {
                ++r.tp;
                time_sum += static_cast<double>(*detections[i].detection_time);
                ++time_count;
            } else {
                ++r.fn;
                ++r.never_flagged_failures;
            }
            break;
        case Label::Success:
            flagged ? ++r.fp : ++r.tn;
            break;
        case Label::Unknown: throw DataError("metrics: rollout with unknown label");
        }
    }
    if (r.tp + r.fn > 0) r.tpr = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
    if (r.tn + r.fp > 0) r.tnr = static_cast<double>(r.tn) / static_cast<double>(r.tn + r.fp);
    long n_success = r.tn + r.fp;
    r.beta = r.n_test > 0 ? static_cast<double>(n_success) / static_cast<double>(r.n_test) : 0.0;
    if (r.tpr && r.tnr) {
        r.balanced_acc = 0.5 * (*r.tpr + *r.tnr);
        r.weighted_acc = r.beta * *r.tpr + (1.0 - r.beta) * *r.tnr;
    }
    if (time_count > 0) r.mean_detection_time = time_sum / static_cast<double>(time_count);
    return r;
}

Vec default_alpha_grid() {
    Vec grid(10);
    for (int i = 0; i < 10; ++i) grid[i] = 0.01 + 0.01 * static_cast<double>(i);
    return grid;
}

std::vector<SweepEntry> alpha_sweep(const std::vector<ScoreSeries>& calibration,
                                    const std::vector<ScoreSeries>& test,
                                    const std::vector<Label>& test_labels, const Vec& grid,
                                    ModulationVariant variant, double split_ratio, uint64_t seed) {
    if (grid.empty()) throw ConfigError("alpha_sweep: empty alpha grid");
    for (double a : grid)
        if (a <= 0.0 || a >= 1.0) throw ConfigError("alpha_sweep: alpha values must be in (0,1)");
    if (test.size() != test_labels.size())
        throw DataError("alpha_sweep: test series/labels size mismatch");

    std::vector<SweepEntry> out;
    out.reserve(grid.size());
    for (double alpha : grid) {
        SweepEntry entry;
        entry.alpha = alpha;
        entry.band = conformal::build_band(calibration, alpha, variant, split_ratio, seed);
        std::vector<DetectionResult> detections;
        detections.reserve(test.size());
        for (const auto& s : test) detections.push_back(detector::detect_rollout(entry.band, s));
        entry.report = metrics(detections, test_labels, alpha);
        out.push_back(std::move(entry));
    }
    return out;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string fmt(const std::optional<double>& v, const char* absent) {
    return v ? fmt(*v) : std::string(absent);
}

} // namespace

void emit_report(std::vector<ReportRow> rows, ReportFormat format, const std::string& path) {
    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        if (a.method != b.method) return a.method < b.method;
        return a.report.alpha_used < b.report.alpha_used;
    });
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report file '" + path + "'");
    const char* absent = format == ReportFormat::Csv ? "" : "-";
    const char* sep = format == ReportFormat::Csv ? "," : "\t";
    out << "method" << sep << "setting" << sep << "alpha" << sep << "tpr" << sep << "tnr" << sep
        << "balanced" << sep << "weighted" << sep << "mean_detection_time" << sep << "n_test"
        << '\n';
    for (const auto& row : rows) {
        const auto& m = row.report;
        out << row.method << sep << row.setting << sep << fmt(m.alpha_used) << sep
            << fmt(m.tpr, absent) << sep << fmt(m.tnr, absent) << sep
            << fmt(m.balanced_acc, absent) << sep << fmt(m.weighted_acc, absent) << sep
            << fmt(m.mean_detection_time, absent) << sep << m.n_test << '\n';
    }
    out.flush();
    if (!out) throw DataError("I/O failure writing '" + path + "'");
}

} // namespace failband::eval
