#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace failband {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>; // dense row-major: Mat[i] is row i

/// Thrown on malformed configs / flags. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
/// Thrown on malformed or inconsistent data files. CLI maps this to exit code 3.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
/// Thrown when a numeric routine diverges (non-finite state). CLI exit code 4.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Label { Success, Failure, Unknown };

enum class FailureMode { Slip, Jitter, SensorShift, OodInit, Stall };

std::string to_string(Label l);
std::string to_string(FailureMode m);
Label label_from_string(const std::string& s);
FailureMode failure_mode_from_string(const std::string& s);

/// One execution step: the flattened observation window O_t and the planned
/// action chunk A_t (one row per planned action, exactly `horizon` rows).
struct Step {
    int t = 0;
    Vec obs;
    Mat action_chunk;
};

struct Rollout {
    std::string id;
    std::vector<Step> steps;
    Label label = Label::Unknown;
    std::optional<FailureMode> failure_mode;
    std::optional<int> injection_time;
};

/// Dataset-wide shape parameters. All rollouts in a file share these.
struct DatasetHeader {
    int d_obs = 0;         // dim of O_t
    int d_action = 0;      // dim of one action row
    int horizon = 16;      // H: rows per action chunk
    int exec_horizon = 8;  // H': executed steps before replanning
    int obs_window = 2;    // T_O: raw observations concatenated into O_t
    int version = 1;
    // The frozen random feature embedding used to produce the observations,
    // when the dataset came from the synthetic environment.
    std::optional<Mat> embedding;
};

struct Dataset {
    DatasetHeader header;
    std::vector<Rollout> rollouts;
};

struct ScoreSeries {
    std::string rollout_id;
    std::string method;
    std::vector<std::pair<int, double>> values; // (t, score)
};

enum class ModulationVariant { V1, V2 };

/// One-sided time-varying conformal band: upper_t = mu_t + h * s_t.
struct CPBand {
    double alpha = 0.05;
    Vec mu;
    Vec s;
    double h = 0.0;
    Vec upper;
    double lower = 0.0; // min calibration score; stored for completeness only
    ModulationVariant variant = ModulationVariant::V2;
    int n1 = 0;
    int n2 = 0;
    std::vector<int> t_grid;
    std::vector<std::string> warnings;
};

struct DetectionResult {
    std::string rollout_id;
    bool flagged = false;
    std::optional<int> detection_time;
    std::vector<bool> per_step;
};

struct MetricsReport {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    // ratios are absent (not NaN) when their denominator is zero
    std::optional<double> tpr, tnr;
    std::optional<double> balanced_acc, weighted_acc;
    double beta = 0.0; // success fraction
    std::optional<double> mean_detection_time;
    long never_flagged_failures = 0; // failures excluded from the time average
    double alpha_used = 0.0;
    long n_test = 0;
};

} // namespace failband
