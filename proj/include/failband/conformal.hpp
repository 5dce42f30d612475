#pragma once

#include "failband/types.hpp"

#include <cstdint>
#include <string>

namespace failband::conformal {

struct AlignedSeries {
    Mat scores; // one row per rollout, aligned to t_grid
    std::vector<int> t_grid;
};

/// Common grid 0..T_max; shorter series hold their final score value.
AlignedSeries align_series(const std::vector<ScoreSeries>& series);

/// Seeded shuffle; the first ceil(ratio * N) rows go to the first part.
std::pair<Mat, Mat> split_calibration(const Mat& aligned, double ratio, uint64_t seed);

Vec mean_curve(const Mat& cal_a);

/// Constant modulation s_t = 1/T.
Vec modulation_v1(size_t grid_len);

/// Outlier-robust modulation: pointwise max absolute deviation from mu over
/// the H-set of non-extreme series; zero entries floored at 1e-12.
Vec modulation_v2(const Mat& cal_a, const Vec& mu, double alpha);

/// max_t (series_t - mu_t) / s_t  (upward deviations, one-sided band).
double max_deviation(const Vec& series, const Vec& mu, const Vec& s);

/// Conformal order statistic ceil((N2+1)(1-alpha)); clamps to max(S) and sets
/// *clamped when the order statistic exceeds N2.
double band_width(Vec deviations, double alpha, bool* clamped = nullptr);

CPBand build_band(const std::vector<ScoreSeries>& calibration, double alpha,
                  ModulationVariant variant, double split_ratio = 0.3, uint64_t seed = 0);

void save_band(const CPBand& band, const std::string& path);
CPBand load_band(const std::string& path);

inline constexpr double kModulationFloor = 1e-12;

} // namespace failband::conformal
