#include "failband/conformal.hpp"

#include "failband/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

using nlohmann::json;

namespace failband::conformal {

AlignedSeries align_series(const std::vector<ScoreSeries>& series) {
    if (series.empty()) throw DataError("align_series: no input series");
    AlignedSeries out;
    size_t max_len = 0;
    const ScoreSeries* longest = nullptr;
    for (const auto& s : series) {
        if (s.values.empty()) throw DataError("align_series: empty series '" + s.rollout_id + "'");
        if (s.values.size() > max_len) {
            max_len = s.values.size();
            longest = &s;
        }
    }
    out.t_grid.reserve(max_len);
    for (const auto& [t, v] : longest->values) out.t_grid.push_back(t);
    out.scores.reserve(series.size());
    for (const auto& s : series) {
        Vec row;
        row.reserve(max_len);
        for (const auto& [t, v] : s.values) {
            if (!std::isfinite(v))
                throw DataError("align_series: non-finite score in '" + s.rollout_id + "'");
            row.push_back(v);
        }
        while (row.size() < max_len) row.push_back(row.back()); // hold-last padding
        out.scores.push_back(std::move(row));
    }
    return out;
}

std::pair<Mat, Mat> split_calibration(const Mat& aligned, double ratio, uint64_t seed) {
    size_t n = aligned.size();
    if (n < 2) throw DataError("split_calibration: need at least 2 series");
    if (ratio <= 0.0 || ratio >= 1.0) throw ConfigError("split ratio must be in (0,1)");
    size_t n1 = static_cast<size_t>(std::ceil(ratio * static_cast<double>(n)));
    if (n1 == 0 || n1 == n) throw ConfigError("split ratio leaves an empty part");
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng(seed ^ 0xc2b2ae3d27d4eb4fULL);
    shuffle_in_place(order, rng);
    Mat a, b;
    for (size_t i = 0; i < n; ++i)
        (i < n1 ? a : b).push_back(aligned[order[i]]);
    return {std::move(a), std::move(b)};
}

Vec mean_curve(const Mat& cal_a) {
    if (cal_a.empty()) throw DataError("mean_curve: empty calibration part");
    size_t len = cal_a[0].size();
    Vec mu(len, 0.0);
    for (const auto& row : cal_a)
        for (size_t t = 0; t < len; ++t) mu[t] += row[t];
    for (double& v : mu) v /= static_cast<double>(cal_a.size());
    return mu;
}

Vec modulation_v1(size_t grid_len) {
    if (grid_len == 0) throw DataError("modulation_v1: empty grid");
    return Vec(grid_len, 1.0 / static_cast<double>(grid_len));
}

Vec modulation_v2(const Mat& cal_a, const Vec& mu, double alpha) {
    if (cal_a.empty()) throw DataError("modulation_v2: empty calibration part");
    size_t n1 = cal_a.size();
    size_t len = mu.size();

    std::vector<bool> in_h(n1, true);
    if ((static_cast<double>(n1) + 1.0) * (1.0 - alpha) <= static_cast<double>(n1)) {
        Vec max_dev(n1, 0.0);
        for (size_t k = 0; k < n1; ++k)
            for (size_t t = 0; t < len; ++t)
                max_dev[k] = std::max(max_dev[k], std::abs(cal_a[k][t] - mu[t]));
        Vec sorted = max_dev;
        std::sort(sorted.begin(), sorted.end());
        long k = static_cast<long>(std::ceil((n1 + 1) * (1.0 - alpha)));
        k = std::clamp<long>(k, 1, static_cast<long>(n1));
        double gamma = sorted[k - 1];
        for (size_t i = 0; i < n1; ++i) in_h[i] = max_dev[i] <= gamma;
    }

    Vec s(len, 0.0);
    bool any = false;
    for (size_t k = 0; k < n1; ++k) {
        if (!in_h[k]) continue;
        any = true;
        for (size_t t = 0; t < len; ++t)
            s[t] = std::max(s[t], std::abs(cal_a[k][t] - mu[t]));
    }
    if (!any) throw NumericError("modulation_v2: empty H-set"); // impossible by gamma construction
    for (double& v : s)
        if (v < kModulationFloor) v = kModulationFloor;
    return s;
}

double max_deviation(const Vec& series, const Vec& mu, const Vec& s) {
    if (series.size() != mu.size() || mu.size() != s.size())
        throw DataError("max_deviation: length mismatch");
    double best = -std::numeric_limits<double>::infinity();
    for (size_t t = 0; t < series.size(); ++t)
        best = std::max(best, (series[t] - mu[t]) / s[t]);
    return best;
}

double band_width(Vec deviations, double alpha, bool* clamped) {
    if (deviations.empty()) throw DataError("band_width: empty deviation set");
    std::sort(deviations.begin(), deviations.end());
    long n2 = static_cast<long>(deviations.size());
    long k = static_cast<long>(std::ceil((n2 + 1) * (1.0 - alpha)));
    if (clamped) *clamped = false;
    if (k > n2) {
        if (clamped) *clamped = true;
        return deviations.back();
    }
    k = std::max<long>(k, 1);
    return deviations[k - 1];
}

CPBand build_band(const std::vector<ScoreSeries>& calibration, double alpha,
                  ModulationVariant variant, double split_ratio, uint64_t seed) {
    if (alpha <= 0.0 || alpha >= 1.0) throw ConfigError("alpha must be in (0,1)");
    if (calibration.size() < 2) throw DataError("build_band: need at least 2 calibration series");

    auto aligned = align_series(calibration);
    auto [cal_a, cal_b] = split_calibration(aligned.scores, split_ratio, seed);

    CPBand band;
    band.alpha = alpha;
    band.variant = variant;
    band.n1 = static_cast<int>(cal_a.size());
    band.n2 = static_cast<int>(cal_b.size());
    band.t_grid = aligned.t_grid;
    band.mu = mean_curve(cal_a);
    band.s = variant == ModulationVariant::V1 ? modulation_v1(band.t_grid.size())
                                              : modulation_v2(cal_a, band.mu, alpha);

    Vec deviations;
    deviations.reserve(cal_b.size());
    for (const auto& row : cal_b) deviations.push_back(max_deviation(row, band.mu, band.s));
    bool clamped = false;
    band.h = band_width(deviations, alpha, &clamped);
    if (clamped)
        band.warnings.push_back("coverage clamp: (N2+1)(1-alpha) exceeds N2=" +
                                std::to_string(band.n2) + ", width set to max deviation");
    if (band.h < 0.0) band.h = 0.0; // keep the band above the mean curve

    band.upper.resize(band.mu.size());
    for (size_t t = 0; t < band.mu.size(); ++t) band.upper[t] = band.mu[t] + band.h * band.s[t];

    double lo = std::numeric_limits<double>::infinity();
    for (const auto& row : aligned.scores)
        for (double v : row) lo = std::min(lo, v);
    band.lower = lo;
    return band;
}

void save_band(const CPBand& band, const std::string& path) {
    json j = {{"alpha", band.alpha},
              {"variant", band.variant == ModulationVariant::V1 ? "v1" : "v2"},
              {"n1", band.n1},
              {"n2", band.n2},
              {"t_grid", band.t_grid},
              {"mu", band.mu},
              {"s", band.s},
              {"h", band.h},
              {"upper", band.upper},
              {"lower", band.lower},
              {"warnings", band.warnings}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write band file '" + path + "'");
    out << j.dump(2) << '\n';
    out.flush();
    if (!out) throw DataError("I/O failure writing '" + path + "'");
}

CPBand load_band(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open band file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("band file '" + path + "': " + e.what());
    }
    CPBand band;
    band.alpha = j.at("alpha").get<double>();
    band.variant = j.at("variant").get<std::string>() == "v1" ? ModulationVariant::V1
                                                              : ModulationVariant::V2;
    band.n1 = j.at("n1").get<int>();
    band.n2 = j.at("n2").get<int>();
    band.t_grid = j.at("t_grid").get<std::vector<int>>();
    band.mu = j.at("mu").get<Vec>();
    band.s = j.at("s").get<Vec>();
    band.h = j.at("h").get<double>();
    band.upper = j.at("upper").get<Vec>();
    band.lower = j.at("lower").get<double>();
    band.warnings = j.at("warnings").get<std::vector<std::string>>();
    if (band.mu.size() != band.t_grid.size() || band.s.size() != band.t_grid.size() ||
        band.upper.size() != band.t_grid.size())
        throw DataError("band file '" + path + "': inconsistent lengths");
    return band;
}

} // namespace failband::conformal
