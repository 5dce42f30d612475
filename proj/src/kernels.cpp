#include "failband/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace failband::kernels {

double sq_dist(const Vec& a, const Vec& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double e = a[i] - b[i];
        acc += e * e;
    }
    return acc;
}

namespace {

// Per-row partials for one row of the three RBF sums.
struct RowSums {
    double xx = 0.0, yy = 0.0, xy = 0.0;
};

RowSums row_sums(const Mat& x, const Mat& y, double inv_two_sigma_sq, size_t i) {
    RowSums r;
    if (i < x.size()) {
        const Vec& xi = x[i];
        for (size_t j = 0; j < x.size(); ++j)
            if (j != i) r.xx += std::exp(-sq_dist(xi, x[j]) * inv_two_sigma_sq);
        for (size_t j = 0; j < y.size(); ++j)
            r.xy += std::exp(-sq_dist(xi, y[j]) * inv_two_sigma_sq);
    }
    if (i < y.size()) {
        const Vec& yi = y[i];
        for (size_t j = 0; j < y.size(); ++j)
            if (j != i) r.yy += std::exp(-sq_dist(yi, y[j]) * inv_two_sigma_sq);
    }
    return r;
}

RbfSums reduce_rows(const std::vector<RowSums>& rows) {
    RbfSums s;
    for (const auto& r : rows) { // fixed order, independent of thread count
        s.xx += r.xx;
        s.yy += r.yy;
        s.xy += r.xy;
    }
    return s;
}

} // namespace

RbfSums rbf_sums_serial(const Mat& x, const Mat& y, double sigma) {
    double inv = 1.0 / (2.0 * sigma * sigma);
    size_t n = std::max(x.size(), y.size());
    std::vector<RowSums> rows(n);
    for (size_t i = 0; i < n; ++i) rows[i] = row_sums(x, y, inv, i);
    return reduce_rows(rows);
}

RbfSums rbf_sums(const Mat& x, const Mat& y, double sigma) {
    double inv = 1.0 / (2.0 * sigma * sigma);
    size_t n = std::max(x.size(), y.size());
    std::vector<RowSums> rows(n);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(n); ++i)
        rows[i] = row_sums(x, y, inv, static_cast<size_t>(i));
    return reduce_rows(rows);
}

void assign_nearest_serial(const Mat& points, const Mat& centroids,
                           std::vector<int>& assignment, Vec& sq_dists) {
    assignment.assign(points.size(), 0);
    sq_dists.assign(points.size(), 0.0);
    for (size_t i = 0; i < points.size(); ++i) {
        double best = sq_dist(points[i], centroids[0]);
        int best_k = 0;
        for (size_t k = 1; k < centroids.size(); ++k) {
            double d = sq_dist(points[i], centroids[k]);
            if (d < best) {
                best = d;
                best_k = static_cast<int>(k);
            }
        }
        assignment[i] = best_k;
        sq_dists[i] = best;
    }
}

void assign_nearest(const Mat& points, const Mat& centroids, std::vector<int>& assignment,
                    Vec& sq_dists) {
    assignment.assign(points.size(), 0);
    sq_dists.assign(points.size(), 0.0);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(points.size()); ++i) {
        double best = sq_dist(points[i], centroids[0]);
        int best_k = 0;
        for (size_t k = 1; k < centroids.size(); ++k) {
            double d = sq_dist(points[i], centroids[k]);
            if (d < best) {
                best = d;
                best_k = static_cast<int>(k);
            }
        }
        assignment[i] = best_k;
        sq_dists[i] = best;
    }
}

double median_pairwise_distance(const Mat& points) {
    if (points.size() < 2) return 0.0;
    Vec dists;
    dists.reserve(points.size() * (points.size() - 1) / 2);
    for (size_t i = 0; i < points.size(); ++i)
        for (size_t j = i + 1; j < points.size(); ++j)
            dists.push_back(std::sqrt(sq_dist(points[i], points[j])));
    size_t mid = dists.size() / 2;
    std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
    return dists[mid];
}

} // namespace failband::kernels
