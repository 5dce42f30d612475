#pragma once

#include "failband/types.hpp"

namespace failband::kernels {

// Data-parallel inner loops for the scoring hot path. Each kernel has an
// OpenMP variant and a serial reference; both accumulate partial sums in row
// order, so results are bit-identical to each other and across thread counts.

double sq_dist(const Vec& a, const Vec& b);

struct RbfSums {
    double xx = 0.0; // sum over i != j of k(x_i, x_j)
    double yy = 0.0;
    double xy = 0.0; // sum over all (i, j) of k(x_i, y_j)
};

RbfSums rbf_sums(const Mat& x, const Mat& y, double sigma);
RbfSums rbf_sums_serial(const Mat& x, const Mat& y, double sigma);

/// Nearest-centroid assignment; fills `assignment` and per-point squared
/// distances to the winning centroid.
void assign_nearest(const Mat& points, const Mat& centroids, std::vector<int>& assignment,
                    Vec& sq_dists);
void assign_nearest_serial(const Mat& points, const Mat& centroids,
                           std::vector<int>& assignment, Vec& sq_dists);

/// Median of all pairwise Euclidean distances (0 for < 2 points).
double median_pairwise_distance(const Mat& points);

} // namespace failband::kernels
