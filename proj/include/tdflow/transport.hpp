#pragma once

#include "tdflow/common.hpp"

#include <vector>

namespace tdflow {

/// Minimum-cost perfect matching on an n x m cost matrix with n <= m.
/// Returns the column assigned to each row.
std::vector<int> hungarian(const Mat& cost);

struct TransportPlan {
  double cost = 0.0;
  Mat flow;  // n x m, rows sum to `supply`, columns to `demand`
};

/// Exact transportation LP (successive shortest paths). Supplies and demands
/// must be non-negative with equal totals (relative tolerance 1e-9).
TransportPlan transport_lp(const Mat& cost, const Vec& supply, const Vec& demand);

/// Pairwise Euclidean distances between rows of a and b.
Mat euclidean_cost(const Mat& a, const Mat& b);

/// Exact 1-Wasserstein distance between two weighted point sets (rows are points).
/// Empty weight vectors mean uniform weights; equal-size uniform sets use an
/// assignment solver, everything else the transportation LP.
double emd_exact(const Mat& a, const Mat& b, const Vec& wa = Vec(), const Vec& wb = Vec());

/// W1 between two distributions over the same embedded support (rows of `embedding`).
double wasserstein_tabular(const Vec& p, const Vec& q, const Mat& embedding);

/// Averages emd_exact over `repeats` random subsamples of `subsample` points
/// per side; exact when both sets already have at most `subsample` points.
double emd_subsampled(const Mat& a, const Mat& b, int subsample, int repeats, Rng& rng);

}  // namespace tdflow
