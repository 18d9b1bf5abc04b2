#pragma once

#include <span>
#include <vector>

#include "latentlens/gmm.hpp"

namespace latentlens {

/// Spearman rank correlation; ties receive average ranks. Returns 0 when
/// either side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

/// Linear-interpolation quantile (q in [0, 1]) of unsorted values.
double quantile(std::vector<double> values, double q);

struct Summary {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double mean = 0.0;
  std::size_t count = 0;
};
Summary summarize(std::span<const double> values);

/// Mean silhouette coefficient with Euclidean distances; points in
/// singleton clusters contribute 0. Returns 0 with fewer than two clusters.
double silhouette(const Matrix& points, std::span<const int> labels);

/// Mean pairwise Euclidean distance between rows.
double mean_pairwise_distance(const Matrix& points);

}  // namespace latentlens
