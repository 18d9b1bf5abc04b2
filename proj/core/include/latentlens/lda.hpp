#pragma once

#include <span>
#include <vector>

#include "latentlens/latent_model.hpp"
#include "latentlens/pool.hpp"

namespace latentlens {

/// Points one per row with integer class labels in [0, num_classes).
struct LabeledPoints {
  Matrix points;
  std::vector<int> labels;
  int num_classes = 0;

  Eigen::Index size() const { return points.rows(); }
};

enum class Space { seed, sample };
std::string to_string(Space s);

LabeledPoints labeled_points(std::span<const SeedRecord> records, Space space,
                             int num_classes);

/// Class means, pooled within-class covariance (divided by n - C) and
/// between-class covariance (divided by n) with the shrinkage
/// lambda = 1e-4 trace(Sigma_w) / d added to the within part.
struct ScatterStats {
  Matrix class_means;  ///< C x d
  Vector class_counts;
  Vector grand_mean;
  Matrix within;       ///< shrunk, SPD
  Matrix between;
  double shrinkage = 0.0;
};

/// Throws FitError when a class has fewer than two records.
ScatterStats scatter_stats(const LabeledPoints& data);

/// Shared-covariance Gaussian classifier. predict() returns the posterior
/// softmax of the linear discriminants.
class LdaClassifierModel final : public LatentModel {
 public:
  LdaClassifierModel(Matrix class_means, Matrix shared_covariance, Vector priors);

  int input_dim() const override { return static_cast<int>(class_means_.cols()); }
  int num_classes() const override { return static_cast<int>(class_means_.rows()); }
  Matrix predict(const Matrix& inputs) const override;
  /// Linear discriminant scores, one row per input.
  Matrix discriminants(const Matrix& inputs) const;

  const Matrix& class_means() const noexcept { return class_means_; }
  const Matrix& shared_covariance() const noexcept { return covariance_; }
  const Vector& priors() const noexcept { return priors_; }

 private:
  Matrix class_means_;
  Matrix covariance_;
  Vector priors_;
  Matrix coef_;       // d x C: Sigma^{-1} mu_c
  Vector intercept_;  // -mu_c' Sigma^{-1} mu_c / 2 + log prior_c
};

LdaClassifierModel train_lda(const LabeledPoints& data);
LdaClassifierModel train_lda(std::span<const SeedRecord> records, int num_classes,
                             Space space = Space::seed);

}  // namespace latentlens
