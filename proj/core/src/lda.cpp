#include "latentlens/lda.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include "latentlens/error.hpp"

namespace latentlens {

std::string to_string(Space s) { return s == Space::seed ? "seed" : "sample"; }

LabeledPoints labeled_points(std::span<const SeedRecord> records, Space space,
                             int num_classes) {
  LabeledPoints out;
  out.num_classes = num_classes;
  if (records.empty()) return out;
  const auto dim = records.front().seed.size();
  out.points.resize(static_cast<Eigen::Index>(records.size()), dim);
  out.labels.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    out.points.row(static_cast<Eigen::Index>(i)) =
        (space == Space::seed ? r.seed : r.sample).transpose();
    out.labels.push_back(r.label);
  }
  return out;
}

ScatterStats scatter_stats(const LabeledPoints& data) {
  const auto n = data.points.rows();
  const auto d = data.points.cols();
  const int C = data.num_classes;
  if (C < 1) throw FitError("lda: num_classes must be >= 1");
  if (static_cast<Eigen::Index>(data.labels.size()) != n) {
    throw FitError("lda: one label per point required");
  }
  ScatterStats s;
  s.class_means = Matrix::Zero(C, d);
  s.class_counts = Vector::Zero(C);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = data.labels[static_cast<std::size_t>(i)];
    if (c < 0 || c >= C) throw FitError(fmt::format("lda: label {} outside [0, {})", c, C));
    s.class_means.row(c) += data.points.row(i);
    s.class_counts[c] += 1.0;
  }
  for (int c = 0; c < C; ++c) {
    if (s.class_counts[c] < 2.0) {
      throw FitError(fmt::format("lda: class {} has {} records, need at least 2", c,
                                 static_cast<long>(s.class_counts[c])));
    }
    s.class_means.row(c) /= s.class_counts[c];
  }
  s.grand_mean = data.points.colwise().mean().transpose();

  Matrix centered = data.points;
  for (Eigen::Index i = 0; i < n; ++i) {
    centered.row(i) -= s.class_means.row(data.labels[static_cast<std::size_t>(i)]);
  }
  const double dof = n > C ? static_cast<double>(n - C) : static_cast<double>(n);
  s.within = (centered.transpose() * centered) / dof;

  s.between = Matrix::Zero(d, d);
  for (int c = 0; c < C; ++c) {
    const Vector diff = s.class_means.row(c).transpose() - s.grand_mean;
    s.between += s.class_counts[c] * diff * diff.transpose();
  }
  s.between /= static_cast<double>(n);

  // Floor keeps the shrunk matrix SPD when within-class scatter vanishes.
  s.shrinkage = std::max(1e-4 * s.within.trace() / static_cast<double>(d), 1e-12);
  s.within += s.shrinkage * Matrix::Identity(d, d);
  return s;
}

LdaClassifierModel::LdaClassifierModel(Matrix class_means, Matrix shared_covariance,
                                       Vector priors)
    : class_means_(std::move(class_means)),
      covariance_(std::move(shared_covariance)),
      priors_(std::move(priors)) {
  const auto C = class_means_.rows();
  if (priors_.size() != C || covariance_.rows() != class_means_.cols() ||
      covariance_.cols() != class_means_.cols()) {
    throw FitError("lda: inconsistent model dimensions");
  }
  if (std::abs(priors_.sum() - 1.0) > 1e-9 || (priors_.array() <= 0.0).any()) {
    throw FitError("lda: priors must be positive and sum to 1");
  }
  Eigen::LLT<Matrix> llt(covariance_);
  if (llt.info() != Eigen::Success) throw FitError("lda: shared covariance is not SPD");
  coef_ = llt.solve(class_means_.transpose());
  intercept_.resize(C);
  for (Eigen::Index c = 0; c < C; ++c) {
    intercept_[c] = -0.5 * class_means_.row(c).dot(coef_.col(c)) + std::log(priors_[c]);
  }
}

Matrix LdaClassifierModel::discriminants(const Matrix& inputs) const {
  if (inputs.cols() != input_dim()) {
    throw DomainError(fmt::format("lda: input has {} columns, expected {}", inputs.cols(),
                                  input_dim()));
  }
  Matrix scores = inputs * coef_;
  scores.rowwise() += intercept_.transpose();
  return scores;
}

Matrix LdaClassifierModel::predict(const Matrix& inputs) const {
  Matrix out = discriminants(inputs);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double top = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - top).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

LdaClassifierModel train_lda(const LabeledPoints& data) {
  if (data.num_classes < 2) throw FitError("lda: need at least 2 classes");
  if (data.size() < data.points.cols() + data.num_classes) {
    throw FitError(fmt::format("lda: need at least d + C = {} records, got {}",
                               data.points.cols() + data.num_classes, data.size()));
  }
  ScatterStats s = scatter_stats(data);
  Vector priors = s.class_counts / static_cast<double>(data.size());
  return LdaClassifierModel(std::move(s.class_means), std::move(s.within), std::move(priors));
}

LdaClassifierModel train_lda(std::span<const SeedRecord> records, int num_classes,
                             Space space) {
  return train_lda(labeled_points(records, space, num_classes));
}

}  // namespace latentlens
