#include "latentlens/structure.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "latentlens/error.hpp"
#include "latentlens/parallel.hpp"

namespace latentlens {

namespace {

void fix_signs(Matrix& directions) {
  for (Eigen::Index j = 0; j < directions.cols(); ++j) {
    Eigen::Index arg = 0;
    directions.col(j).cwiseAbs().maxCoeff(&arg);
    if (directions(arg, j) < 0.0) directions.col(j) *= -1.0;
  }
}

Matrix sample_covariance(const Matrix& points) {
  const Matrix centered = points.rowwise() - points.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(points.rows() - 1);
}

// Evenly strided subsample, used to bound the O(n^2) silhouette cost.
std::vector<Eigen::Index> strided(Eigen::Index n, std::size_t limit) {
  std::vector<Eigen::Index> rows;
  const auto cap = static_cast<Eigen::Index>(limit);
  const Eigen::Index stride = n > cap ? (n + cap - 1) / cap : 1;
  for (Eigen::Index i = 0; i < n; i += stride) rows.push_back(i);
  return rows;
}

double strided_silhouette(const Matrix& emb, const std::vector<int>& labels, std::size_t limit) {
  const auto rows = strided(emb.rows(), limit);
  Matrix sub(static_cast<Eigen::Index>(rows.size()), emb.cols());
  std::vector<int> sub_labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sub.row(static_cast<Eigen::Index>(i)) = emb.row(rows[i]);
    sub_labels.push_back(labels[static_cast<std::size_t>(rows[i])]);
  }
  return silhouette(sub, sub_labels);
}

}  // namespace

std::string to_string(BasisKind k) { return k == BasisKind::lda ? "lda" : "raw"; }

ProjectionBasis fit_lda_projection(const LabeledPoints& data, int k) {
  if (k < 0 || k > data.num_classes - 1) {
    throw DomainError(fmt::format("lda projection: k = {} exceeds C - 1 = {}", k,
                                  data.num_classes - 1));
  }
  if (data.size() < data.points.cols() + data.num_classes) {
    throw FitError(fmt::format("lda projection: need at least d + C = {} records, got {}",
                               data.points.cols() + data.num_classes, data.size()));
  }
  const ScatterStats s = scatter_stats(data);
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(s.between, s.within);
  if (solver.info() != Eigen::Success) throw FitError("lda projection: eigensolver failed");
  const auto d = data.points.cols();
  ProjectionBasis basis;
  basis.kind = BasisKind::lda;
  basis.directions.resize(d, k);
  basis.eigenvalues.resize(k);
  for (int j = 0; j < k; ++j) {
    basis.directions.col(j) = solver.eigenvectors().col(d - 1 - j);
    basis.eigenvalues[j] = solver.eigenvalues()[d - 1 - j];
  }
  fix_signs(basis.directions);
  return basis;
}

ProjectionBasis fit_pca_basis(const Matrix& points, int k) {
  if (points.rows() < 2) throw DomainError("pca: need at least 2 records");
  const auto d = points.cols();
  if (k < 0 || k > d) throw DomainError(fmt::format("pca: k = {} outside [0, {}]", k, d));
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sample_covariance(points));
  ProjectionBasis basis;
  basis.kind = BasisKind::pca;
  basis.directions.resize(d, k);
  basis.eigenvalues.resize(k);
  for (int j = 0; j < k; ++j) {
    basis.directions.col(j) = solver.eigenvectors().col(d - 1 - j);
    basis.eigenvalues[j] = solver.eigenvalues()[d - 1 - j];
  }
  fix_signs(basis.directions);
  return basis;
}

double lda_score(const LabeledPoints& data, double test_fraction, Rng& rng) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw DomainError("lda_score: test_fraction must be in (0, 1)");
  }
  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(data.num_classes));
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    by_class.at(static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])).push_back(i);
  }
  std::vector<Eigen::Index> train_rows, test_rows;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_test = static_cast<std::size_t>(
        std::lround(test_fraction * static_cast<double>(members.size())));
    for (std::size_t j = 0; j < members.size(); ++j) {
      (j < n_test ? test_rows : train_rows).push_back(members[j]);
    }
  }
  if (test_rows.empty()) throw EvaluationError("lda_score: empty test split");
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());

  auto take = [&](const std::vector<Eigen::Index>& rows) {
    LabeledPoints out;
    out.num_classes = data.num_classes;
    out.points.resize(static_cast<Eigen::Index>(rows.size()), data.points.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.points.row(static_cast<Eigen::Index>(i)) = data.points.row(rows[i]);
      out.labels.push_back(data.labels[static_cast<std::size_t>(rows[i])]);
    }
    return out;
  };
  const LabeledPoints train = take(train_rows);
  const LabeledPoints test = take(test_rows);
  const LdaClassifierModel model = train_lda(train);
  const Matrix scores = model.discriminants(test.points);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    if (argmax(scores.row(i).transpose()) == test.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

double pca_variance(const Matrix& points, int k) {
  if (points.rows() < 2) throw DomainError("pca_variance: need at least 2 records");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sample_covariance(points), Eigen::EigenvaluesOnly);
  const Vector ev = solver.eigenvalues().cwiseMax(0.0);
  const double total = ev.sum();
  if (!(total > 0.0)) throw DomainError("pca_variance: degenerate data (zero total variance)");
  const auto d = ev.size();
  k = std::clamp(k, 0, static_cast<int>(d));
  return ev.tail(k).sum() / total;
}

Embedding2d::Embedding2d(const Matrix& fit_points, ProjectionBasis basis)
    : basis_(std::move(basis)) {
  if (basis_.rank() > 2) {
    passthrough_ = false;
    const Matrix projected = project(fit_points);
    center_ = projected.colwise().mean().transpose();
    if (projected.rows() < 2) throw DomainError("embedding: need at least 2 records");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sample_covariance(projected));
    const auto k = projected.cols();
    second_stage_.resize(k, 2);
    second_stage_.col(0) = solver.eigenvectors().col(k - 1);
    second_stage_.col(1) = solver.eigenvectors().col(k - 2);
    fix_signs(second_stage_);
  }
}

Matrix Embedding2d::project(const Matrix& points) const {
  if (points.cols() != basis_.directions.rows()) {
    throw DomainError(fmt::format("embedding: points have {} columns, basis expects {}",
                                  points.cols(), basis_.directions.rows()));
  }
  return points * basis_.directions;
}

Matrix Embedding2d::apply(const Matrix& points) const {
  const Matrix projected = project(points);
  if (passthrough_) {
    Matrix out = Matrix::Zero(points.rows(), 2);
    out.leftCols(projected.cols()) = projected;
    return out;
  }
  return (projected.rowwise() - center_.transpose()) * second_stage_;
}

Matrix embed_2d(const Matrix& points, const ProjectionBasis& basis) {
  return Embedding2d(points, basis).apply(points);
}

OverlayResult overlay(const LabeledPoints& reference, const LabeledPoints& other) {
  if (reference.size() == 0 || other.size() == 0) {
    throw DomainError("overlay: both record sets must be nonempty");
  }
  if (reference.points.cols() != other.points.cols()) {
    throw DomainError("overlay: record sets differ in dimension");
  }
  OverlayResult r;
  if (reference.num_classes == 1) {
    r.reference_embedding = Matrix::Zero(reference.size(), 2);
    r.overlay_embedding = Matrix::Zero(other.size(), 2);
    r.reference_margins.assign(static_cast<std::size_t>(reference.size()), 1.0);
    r.overlay_margins.assign(static_cast<std::size_t>(other.size()), 1.0);
  } else {
    const Embedding2d embedding(reference.points,
                                fit_lda_projection(reference, reference.num_classes - 1));
    r.reference_embedding = embedding.apply(reference.points);
    r.overlay_embedding = embedding.apply(other.points);
    const LdaClassifierModel model = train_lda(reference);
    auto margins = [&](const Matrix& pts) {
      const Matrix post = model.predict(pts);
      std::vector<double> out;
      for (Eigen::Index i = 0; i < post.rows(); ++i) out.push_back(top_margin(post.row(i).transpose()));
      return out;
    };
    r.reference_margins = margins(reference.points);
    r.overlay_margins = margins(other.points);
  }
  r.reference_summary = summarize(r.reference_margins);
  r.overlay_summary = summarize(r.overlay_margins);
  return r;
}

StructureReport structure_sweep(const SeedPool& pool, std::span<const Space> spaces,
                                const StructureOptions& options) {
  const int L = num_levels(pool);
  std::vector<int> levels;
  if (options.include_unconditional || L == 0) levels.push_back(0);
  for (int l = 1; l <= L; ++l) levels.push_back(l);

  struct Job {
    int level;
    Space space;
  };
  std::vector<Job> jobs;
  for (int l : levels) {
    for (Space s : spaces) jobs.push_back({l, s});
  }

  struct JobResult {
    StructureRow row;
    std::vector<EmbeddingPoint> embeddings;
    std::vector<ProjectedPoint> projections;
  };
  std::vector<JobResult> results(jobs.size());
  const int k = std::max(pool.num_classes - 1, 0);

  parallel_for(
      jobs.size(),
      [&](std::size_t j) {
        const Job job = jobs[j];
        try {
          const auto records = select_records(pool, job.level);
          const LabeledPoints data = labeled_points(records, job.space, pool.num_classes);
          JobResult& out = results[j];
          out.row.level = job.level;
          out.row.space = job.space;
          out.row.count = records.size();
          Rng rng = substream(options.seed, Stream::structure, static_cast<std::uint64_t>(job.level),
                              static_cast<std::uint64_t>(job.space));
          out.row.lda_score = lda_score(data, options.test_fraction, rng);
          out.row.pca_variance = pca_variance(data.points, k);

          const Embedding2d lda_embed(data.points, fit_lda_projection(data, k));
          const Matrix lda_xy = lda_embed.apply(data.points);
          const Matrix lda_coords = lda_embed.project(data.points);
          const Matrix raw_xy = embed_2d(data.points, fit_pca_basis(data.points, 2));
          out.row.silhouette_lda = strided_silhouette(lda_xy, data.labels, options.silhouette_limit);
          out.row.silhouette_raw = strided_silhouette(raw_xy, data.labels, options.silhouette_limit);

          for (std::size_t i = 0; i < records.size(); ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            const auto& rec = records[i];
            out.embeddings.push_back({rec.index, rec.label, job.level, job.space, BasisKind::lda,
                                      lda_xy(row, 0), lda_xy(row, 1)});
            out.embeddings.push_back({rec.index, rec.label, job.level, job.space, BasisKind::pca,
                                      raw_xy(row, 0), raw_xy(row, 1)});
            out.projections.push_back(
                {rec.index, rec.label, job.level, job.space, lda_coords.row(row).transpose()});
          }
        } catch (const Error& e) {
          throw Error(fmt::format("structure sweep (level {}, space {}): {}", job.level,
                                  to_string(job.space), e.what()));
        }
      },
      options.workers);

  StructureReport report;
  for (auto& r : results) {
    report.rows.push_back(r.row);
    std::move(r.embeddings.begin(), r.embeddings.end(), std::back_inserter(report.embeddings));
    std::move(r.projections.begin(), r.projections.end(), std::back_inserter(report.projections));
  }
  return report;
}

}  // namespace latentlens
