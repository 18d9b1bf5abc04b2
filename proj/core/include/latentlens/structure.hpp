#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "latentlens/lda.hpp"
#include "latentlens/pool.hpp"
#include "latentlens/rng.hpp"
#include "latentlens/stats.hpp"

namespace latentlens {

enum class BasisKind { lda, pca };

/// Columns are discriminant or principal directions, strongest first.
/// Each column's largest-magnitude entry is positive.
struct ProjectionBasis {
  Matrix directions;  ///< d x k
  Vector eigenvalues;
  BasisKind kind = BasisKind::lda;

  int rank() const { return static_cast<int>(directions.cols()); }
};

/// Top-k generalized eigenvectors of (S_b, S_w + lambda I).
ProjectionBasis fit_lda_projection(const LabeledPoints& data, int k);
/// Top-k eigenvectors of the sample covariance.
ProjectionBasis fit_pca_basis(const Matrix& points, int k);

/// Held-out accuracy of an LDA classifier on a per-label stratified split.
double lda_score(const LabeledPoints& data, double test_fraction, Rng& rng);

/// Fraction of total sample variance captured by the first k principal
/// components. Throws DomainError on zero total variance.
double pca_variance(const Matrix& points, int k);

/// Linear 2D embedding: project onto the basis, then onto the top two
/// principal directions of the projected coordinates. With rank <= 2 the
/// projection is used directly (zero-padded).
class Embedding2d {
 public:
  Embedding2d(const Matrix& fit_points, ProjectionBasis basis);
  Matrix apply(const Matrix& points) const;  ///< n x 2
  Matrix project(const Matrix& points) const;  ///< n x k
  const ProjectionBasis& basis() const noexcept { return basis_; }

 private:
  ProjectionBasis basis_;
  bool passthrough_ = true;
  Vector center_;
  Matrix second_stage_;  // k x 2
};

Matrix embed_2d(const Matrix& points, const ProjectionBasis& basis);

struct OverlayResult {
  Matrix reference_embedding;  ///< level-1 points
  Matrix overlay_embedding;    ///< level-L points through the level-1 fit
  std::vector<double> reference_margins;
  std::vector<double> overlay_margins;
  Summary reference_summary;
  Summary overlay_summary;
};

/// Fits the LDA basis and classifier on `reference` only and projects both
/// sets. Margins are top-two posterior margins of that classifier; with a
/// single class every margin is 1.
OverlayResult overlay(const LabeledPoints& reference, const LabeledPoints& other);

struct StructureRow {
  int level = 0;  ///< 0 = unstratified pool
  Space space = Space::seed;
  std::size_t count = 0;
  double lda_score = 0.0;
  double pca_variance = 0.0;
  double silhouette_lda = 0.0;
  double silhouette_raw = 0.0;
};

struct EmbeddingPoint {
  std::int64_t index = 0;
  int label = 0;
  int level = 0;
  Space space = Space::seed;
  BasisKind method = BasisKind::lda;
  double x = 0.0;
  double y = 0.0;
};

/// LDA-projected coordinates (k = C - 1) for external embedding tools.
struct ProjectedPoint {
  std::int64_t index = 0;
  int label = 0;
  int level = 0;
  Space space = Space::seed;
  Vector coords;
};

struct StructureReport {
  std::vector<StructureRow> rows;
  std::vector<EmbeddingPoint> embeddings;
  std::vector<ProjectedPoint> projections;
};

struct StructureOptions {
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  bool include_unconditional = false;
  /// Silhouettes on larger sets use an evenly strided subsample.
  std::size_t silhouette_limit = 4000;
  std::size_t workers = 0;
};

StructureReport structure_sweep(const SeedPool& pool, std::span<const Space> spaces,
                                const StructureOptions& options = {});

std::string to_string(BasisKind k);

}  // namespace latentlens
