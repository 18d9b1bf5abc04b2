#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "latentlens/rng.hpp"

namespace latentlens {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Variance-preserving noise schedule beta(t) on [0, horizon].
///
/// Only constant and linear forms are supported so that
/// alpha_bar(t) = exp(-int_0^t beta) stays in closed form.
class NoiseSchedule {
 public:
  enum class Form { constant, linear };

  static NoiseSchedule constant(double beta, double horizon = 1.0);
  static NoiseSchedule linear(double beta0, double beta1, double horizon = 1.0);
  /// The customary VP schedule: linear 0.1 -> 20 on [0, 1].
  static NoiseSchedule standard() { return linear(0.1, 20.0, 1.0); }

  Form form() const noexcept { return form_; }
  double beta0() const noexcept { return beta0_; }
  double beta1() const noexcept { return beta1_; }
  double horizon() const noexcept { return horizon_; }

  /// beta(t); throws DomainError outside [0, horizon].
  double beta(double t) const;
  /// int_0^t beta(s) ds.
  double integrated_beta(double t) const;
  double alpha_bar(double t) const;

  /// Human-readable description, e.g. "linear(0.1,20;T=1)".
  std::string describe() const;

 private:
  NoiseSchedule(Form form, double beta0, double beta1, double horizon);
  void check_time(double t) const;

  Form form_;
  double beta0_;
  double beta1_;
  double horizon_;
};

double alpha_bar(const NoiseSchedule& schedule, double t);

struct Component {
  double weight = 1.0;
  Vector mean;
  Matrix covariance;
  int label = 0;  ///< 0-based class index
};

/// Class posterior P(class | x); entries sum to one.
using ClassPosterior = Vector;

/// Log-density, score and Laplacian of the log-density at one point.
struct DensityDerivatives {
  double log_density = 0.0;
  Vector score;
  double laplacian = 0.0;
};

/// A Gaussian mixture with a component -> class map. Immutable after
/// construction; Cholesky factors and precisions are cached so every
/// evaluation runs in log space.
class MixtureModel {
 public:
  /// Validates weights (nonnegative, sum to 1 within 1e-12), SPD
  /// covariances and class coverage. Throws DomainError / NumericError.
  MixtureModel(std::vector<Component> components, int num_classes);

  /// Same as the constructor but rescales weights to sum to one first.
  static MixtureModel normalized(std::vector<Component> components,
                                 int num_classes);

  int dim() const noexcept { return dim_; }
  int num_classes() const noexcept { return num_classes_; }
  std::size_t size() const noexcept { return components_.size(); }
  const std::vector<Component>& components() const noexcept { return components_; }
  /// Total weight of the components mapped to each class.
  Vector class_masses() const;

  double log_density(const Vector& x) const;
  Vector score(const Vector& x) const;
  double score_divergence(const Vector& x) const;
  DensityDerivatives derivatives(const Vector& x, bool with_laplacian = true) const;
  ClassPosterior class_posterior(const Vector& x) const;

  /// Draws n i.i.d. points; labels[i] is the class of the drawn component.
  struct LabeledSample {
    Matrix points;  ///< n x d, one point per row
    std::vector<int> labels;
  };
  LabeledSample sample(Rng& rng, std::size_t n) const;
  /// Draws only from the components of one class (renormalized weights).
  Matrix sample_class(Rng& rng, int label, std::size_t n) const;

 private:
  struct Cache {
    double log_weight;    // -inf for zero weight
    double log_normalizer;  // -0.5 (d log 2pi + log det)
    Matrix precision;
    Eigen::LLT<Matrix> cholesky;
    double precision_trace;
    double isotropic_precision;  // 1/sigma^2 when Sigma = sigma^2 I, else 0
  };

  // Fills log_terms[k] = log w_k + log N(x; mu_k, Sigma_k) and optionally
  // G_k = Sigma_k^{-1}(mu_k - x) as column k of grads.
  void component_terms(const Vector& x, Vector& log_terms, Matrix* grads) const;
  void check_dim(const Vector& x) const;

  std::vector<Component> components_;
  std::vector<Cache> cache_;
  int dim_ = 0;
  int num_classes_ = 0;
};

/// Time-t marginal of the VP process started from m: each component
/// (w, mu, Sigma) maps to (w, sqrt(ab) mu, ab Sigma + (1 - ab) I).
MixtureModel marginal_mixture(const MixtureModel& m, const NoiseSchedule& s,
                              double t);

MixtureModel::LabeledSample sample_data(const MixtureModel& m, Rng& rng,
                                        std::size_t n);

/// Mixture with one unit-covariance, equal-weight component per class and
/// means drawn i.i.d. uniformly on the sphere of the given radius.
MixtureModel make_sphere_mixture(int num_classes, int dim, double radius,
                                 std::uint64_t seed);

/// Index of the largest entry; lowest index wins ties.
int argmax(const Vector& v);
/// Top entry minus runner-up; 1.0 when v has a single entry.
double top_margin(const Vector& v);

}  // namespace latentlens
