#include "latentlens/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "latentlens/error.hpp"

namespace latentlens {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const Vector& v) {
  const double top = v.maxCoeff();
  if (top == kNegInf) return kNegInf;
  return top + std::log((v.array() - top).exp().sum());
}

}  // namespace

// ---------------------------------------------------------------------------
// NoiseSchedule

NoiseSchedule::NoiseSchedule(Form form, double beta0, double beta1,
                             double horizon)
    : form_(form), beta0_(beta0), beta1_(beta1), horizon_(horizon) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw DomainError(fmt::format("noise schedule: horizon must be > 0, got {}", horizon));
  }
  if (!(beta0 >= 0.0) || !(beta1 >= 0.0) || !std::isfinite(beta0) ||
      !std::isfinite(beta1)) {
    throw DomainError(fmt::format("noise schedule: betas must be finite and >= 0, got {}, {}",
                                  beta0, beta1));
  }
  // beta is affine in t, so positivity at both ends covers [0, T].
  if (!(beta0 > 0.0) || !(beta1 > 0.0)) {
    throw DomainError("noise schedule: beta(t) must be > 0 on [0, T]");
  }
}

NoiseSchedule NoiseSchedule::constant(double beta, double horizon) {
  return NoiseSchedule(Form::constant, beta, beta, horizon);
}

NoiseSchedule NoiseSchedule::linear(double beta0, double beta1, double horizon) {
  return NoiseSchedule(Form::linear, beta0, beta1, horizon);
}

void NoiseSchedule::check_time(double t) const {
  if (!(t >= 0.0 && t <= horizon_)) {
    throw DomainError(fmt::format("time {} outside [0, {}]", t, horizon_));
  }
}

double NoiseSchedule::beta(double t) const {
  check_time(t);
  if (form_ == Form::constant) return beta0_;
  return beta0_ + (beta1_ - beta0_) * t / horizon_;
}

double NoiseSchedule::integrated_beta(double t) const {
  check_time(t);
  if (form_ == Form::constant) return beta0_ * t;
  return beta0_ * t + 0.5 * (beta1_ - beta0_) * t * t / horizon_;
}

double NoiseSchedule::alpha_bar(double t) const {
  return std::exp(-integrated_beta(t));
}

std::string NoiseSchedule::describe() const {
  if (form_ == Form::constant) return fmt::format("constant({};T={})", beta0_, horizon_);
  return fmt::format("linear({},{};T={})", beta0_, beta1_, horizon_);
}

double alpha_bar(const NoiseSchedule& schedule, double t) {
  return schedule.alpha_bar(t);
}

// ---------------------------------------------------------------------------
// MixtureModel

MixtureModel::MixtureModel(std::vector<Component> components, int num_classes)
    : components_(std::move(components)), num_classes_(num_classes) {
  if (components_.empty()) throw DomainError("mixture: no components");
  if (num_classes_ < 1) throw DomainError("mixture: num_classes must be >= 1");
  dim_ = static_cast<int>(components_.front().mean.size());
  if (dim_ < 1) throw DomainError("mixture: dimension must be >= 1");

  double total = 0.0;
  std::vector<bool> hit(static_cast<std::size_t>(num_classes_), false);
  cache_.reserve(components_.size());
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const Component& c = components_[k];
    if (c.mean.size() != dim_ || c.covariance.rows() != dim_ ||
        c.covariance.cols() != dim_) {
      throw DomainError(fmt::format("mixture: component {} has inconsistent dimension", k));
    }
    if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) {
      throw DomainError(fmt::format("mixture: component {} has invalid weight {}", k, c.weight));
    }
    if (c.label < 0 || c.label >= num_classes_) {
      throw DomainError(fmt::format("mixture: component {} has label {} outside [0, {})", k,
                                    c.label, num_classes_));
    }
    if (!c.covariance.isApprox(c.covariance.transpose(), 1e-12)) {
      throw NumericError(fmt::format("mixture: covariance of component {} is not symmetric", k),
                         static_cast<std::ptrdiff_t>(k));
    }
    Cache entry;
    entry.cholesky.compute(c.covariance);
    if (entry.cholesky.info() != Eigen::Success) {
      throw NumericError(
          fmt::format("mixture: covariance of component {} is not positive definite", k),
          static_cast<std::ptrdiff_t>(k));
    }
    const Matrix& L = entry.cholesky.matrixLLT();
    double log_det = 0.0;
    for (int i = 0; i < dim_; ++i) {
      const double diag = L(i, i);
      if (!(diag > 0.0) || !std::isfinite(diag)) {
        throw NumericError(fmt::format("mixture: covariance of component {} is singular", k),
                           static_cast<std::ptrdiff_t>(k));
      }
      log_det += 2.0 * std::log(diag);
    }
    entry.log_weight = c.weight > 0.0 ? std::log(c.weight) : kNegInf;
    entry.log_normalizer = -0.5 * (dim_ * log_2pi + log_det);
    entry.precision = entry.cholesky.solve(Matrix::Identity(dim_, dim_));
    entry.precision = 0.5 * (entry.precision + entry.precision.transpose()).eval();
    entry.precision_trace = entry.precision.trace();
    const double diag0 = c.covariance(0, 0);
    const bool isotropic =
        (c.covariance - diag0 * Matrix::Identity(dim_, dim_)).cwiseAbs().maxCoeff() == 0.0;
    entry.isotropic_precision = isotropic ? 1.0 / diag0 : 0.0;
    if (isotropic) entry.precision_trace = dim_ / diag0;
    cache_.push_back(std::move(entry));
    total += c.weight;
    hit[static_cast<std::size_t>(c.label)] = true;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw DomainError(fmt::format("mixture: weights sum to {:.17g}, expected 1", total));
  }
  for (int c = 0; c < num_classes_; ++c) {
    if (!hit[static_cast<std::size_t>(c)]) {
      throw DomainError(fmt::format("mixture: class {} has no component", c));
    }
  }
}

MixtureModel MixtureModel::normalized(std::vector<Component> components,
                                      int num_classes) {
  double total = 0.0;
  for (const auto& c : components) total += c.weight;
  if (!(total > 0.0)) throw DomainError("mixture: total weight must be positive");
  for (auto& c : components) c.weight /= total;
  // Residual rounding after division is far below the 1e-12 tolerance.
  return MixtureModel(std::move(components), num_classes);
}

Vector MixtureModel::class_masses() const {
  Vector masses = Vector::Zero(num_classes_);
  for (const auto& c : components_) masses[c.label] += c.weight;
  return masses;
}

void MixtureModel::check_dim(const Vector& x) const {
  if (x.size() != dim_) {
    throw DomainError(fmt::format("mixture: point has dimension {}, expected {}", x.size(), dim_));
  }
}

void MixtureModel::component_terms(const Vector& x, Vector& log_terms,
                                   Matrix* grads) const {
  const auto n = static_cast<Eigen::Index>(components_.size());
  log_terms.resize(n);
  if (grads) grads->resize(dim_, n);
  Vector diff(dim_);
  Vector g(dim_);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& cache = cache_[static_cast<std::size_t>(k)];
    diff = components_[static_cast<std::size_t>(k)].mean - x;
    if (cache.isotropic_precision > 0.0) {
      g = cache.isotropic_precision * diff;
    } else {
      g.noalias() = cache.precision * diff;
    }
    log_terms[k] = cache.log_weight + cache.log_normalizer - 0.5 * diff.dot(g);
    if (grads) grads->col(k) = g;
  }
}

double MixtureModel::log_density(const Vector& x) const {
  check_dim(x);
  Vector terms;
  component_terms(x, terms, nullptr);
  return log_sum_exp(terms);
}

DensityDerivatives MixtureModel::derivatives(const Vector& x,
                                             bool with_laplacian) const {
  check_dim(x);
  Vector terms;
  Matrix grads;
  component_terms(x, terms, &grads);
  DensityDerivatives out;
  out.log_density = log_sum_exp(terms);
  if (out.log_density == kNegInf) {
    throw NumericError("mixture: density underflow in every component", -1);
  }
  const Vector resp = (terms.array() - out.log_density).exp().matrix();
  out.score = grads * resp;
  if (with_laplacian) {
    double lap = 0.0;
    for (Eigen::Index k = 0; k < resp.size(); ++k) {
      if (resp[k] == 0.0) continue;
      lap += resp[k] * (grads.col(k).squaredNorm() -
                        cache_[static_cast<std::size_t>(k)].precision_trace);
    }
    out.laplacian = lap - out.score.squaredNorm();
  }
  return out;
}

Vector MixtureModel::score(const Vector& x) const {
  return derivatives(x, false).score;
}

double MixtureModel::score_divergence(const Vector& x) const {
  return derivatives(x, true).laplacian;
}

ClassPosterior MixtureModel::class_posterior(const Vector& x) const {
  check_dim(x);
  Vector terms;
  component_terms(x, terms, nullptr);
  Vector per_class = Vector::Constant(num_classes_, kNegInf);
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const int c = components_[k].label;
    const double a = per_class[c];
    const double b = terms[static_cast<Eigen::Index>(k)];
    if (b == kNegInf) continue;
    const double hi = std::max(a, b);
    per_class[c] = hi + std::log1p(std::exp(std::min(a, b) - hi));
  }
  const double total = log_sum_exp(per_class);
  if (total == kNegInf) {
    // Only reachable when every weight is zero, which the constructor forbids.
    return Vector::Constant(num_classes_, 1.0 / num_classes_);
  }
  Vector post = (per_class.array() - total).exp().matrix();
  post /= post.sum();
  return post;
}

MixtureModel::LabeledSample MixtureModel::sample(Rng& rng, std::size_t n) const {
  std::vector<double> weights;
  weights.reserve(components_.size());
  for (const auto& c : components_) weights.push_back(c.weight);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());

  LabeledSample out;
  out.points.resize(static_cast<Eigen::Index>(n), dim_);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = pick(rng);
    const Vector noise = standard_normal(rng, dim_);
    const auto& L = cache_[k].cholesky.matrixL();
    out.points.row(static_cast<Eigen::Index>(i)) =
        (components_[k].mean + L * noise).transpose();
    out.labels[i] = components_[k].label;
  }
  return out;
}

Matrix MixtureModel::sample_class(Rng& rng, int label, std::size_t n) const {
  std::vector<double> weights;
  double total = 0.0;
  for (const auto& c : components_) {
    weights.push_back(c.label == label ? c.weight : 0.0);
    total += weights.back();
  }
  if (!(total > 0.0)) {
    throw DomainError(fmt::format("mixture: class {} has zero mass", label));
  }
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  Matrix out(static_cast<Eigen::Index>(n), dim_);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = pick(rng);
    const Vector noise = standard_normal(rng, dim_);
    out.row(static_cast<Eigen::Index>(i)) =
        (components_[k].mean + cache_[k].cholesky.matrixL() * noise).transpose();
  }
  return out;
}

MixtureModel marginal_mixture(const MixtureModel& m, const NoiseSchedule& s,
                              double t) {
  const double ab = s.alpha_bar(t);
  if (t == 0.0) return m;
  const double root = std::sqrt(ab);
  const Matrix eye = Matrix::Identity(m.dim(), m.dim());
  std::vector<Component> out;
  out.reserve(m.size());
  for (const auto& c : m.components()) {
    out.push_back({c.weight, root * c.mean, ab * c.covariance + (1.0 - ab) * eye, c.label});
  }
  return MixtureModel(std::move(out), m.num_classes());
}

MixtureModel::LabeledSample sample_data(const MixtureModel& m, Rng& rng,
                                        std::size_t n) {
  return m.sample(rng, n);
}

MixtureModel make_sphere_mixture(int num_classes, int dim, double radius,
                                 std::uint64_t seed) {
  if (num_classes < 1 || dim < 1 || !(radius >= 0.0)) {
    throw DomainError("sphere mixture: need classes >= 1, dim >= 1, radius >= 0");
  }
  Rng rng = substream(seed, Stream::mixture, 0);
  std::vector<Component> comps;
  for (int c = 0; c < num_classes; ++c) {
    Vector direction = standard_normal(rng, dim);
    direction.normalize();
    comps.push_back({1.0 / num_classes, radius * direction, Matrix::Identity(dim, dim), c});
  }
  return MixtureModel::normalized(std::move(comps), num_classes);
}

int argmax(const Vector& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = static_cast<int>(i);
  }
  return best;
}

double top_margin(const Vector& v) {
  const int top = argmax(v);
  if (v.size() == 1) return v[0];
  double runner = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i != top) runner = std::max(runner, v[i]);
  }
  return v[top] - runner;
}

}  // namespace latentlens
