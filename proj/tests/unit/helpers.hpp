#pragma once

#include <cmath>
#include <vector>

#include <latentlens/gmm.hpp>
#include <latentlens/pool.hpp>

namespace testing {

using latentlens::Component;
using latentlens::Matrix;
using latentlens::MixtureModel;
using latentlens::Rng;
using latentlens::Vector;

// Random SPD covariances and spread-out means; classes assigned round-robin.
inline MixtureModel random_mixture(Rng& rng, int k, int d, int classes) {
  std::uniform_real_distribution<double> unif(0.2, 1.0);
  std::vector<Component> comps;
  for (int i = 0; i < k; ++i) {
    const Matrix a = Matrix::NullaryExpr(d, d, [&] { return unif(rng) - 0.6; });
    Component c;
    c.weight = unif(rng);
    c.mean = 2.0 * latentlens::standard_normal(rng, d);
    c.covariance = a * a.transpose() + 0.5 * Matrix::Identity(d, d);
    c.label = i % classes;
    comps.push_back(std::move(c));
  }
  return MixtureModel::normalized(std::move(comps), classes);
}

inline MixtureModel gaussian(const Vector& mean, double variance = 1.0) {
  const auto d = mean.size();
  return MixtureModel({{1.0, mean, variance * Matrix::Identity(d, d), 0}}, 1);
}

// Two unit-variance classes at +-(separation/2) e_1.
inline MixtureModel two_classes(int d, double separation) {
  Vector m = Vector::Zero(d);
  m[0] = separation / 2;
  return MixtureModel({{0.5, m, Matrix::Identity(d, d), 0}, {0.5, -m, Matrix::Identity(d, d), 1}}, 2);
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Record with the given label and confidence (posterior left empty).
inline latentlens::SeedRecord record(std::int64_t index, int label, double confidence) {
  latentlens::SeedRecord r;
  r.index = index;
  r.label = label;
  r.confidence = confidence;
  return r;
}

}  // namespace testing
