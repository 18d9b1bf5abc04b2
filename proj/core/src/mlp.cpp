#include "latentlens/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "latentlens/error.hpp"

namespace latentlens {

namespace {

Matrix relu(const Matrix& a) { return a.cwiseMax(0.0); }

Matrix affine(const Matrix& x, const Matrix& w, const Vector& b) {
  Matrix out = x * w.transpose();
  out.rowwise() += b.transpose();
  return out;
}

void softmax_rows(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double top = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - top).exp();
    m.row(i) /= m.row(i).sum();
  }
}

TrainingSet subset(const TrainingSet& data, std::span<const std::size_t> rows) {
  TrainingSet out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.inputs.resize(n, data.inputs.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.inputs.row(i) = data.inputs.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]));
  if (!data.labels.empty()) {
    out.labels.reserve(rows.size());
    for (auto r : rows) out.labels.push_back(data.labels[r]);
  }
  if (data.targets.size() > 0) {
    out.targets.resize(n, data.targets.cols());
    for (Eigen::Index i = 0; i < n; ++i) out.targets.row(i) = data.targets.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)]));
  }
  return out;
}

}  // namespace

Eigen::Index MlpParameters::size() const {
  Eigen::Index n = 0;
  for (int l = 0; l < 3; ++l) n += weights[l].size() + biases[l].size();
  return n;
}

Vector MlpParameters::flatten() const {
  Vector flat(size());
  Eigen::Index pos = 0;
  for (int l = 0; l < 3; ++l) {
    flat.segment(pos, weights[l].size()) = weights[l].reshaped();
    pos += weights[l].size();
    flat.segment(pos, biases[l].size()) = biases[l];
    pos += biases[l].size();
  }
  return flat;
}

void MlpParameters::assign(const Vector& flat) {
  if (flat.size() != size()) throw DomainError("mlp: parameter vector has wrong size");
  Eigen::Index pos = 0;
  for (int l = 0; l < 3; ++l) {
    weights[l].reshaped() = flat.segment(pos, weights[l].size());
    pos += weights[l].size();
    biases[l] = flat.segment(pos, biases[l].size());
    pos += biases[l].size();
  }
}

TrainingSet training_set(std::span<const SeedRecord> records, Head head) {
  TrainingSet set;
  if (records.empty()) return set;
  const auto n = static_cast<Eigen::Index>(records.size());
  set.inputs.resize(n, records.front().seed.size());
  if (head == Head::regressor) set.targets.resize(n, records.front().posterior.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    set.inputs.row(i) = r.seed.transpose();
    if (head == Head::classifier) {
      set.labels.push_back(r.label);
    } else {
      set.targets.row(i) = r.posterior.transpose();
    }
  }
  return set;
}

MlpModel::MlpModel(int input_dim, int num_classes, Head head, const MlpHyper& hyper,
                   Rng& rng)
    : head_(head) {
  if (input_dim < 1 || num_classes < 1 || hyper.hidden1 < 1 || hyper.hidden2 < 1) {
    throw DomainError("mlp: layer widths must be >= 1");
  }
  const std::array<int, 4> widths{input_dim, hyper.hidden1, hyper.hidden2, num_classes};
  for (int l = 0; l < 3; ++l) {
    // He-uniform initialization for rectifier layers.
    const double limit = std::sqrt(6.0 / widths[static_cast<std::size_t>(l)]);
    std::uniform_real_distribution<double> uniform(-limit, limit);
    Matrix w(widths[static_cast<std::size_t>(l) + 1], widths[static_cast<std::size_t>(l)]);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = uniform(rng);
    }
    params_.weights[static_cast<std::size_t>(l)] = std::move(w);
    params_.biases[static_cast<std::size_t>(l)] = Vector::Zero(widths[static_cast<std::size_t>(l) + 1]);
  }
}

Matrix MlpModel::predict(const Matrix& inputs) const {
  if (inputs.cols() != input_dim()) {
    throw DomainError(fmt::format("mlp: input has {} columns, expected {}", inputs.cols(),
                                  input_dim()));
  }
  const auto& W = params_.weights;
  const auto& b = params_.biases;
  Matrix out = affine(relu(affine(relu(affine(inputs, W[0], b[0])), W[1], b[1])), W[2], b[2]);
  if (head_ == Head::classifier) softmax_rows(out);
  return out;
}

double MlpModel::loss(const TrainingSet& data, MlpParameters* gradient) const {
  const auto& W = params_.weights;
  const auto& b = params_.biases;
  const auto n = data.inputs.rows();
  if (n == 0) throw DomainError("mlp: empty training set");

  const Matrix a1 = affine(data.inputs, W[0], b[0]);
  const Matrix h1 = relu(a1);
  const Matrix a2 = affine(h1, W[1], b[1]);
  const Matrix h2 = relu(a2);
  Matrix out = affine(h2, W[2], b[2]);

  double value = 0.0;
  Matrix d_out;
  const double inv_n = 1.0 / static_cast<double>(n);
  if (head_ == Head::classifier) {
    if (static_cast<Eigen::Index>(data.labels.size()) != n) {
      throw DomainError("mlp: classifier head needs one label per input");
    }
    softmax_rows(out);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = out(i, data.labels[static_cast<std::size_t>(i)]);
      value -= std::log(std::max(p, 1e-300));
    }
    value *= inv_n;
    if (gradient) {
      d_out = out;
      for (Eigen::Index i = 0; i < n; ++i) d_out(i, data.labels[static_cast<std::size_t>(i)]) -= 1.0;
      d_out *= inv_n;
    }
  } else {
    if (data.targets.rows() != n || data.targets.cols() != out.cols()) {
      throw DomainError("mlp: regressor head needs a target row per input");
    }
    const Matrix diff = out - data.targets;
    value = diff.squaredNorm() * inv_n;
    if (gradient) d_out = (2.0 * inv_n) * diff;
  }

  if (gradient) {
    gradient->weights[2] = d_out.transpose() * h2;
    gradient->biases[2] = d_out.colwise().sum().transpose();
    const Matrix d_a2 = (d_out * W[2]).cwiseProduct((a2.array() > 0.0).cast<double>().matrix());
    gradient->weights[1] = d_a2.transpose() * h1;
    gradient->biases[1] = d_a2.colwise().sum().transpose();
    const Matrix d_a1 = (d_a2 * W[1]).cwiseProduct((a1.array() > 0.0).cast<double>().matrix());
    gradient->weights[0] = d_a1.transpose() * data.inputs;
    gradient->biases[0] = d_a1.colwise().sum().transpose();
  }
  return value;
}

MlpTrainReport train_mlp(const TrainingSet& data, int num_classes, Head head,
                         const MlpHyper& hyper, Rng& rng) {
  const auto n = static_cast<std::size_t>(data.inputs.rows());
  if (n == 0) throw DomainError("train_mlp: no training records");
  if (hyper.epochs < 0 || hyper.batch_size < 1 || !(hyper.learning_rate > 0.0)) {
    throw DomainError("train_mlp: invalid hyperparameters");
  }
  MlpModel model(static_cast<int>(data.inputs.cols()), num_classes, head, hyper, rng);
  const double initial = model.loss(data);
  if (!std::isfinite(initial)) throw TrainingError("train_mlp: non-finite initial loss", 0);

  MlpParameters m1 = model.parameters();
  MlpParameters m2 = model.parameters();
  for (int l = 0; l < 3; ++l) {
    m1.weights[l].setZero();
    m1.biases[l].setZero();
    m2.weights[l].setZero();
    m2.biases[l].setZero();
  }
  MlpParameters grad = m1;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(hyper.batch_size);
  std::vector<double> epoch_losses;
  epoch_losses.reserve(static_cast<std::size_t>(hyper.epochs));
  long step = 0;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const TrainingSet mb = subset(data, std::span(order).subspan(start, stop - start));
      const double value = model.loss(mb, &grad);
      if (!std::isfinite(value)) {
        throw TrainingError(fmt::format("train_mlp: non-finite loss in epoch {}", epoch), epoch);
      }
      sum += value;
      ++batches;
      ++step;
      const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
      auto update = [&](auto& param, auto& mom1, auto& mom2, const auto& g) {
        mom1 = hyper.beta1 * mom1 + (1.0 - hyper.beta1) * g;
        mom2 = hyper.beta2 * mom2 + (1.0 - hyper.beta2) * g.cwiseAbs2();
        param.array() -= hyper.learning_rate * (mom1.array() / c1) /
                         ((mom2.array() / c2).sqrt() + hyper.epsilon);
      };
      auto& p = model.parameters();
      for (int l = 0; l < 3; ++l) {
        update(p.weights[l], m1.weights[l], m2.weights[l], grad.weights[l]);
        update(p.biases[l], m1.biases[l], m2.biases[l], grad.biases[l]);
      }
    }
    epoch_losses.push_back(sum / static_cast<double>(batches));
  }
  const double final_loss = model.loss(data);
  if (!std::isfinite(final_loss)) {
    throw TrainingError("train_mlp: non-finite final loss", hyper.epochs);
  }
  return {std::move(model), initial, final_loss, std::move(epoch_losses)};
}

MlpTrainReport train_mlp(std::span<const SeedRecord> records, int num_classes, Head head,
                         const MlpHyper& hyper, Rng& rng) {
  if (records.size() < static_cast<std::size_t>(num_classes) * 10) {
    throw DomainError(fmt::format("train_mlp: need >= {} records, got {}", num_classes * 10,
                                  records.size()));
  }
  return train_mlp(training_set(records, head), num_classes, head, hyper, rng);
}

}  // namespace latentlens
