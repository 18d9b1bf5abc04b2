#pragma once

#include <array>
#include <span>
#include <vector>

#include "latentlens/latent_model.hpp"
#include "latentlens/pool.hpp"
#include "latentlens/rng.hpp"

namespace latentlens {

enum class Head { classifier, regressor };

/// Defaults: d -> 128 -> 64 -> C, minibatch 128, Adam at 1e-3, 200 epochs.
struct MlpHyper {
  int hidden1 = 128;
  int hidden2 = 64;
  int epochs = 200;
  int batch_size = 128;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Weights are stored (out x in); three affine layers with rectifiers
/// between them.
struct MlpParameters {
  std::array<Matrix, 3> weights;
  std::array<Vector, 3> biases;

  Eigen::Index size() const;
  Vector flatten() const;
  void assign(const Vector& flat);
};

/// Inputs one per row; either integer labels (classifier head) or a target
/// matrix with one row per input (regressor head).
struct TrainingSet {
  Matrix inputs;
  std::vector<int> labels;
  Matrix targets;
};

TrainingSet training_set(std::span<const SeedRecord> records, Head head);

class MlpModel final : public LatentModel {
 public:
  MlpModel(int input_dim, int num_classes, Head head, const MlpHyper& hyper, Rng& rng);

  int input_dim() const override { return static_cast<int>(params_.weights[0].cols()); }
  int num_classes() const override { return static_cast<int>(params_.weights[2].rows()); }
  Head head() const noexcept { return head_; }

  /// Softmax probabilities (classifier) or raw outputs (regressor).
  Matrix predict(const Matrix& inputs) const override;

  /// Mean cross-entropy (classifier) or mean squared error summed over
  /// outputs (regressor); fills `gradient` when non-null.
  double loss(const TrainingSet& data, MlpParameters* gradient = nullptr) const;

  const MlpParameters& parameters() const noexcept { return params_; }
  MlpParameters& parameters() noexcept { return params_; }

 private:
  Head head_;
  MlpParameters params_;
};

struct MlpTrainReport {
  MlpModel model;
  double initial_loss;
  double final_loss;
  std::vector<double> epoch_losses;  ///< mean minibatch loss per epoch
};

/// Deterministic given rng: per-epoch shuffles are the only randomness
/// besides initialization. Throws TrainingError on a non-finite loss.
MlpTrainReport train_mlp(const TrainingSet& data, int num_classes, Head head,
                         const MlpHyper& hyper, Rng& rng);
MlpTrainReport train_mlp(std::span<const SeedRecord> records, int num_classes, Head head,
                         const MlpHyper& hyper, Rng& rng);

}  // namespace latentlens
