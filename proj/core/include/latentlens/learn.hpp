#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "latentlens/flow.hpp"
#include "latentlens/lda.hpp"
#include "latentlens/mlp.hpp"
#include "latentlens/pool.hpp"

namespace latentlens {

struct Evaluation {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  Eigen::MatrixXi confusion;  ///< rows: true class, cols: predicted class
};

/// Scores predicted labels against true labels. Macro-F1 averages over the
/// classes that occur as a label or as a prediction.
Evaluation evaluate_predictions(std::span<const int> truth, std::span<const int> predicted,
                                int num_classes);
Evaluation evaluate(const LatentModel& model, std::span<const SeedRecord> records);

/// Argmax labels and top-two margins of a batch of model outputs.
struct Predictions {
  std::vector<int> labels;
  std::vector<double> margins;
};
Predictions predict_labels(const LatentModel& model, const Matrix& inputs);

enum class Trainer { mlp, lda };
std::string to_string(Trainer t);
Trainer parse_trainer(const std::string& text);

/// cell(l, j): accuracy of a model fit on level-(l+1) train records,
/// evaluated on level-(j+1) test records.
struct AccuracyMatrix {
  Matrix accuracy;
  std::vector<std::size_t> train_counts;
  std::vector<std::size_t> test_counts;
  Sampler sampler = Sampler::ddim;
  Trainer trainer = Trainer::mlp;

  int levels() const { return static_cast<int>(accuracy.rows()); }
};

/// Training records are ordered by index before fitting, and each level's
/// training stream is substream(seed, training, level), so the result does
/// not depend on record order or worker count.
AccuracyMatrix cross_level_matrix(const SeedPool& pool, Trainer trainer, const MlpHyper& hyper,
                                  std::uint64_t seed, std::size_t workers = 0);

/// Seed -> class_posterior(generate(seed)): the exact composite the latent
/// models approximate. Costs one generator call per input.
class GeneratorOracle final : public LatentModel {
 public:
  explicit GeneratorOracle(const ProbabilityFlow& flow) : flow_(flow) {}
  int input_dim() const override { return flow_.data().dim(); }
  int num_classes() const override { return flow_.data().num_classes(); }
  Matrix predict(const Matrix& inputs) const override;

 private:
  const ProbabilityFlow& flow_;
};

struct CurveBin {
  double low = 0.0;   ///< smallest predicted confidence in the bin
  double high = 0.0;  ///< largest predicted confidence in the bin
  double mean_confidence = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

struct ConfidenceCurve {
  std::vector<CurveBin> bins;  ///< ascending confidence
  bool merged = false;         ///< some bins collapsed because of tied confidences
  std::size_t fresh = 0;
  double overall_accuracy = 0.0;
};

/// Draws n_fresh seeds from substream(seed, fresh, i), compares the
/// model's predicted label with the label of the generated sample, and
/// bins by predicted confidence into equal-count bins. Records with tied
/// confidence always share a bin; emptied bins are dropped and flagged.
ConfidenceCurve accuracy_vs_confidence(const LatentModel& regressor, const ProbabilityFlow& flow,
                                       std::size_t n_fresh, int bins, std::uint64_t seed,
                                       std::size_t workers = 0);

}  // namespace latentlens
