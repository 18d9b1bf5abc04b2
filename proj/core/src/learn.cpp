#include "latentlens/learn.hpp"

#include <algorithm>
#include <memory>
#include <numeric>

#include <fmt/format.h>

#include "latentlens/error.hpp"
#include "latentlens/parallel.hpp"

namespace latentlens {

Evaluation evaluate_predictions(std::span<const int> truth, std::span<const int> predicted,
                                int num_classes) {
  if (truth.empty()) throw EvaluationError("evaluate: empty record set");
  if (truth.size() != predicted.size()) {
    throw EvaluationError("evaluate: truth and prediction sizes differ");
  }
  Evaluation e;
  e.confusion = Eigen::MatrixXi::Zero(num_classes, num_classes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 ||
        predicted[i] >= num_classes) {
      throw EvaluationError(fmt::format("evaluate: label outside [0, {})", num_classes));
    }
    ++e.confusion(truth[i], predicted[i]);
    if (truth[i] == predicted[i]) ++correct;
  }
  e.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());

  double f1_sum = 0.0;
  int counted = 0;
  for (int c = 0; c < num_classes; ++c) {
    const int tp = e.confusion(c, c);
    const int instances = e.confusion.row(c).sum();
    const int predictions = e.confusion.col(c).sum();
    if (instances == 0 && predictions == 0) continue;
    f1_sum += 2.0 * tp / static_cast<double>(instances + predictions);
    ++counted;
  }
  e.macro_f1 = counted > 0 ? f1_sum / counted : 0.0;
  return e;
}

Predictions predict_labels(const LatentModel& model, const Matrix& inputs) {
  const Matrix out = model.predict(inputs);
  Predictions p;
  p.labels.reserve(static_cast<std::size_t>(out.rows()));
  p.margins.reserve(static_cast<std::size_t>(out.rows()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Vector row = out.row(i).transpose();
    p.labels.push_back(argmax(row));
    p.margins.push_back(top_margin(row));
  }
  return p;
}

Evaluation evaluate(const LatentModel& model, std::span<const SeedRecord> records) {
  if (records.empty()) throw EvaluationError("evaluate: empty record set");
  const auto data = labeled_points(records, Space::seed, model.num_classes());
  const Predictions p = predict_labels(model, data.points);
  return evaluate_predictions(data.labels, p.labels, model.num_classes());
}

std::string to_string(Trainer t) { return t == Trainer::mlp ? "mlp" : "lda"; }

Trainer parse_trainer(const std::string& text) {
  if (text == "mlp") return Trainer::mlp;
  if (text == "lda") return Trainer::lda;
  throw DomainError(fmt::format("unknown trainer '{}' (expected mlp or lda)", text));
}

AccuracyMatrix cross_level_matrix(const SeedPool& pool, Trainer trainer, const MlpHyper& hyper,
                                  std::uint64_t seed, std::size_t workers) {
  const int L = num_levels(pool);
  if (L < 1) throw EvaluationError("cross-level matrix: pool is not stratified");

  std::vector<std::vector<SeedRecord>> train(static_cast<std::size_t>(L));
  std::vector<std::vector<SeedRecord>> test(static_cast<std::size_t>(L));
  for (const auto& r : pool.records) {
    if (r.level < 1) throw EvaluationError("cross-level matrix: record without a level");
    auto& bucket = r.split == Split::train ? train : test;
    bucket[static_cast<std::size_t>(r.level - 1)].push_back(r);
  }
  auto by_index = [](const SeedRecord& a, const SeedRecord& b) { return a.index < b.index; };

  AccuracyMatrix result;
  result.accuracy = Matrix::Zero(L, L);
  result.sampler = pool.provenance.sampler;
  result.trainer = trainer;
  for (int l = 0; l < L; ++l) {
    auto& tr = train[static_cast<std::size_t>(l)];
    std::sort(tr.begin(), tr.end(), by_index);
    result.train_counts.push_back(tr.size());
    const auto& te = test[static_cast<std::size_t>(l)];
    if (te.empty()) {
      throw EvaluationError(fmt::format("cross-level matrix: level {} has no test records", l + 1));
    }
    result.test_counts.push_back(te.size());
  }

  parallel_for(
      static_cast<std::size_t>(L),
      [&](std::size_t l) {
        const int train_level = static_cast<int>(l) + 1;
        int test_level = 0;
        try {
          std::unique_ptr<LatentModel> model;
          if (trainer == Trainer::mlp) {
            Rng rng = substream(seed, Stream::training, l);
            model = std::make_unique<MlpModel>(
                train_mlp(train[l], pool.num_classes, Head::classifier, hyper, rng).model);
          } else {
            model = std::make_unique<LdaClassifierModel>(train_lda(train[l], pool.num_classes));
          }
          for (std::size_t j = 0; j < test.size(); ++j) {
            test_level = static_cast<int>(j) + 1;
            result.accuracy(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) =
                evaluate(*model, test[j]).accuracy;
          }
        } catch (const Error& e) {
          throw EvaluationError(fmt::format("cross-level matrix (train level {}, test level {}): {}",
                                            train_level, test_level, e.what()));
        }
      },
      workers);
  return result;
}

Matrix GeneratorOracle::predict(const Matrix& inputs) const {
  Matrix out(inputs.rows(), num_classes());
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    const Vector x = flow_.generate(inputs.row(i).transpose());
    out.row(i) = flow_.data().class_posterior(x).transpose();
  }
  return out;
}

ConfidenceCurve accuracy_vs_confidence(const LatentModel& regressor, const ProbabilityFlow& flow,
                                       std::size_t n_fresh, int bins, std::uint64_t seed,
                                       std::size_t workers) {
  if (n_fresh < 1 || bins < 1) throw DomainError("accuracy_vs_confidence: need n_fresh, bins >= 1");
  const int d = flow.data().dim();
  Matrix seeds(static_cast<Eigen::Index>(n_fresh), d);
  for (std::size_t i = 0; i < n_fresh; ++i) {
    Rng rng = substream(seed, Stream::fresh, i);
    seeds.row(static_cast<Eigen::Index>(i)) = standard_normal(rng, d).transpose();
  }
  const Predictions pred = predict_labels(regressor, seeds);

  std::vector<int> truth(n_fresh);
  parallel_for(
      n_fresh,
      [&](std::size_t i) {
        const Vector x = flow.generate(seeds.row(static_cast<Eigen::Index>(i)).transpose());
        truth[i] = argmax(flow.data().class_posterior(x));
      },
      workers);

  std::vector<std::size_t> order(n_fresh);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pred.margins[a] < pred.margins[b];
  });

  // Equal-count tentative bins; a run of tied confidences stays in the bin
  // of its first member.
  const auto B = static_cast<std::size_t>(bins);
  std::vector<std::vector<std::size_t>> members(B);
  std::size_t current = 0;
  for (std::size_t pos = 0; pos < n_fresh; ++pos) {
    const std::size_t tentative = pos * B / n_fresh;
    const bool tied = pos > 0 && pred.margins[order[pos]] == pred.margins[order[pos - 1]];
    if (!tied) current = tentative;
    members[current].push_back(order[pos]);
  }

  ConfidenceCurve curve;
  curve.fresh = n_fresh;
  std::size_t correct_total = 0;
  for (const auto& bin : members) {
    if (bin.empty()) {
      curve.merged = true;
      continue;
    }
    CurveBin row;
    row.count = bin.size();
    row.low = pred.margins[bin.front()];
    row.high = pred.margins[bin.back()];
    std::size_t correct = 0;
    double sum = 0.0;
    for (auto i : bin) {
      sum += pred.margins[i];
      if (pred.labels[i] == truth[i]) ++correct;
    }
    correct_total += correct;
    row.mean_confidence = sum / static_cast<double>(bin.size());
    row.accuracy = static_cast<double>(correct) / static_cast<double>(bin.size());
    curve.bins.push_back(row);
  }
  curve.overall_accuracy = static_cast<double>(correct_total) / static_cast<double>(n_fresh);
  return curve;
}

}  // namespace latentlens
