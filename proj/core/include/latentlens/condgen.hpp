#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "latentlens/flow.hpp"
#include "latentlens/latent_model.hpp"

namespace latentlens {

struct FilterPolicy {
  int target = 0;          ///< class index in [0, C)
  double threshold = 0.0;  ///< minimum latent-model margin
  std::size_t max_draws = 100000;
};

/// Accepted seeds in draw order.
struct FilterResult {
  std::vector<Vector> seeds;
  std::vector<double> margins;
  std::vector<std::size_t> draw_indices;
  std::size_t draws = 0;
};

/// Draws z_i from substream(seed, filter, i) in fixed-size batches and
/// accepts z_i when argmax g(z_i) is the target and its margin reaches the
/// threshold. Acceptance depends only on the draw index, so the result does
/// not depend on batch size. Stops after n_requested accepts or max_draws
/// draws; throws ExhaustionError if nothing was accepted.
FilterResult filter_seeds(const LatentModel& g, const FilterPolicy& policy,
                          std::size_t n_requested, std::uint64_t seed,
                          std::size_t batch_size = 1024);

/// The deterministic generator as a black box, with an invocation counter.
class Generator {
 public:
  explicit Generator(const ProbabilityFlow& flow) : flow_(flow) {}
  Vector operator()(const Vector& z) const {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return flow_.generate(z);
  }
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  const ProbabilityFlow& flow_;
  mutable std::atomic<std::size_t> calls_{0};
};

struct CondGenReport {
  int target = 0;
  double threshold = 0.0;
  std::size_t n_requested = 0;
  std::size_t n_drawn = 0;
  std::size_t n_accepted = 0;
  double acceptance_rate = 0.0;
  double verified_accuracy = 0.0;
  double diversity = 0.0;  ///< 0 when fewer than two samples were generated
  std::size_t generator_calls = 0;
};

struct GeneratedSample {
  std::size_t draw_index = 0;
  Vector seed;
  Vector sample;
  double predicted_margin = 0.0;
  int verified_label = 0;
  double verified_confidence = 0.0;
};

struct CondGenResult {
  CondGenReport report;
  std::vector<GeneratedSample> samples;
};

/// Filters with g, then runs the generator on accepted seeds only and
/// checks each output with the mixture's class posterior.
CondGenResult generate_conditional(const ProbabilityFlow& flow, const LatentModel& g,
                                   const FilterPolicy& policy, std::size_t n_requested,
                                   std::uint64_t seed, std::size_t workers = 0);

/// Mean pairwise Euclidean distance; throws DomainError below two samples.
double diversity(std::span<const Vector> samples);
double diversity(const Matrix& samples);

}  // namespace latentlens
