#include "latentlens/condgen.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "latentlens/error.hpp"
#include "latentlens/parallel.hpp"
#include "latentlens/stats.hpp"

namespace latentlens {

FilterResult filter_seeds(const LatentModel& g, const FilterPolicy& policy,
                          std::size_t n_requested, std::uint64_t seed, std::size_t batch_size) {
  if (policy.max_draws < 1) throw DomainError("filter: max_draws must be >= 1");
  if (policy.target < 0 || policy.target >= g.num_classes()) {
    throw DomainError(fmt::format("filter: target class {} outside [0, {})", policy.target,
                                  g.num_classes()));
  }
  if (batch_size < 1) throw DomainError("filter: batch size must be >= 1");
  FilterResult out;
  if (n_requested == 0) return out;

  const int d = g.input_dim();
  std::size_t next = 0;
  while (next < policy.max_draws && out.seeds.size() < n_requested) {
    const std::size_t count = std::min(batch_size, policy.max_draws - next);
    Matrix batch(static_cast<Eigen::Index>(count), d);
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng = substream(seed, Stream::filter, next + i);
      batch.row(static_cast<Eigen::Index>(i)) = standard_normal(rng, d).transpose();
    }
    const Matrix scores = g.predict(batch);
    for (std::size_t i = 0; i < count; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      out.draws = next + i + 1;
      const Vector s = scores.row(row).transpose();
      const double margin = top_margin(s);
      if (argmax(s) == policy.target && margin >= policy.threshold) {
        out.seeds.push_back(batch.row(row).transpose());
        out.margins.push_back(margin);
        out.draw_indices.push_back(next + i);
        if (out.seeds.size() == n_requested) break;
      }
    }
    next += count;
  }
  if (out.seeds.empty()) {
    throw ExhaustionError(fmt::format("filter: no seed accepted for class {} at threshold {} "
                                      "after {} draws",
                                      policy.target, policy.threshold, out.draws),
                          out.draws);
  }
  return out;
}

CondGenResult generate_conditional(const ProbabilityFlow& flow, const LatentModel& g,
                                   const FilterPolicy& policy, std::size_t n_requested,
                                   std::uint64_t seed, std::size_t workers) {
  CondGenResult result;
  auto& rep = result.report;
  rep.target = policy.target;
  rep.threshold = policy.threshold;
  rep.n_requested = n_requested;
  if (n_requested == 0) return result;

  const FilterResult accepted = filter_seeds(g, policy, n_requested, seed);
  const Generator generator(flow);
  const std::size_t n = accepted.seeds.size();
  result.samples.resize(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        GeneratedSample& s = result.samples[i];
        s.draw_index = accepted.draw_indices[i];
        s.seed = accepted.seeds[i];
        s.predicted_margin = accepted.margins[i];
        s.sample = generator(s.seed);
        const ClassPosterior post = flow.data().class_posterior(s.sample);
        s.verified_label = argmax(post);
        s.verified_confidence = top_margin(post);
      },
      workers);

  rep.n_drawn = accepted.draws;
  rep.n_accepted = n;
  rep.acceptance_rate = static_cast<double>(n) / static_cast<double>(accepted.draws);
  std::size_t verified = 0;
  Matrix samples(static_cast<Eigen::Index>(n), flow.data().dim());
  for (std::size_t i = 0; i < n; ++i) {
    if (result.samples[i].verified_label == policy.target) ++verified;
    samples.row(static_cast<Eigen::Index>(i)) = result.samples[i].sample.transpose();
  }
  rep.verified_accuracy = static_cast<double>(verified) / static_cast<double>(n);
  rep.diversity = n >= 2 ? diversity(samples) : 0.0;
  rep.generator_calls = generator.calls();
  return result;
}

double diversity(const Matrix& samples) {
  if (samples.rows() < 2) throw DomainError("diversity: undefined for fewer than 2 samples");
  return mean_pairwise_distance(samples);
}

double diversity(std::span<const Vector> samples) {
  if (samples.size() < 2) throw DomainError("diversity: undefined for fewer than 2 samples");
  Matrix m(static_cast<Eigen::Index>(samples.size()), samples.front().size());
  for (std::size_t i = 0; i < samples.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = samples[i].transpose();
  return mean_pairwise_distance(m);
}

}  // namespace latentlens
