#include "latentlens/flow.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "latentlens/error.hpp"
#include "latentlens/parallel.hpp"

namespace latentlens {

namespace {

constexpr double kBlowUp = 1e6;

bool state_ok(const Vector& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || std::abs(x[i]) > kBlowUp) return false;
  }
  return true;
}

}  // namespace

ProbabilityFlow::ProbabilityFlow(const MixtureModel& data,
                                 const NoiseSchedule& schedule,
                                 IntegratorSpec spec)
    : schedule_(schedule), spec_(spec) {
  if (spec_.steps < 1) {
    throw DomainError(fmt::format("integrator: steps must be >= 1, got {}", spec_.steps));
  }
  const std::size_t nodes = 2 * static_cast<std::size_t>(spec_.steps) + 1;
  marginals_.reserve(nodes);
  betas_.reserve(nodes);
  for (std::size_t j = 0; j < nodes; ++j) {
    const double t = node_time(j);
    marginals_.push_back(marginal_mixture(data, schedule_, t));
    betas_.push_back(schedule_.beta(t));
  }
}

double ProbabilityFlow::node_time(std::size_t node) const {
  const std::size_t last = 2 * static_cast<std::size_t>(spec_.steps);
  if (node == last) return schedule_.horizon();
  return schedule_.horizon() * static_cast<double>(node) / static_cast<double>(last);
}

ProbabilityFlow::Eval ProbabilityFlow::evaluate(std::size_t node, const Vector& x,
                                                bool with_divergence) const {
  const auto d = marginals_[node].derivatives(x, with_divergence);
  const double half_beta = 0.5 * betas_[node];
  Eval e;
  e.velocity = -half_beta * (x + d.score);
  e.divergence = with_divergence ? -half_beta * (static_cast<double>(x.size()) + d.laplacian) : 0.0;
  return e;
}

FlowTrajectory ProbabilityFlow::integrate(const Vector& start, bool forward_direction,
                                          PathDetail detail, bool with_logdet) const {
  if (start.size() != data().dim()) {
    throw DomainError(fmt::format("flow: state has dimension {}, expected {}", start.size(),
                                  data().dim()));
  }
  const std::size_t steps = static_cast<std::size_t>(spec_.steps);
  const std::size_t last = 2 * steps;
  const double h_abs = schedule_.horizon() / static_cast<double>(steps);
  const double h = forward_direction ? h_abs : -h_abs;

  FlowTrajectory traj;
  const std::size_t first_node = forward_direction ? 0 : last;
  traj.times.push_back(node_time(first_node));
  traj.states.push_back(start);
  if (detail == PathDetail::full) {
    traj.times.reserve(steps + 1);
    traj.states.reserve(steps + 1);
  }

  Vector x = start;
  double logdet = 0.0;
  Vector probe(x.size());
  for (std::size_t n = 0; n < steps; ++n) {
    // Node indices of the step start, midpoint and end on the half grid.
    const std::size_t j0 = forward_direction ? 2 * n : last - 2 * n;
    const std::size_t jm = forward_direction ? j0 + 1 : j0 - 1;
    const std::size_t j1 = forward_direction ? j0 + 2 : j0 - 2;

    if (spec_.method == Method::euler) {
      const Eval e = evaluate(j0, x, with_logdet);
      x += h * e.velocity;
      logdet += h * e.divergence;
    } else {
      const Eval k1 = evaluate(j0, x, with_logdet);
      probe = x + 0.5 * h * k1.velocity;
      const Eval k2 = evaluate(jm, probe, with_logdet);
      probe = x + 0.5 * h * k2.velocity;
      const Eval k3 = evaluate(jm, probe, with_logdet);
      probe = x + h * k3.velocity;
      const Eval k4 = evaluate(j1, probe, with_logdet);
      x += (h / 6.0) * (k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity);
      logdet += (h / 6.0) * (k1.divergence + 2.0 * k2.divergence + 2.0 * k3.divergence +
                             k4.divergence);
    }

    if (!state_ok(x) || !std::isfinite(logdet)) {
      throw TrajectoryError(
          fmt::format("flow: state left the finite region after t = {}", node_time(j0)),
          node_time(j0));
    }
    if (detail == PathDetail::full || n + 1 == steps) {
      traj.times.push_back(node_time(j1));
      traj.states.push_back(x);
    }
  }
  traj.logdet = logdet;
  return traj;
}

FlowTrajectory ProbabilityFlow::forward(const Vector& x0, PathDetail detail,
                                        bool with_logdet) const {
  return integrate(x0, true, detail, with_logdet);
}

FlowTrajectory ProbabilityFlow::backward(const Vector& z, PathDetail detail,
                                         bool with_logdet) const {
  return integrate(z, false, detail, with_logdet);
}

Vector ProbabilityFlow::generate(const Vector& z) const {
  return integrate(z, false, PathDetail::endpoints, false).final_state();
}

Vector ProbabilityFlow::reverse_sde(const Vector& z, Rng& rng) const {
  if (z.size() != data().dim()) {
    throw DomainError(fmt::format("sampler: state has dimension {}, expected {}", z.size(),
                                  data().dim()));
  }
  const std::size_t steps = static_cast<std::size_t>(spec_.steps);
  const double h = schedule_.horizon() / static_cast<double>(steps);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector x = z;
  Vector noise(x.size());
  for (std::size_t n = steps; n > 0; --n) {
    const std::size_t node = 2 * n;
    const double beta = betas_[node];
    const Vector score = marginals_[node].derivatives(x, false).score;
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = normal(rng);
    x += h * (0.5 * beta * x + beta * score) + std::sqrt(beta * h) * noise;
    if (!state_ok(x)) {
      throw TrajectoryError(
          fmt::format("sampler: state left the finite region after t = {}", node_time(node)),
          node_time(node));
    }
  }
  return x;
}

Vector drift(const MixtureModel& m, const NoiseSchedule& s, double t, const Vector& x) {
  const double beta = s.beta(t);
  const MixtureModel pt = marginal_mixture(m, s, t);
  return -0.5 * beta * (x + pt.score(x));
}

FlowTrajectory integrate_forward(const MixtureModel& m, const NoiseSchedule& s,
                                 const Vector& x0, IntegratorSpec spec) {
  return ProbabilityFlow(m, s, spec).forward(x0);
}

FlowTrajectory integrate_backward(const MixtureModel& m, const NoiseSchedule& s,
                                  const Vector& z, IntegratorSpec spec) {
  return ProbabilityFlow(m, s, spec).backward(z);
}

Vector ddpm_reverse_sample(const MixtureModel& m, const NoiseSchedule& s, const Vector& z,
                           Rng& rng, IntegratorSpec spec) {
  return ProbabilityFlow(m, s, spec).reverse_sde(z, rng);
}

DensityTransportReport verify_density_transport(const ProbabilityFlow& flow, const Vector& x0) {
  const FlowTrajectory traj = flow.forward(x0, PathDetail::endpoints, true);
  DensityTransportReport r;
  r.lhs = flow.terminal().log_density(traj.final_state());
  r.rhs = flow.data().log_density(x0) - traj.logdet;
  r.abs_err = std::abs(r.lhs - r.rhs);
  return r;
}

DensityTransportReport verify_density_transport(const MixtureModel& m, const NoiseSchedule& s,
                                                const Vector& x0, IntegratorSpec spec) {
  return verify_density_transport(ProbabilityFlow(m, s, spec), x0);
}

ClassTransportReport verify_class_transport(const MixtureModel& m, const NoiseSchedule& s,
                                            std::size_t n, Rng& rng, IntegratorSpec spec,
                                            std::size_t workers) {
  if (n < 1) throw DomainError("verify_class_transport: n must be >= 1");
  const ProbabilityFlow flow(m, s, spec);
  const auto data = sample_data(m, rng, n);

  std::vector<Vector> latent(n);
  std::vector<int> roundtrip_label(n);
  std::vector<double> roundtrip_err(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        const Vector x = data.points.row(static_cast<Eigen::Index>(i)).transpose();
        latent[i] = flow.forward(x, PathDetail::endpoints, false).final_state();
        const Vector back = flow.generate(latent[i]);
        roundtrip_err[i] = (back - x).norm();
        roundtrip_label[i] = argmax(m.class_posterior(back));
      },
      workers);

  ClassTransportReport r;
  std::size_t agree = 0;
  std::size_t pure = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (roundtrip_label[i] == data.labels[i]) ++agree;
    r.max_roundtrip_error = std::max(r.max_roundtrip_error, roundtrip_err[i]);
    if (n == 1) {
      ++pure;
      continue;
    }
    std::size_t nearest = i;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dist = (latent[i] - latent[j]).squaredNorm();
      if (dist < best) {
        best = dist;
        nearest = j;
      }
    }
    if (data.labels[nearest] == data.labels[i]) ++pure;
  }
  r.roundtrip_class_agreement = static_cast<double>(agree) / static_cast<double>(n);
  r.latent_nn_purity = static_cast<double>(pure) / static_cast<double>(n);
  return r;
}

}  // namespace latentlens
