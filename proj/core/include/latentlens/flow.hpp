#pragma once

#include <cstddef>
#include <vector>

#include "latentlens/gmm.hpp"
#include "latentlens/rng.hpp"

namespace latentlens {

enum class Method { rk4, euler };

struct IntegratorSpec {
  Method method = Method::rk4;
  int steps = 256;
};

/// Path of the probability-flow ODE. `logdet` is the accumulated
/// divergence integral along the traversed direction, i.e. the log
/// |det| of the Jacobian of the map actually traversed.
struct FlowTrajectory {
  std::vector<double> times;
  std::vector<Vector> states;
  double logdet = 0.0;

  const Vector& final_state() const { return states.back(); }
};

enum class PathDetail { full, endpoints };

/// Probability-flow ODE of the VP process for one data mixture.
///
/// The marginal mixtures on the half-step grid {T j / (2N)} are built once,
/// so every RK4 stage evaluates a cached mixture. All integration is
/// fixed-step, hence bit-reproducible.
class ProbabilityFlow {
 public:
  ProbabilityFlow(const MixtureModel& data, const NoiseSchedule& schedule,
                  IntegratorSpec spec = {});

  const MixtureModel& data() const noexcept { return marginals_.front(); }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }
  const IntegratorSpec& spec() const noexcept { return spec_; }
  /// Analytic marginal at time T.
  const MixtureModel& terminal() const noexcept { return marginals_.back(); }

  /// x_0 -> x_T (diffusion direction).
  FlowTrajectory forward(const Vector& x0, PathDetail detail = PathDetail::full,
                         bool with_logdet = true) const;
  /// x_T -> x_0 (the deterministic generator).
  FlowTrajectory backward(const Vector& z, PathDetail detail = PathDetail::full,
                          bool with_logdet = true) const;
  /// Endpoint of backward() without log-det accumulation.
  Vector generate(const Vector& z) const;

  /// Euler-Maruyama on the reverse-time SDE over the same step grid.
  Vector reverse_sde(const Vector& z, Rng& rng) const;

 private:
  struct Eval {
    Vector velocity;
    double divergence;
  };
  Eval evaluate(std::size_t node, const Vector& x, bool with_divergence) const;
  double node_time(std::size_t node) const;
  FlowTrajectory integrate(const Vector& start, bool forward_direction,
                           PathDetail detail, bool with_logdet) const;

  NoiseSchedule schedule_;
  IntegratorSpec spec_;
  std::vector<MixtureModel> marginals_;  // node j at time T j / (2N)
  std::vector<double> betas_;
};

/// Probability-flow velocity F(t, x) = -beta(t)/2 [x + grad log p_t(x)].
Vector drift(const MixtureModel& m, const NoiseSchedule& s, double t,
             const Vector& x);

FlowTrajectory integrate_forward(const MixtureModel& m, const NoiseSchedule& s,
                                 const Vector& x0, IntegratorSpec spec = {});
FlowTrajectory integrate_backward(const MixtureModel& m, const NoiseSchedule& s,
                                  const Vector& z, IntegratorSpec spec = {});

Vector ddpm_reverse_sample(const MixtureModel& m, const NoiseSchedule& s,
                           const Vector& z, Rng& rng, IntegratorSpec spec = {});

/// Density identity log p_T(phi_T(x0)) = log p_0(x0) - int_0^T div F dt.
struct DensityTransportReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double abs_err = 0.0;
};

DensityTransportReport verify_density_transport(const ProbabilityFlow& flow, const Vector& x0);
DensityTransportReport verify_density_transport(const MixtureModel& m, const NoiseSchedule& s,
                                                const Vector& x0, IntegratorSpec spec = {});

/// Class transport check: labels survive the round trip and latent images
/// of distinct classes stay apart (1-NN purity).
struct ClassTransportReport {
  double roundtrip_class_agreement = 0.0;
  double latent_nn_purity = 0.0;
  double max_roundtrip_error = 0.0;
};

ClassTransportReport verify_class_transport(const MixtureModel& m, const NoiseSchedule& s,
                                            std::size_t n, Rng& rng, IntegratorSpec spec = {},
                                            std::size_t workers = 0);

}  // namespace latentlens
