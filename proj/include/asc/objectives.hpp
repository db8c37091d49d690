#pragma once

#include <vector>

#include <Eigen/Core>

#include "asc/model.hpp"

namespace asc {

/// The three terms of the per-step pathwise objective, in nats.
struct StepObjective {
  double j = 0.0;   // E_q[-log R(x)]
  double l = 0.0;   // E_q[-log p(o | a1, s1)]
  double kl = 0.0;  // KL(q || p(latents | x_prev))
  double total = 0.0;
};

struct RateEstimate {
  double mean_rate = 0.0;
  std::size_t steps = 0;
  std::vector<double> per_step;
};

/// Variational free energy at one step with both of its algebraic forms.
struct FreeEnergy {
  double value = 0.0;              // expected_nll + kl
  double expected_nll = 0.0;
  double kl = 0.0;
  double single_divergence = 0.0;  // KL(q || prior x likelihood), unnormalized
};

/// A recognition belief for one step: the observed pair plus q over latents.
struct StepBelief {
  int o = 0;
  Eigen::VectorXd q;
};

double reference_surprisal(const ReferenceModel& ref, const CompleteState& x);
double likelihood_surprisal(const GenerativeModel& gen, const CompleteState& x);

/// -log R(o, latents) for every latent tuple at observation o.
Eigen::VectorXd reference_surprisal_table(const ModelSpec& spec, const ReferenceModel& ref, int o);
/// -log p(o | a1, s1) for every latent tuple.
Eigen::VectorXd likelihood_surprisal_table(const GenerativeModel& gen, int o);

/// E_q[v] restricted to the support of q, so +inf entries off-support do not leak.
double expect(const Eigen::VectorXd& q, const Eigen::VectorXd& v);

FreeEnergy variational_free_energy(const GenerativeModel& gen, const RecognitionContext& ctx, const Eigen::VectorXd& q);
FreeEnergy variational_free_energy(const GenerativeModel& gen, const RecognitionModel& rec, const RecognitionContext& ctx);

double reference_cross_entropy_rate(const ModelSpec& spec, const std::vector<StepBelief>& window,
                                    const ReferenceModel& ref);

struct MonteCarloEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};
/// Sampling estimator of the same rate, drawing `samples` latent tuples per step.
MonteCarloEstimate reference_cross_entropy_rate_mc(const ModelSpec& spec, const std::vector<StepBelief>& window,
                                                   const ReferenceModel& ref, std::size_t samples, Rng& rng);

StepObjective step_objective(const GenerativeModel& gen, const ReferenceModel& ref, const RecognitionContext& ctx,
                             const Eigen::VectorXd& q);
StepObjective step_objective(const GenerativeModel& gen, const RecognitionModel& rec, const ReferenceModel& ref,
                             const RecognitionContext& ctx);

RateEstimate global_rate(const std::vector<StepObjective>& per_step);

inline double advantage(const StepObjective& step, double rate) { return step.total - rate; }

}  // namespace asc
