#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "asc/chain.hpp"
#include "asc/model.hpp"
#include "asc/objectives.hpp"

namespace asc {

// ---------------------------------------------------------------------------
// Hard average-cost control

/// Gain and bias of the differential Bellman equation. The bias is indexed by
/// (complete state, phase), where the phase is that of the step about to be
/// taken from the state: (t - 1) mod tick_period_level2.
struct DifferentialValue {
  double gain = 0.0;
  Eigen::MatrixXd bias;
  CompleteState anchor;
  int anchor_phase = 0;
  DecisionRule greedy;
  double residual = 0.0;
  int iterations = 0;

  /// Bias of every complete state for steps taken at time t.
  Eigen::VectorXd bias_at(const ModelSpec& spec, int t) const;
};

struct RviOptions {
  double tol = 1e-8;
  int max_iter = 100000;
  /// Aperiodicity damping: h <- h + damping * (T h - h - g).
  double damping = 0.5;
  std::optional<Eigen::MatrixXd> initial_bias{};
};

/// Relative value iteration for the step cost J + L, minimizing over the
/// joint action tuple (a, a1, a2) of the successor state.
DifferentialValue relative_value_iteration(const GenerativeModel& gen, const ReferenceModel& ref,
                                           const RviOptions& options = {});

/// Sup-norm residual of the differential Bellman equation for a (gain, bias) pair.
double bellman_residual(const GenerativeModel& gen, const ReferenceModel& ref, double gain,
                        const Eigen::MatrixXd& bias);

/// Exact stationary mean of J + L under a decision rule, from the linear
/// stationarity equations of the phase-augmented chain.
double stationary_rule_rate(const GenerativeModel& gen, const ReferenceModel& ref, const DecisionRule& rule);

/// Per-step simulation of a decision rule; returns the visited costs.
std::vector<double> simulate_rule(const GenerativeModel& gen, const ReferenceModel& ref, const DecisionRule& rule,
                                  const CompleteState& x0, int steps, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Soft (KL) control

/// p(x' | x) for every successor at time t_next (the time index of x').
Eigen::VectorXd feedforward_row(const GenerativeModel& gen, const CompleteState& x, int t_next);

/// q*(x' | x) proportional to exp(-H(x')) p(x' | x). `to_go` is indexed by
/// successor flat index and may contain +inf.
Eigen::VectorXd optimal_transition(const GenerativeModel& gen, const Eigen::VectorXd& to_go, const CompleteState& x,
                                   int t_next);
Eigen::VectorXd optimal_transition(const GenerativeModel& gen, const DifferentialValue& value,
                                   const CompleteState& x, int t_next);

struct KlIdentity {
  double lhs = 0.0;  // KL(q* || p) evaluated directly
  double rhs = 0.0;  // -E_q*[H] - log E_p[exp(-H)]
};
KlIdentity kl_qstar_identity(const GenerativeModel& gen, const Eigen::VectorXd& to_go, const CompleteState& x,
                             int t_next);

struct PathIntegralEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
};

/// -log mean exp(-sum_t h(t)) over seeded rollouts of the chosen density.
PathIntegralEstimate mc_path_integral_value(RolloutDensity density, const Models& m, const CompleteState& x0,
                                            int horizon, double rate, std::size_t rollouts, std::uint64_t seed);

/// Carry-space representation of a rollout density at time t: transitions
/// between (s1, s2, a) carries and the expected step cost from each carry.
struct CarryStep {
  Eigen::MatrixXd transition;
  Eigen::VectorXd cost;
};
CarryStep carry_step(RolloutDensity density, const Models& m, int t);

enum class Estimator { Exact, MonteCarlo };

struct EstimatorOptions {
  Estimator kind = Estimator::Exact;
  std::size_t rollouts = 1000;
  std::uint64_t seed = 0;
};

/// E[sum_t h(t; x0)] under the chosen density; the Jensen upper bound on the
/// path-integral value of the same density.
PathIntegralEstimate differential_free_energy(RolloutDensity density, const Models& m, const CompleteState& x0,
                                              int horizon, double rate, const EstimatorOptions& est = {});

/// Mean step cost over steps burn_in+1 .. burn_in+eval_steps, in carry space.
double carry_average_rate(RolloutDensity density, const Models& m, const CompleteState& x0, int burn_in,
                          int eval_steps);

// ---------------------------------------------------------------------------
// Training

/// Gradient with respect to every logit: recognition factors plus the six
/// generative tables (logits = log probabilities, softmax per row).
struct ModelGradient {
  RecognitionModel::Logits rec;
  Eigen::MatrixXd lik, dyn1, dyn2, pol0, pol1, pol2;

  static ModelGradient zeros(const ModelSpec& spec);
  double squared_norm() const;
};

struct ObjectiveGradient {
  double objective = 0.0;  // differential free energy (feedback density)
  double hindsight = 0.0;  // expected lag-1 smoothed step objective sum
  ModelGradient grad;            // d objective
  ModelGradient hindsight_grad;  // d hindsight, recognition smoothing rows only
};

/// Exact gradients of the differential free energy under the feedback density.
ObjectiveGradient exact_objective_gradient(const Models& m, const CompleteState& x0, int horizon, double rate);

/// Score-function estimate of the same gradient, using the per-step advantage
/// as baseline.
ModelGradient score_function_gradient(const Models& m, const CompleteState& x0, int horizon, double rate,
                                      std::size_t rollouts, std::uint64_t seed);

struct Trainables {
  bool recognition = true;
  bool pol0 = true;
  bool pol1 = true;
  bool pol2 = true;
  bool generative = false;  // lik, dyn1, dyn2
  bool hindsight = true;    // recognition smoothing rows
};

struct TrainConfig {
  int horizon = 8;
  int iterations = 100;
  double learning_rate = 0.05;
  bool halve_on_increase = true;
  int max_halvings = 30;
  /// Re-estimate the rate every K iterations; 0 keeps the initial rate.
  int rate_refresh = 10;
  /// Fixed rate for every iteration; disables re-estimation.
  std::optional<double> rate;
  Trainables trainables;
  /// Leading iterations that update the recognition model only.
  int recognition_warmup = 0;
  /// Policy tables step at learning_rate * policy_step_scale.
  double policy_step_scale = 1.0;
  Estimator estimator = Estimator::Exact;
  std::size_t rollouts = 256;
  std::uint64_t seed = 0;
};

struct TrainReport {
  int iterations = 0;
  std::vector<double> objective_trace;
  std::vector<double> grad_norm_trace;
  std::vector<double> rate_trace;
  std::vector<double> hindsight_trace;
  double final_rate = 0.0;
  double final_learning_rate = 0.0;
};

struct TrainResult {
  GenerativeModel gen;
  RecognitionModel rec;
  TrainReport report;
};

TrainResult train(const GenerativeModel& gen, const RecognitionModel& rec, const ReferenceModel& ref,
                  const CompleteState& x0, const TrainConfig& config);

/// Applies `step * grad` (descent) to the logits of the selected tables.
GenerativeModel apply_generative_step(const GenerativeModel& gen, const ModelGradient& grad, double step,
                                      const Trainables& which);
RecognitionModel apply_recognition_step(const RecognitionModel& rec, const ModelGradient& grad, double step);

}  // namespace asc
