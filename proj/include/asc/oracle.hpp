#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

#include "asc/chain.hpp"
#include "asc/model.hpp"

// Brute-force ground truth on small instances. Everything here is computed by
// exhaustive enumeration or dense forward/backward sweeps over complete
// states, independently of the solvers in control.hpp.
namespace asc::oracle {

struct EnumerationBudget {
  std::size_t max_states = enumeration_budget();
  std::size_t max_trajectories = kDefaultTrajectoryBudget;
};

using TrajectoryVisitor = std::function<void(const Trajectory&, double log_prob)>;

/// Visits every positive-probability trajectory of length T under p_theta.
void enumerate_trajectories(const GenerativeModel& gen, const CompleteState& x0, int horizon,
                            const TrajectoryVisitor& visit, const EnumerationBudget& budget = {});

/// log p(o_t | x_{t-1}) and the matching posterior over latent tuples.
double step_log_evidence(const GenerativeModel& gen, const CompleteState& prev, int o, int t);
Eigen::VectorXd step_posterior(const GenerativeModel& gen, const CompleteState& prev, int o, int t);

double exact_marginal_likelihood(const GenerativeModel& gen, const CompleteState& x0,
                                 const std::vector<int>& observations, const EnumerationBudget& budget = {});

struct PosteriorEntry {
  Trajectory trajectory;
  double log_joint = 0.0;
  double prob = 0.0;
};
std::vector<PosteriorEntry> exact_posterior(const GenerativeModel& gen, const CompleteState& x0,
                                            const std::vector<int>& observations,
                                            const EnumerationBudget& budget = {});

/// Dense transition matrix K_t(x | x_prev) over complete states (rows = x_prev).
Eigen::MatrixXd transition_matrix(RolloutDensity density, const Models& m, int t,
                                  const EnumerationBudget& budget = {});
/// Step cost C_t(x_prev, x): J + L of x (feedforward) or the step objective
/// of the filtering context (feedback).
Eigen::MatrixXd cost_matrix(RolloutDensity density, const Models& m, int t, const EnumerationBudget& budget = {});

using PathVisitor = std::function<void(const std::vector<std::size_t>& states, double log_prob, double cost)>;
void enumerate_paths(RolloutDensity density, const Models& m, const CompleteState& x0, int horizon,
                     const PathVisitor& visit, const EnumerationBudget& budget = {});

/// Mean step cost over steps T_burn+1 .. T_burn+T_eval by forward propagation.
double exact_average_rate(RolloutDensity density, const Models& m, const CompleteState& x0, int burn_in,
                          int eval_steps, const EnumerationBudget& budget = {});

/// Sum over t = 1..T of the expected advantage E[C_t] - rate.
double exact_expected_advantage_sum(RolloutDensity density, const Models& m, const CompleteState& x0, int horizon,
                                    double rate, const EnumerationBudget& budget = {});

struct SoftValue {
  /// to_go[t-1](x_prev) for t = 1..T+1; to_go[T] is the zero terminal value.
  std::vector<Eigen::VectorXd> to_go;
  /// Feedforward only: stage[t-1](x) = h(t; x) + to_go[t](x).
  std::vector<Eigen::VectorXd> stage;
  double root = 0.0;
};

/// Backward recursion V_t(x') = -log E_K[exp(-(C_t - rate) - V_{t+1})].
SoftValue exact_soft_value(RolloutDensity density, const Models& m, const CompleteState& x0, int horizon,
                           double rate, const EnumerationBudget& budget = {});

/// -log E[exp(-sum_t (C_t - rate))] by exhaustive trajectory enumeration.
double exact_path_integral_value(RolloutDensity density, const Models& m, const CompleteState& x0, int horizon,
                                 double rate, const EnumerationBudget& budget = {});

/// Mean J + L per step of the chain driven by a hard decision rule, by
/// forward propagation over T_burn + T_eval steps.
double exact_decision_rule_rate(const GenerativeModel& gen, const ReferenceModel& ref, const DecisionRule& rule,
                                const CompleteState& x0, int burn_in, int eval_steps,
                                const EnumerationBudget& budget = {});

}  // namespace asc::oracle
