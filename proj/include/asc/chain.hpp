#pragma once

#include <string>

#include <Eigen/Core>

#include "asc/model.hpp"

namespace asc {

/// Which controller generates rollouts: the generative model itself
/// (feedforward) or observations from the generative model with latents
/// filled in by the recognition model (feedback).
enum class RolloutDensity { Feedforward, Feedback };

const char* to_string(RolloutDensity d);
RolloutDensity parse_density(const std::string& name);

/// p(o, a | x_prev) at time t, marginalizing the latent tuple. Shape card_o x card_a.
Eigen::MatrixXd emission_marginal(const GenerativeModel& gen, const CompleteState& prev, int t);

/// Joint action tuple (a, a1, a2) chosen by a hard decision rule.
struct ActionTuple {
  int a = 0;
  int a1 = 0;
  int a2 = 0;
  auto operator<=>(const ActionTuple&) const = default;
};

std::size_t action_count(const ModelSpec& spec);
std::size_t action_index(const ModelSpec& spec, const ActionTuple& u);
ActionTuple action_at(const ModelSpec& spec, std::size_t index);

/// Deterministic decision rule over (complete state, phase). `actions(x, k)`
/// is the action-tuple index applied to the step taken from state x when the
/// step about to happen has phase k = (t - 1) mod tick_period_level2.
struct DecisionRule {
  Eigen::MatrixXi actions;
};

}  // namespace asc

namespace asc {

/// Non-owning bundle of the three model components an agent carries.
struct Models {
  const GenerativeModel& gen;
  const RecognitionModel& rec;
  const ReferenceModel& ref;
};

}  // namespace asc
