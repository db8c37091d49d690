#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asc/io.hpp"
#include "asc/model.hpp"
#include "asc/objectives.hpp"

namespace asc {

/// Ground truth the agent interacts with. Only `lik`, `dyn1` and `dyn2` of
/// `truth` are used; the agent never reads the environment's latents.
struct Environment {
  ModelSpec spec;
  GenerativeModel truth;
  CompleteState x0;
  std::string label;
  /// Setpoint (a1 index) of each slow phase s2; used to score behavior.
  std::vector<int> setpoints;
};

/// Environment, reference and a matching agent (uniform low-level policy,
/// one-hot schedule-following upper policies, uniform recognition).
struct ThermostatTask {
  Environment env;
  ReferenceModel ref;
  GenerativeModel agent;
  ThermostatParams params;
};

/// A temperature random walk on `levels` values, heated or cooled by one
/// level per step (a = 0 cool, 1 idle, 2 heat). The slow level cycles through
/// the schedule, one entry per phase of `phase_length` steps.
ThermostatTask thermostat_env(const ThermostatParams& params);
ThermostatTask thermostat_env(int levels, const std::vector<int>& schedule);

/// -log R(o | a1*) - log R(s1 | a2*) for the setpoint of the true phase.
double scheduled_reference_surprisal(const Environment& env, const ReferenceModel& ref, int o, int s1, int s2);

struct TraceRow {
  int t = 0;
  CompleteState x;  // o, s1, s2 from the environment; a, a1, a2 from the agent
  StepObjective objective;
  double running_rate = 0.0;
  double advantage = 0.0;
  double scheduled_surprisal = 0.0;
};

struct Trace {
  std::uint64_t episode = 0;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::vector<TraceRow> rows;

  std::string csv() const;
  double mean_scheduled_surprisal() const;
};

Trace run_episode(const Models& agent, const Environment& env, int steps, std::uint64_t seed,
                  std::uint64_t episode = 0);

struct Evaluation {
  double mean_rate = 0.0;
  double stderr_ = 0.0;
  std::vector<double> rates;
  /// Per-episode mean scheduled reference surprisal.
  std::vector<double> reference_surprisal;
};

/// Episode e uses seed derived from (seed, e), so two agents evaluated with
/// the same seed see paired environment noise.
Evaluation evaluate(const Models& agent, const Environment& env, int episodes, int steps, std::uint64_t seed);

/// FNV-1a digest, printed in hex.
std::string digest(const std::string& text);

}  // namespace asc
