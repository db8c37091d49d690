#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asc/model.hpp"

namespace asc::validate {

struct CheckResult {
  std::string name;
  bool passed = true;
  double max_error = 0.0;
  double tolerance = 0.0;
  int instances = 0;
  double seconds = 0.0;
  std::string detail;
};

struct SuiteOptions {
  std::uint64_t seed = 0;
  int instances = 100;
};

/// A random agent: generative model, recognition logits, reference and context.
struct Instance {
  GenerativeModel gen;
  RecognitionModel rec;
  ReferenceModel ref;
  CompleteState x0;
};

/// Every cardinality 2, slow level ticking every second step.
ModelSpec binary_spec();
/// At most `max_states` complete states, observation always binary.
ModelSpec tiny_spec(Rng& rng, std::size_t max_states);
Instance random_instance(const ModelSpec& spec, std::uint64_t seed);

CheckResult check_transition_normalization(const SuiteOptions& opts);
CheckResult check_recognition_normalization(const SuiteOptions& opts);
CheckResult check_enumeration(const SuiteOptions& opts);
CheckResult check_posterior(const SuiteOptions& opts);
CheckResult check_free_energy(const SuiteOptions& opts);
CheckResult check_surprisal_bound(const SuiteOptions& opts);
CheckResult check_qstar_normalization(const SuiteOptions& opts);
CheckResult check_kl_identity(const SuiteOptions& opts);
CheckResult check_soft_value(const SuiteOptions& opts);
CheckResult check_jensen(const SuiteOptions& opts);
CheckResult check_jensen_equality(const SuiteOptions& opts);
CheckResult check_rvi(const SuiteOptions& opts);
CheckResult check_rvi_rollout(const SuiteOptions& opts, int steps = 100000, int rollouts = 3);
CheckResult check_gradient(const SuiteOptions& opts);

std::vector<CheckResult> run_suite(const SuiteOptions& opts);
std::string report_json(const std::vector<CheckResult>& results);

}  // namespace asc::validate
