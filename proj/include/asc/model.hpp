#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "asc/error.hpp"

namespace asc {

/// Entry floor applied to strictly-positive tables.
inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr std::size_t kDefaultStateBudget = 4096;
inline constexpr std::size_t kDefaultTrajectoryBudget = 10'000'000;

using Rng = std::mt19937_64;

/// Domain cardinalities of the six variables of a complete state, plus the
/// period at which the slow level transitions.
struct ModelSpec {
  int card_o = 1;
  int card_s1 = 1;
  int card_s2 = 1;
  int card_a = 1;
  int card_a1 = 1;
  int card_a2 = 1;
  int tick_period_level2 = 2;

  std::size_t state_count() const;
  /// Joint count of the latent tuple (s1, s2, a1, a2).
  std::size_t latent_count() const;
  /// Count of (s1, s2, a) tuples: the part of a complete state that the next step depends on.
  std::size_t carry_count() const;
  /// Count of recognition conditioning configurations.
  std::size_t context_count() const;

  void validate() const;
  /// Throws EnumerationBudget when the complete-state count exceeds `max_states`.
  void require_enumerable(std::size_t max_states) const;

  bool operator==(const ModelSpec&) const = default;
};

/// Enumeration budget, honoring the ASC_ENUM_BUDGET environment variable.
std::size_t enumeration_budget();

/// Which levels transition at time t (t >= 1).
struct TickSet {
  bool level1 = true;
  bool level2 = true;
  bool operator==(const TickSet&) const = default;
};
TickSet tick_levels(int t, const ModelSpec& spec);
inline bool level2_ticks(int t, const ModelSpec& spec) { return tick_levels(t, spec).level2; }

/// One time slice x_t = (o, s1, s2, a, a1, a2).
struct CompleteState {
  int o = 0;
  int s1 = 0;
  int s2 = 0;
  int a = 0;
  int a1 = 0;
  int a2 = 0;
  auto operator<=>(const CompleteState&) const = default;
};

/// The unobserved part of a complete state.
struct Latents {
  int s1 = 0;
  int s2 = 0;
  int a1 = 0;
  int a2 = 0;
  auto operator<=>(const Latents&) const = default;
};

void check_state(const ModelSpec& spec, const CompleteState& x);
std::size_t flat_index(const ModelSpec& spec, const CompleteState& x);
CompleteState state_at(const ModelSpec& spec, std::size_t index);

// Latent order is topological: s2 slowest, then a2, s1, a1.
std::size_t latent_index(const ModelSpec& spec, const Latents& z);
Latents latents_at(const ModelSpec& spec, std::size_t index);
Latents latents_of(const CompleteState& x);
CompleteState compose(int o, int a, const Latents& z);

/// Index of the (s1, s2, a) carry of a state; see ModelSpec::carry_count.
std::size_t carry_index(const ModelSpec& spec, int s1, int s2, int a);
inline std::size_t carry_index(const ModelSpec& spec, const CompleteState& x) {
  return carry_index(spec, x.s1, x.s2, x.a);
}
/// A representative complete state for a carry index (o, a1, a2 zero).
CompleteState carry_state(const ModelSpec& spec, std::size_t carry);

/// A categorical distribution per parent configuration. Rows are indexed
/// row-major over `parent_dims`; columns are child values.
class ConditionalTable {
 public:
  ConditionalTable() = default;
  ConditionalTable(std::vector<int> parent_dims, int child_dim, Eigen::MatrixXd probs,
                   bool strictly_positive = true);

  static ConditionalTable uniform(std::vector<int> parent_dims, int child_dim);
  /// Rows are normalized; with `floor` set each entry becomes eps + (1 - n eps) p.
  static ConditionalTable normalized(std::vector<int> parent_dims, Eigen::MatrixXd weights, bool floor = true);
  static ConditionalTable from_logits(std::vector<int> parent_dims, const Eigen::MatrixXd& logits, bool floor = true);
  /// Rows drawn as softmax of standard-normal logits scaled by `scale`.
  static ConditionalTable random(std::vector<int> parent_dims, int child_dim, Rng& rng, double scale = 1.0);

  const std::vector<int>& parent_dims() const { return parent_dims_; }
  int child_dim() const { return child_dim_; }
  Eigen::Index row_count() const { return probs_.rows(); }
  const Eigen::MatrixXd& probs() const { return probs_; }
  bool strictly_positive() const { return strictly_positive_; }

  std::size_t row_index(std::initializer_list<int> parents) const;
  double prob(std::size_t row, int child) const { return probs_(static_cast<Eigen::Index>(row), child); }
  double log_prob(std::size_t row, int child) const;
  auto row(std::size_t r) const { return probs_.row(static_cast<Eigen::Index>(r)); }

  /// Same shape, same parents, element-wise log; -inf for zero entries.
  Eigen::MatrixXd log_probs() const;

 private:
  std::vector<int> parent_dims_;
  int child_dim_ = 0;
  Eigen::MatrixXd probs_;
  bool strictly_positive_ = true;
};

/// Tabular hierarchical generative model with its embedded policies.
///   lik  : p(o  | a1, s1)
///   dyn1 : p(s1 | s1_prev, s2, a_prev)
///   dyn2 : p(s2 | s2_prev, a_prev)
///   pol0 : pi(a  | o, a1)
///   pol1 : pi(a1 | s1, a2)
///   pol2 : pi(a2 | s2)
struct GenerativeModel {
  ModelSpec spec;
  ConditionalTable lik;
  ConditionalTable dyn1;
  ConditionalTable dyn2;
  ConditionalTable pol0;
  ConditionalTable pol1;
  ConditionalTable pol2;

  void validate() const;

  static GenerativeModel uniform(const ModelSpec& spec);
  static GenerativeModel random(const ModelSpec& spec, Rng& rng, double scale = 1.0);
};

/// R(x) = R(o | a1) R(s1 | a2).
struct ReferenceModel {
  ConditionalTable ref_o;
  ConditionalTable ref_s1;

  void validate(const ModelSpec& spec) const;

  static ReferenceModel uniform(const ModelSpec& spec);
  static ReferenceModel random(const ModelSpec& spec, Rng& rng, double scale = 1.0);
};

/// Conditioning information for the per-step recognition factor. `next_o`
/// summarizes x_{t+1}; an empty value selects the filtering configuration.
struct RecognitionContext {
  int o = 0;
  int a = 0;
  CompleteState prev;
  std::optional<int> next_o;
  int t = 1;
};

std::size_t context_index(const ModelSpec& spec, const RecognitionContext& ctx);

/// Recognition model q(s2, a2, s1, a1 | o, a, x_prev, next) factored in
/// topological order, each factor a softmax over free logits.
class RecognitionModel {
 public:
  enum Factor { kS2 = 0, kA2 = 1, kS1 = 2, kA1 = 3 };
  static constexpr int kFactorCount = 4;
  using Logits = std::array<Eigen::MatrixXd, kFactorCount>;

  RecognitionModel() = default;
  RecognitionModel(const ModelSpec& spec, Logits logits, bool floor = true);

  static RecognitionModel uniform(const ModelSpec& spec);
  static RecognitionModel random(const ModelSpec& spec, std::uint64_t seed);
  /// Logit shapes for a spec: rows = context configurations x factor prefix.
  static Logits zero_logits(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  const Logits& logits() const { return logits_; }
  const ConditionalTable& table(Factor f) const { return tables_[f]; }
  bool floored() const { return floor_; }

  std::size_t row_of(Factor f, std::size_t context, const Latents& z) const;

  /// Distribution over latent tuples (latent_index order). On steps where the
  /// slow level does not tick, the s2 factor is replaced by the hold on prev.s2.
  Eigen::VectorXd distribution(const RecognitionContext& ctx) const;

 private:
  ModelSpec spec_;
  Logits logits_;
  std::array<ConditionalTable, kFactorCount> tables_;
  bool floor_ = true;
};

struct Trajectory {
  CompleteState x0;
  std::vector<CompleteState> steps;  // t = 1..T
};

/// True iff s2 is unchanged on every step at which level 2 does not tick.
bool satisfies_hold(const ModelSpec& spec, const Trajectory& traj);

/// log p(x | x_prev) at time t; -inf when the level-2 hold is violated.
double transition_logprob(const GenerativeModel& gen, const CompleteState& prev, const CompleteState& x, int t);
double trajectory_logprob(const GenerativeModel& gen, const Trajectory& traj);
CompleteState sample_transition(const GenerativeModel& gen, const CompleteState& prev, int t, Rng& rng);

/// Prior over latent tuples p(s2, a2, s1, a1 | x_prev) at time t.
Eigen::VectorXd latent_prior(const GenerativeModel& gen, const CompleteState& prev, int t);
/// p(o | a1, s1) for every latent tuple.
Eigen::VectorXd observation_likelihood(const GenerativeModel& gen, int o);

double recognition_logprob(const RecognitionModel& rec, const Latents& z, const RecognitionContext& ctx);

/// Draws an index from a probability vector.
int sample_categorical(const Eigen::Ref<const Eigen::RowVectorXd>& probs, Rng& rng);
template <typename Derived>
int sample_categorical(const Eigen::MatrixBase<Derived>& probs, Rng& rng) {
  if constexpr (Derived::ColsAtCompileTime == 1) {
    return sample_categorical(Eigen::Ref<const Eigen::RowVectorXd>(probs.transpose()), rng);
  } else {
    return sample_categorical(Eigen::Ref<const Eigen::RowVectorXd>(probs), rng);
  }
}

}  // namespace asc
