#include <cmath>
#include <map>

#include "doctest.h"
#include "helpers.hpp"

#include "asc/logspace.hpp"
#include "asc/model.hpp"

using namespace asc;
using asc::testing::binary;

namespace {

Trajectory random_trajectory(const GenerativeModel& gen, const CompleteState& x0, int horizon, Rng& rng) {
  Trajectory traj{x0, {}};
  CompleteState prev = x0;
  for (int t = 1; t <= horizon; ++t) {
    prev = sample_transition(gen, prev, t, rng);
    traj.steps.push_back(prev);
  }
  return traj;
}

}  // namespace

TEST_CASE("tick schedule") {
  const ModelSpec s = binary();
  CHECK(tick_levels(1, s) == TickSet{true, true});
  CHECK(tick_levels(2, s) == TickSet{true, false});
  CHECK(tick_levels(3, s) == TickSet{true, true});
  ModelSpec every = s;
  every.tick_period_level2 = 1;
  for (int t = 1; t < 6; ++t) CHECK(level2_ticks(t, every));
  CHECK_THROWS_AS(tick_levels(0, s), Error);
}

TEST_CASE("spec counts and validation") {
  const ModelSpec s{3, 2, 2, 2, 2, 2, 2};
  CHECK(s.state_count() == 96);
  CHECK(s.latent_count() == 16);
  CHECK(s.carry_count() == 8);
  ModelSpec bad = s;
  bad.card_a1 = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  try {
    s.require_enumerable(50);
    FAIL("budget not enforced");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EnumerationBudget);
  }
  CHECK_NOTHROW(s.require_enumerable(96));
}

TEST_CASE("state and latent indices are bijective") {
  const ModelSpec s{3, 2, 3, 2, 2, 3, 2};
  for (std::size_t i = 0; i < s.state_count(); ++i) CHECK(flat_index(s, state_at(s, i)) == i);
  for (std::size_t i = 0; i < s.latent_count(); ++i) CHECK(latent_index(s, latents_at(s, i)) == i);
  try {
    check_state(s, {3, 0, 0, 0, 0, 0});
    FAIL("out-of-range state accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
  }
}

TEST_CASE("conditional table contracts") {
  Rng rng(3);
  const ConditionalTable t = ConditionalTable::random({2, 3}, 4, rng, 2.0);
  for (Eigen::Index r = 0; r < t.row_count(); ++r) {
    CHECK(std::abs(t.row(std::size_t(r)).sum() - 1.0) <= 1e-12);
    CHECK(t.row(std::size_t(r)).minCoeff() >= kProbabilityFloor);
  }
  Eigen::MatrixXd logits = Eigen::MatrixXd::Random(6, 4);
  const ConditionalTable a = ConditionalTable::from_logits({2, 3}, logits);
  const ConditionalTable b = ConditionalTable::from_logits({2, 3}, logits);
  CHECK(a.probs() == b.probs());

  Eigen::MatrixXd unnormalized = Eigen::MatrixXd::Constant(2, 2, 0.3);
  try {
    ConditionalTable({2}, 2, unnormalized);
    FAIL("unnormalized rows accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Normalization);
  }
  Eigen::MatrixXd one_hot(1, 2);
  one_hot << 1.0, 0.0;
  CHECK_THROWS_AS(ConditionalTable({}, 2, one_hot, true), Error);
  CHECK_NOTHROW(ConditionalTable({}, 2, one_hot, false));
  CHECK_THROWS_AS(ConditionalTable({3}, 2, one_hot, false), Error);
}

TEST_CASE("uniform model transition probabilities") {
  const ModelSpec s = binary();
  const GenerativeModel gen = GenerativeModel::uniform(s);
  const CompleteState x0{};
  for (std::size_t i = 0; i < s.state_count(); ++i) {
    const CompleteState x = state_at(s, i);
    CHECK(transition_logprob(gen, x0, x, 1) == doctest::Approx(std::log(1.0 / 64)).epsilon(1e-14));
    if (x.s2 != x0.s2) {
      CHECK(transition_logprob(gen, x0, x, 2) == neg_inf());
    } else {
      CHECK(transition_logprob(gen, x0, x, 2) == doctest::Approx(std::log(1.0 / 32)).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS(transition_logprob(gen, x0, {2, 0, 0, 0, 0, 0}, 1), Error);
}

TEST_CASE("trajectory log-probability") {
  const ModelSpec s = binary();
  const GenerativeModel uni = GenerativeModel::uniform(s);
  const Trajectory valid{{}, {{1, 0, 1, 0, 1, 0}, {0, 1, 1, 1, 0, 1}}};
  CHECK(trajectory_logprob(uni, valid) == doctest::Approx(std::log(1.0 / 64) + std::log(1.0 / 32)));
  const Trajectory broken{{}, {{1, 0, 1, 0, 1, 0}, {0, 1, 0, 1, 0, 1}}};
  CHECK_FALSE(satisfies_hold(s, broken));
  CHECK(trajectory_logprob(uni, broken) == neg_inf());

  Rng rng(11);
  const GenerativeModel gen = GenerativeModel::random(s, rng);
  for (int rep = 0; rep < 20; ++rep) {
    const Trajectory traj = random_trajectory(gen, state_at(s, std::size_t(rep)), 3, rng);
    CHECK(satisfies_hold(s, traj));
    double sum = 0.0;
    CompleteState prev = traj.x0;
    for (int t = 1; t <= 3; ++t) {
      sum += transition_logprob(gen, prev, traj.steps[std::size_t(t - 1)], t);
      prev = traj.steps[std::size_t(t - 1)];
    }
    CHECK(trajectory_logprob(gen, traj) == doctest::Approx(sum).epsilon(1e-14));
  }
}

TEST_CASE("sampling transitions") {
  const ModelSpec s = binary();
  const GenerativeModel det = asc::testing::deterministic_model(s, false);
  Rng rng(5);
  for (int t = 1; t <= 4; ++t) CHECK(sample_transition(det, {}, t, rng) == CompleteState{});

  Rng a(99), b(99);
  const GenerativeModel uni = GenerativeModel::uniform(s);
  CHECK(sample_transition(uni, {}, 1, a) == sample_transition(uni, {}, 1, b));

  const int n = 100000;
  std::map<std::size_t, int> counts;
  Rng draw(2024);
  for (int i = 0; i < n; ++i) ++counts[flat_index(s, sample_transition(uni, {}, 1, draw))];
  for (std::size_t i = 0; i < s.state_count(); ++i) {
    const double p = std::exp(transition_logprob(uni, {}, state_at(s, i), 1));
    const double se = std::sqrt(p * (1.0 - p) / n);
    CHECK(std::abs(double(counts[i]) / n - p) <= 3.0 * se);
  }
}

TEST_CASE("recognition log-probability") {
  const ModelSpec s = binary();
  const RecognitionContext ctx{1, 0, {0, 1, 1, 0, 1, 0}, std::nullopt, 1};
  const RecognitionModel uni = RecognitionModel::uniform(s);
  for (std::size_t i = 0; i < s.latent_count(); ++i) {
    CHECK(recognition_logprob(uni, latents_at(s, i), ctx) == doctest::Approx(std::log(1.0 / 16)).epsilon(1e-14));
  }

  const RecognitionModel hot = asc::testing::one_hot_recognition(s, false);
  for (std::size_t i = 0; i < s.latent_count(); ++i) {
    const double lp = recognition_logprob(hot, latents_at(s, i), ctx);
    if (i == latent_index(s, {})) {
      CHECK(lp == 0.0);
    } else {
      CHECK(lp == neg_inf());
    }
  }

  const RecognitionModel rnd = RecognitionModel::random(s, 8);
  for (int t : {1, 2}) {
    for (std::optional<int> next : {std::optional<int>{}, std::optional<int>{0}, std::optional<int>{1}}) {
      const RecognitionContext c{0, 1, {1, 0, 1, 1, 0, 1}, next, t};
      double mass = 0.0;
      for (std::size_t i = 0; i < s.latent_count(); ++i) mass += std::exp(recognition_logprob(rnd, latents_at(s, i), c));
      CHECK(std::abs(mass - 1.0) <= 1e-12);
      const Eigen::VectorXd q = rnd.distribution(c);
      CHECK(std::abs(q.sum() - 1.0) <= 1e-12);
      if (t == 2) {
        for (std::size_t i = 0; i < s.latent_count(); ++i) {
          if (latents_at(s, i).s2 != c.prev.s2) CHECK(q(Eigen::Index(i)) == 0.0);
        }
      }
    }
  }
  CHECK_THROWS_AS(recognition_logprob(rnd, {2, 0, 0, 0}, ctx), Error);
}

TEST_CASE("recognition context index covers every configuration once") {
  const ModelSpec s{2, 2, 3, 2, 2, 2, 3};
  std::vector<int> seen(s.context_count(), 0);
  for (int o = 0; o < s.card_o; ++o)
    for (int a = 0; a < s.card_a; ++a)
      for (std::size_t c = 0; c < s.carry_count(); ++c)
        for (int next = 0; next <= s.card_o; ++next) {
          const std::optional<int> n = next == s.card_o ? std::nullopt : std::optional<int>(next);
          ++seen[context_index(s, {o, a, carry_state(s, c), n, 1})];
        }
  for (int v : seen) CHECK(v == 1);
}

TEST_CASE("categorical sampling follows the weights") {
  Eigen::RowVectorXd p(3);
  p << 0.0, 1.0, 0.0;
  Rng rng(1);
  for (int i = 0; i < 10; ++i) CHECK(sample_categorical(p, rng) == 1);
  Eigen::VectorXd col(2);
  col << 0.0, 1.0;
  CHECK(sample_categorical(col, rng) == 1);
}
