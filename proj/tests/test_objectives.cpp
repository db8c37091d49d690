#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

#include "asc/logspace.hpp"
#include "asc/objectives.hpp"
#include "asc/oracle.hpp"

using namespace asc;
using asc::testing::binary;

namespace {

const double kLog2 = std::log(2.0);

struct Random {
  GenerativeModel gen;
  RecognitionModel rec;
  ReferenceModel ref;
};

Random random_models(const ModelSpec& s, std::uint64_t seed) {
  Rng rng(seed);
  GenerativeModel gen = GenerativeModel::random(s, rng, 1.5);
  ReferenceModel ref = ReferenceModel::random(s, rng, 1.5);
  return {std::move(gen), RecognitionModel::random(s, seed + 1), std::move(ref)};
}

}  // namespace

TEST_CASE("reference surprisal") {
  const ModelSpec s = binary();
  const ReferenceModel uni = ReferenceModel::uniform(s);
  CHECK(reference_surprisal(uni, {1, 0, 1, 0, 1, 1}) == doctest::Approx(2 * kLog2).epsilon(1e-14));

  const ReferenceModel hot = asc::testing::matching_reference(s, false);
  CHECK(reference_surprisal(hot, {1, 0, 0, 0, 1, 0}) == 0.0);
  CHECK(reference_surprisal(hot, {0, 0, 0, 0, 1, 0}) == std::numeric_limits<double>::infinity());

  Rng rng(4);
  const ReferenceModel ref = ReferenceModel::random(s, rng);
  for (std::size_t i = 0; i < s.state_count(); ++i) {
    const CompleteState x = state_at(s, i);
    const double direct = -(std::log(ref.ref_o.prob(std::size_t(x.a1), x.o)) + std::log(ref.ref_s1.prob(std::size_t(x.a2), x.s1)));
    CHECK(reference_surprisal(ref, x) == doctest::Approx(direct).epsilon(1e-14));
  }
}

TEST_CASE("likelihood surprisal") {
  const ModelSpec s = binary();
  CHECK(likelihood_surprisal(GenerativeModel::uniform(s), {1, 1, 0, 0, 1, 0}) == doctest::Approx(kLog2));
  const GenerativeModel exact = asc::testing::deterministic_model(s, false);
  CHECK(likelihood_surprisal(exact, {}) == 0.0);
  const GenerativeModel floored = asc::testing::deterministic_model(s, true);
  CHECK(likelihood_surprisal(floored, {1, 0, 0, 0, 0, 0}) == doctest::Approx(-std::log(kProbabilityFloor)));
}

TEST_CASE("variational free energy at the exact posterior is the surprisal") {
  const ModelSpec s = binary();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Random m = random_models(s, seed);
    for (int t : {1, 2}) {
      const CompleteState prev = state_at(s, seed * 5 % s.state_count());
      for (int o = 0; o < s.card_o; ++o) {
        const RecognitionContext ctx{o, 0, prev, std::nullopt, t};
        const Eigen::VectorXd post = oracle::step_posterior(m.gen, prev, o, t);
        const double surprisal = -oracle::step_log_evidence(m.gen, prev, o, t);
        const FreeEnergy at_post = variational_free_energy(m.gen, ctx, post);
        CHECK(std::abs(at_post.value - surprisal) <= 1e-10);
        CHECK(std::abs(at_post.value - at_post.single_divergence) <= 1e-10);

        const FreeEnergy fe = variational_free_energy(m.gen, m.rec, ctx);
        const Eigen::VectorXd q = m.rec.distribution(ctx);
        CHECK(fe.value >= surprisal - 1e-12);
        CHECK(std::abs(fe.value - surprisal - kl_divergence(q, post)) <= 1e-10);
        CHECK(std::abs(fe.expected_nll + fe.kl - fe.single_divergence) <= 1e-10);
      }
    }
  }
}

TEST_CASE("variational free energy of the uniform model") {
  const ModelSpec s = binary();
  const GenerativeModel gen = GenerativeModel::uniform(s);
  const RecognitionModel rec = RecognitionModel::uniform(s);
  const RecognitionContext ctx{0, 1, {}, std::nullopt, 1};
  const Eigen::VectorXd prior = latent_prior(gen, {}, 1);
  const Eigen::VectorXd q = rec.distribution(ctx);
  const FreeEnergy fe = variational_free_energy(gen, rec, ctx);
  CHECK(fe.value == doctest::Approx(kLog2 + kl_divergence(q, prior)).epsilon(1e-14));
  CHECK(fe.kl == doctest::Approx(0.0));
  CHECK_THROWS_AS(variational_free_energy(gen, ctx, Eigen::VectorXd::Ones(3)), Error);
}

TEST_CASE("reference cross-entropy rate") {
  const ModelSpec s = binary();
  const ReferenceModel hot = asc::testing::matching_reference(s, false);
  Eigen::VectorXd on_target = Eigen::VectorXd::Zero(Eigen::Index(s.latent_count()));
  on_target(Eigen::Index(latent_index(s, {1, 0, 1, 1}))) = 1.0;
  CHECK(reference_cross_entropy_rate(s, {{1, on_target}, {1, on_target}}, hot) == 0.0);

  Rng rng(17);
  std::vector<StepBelief> window;
  for (int i = 0; i < 5; ++i) {
    Eigen::VectorXd q = Eigen::VectorXd::Random(Eigen::Index(s.latent_count())).array().abs();
    window.push_back({i % 2, q / q.sum()});
  }
  CHECK(reference_cross_entropy_rate(s, window, ReferenceModel::uniform(s)) == doctest::Approx(2 * kLog2));

  const ReferenceModel ref = ReferenceModel::random(s, rng);
  const double exact = reference_cross_entropy_rate(s, window, ref);
  const MonteCarloEstimate mc = reference_cross_entropy_rate_mc(s, window, ref, 100000, rng);
  CHECK(mc.stderr_ > 0.0);
  CHECK(std::abs(mc.mean - exact) <= 3.0 * mc.stderr_);
  CHECK_THROWS_AS(reference_cross_entropy_rate(s, {}, ref), Error);
}

TEST_CASE("step objective examples") {
  const ModelSpec s = binary();
  const StepObjective u = step_objective(GenerativeModel::uniform(s), RecognitionModel::uniform(s),
                                         ReferenceModel::uniform(s), {0, 0, {}, std::nullopt, 1});
  CHECK(u.j == doctest::Approx(2 * kLog2));
  CHECK(u.l == doctest::Approx(kLog2));
  CHECK(u.kl == doctest::Approx(0.0));
  CHECK(u.total == doctest::Approx(3 * kLog2));

  GenerativeModel gen = asc::testing::deterministic_model(s, false);
  gen.lik = ConditionalTable::uniform({s.card_a1, s.card_s1}, s.card_o);
  const ReferenceModel ref = asc::testing::matching_reference(s, false);
  const Eigen::VectorXd prior = latent_prior(gen, {}, 1);
  const StepObjective at_prior = step_objective(gen, ref, {0, 0, {}, std::nullopt, 1}, prior);
  CHECK(at_prior.j == 0.0);
  CHECK(at_prior.kl == 0.0);
  CHECK(at_prior.total == doctest::Approx(expect(prior, likelihood_surprisal_table(gen, 0))));
}

TEST_CASE("step objective computation orders agree") {
  const ModelSpec s{2, 2, 2, 2, 3, 2, 2};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Random m = random_models(s, 100 + seed);
    const RecognitionContext ctx{int(seed % 2), 1, state_at(s, seed * 7 % s.state_count()),
                                 seed % 3 == 0 ? std::nullopt : std::optional<int>(int(seed % 2)), int(seed % 2) + 1};
    const StepObjective a = step_objective(m.gen, m.rec, m.ref, ctx);
    const Eigen::VectorXd q = m.rec.distribution(ctx);
    const Eigen::VectorXd prior = latent_prior(m.gen, ctx.prev, ctx.t);
    double j = 0.0, l = 0.0, kl = 0.0;
    for (std::size_t i = 0; i < s.latent_count(); ++i) {
      const double qi = q(Eigen::Index(i));
      if (qi == 0.0) continue;
      const CompleteState x = compose(ctx.o, ctx.a, latents_at(s, i));
      j += qi * reference_surprisal(m.ref, x);
      l += qi * likelihood_surprisal(m.gen, x);
      kl += qi * (std::log(qi) - std::log(prior(Eigen::Index(i))));
    }
    CHECK(std::abs(a.j - j) <= 1e-10);
    CHECK(std::abs(a.l - l) <= 1e-10);
    CHECK(std::abs(a.kl - kl) <= 1e-10);
    CHECK(a.kl >= 0.0);
    CHECK(a.total == a.j + a.l + a.kl);
  }
}

TEST_CASE("global rate and advantage") {
  auto step = [](double total) { return StepObjective{0.0, 0.0, 0.0, total}; };
  CHECK(global_rate({step(1.0), step(3.0)}).mean_rate == 2.0);
  const RateEstimate c = global_rate(std::vector<StepObjective>(7, step(0.25)));
  CHECK(c.mean_rate == 0.25);
  CHECK(c.steps == 7);
  CHECK_THROWS_AS(global_rate({}), Error);

  CHECK(advantage(step(2.0), 2.0) == 0.0);
  CHECK(advantage(step(3.0), 2.0) == 1.0);

  std::vector<StepObjective> episode;
  Rng rng(9);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int i = 0; i < 50; ++i) episode.push_back(step(u(rng)));
  const double rate = 1.7;
  double adv = 0.0;
  for (const auto& e : episode) adv += advantage(e, rate);
  CHECK(adv / 50 == doctest::Approx(global_rate(episode).mean_rate - rate).epsilon(1e-13));
}
