#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

#include "asc/control.hpp"
#include "asc/validate.hpp"

using namespace asc;
using namespace asc::testing;

namespace {

Eigen::VectorXd flatten(const ModelGradient& g) {
  std::vector<const Eigen::MatrixXd*> parts;
  for (const auto& m : g.rec) parts.push_back(&m);
  for (const auto* m : {&g.lik, &g.dyn1, &g.dyn2, &g.pol0, &g.pol1, &g.pol2}) parts.push_back(m);
  Eigen::Index n = 0;
  for (const auto* m : parts) n += m->size();
  Eigen::VectorXd out(n);
  Eigen::Index k = 0;
  for (const auto* m : parts) {
    out.segment(k, m->size()) = m->reshaped();
    k += m->size();
  }
  return out;
}

}  // namespace

TEST_CASE("already-optimal recognition has zero gradient") {
  const ModelSpec s = binary();
  const GenerativeModel gen = deterministic_model(s, false);
  const RecognitionModel rec = one_hot_recognition(s, false);
  const ReferenceModel ref = matching_reference(s, false);
  const ObjectiveGradient g = exact_objective_gradient({gen, rec, ref}, {}, 4, 0.0);
  CHECK(g.objective == 0.0);
  CHECK(g.grad.squared_norm() == 0.0);

  TrainConfig cfg;
  cfg.horizon = 4;
  cfg.iterations = 1;
  cfg.rate = 0.0;
  const TrainResult r = train(gen, rec, ref, {}, cfg);
  CHECK(r.report.grad_norm_trace.at(0) == 0.0);
}

TEST_CASE("exact gradients match finite differences") {
  const validate::CheckResult r = validate::check_gradient({3, 3});
  INFO(r.detail);
  CHECK(r.passed);
  CHECK(r.max_error <= 1e-4);
}

TEST_CASE("score-function gradient points along the exact gradient") {
  const ModelSpec s = binary();
  const Bundle b = random_bundle(s, 1);
  const double rate = 2.0;
  const Eigen::VectorXd exact = flatten(exact_objective_gradient(b.models(), {}, 2, rate).grad);
  const Eigen::VectorXd mc = flatten(score_function_gradient(b.models(), {}, 2, rate, 200000, 9));
  const double cosine = exact.dot(mc) / (exact.norm() * mc.norm());
  INFO("cosine " << cosine);
  CHECK(cosine > 0.95);
}

TEST_CASE("fixed-step descent is monotone") {
  const ModelSpec s = binary();
  const Bundle b = random_bundle(s, 2);
  TrainConfig cfg;
  cfg.horizon = 3;
  cfg.iterations = 25;
  cfg.learning_rate = 0.05;
  cfg.halve_on_increase = false;
  cfg.rate = 2.0;
  const TrainResult r = train(b.gen, b.rec, b.ref, {}, cfg);
  REQUIRE(r.report.objective_trace.size() == 25);
  CHECK(r.report.iterations == 25);
  for (std::size_t i = 1; i < r.report.objective_trace.size(); ++i) {
    CHECK(r.report.objective_trace[i] <= r.report.objective_trace[i - 1] + 1e-12);
  }
  CHECK(r.report.final_learning_rate == 0.05);
  const double after = differential_free_energy(RolloutDensity::Feedback, {r.gen, r.rec, b.ref}, {}, 3, 2.0).estimate;
  CHECK(after <= r.report.objective_trace.back() + 1e-12);
}

TEST_CASE("step halving keeps the trace monotone at a large step") {
  const ModelSpec s = binary();
  const Bundle b = random_bundle(s, 3);
  TrainConfig cfg;
  cfg.horizon = 3;
  cfg.iterations = 15;
  cfg.learning_rate = 50.0;
  cfg.rate_refresh = 0;
  const TrainResult r = train(b.gen, b.rec, b.ref, {}, cfg);
  for (std::size_t i = 1; i < r.report.objective_trace.size(); ++i) {
    CHECK(r.report.objective_trace[i] <= r.report.objective_trace[i - 1] + 1e-9);
  }
  CHECK(r.report.final_learning_rate < 50.0);
}

TEST_CASE("trainables mask the updated tables") {
  const ModelSpec s = binary();
  const Bundle b = random_bundle(s, 4);
  TrainConfig cfg;
  cfg.horizon = 3;
  cfg.iterations = 5;
  cfg.learning_rate = 0.5;
  cfg.trainables.pol1 = false;
  cfg.trainables.pol2 = false;
  const TrainResult r = train(b.gen, b.rec, b.ref, {}, cfg);
  CHECK(r.gen.pol1.probs() == b.gen.pol1.probs());
  CHECK(r.gen.pol2.probs() == b.gen.pol2.probs());
  CHECK(r.gen.lik.probs() == b.gen.lik.probs());
  CHECK(r.gen.dyn1.probs() == b.gen.dyn1.probs());
  CHECK_FALSE(r.gen.pol0.probs() == b.gen.pol0.probs());
  CHECK_FALSE(r.rec.logits()[0] == b.rec.logits()[0]);
  CHECK(r.report.rate_trace.size() == 5);

  cfg.recognition_warmup = 5;
  const TrainResult warm = train(b.gen, b.rec, b.ref, {}, cfg);
  CHECK(warm.gen.pol0.probs() == b.gen.pol0.probs());
}

TEST_CASE("a zero step leaves the models unchanged") {
  const ModelSpec s = binary();
  const Bundle b = random_bundle(s, 5);
  const ModelGradient g = exact_objective_gradient(b.models(), {}, 2, 1.0).grad;
  const GenerativeModel same = apply_generative_step(b.gen, g, 0.0, {true, true, true, true, true, true});
  CHECK((same.pol0.probs() - b.gen.pol0.probs()).cwiseAbs().maxCoeff() <= 1e-11);
  CHECK((same.dyn1.probs() - b.gen.dyn1.probs()).cwiseAbs().maxCoeff() <= 1e-11);
  const RecognitionModel rec = apply_recognition_step(b.rec, g, 0.0);
  for (int f = 0; f < RecognitionModel::kFactorCount; ++f) CHECK(rec.logits()[std::size_t(f)] == b.rec.logits()[std::size_t(f)]);
  const ModelGradient z = ModelGradient::zeros(s);
  CHECK(z.squared_norm() == 0.0);
}

TEST_CASE("non-finite objectives are reported with their iteration") {
  const ModelSpec s = binary();
  Bundle b = random_bundle(s, 6);
  b.ref = matching_reference(s, false);
  TrainConfig cfg;
  cfg.horizon = 2;
  cfg.iterations = 3;
  try {
    train(b.gen, b.rec, b.ref, {}, cfg);
    FAIL("non-finite objective accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NonFinite);
    REQUIRE(e.iteration().has_value());
    CHECK(*e.iteration() == 0);
  }
  cfg.learning_rate = -1.0;
  CHECK_THROWS_AS(train(random_bundle(s, 6).gen, b.rec, random_bundle(s, 6).ref, {}, cfg), Error);
}
