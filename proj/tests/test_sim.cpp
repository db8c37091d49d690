#include <cmath>

#include <Eigen/Dense>

#include "doctest.h"
#include "helpers.hpp"

#include "asc/sim.hpp"

using namespace asc;
using namespace asc::testing;

namespace {

double batch_se(const std::vector<double>& v, int batches) {
  const std::size_t len = v.size() / std::size_t(batches);
  Eigen::VectorXd means(batches);
  for (int b = 0; b < batches; ++b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) acc += v[std::size_t(b) * len + i];
    means(b) = acc / double(len);
  }
  const double mean = means.mean();
  return std::sqrt((means.array() - mean).square().sum() / (batches - 1) / batches);
}

/// Temperature transition matrix of the environment with actions drawn from `action_probs`.
Eigen::MatrixXd temperature_chain(const ThermostatTask& task, const Eigen::Vector3d& action_probs) {
  const int n = task.params.levels;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  const ConditionalTable& dyn1 = task.env.truth.dyn1;
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < 3; ++a) p.row(s) += action_probs(a) * dyn1.row(dyn1.row_index({s, 0, a}));
  return p;
}

Eigen::RowVectorXd power_iteration(const Eigen::MatrixXd& p) {
  Eigen::RowVectorXd pi = Eigen::RowVectorXd::Constant(p.rows(), 1.0 / double(p.rows()));
  pi(0) += 0.3;
  pi /= pi.sum();
  for (int i = 0; i < 20000; ++i) pi = pi * p;
  return pi;
}

Eigen::RowVectorXd linear_stationary(const Eigen::MatrixXd& p) {
  const Eigen::Index n = p.rows();
  Eigen::MatrixXd a = p.transpose() - Eigen::MatrixXd::Identity(n, n);
  a.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;
  return a.fullPivLu().solve(rhs).transpose();
}

GenerativeModel with_pol0(GenerativeModel gen, int action) {
  gen.pol0 = one_hot_table(gen.pol0.parent_dims(), gen.pol0.child_dim(), [action](Eigen::Index) { return action; });
  return gen;
}

}  // namespace

TEST_CASE("thermostat construction") {
  const ThermostatTask task = thermostat_env(5, {1, 3});
  CHECK(task.env.spec == ModelSpec{5, 5, 2, 3, 5, 2, task.params.phase_length});
  CHECK_NOTHROW(task.env.truth.validate());
  CHECK_NOTHROW(task.ref.validate(task.env.spec));
  CHECK(task.env.setpoints == std::vector<int>{1, 3});

  try {
    thermostat_env(5, {1, 5});
    FAIL("invalid schedule accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidArgument);
  }
  CHECK_THROWS_AS(thermostat_env(1, {0}), Error);
  CHECK_THROWS_AS(thermostat_env(3, {}), Error);
}

TEST_CASE("constant schedule is a fixed setpoint preference") {
  const ThermostatTask task = thermostat_env(4, {2, 2, 2});
  for (int o = 0; o < 4; ++o) {
    const double first = scheduled_reference_surprisal(task.env, task.ref, o, 1, 0);
    for (int s2 = 1; s2 < 3; ++s2) CHECK(scheduled_reference_surprisal(task.env, task.ref, o, 1, s2) == first);
  }
  const ConditionalTable& pol1 = task.agent.pol1;
  for (Eigen::Index r = 0; r < pol1.row_count(); ++r) {
    Eigen::Index best = 0;
    pol1.row(std::size_t(r)).maxCoeff(&best);
    CHECK(best == 2);
  }
  Eigen::Index peak = 0;
  task.ref.ref_o.row(2).maxCoeff(&peak);
  CHECK(peak == 2);
}

TEST_CASE("heating succeeds with the configured probability") {
  ThermostatParams p;
  p.levels = 2;
  p.schedule = {1};
  p.drift = 0.0;
  p.success = 0.8;
  const ThermostatTask task = thermostat_env(p);
  const ConditionalTable& dyn1 = task.env.truth.dyn1;
  CHECK(dyn1.prob(dyn1.row_index({0, 0, 2}), 1) == doctest::Approx(0.8).epsilon(1e-10));
  CHECK(dyn1.prob(dyn1.row_index({1, 0, 0}), 0) == doctest::Approx(0.8).epsilon(1e-10));
}

TEST_CASE("null-action temperature chain") {
  const ThermostatTask task = thermostat_env(ThermostatParams{});
  const Eigen::MatrixXd p = temperature_chain(task, Eigen::Vector3d(0.0, 1.0, 0.0));
  const Eigen::RowVectorXd pi = power_iteration(p);
  CHECK((pi - linear_stationary(p)).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((pi * p - pi).cwiseAbs().maxCoeff() <= 1e-12);

  const GenerativeModel idle = with_pol0(task.agent, 1);
  const RecognitionModel rec = RecognitionModel::uniform(task.env.spec);
  const int steps = 20000;
  const Trace tr = run_episode({idle, rec, task.ref}, task.env, steps, 3);
  const int n = task.params.levels;
  for (int level = 0; level < n; ++level) {
    std::vector<double> hit;
    for (const TraceRow& r : tr.rows) hit.push_back(r.x.s1 == level ? 1.0 : 0.0);
    double freq = 0.0;
    for (double h : hit) freq += h;
    freq /= steps;
    CHECK(std::abs(freq - pi(level)) <= 3.0 * batch_se(hit, 100));
  }
}

TEST_CASE("uniform-policy mean J matches the stationary expectation") {
  const ThermostatTask task = thermostat_env(ThermostatParams{});
  const GenerativeModel& agent = task.agent;
  const RecognitionModel rec = RecognitionModel::uniform(task.env.spec);
  const int n = task.params.levels;
  const int k = int(task.params.schedule.size());

  const Eigen::RowVectorXd pi_s1 = power_iteration(temperature_chain(task, Eigen::Vector3d::Constant(1.0 / 3)));
  Eigen::RowVectorXd pi_o = Eigen::RowVectorXd::Zero(n);
  for (int s = 0; s < n; ++s) pi_o += pi_s1(s) * task.env.truth.lik.row(task.env.truth.lik.row_index({0, s}));

  double expected = 0.0;
  for (int o = 0; o < n; ++o) {
    double j = 0.0;
    for (int a1 = 0; a1 < n; ++a1) j -= task.ref.ref_o.log_prob(std::size_t(a1), o) / n;
    for (int a2 = 0; a2 < k; ++a2)
      for (int s1 = 0; s1 < n; ++s1) j -= task.ref.ref_s1.log_prob(std::size_t(a2), s1) / (n * k);
    expected += pi_o(o) * j;
  }

  const int steps = 10000;
  const Trace tr = run_episode({agent, rec, task.ref}, task.env, steps, 11);
  std::vector<double> j;
  for (const TraceRow& r : tr.rows) j.push_back(r.objective.j);
  double mean = 0.0;
  for (double v : j) mean += v;
  mean /= steps;
  CHECK(std::abs(mean - expected) <= 3.0 * batch_se(j, 100));
}

TEST_CASE("deterministic chain with a matching reference has zero reference cost") {
  const ModelSpec s = binary();
  const GenerativeModel gen = deterministic_model(s);
  const Environment env{s, gen, {}, "chain", {}};
  const Trace tr = run_episode({gen, one_hot_recognition(s), matching_reference(s)}, env, 30, 1);
  for (const TraceRow& r : tr.rows) CHECK(std::abs(r.objective.j) <= 1e-9);

  const Evaluation one = evaluate({gen, one_hot_recognition(s), matching_reference(s)}, env, 1, 30, 1);
  CHECK(one.mean_rate == tr.rows.back().running_rate);
  CHECK(one.stderr_ == 0.0);
  const Evaluation two = evaluate({gen, one_hot_recognition(s), matching_reference(s)}, env, 2, 30, 1);
  CHECK(two.rates[0] == two.rates[1]);
  CHECK(two.stderr_ == 0.0);
}

TEST_CASE("episode traces") {
  const ThermostatTask task = thermostat_env(ThermostatParams{});
  const RecognitionModel rec = RecognitionModel::random(task.env.spec, 5);
  Rng rng(6);
  GenerativeModel agent = task.agent;
  agent.pol0 = ConditionalTable::random(agent.pol0.parent_dims(), 3, rng);
  const Models m{agent, rec, task.ref};

  const Trace a = run_episode(m, task.env, 120, 42);
  const Trace b = run_episode(m, task.env, 120, 42);
  CHECK(a.csv() == b.csv());
  CHECK_FALSE(a.csv() == run_episode(m, task.env, 120, 43).csv());
  CHECK(a.csv().rfind("t,o,s1,s2,a,a1,a2,J,L,KL,total,running_rate,advantage\n", 0) == 0);

  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const TraceRow& r = a.rows[i];
    acc += r.objective.total;
    CHECK(std::abs(r.running_rate - acc / double(i + 1)) <= 1e-12);
    CHECK(r.advantage == r.objective.total - r.running_rate);
    CHECK(r.objective.total == r.objective.j + r.objective.l + r.objective.kl);
    const int t = int(i) + 1;
    if (!level2_ticks(t, task.env.spec)) CHECK(r.x.s2 == (i == 0 ? task.env.x0.s2 : a.rows[i - 1].x.s2));
  }

  Environment other = task.env;
  other.spec.card_o = 4;
  CHECK_THROWS_AS(run_episode(m, other, 10, 1), Error);
  CHECK_THROWS_AS(evaluate(m, task.env, 0, 10, 1), Error);
}

TEST_CASE("paired evaluation shares the environment stream") {
  const ThermostatTask task = thermostat_env(ThermostatParams{});
  const RecognitionModel rec = RecognitionModel::uniform(task.env.spec);
  const Evaluation heat = evaluate({with_pol0(task.agent, 2), rec, task.ref}, task.env, 3, 60, 9);
  const Evaluation cool = evaluate({with_pol0(task.agent, 0), rec, task.ref}, task.env, 3, 60, 9);
  REQUIRE(heat.reference_surprisal.size() == 3);
  CHECK(heat.reference_surprisal != cool.reference_surprisal);
  CHECK(digest("abc") == digest("abc"));
  CHECK(digest("abc") != digest("abd"));
}
