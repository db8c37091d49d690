#include "asc/validate.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include "json.hpp"

#include "asc/chain.hpp"
#include "asc/control.hpp"
#include "asc/logspace.hpp"
#include "asc/objectives.hpp"
#include "asc/oracle.hpp"

namespace asc::validate {

namespace {

using Clock = std::chrono::steady_clock;
constexpr RolloutDensity kDensities[] = {RolloutDensity::Feedforward, RolloutDensity::Feedback};

std::uint64_t instance_seed(const SuiteOptions& opts, std::uint64_t salt, int i) {
  std::seed_seq seq{std::uint32_t(opts.seed), std::uint32_t(opts.seed >> 32), std::uint32_t(salt), std::uint32_t(i)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t(out[0]) << 32) | out[1];
}

/// Runs `body(i)` for every instance; each call returns its largest error.
template <typename Body>
CheckResult run_check(std::string name, double tolerance, int instances, Body body) {
  CheckResult res;
  res.name = std::move(name);
  res.tolerance = tolerance;
  res.instances = instances;
  const auto start = Clock::now();
  try {
    for (int i = 0; i < instances; ++i) {
      const double err = body(i);
      if (!(err <= res.max_error) || std::isnan(err)) res.max_error = err;
    }
    res.passed = res.max_error <= tolerance;
  } catch (const std::exception& e) {
    res.passed = false;
    res.detail = e.what();
  }
  res.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return res;
}

CompleteState random_state(const ModelSpec& s, Rng& rng) {
  auto pick = [&](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  return {pick(s.card_o), pick(s.card_s1), pick(s.card_s2), pick(s.card_a), pick(s.card_a1), pick(s.card_a2)};
}

ConditionalTable unfloored(const ConditionalTable& shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::MatrixXd logits(shape.row_count(), shape.child_dim());
  for (Eigen::Index r = 0; r < logits.rows(); ++r)
    for (Eigen::Index c = 0; c < logits.cols(); ++c) logits(r, c) = normal(rng);
  return ConditionalTable::from_logits(shape.parent_dims(), logits, false);
}

Eigen::VectorXd random_values(Eigen::Index n, Rng& rng, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

/// Batch-means standard error of a correlated sequence.
double batch_stderr(const std::vector<double>& xs, int batches) {
  const std::size_t len = xs.size() / std::size_t(batches);
  Eigen::VectorXd means(batches);
  for (int b = 0; b < batches; ++b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < len; ++k) acc += xs[std::size_t(b) * len + k];
    means(b) = acc / double(len);
  }
  const double mu = means.mean();
  return std::sqrt((means.array() - mu).square().sum() / double(batches - 1) / double(batches));
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

}  // namespace

ModelSpec binary_spec() { return {2, 2, 2, 2, 2, 2, 2}; }

ModelSpec tiny_spec(Rng& rng, std::size_t max_states) {
  for (;;) {
    ModelSpec s;
    s.card_o = 2;
    for (int* c : {&s.card_s1, &s.card_s2, &s.card_a, &s.card_a1, &s.card_a2}) {
      *c = std::uniform_int_distribution<int>(1, 2)(rng);
    }
    s.tick_period_level2 = std::uniform_int_distribution<int>(1, 3)(rng);
    if (s.state_count() <= max_states) return s;
  }
}

Instance random_instance(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  const GenerativeModel u = GenerativeModel::uniform(spec);
  const ReferenceModel r = ReferenceModel::uniform(spec);
  Instance in;
  in.gen = {spec,
            unfloored(u.lik, rng),
            unfloored(u.dyn1, rng),
            unfloored(u.dyn2, rng),
            unfloored(u.pol0, rng),
            unfloored(u.pol1, rng),
            unfloored(u.pol2, rng)};
  in.ref = {unfloored(r.ref_o, rng), unfloored(r.ref_s1, rng)};
  in.rec = RecognitionModel(spec, RecognitionModel::random(spec, rng()).logits(), false);
  in.x0 = random_state(spec, rng);
  return in;
}

CheckResult check_transition_normalization(const SuiteOptions& opts) {
  return run_check("transition_normalization", 1e-10, opts.instances, [&](int i) {
    const Instance in = random_instance(binary_spec(), instance_seed(opts, 1, i));
    const ModelSpec& s = in.gen.spec;
    double err = 0.0;
    for (int t = 1; t <= 2; ++t) {
      Eigen::VectorXd lp(Eigen::Index(s.state_count()));
      for (std::size_t k = 0; k < s.state_count(); ++k) {
        lp(Eigen::Index(k)) = transition_logprob(in.gen, in.x0, state_at(s, k), t);
      }
      err = std::max(err, std::abs(std::exp(log_sum_exp(lp)) - 1.0));
    }
    return err;
  });
}

CheckResult check_recognition_normalization(const SuiteOptions& opts) {
  return run_check("recognition_normalization", 1e-10, opts.instances, [&](int i) {
    const Instance in = random_instance(binary_spec(), instance_seed(opts, 2, i));
    const ModelSpec& s = in.gen.spec;
    Rng rng(instance_seed(opts, 102, i));
    double err = 0.0;
    for (int rep = 0; rep < 4; ++rep) {
      const CompleteState x = random_state(s, rng);
      const std::optional<int> next = rep % 2 ? std::optional<int>(x.s1 % s.card_o) : std::nullopt;
      const RecognitionContext ctx{x.o, x.a, in.x0, next, 1 + rep / 2};
      Eigen::VectorXd lp(Eigen::Index(s.latent_count()));
      for (std::size_t k = 0; k < s.latent_count(); ++k) {
        lp(Eigen::Index(k)) = recognition_logprob(in.rec, latents_at(s, k), ctx);
      }
      err = std::max(err, std::abs(std::exp(log_sum_exp(lp)) - 1.0));
    }
    return err;
  });
}

CheckResult check_enumeration(const SuiteOptions& opts) {
  return run_check("enumeration_completeness", 1e-9, opts.instances, [&](int i) {
    Rng rng(instance_seed(opts, 3, i));
    double err = 0.0;
    for (int horizon = 1; horizon <= 5; ++horizon) {
      const ModelSpec s = horizon <= 2 ? binary_spec() : tiny_spec(rng, horizon <= 3 ? 16 : 8);
      const Instance in = random_instance(s, rng());
      std::vector<double> lps;
      oracle::enumerate_trajectories(in.gen, in.x0, horizon, [&](const Trajectory&, double lp) { lps.push_back(lp); });
      const Eigen::Map<const Eigen::VectorXd> v(lps.data(), Eigen::Index(lps.size()));
      err = std::max(err, std::abs(std::exp(log_sum_exp(v)) - 1.0));
    }
    return err;
  });
}

CheckResult check_posterior(const SuiteOptions& opts) {
  return run_check("posterior_consistency", 1e-10, opts.instances, [&](int i) {
    const Instance in = random_instance(binary_spec(), instance_seed(opts, 4, i));
    Rng rng(instance_seed(opts, 104, i));
    const std::vector<int> obs{int(rng() % 2), int(rng() % 2)};
    const double lm = oracle::exact_marginal_likelihood(in.gen, in.x0, obs);
    const double lm1 = oracle::exact_marginal_likelihood(in.gen, in.x0, {obs[0]});
    double err = std::max(0.0, lm - lm1);  // an extra observation never raises the likelihood
    double total = 0.0;
    for (const auto& e : oracle::exact_posterior(in.gen, in.x0, obs)) {
      err = std::max(err, std::abs(e.prob * std::exp(lm) - std::exp(e.log_joint)));
      total += e.prob;
    }
    return std::max(err, std::abs(total - 1.0));
  });
}

CheckResult check_free_energy(const SuiteOptions& opts) {
  return run_check("free_energy_decomposition", 1e-10, opts.instances, [&](int i) {
    const Instance in = random_instance(binary_spec(), instance_seed(opts, 5, i));
    const ModelSpec& s = in.gen.spec;
    Rng rng(instance_seed(opts, 105, i));
    double err = 0.0;
    for (int t = 1; t <= 2; ++t) {
      const CompleteState prev = random_state(s, rng);
      const int o = int(rng() % 2);
      const int a = int(rng() % 2);
      const RecognitionContext ctx{o, a, prev, std::nullopt, t};
      const Eigen::VectorXd q = in.rec.distribution(ctx);
      const FreeEnergy fe = variational_free_energy(in.gen, ctx, q);
      const double surprisal = -oracle::step_log_evidence(in.gen, prev, o, t);
      const Eigen::VectorXd post = oracle::step_posterior(in.gen, prev, o, t);
      err = std::max(err, std::abs(fe.value - fe.single_divergence));
      err = std::max(err, std::abs((fe.value - surprisal) - kl_divergence(q, post)));
      err = std::max(err, std::abs(variational_free_energy(in.gen, ctx, post).value - surprisal));
      if (t == 1) {
        // The per-step evidence agrees with full enumeration from the same context.
        err = std::max(err, std::abs(surprisal + oracle::exact_marginal_likelihood(in.gen, prev, {o})));
      }
    }
    return err;
  });
}

CheckResult check_surprisal_bound(const SuiteOptions& opts) {
  return run_check("surprisal_bound", 1e-10, opts.instances, [&](int i) {
    const Instance in = random_instance(binary_spec(), instance_seed(opts, 6, i));
    Rng rng(instance_seed(opts, 106, i));
    const ModelSpec& s = in.gen.spec;
    const CompleteState prev = random_state(s, rng);
    const RecognitionContext ctx{int(rng() % 2), int(rng() % 2), prev, std::nullopt, 1};
    const StepObjective so = step_objective(in.gen, in.rec, in.ref, ctx);
    const double surprisal = -oracle::step_log_evidence(in.gen, prev, ctx.o, 1);
    const double vfe = variational_free_energy(in.gen, in.rec, ctx).value;
    double err = std::max(0.0, so.j + surprisal - so.total);
    err = std::max(err, std::abs(so.total - (so.j + vfe)));
    return so.kl >= -1e-12 ? err : 1.0;
  });
}

CheckResult check_qstar_normalization(const SuiteOptions& opts) {
  return run_check("qstar_normalization", 1e-12, opts.instances, [&](int i) {
    const Instance in = random_instance(binary_spec(), instance_seed(opts, 7, i));
    const ModelSpec& s = in.gen.spec;
    Rng rng(instance_seed(opts, 107, i));
    const Eigen::VectorXd h = random_values(Eigen::Index(s.state_count()), rng, 3.0);
    double err = 0.0;
    for (std::size_t k = 0; k < s.state_count(); ++k) {
      for (int t = 1; t <= s.tick_period_level2; ++t) {
        const Eigen::VectorXd q = optimal_transition(in.gen, h, state_at(s, k), t);
        err = std::max(err, std::abs(q.sum() - 1.0));
        const Eigen::VectorXd p = feedforward_row(in.gen, state_at(s, k), t);
        err = std::max(err, std::max(0.0, -kl_divergence(q, p) - 1e-12));
      }
    }
    return err;
  });
}

CheckResult check_kl_identity(const SuiteOptions& opts) {
  return run_check("kl_identity", 1e-10, opts.instances, [&](int i) {
    const Instance in = random_instance(binary_spec(), instance_seed(opts, 8, i));
    const ModelSpec& s = in.gen.spec;
    Rng rng(instance_seed(opts, 108, i));
    const Eigen::VectorXd h = random_values(Eigen::Index(s.state_count()), rng, 3.0);
    const DifferentialValue value = relative_value_iteration(in.gen, in.ref, {.tol = 1e-9});
    double err = 0.0;
    for (std::size_t k = 0; k < s.state_count(); ++k) {
      for (int t = 1; t <= s.tick_period_level2; ++t) {
        const KlIdentity a = kl_qstar_identity(in.gen, h, state_at(s, k), t);
        const KlIdentity b = kl_qstar_identity(in.gen, value.bias_at(s, t + 1), state_at(s, k), t);
        err = std::max({err, std::abs(a.lhs - a.rhs), std::abs(b.lhs - b.rhs)});
      }
    }
    return err;
  });
}

CheckResult check_soft_value(const SuiteOptions& opts) {
  return run_check("soft_value_equals_path_integral", 1e-8, opts.instances, [&](int i) {
    Rng rng(instance_seed(opts, 9, i));
    double err = 0.0;
    for (int horizon = 1; horizon <= 5; ++horizon) {
      const ModelSpec s = horizon <= 2 ? binary_spec() : tiny_spec(rng, horizon == 3 ? 16 : 8);
      const Instance in = random_instance(s, rng());
      const Models m{in.gen, in.rec, in.ref};
      for (RolloutDensity d : kDensities) {
        const double rate = oracle::exact_average_rate(d, m, in.x0, 4, 4);
        const double recursion = oracle::exact_soft_value(d, m, in.x0, horizon, rate).root;
        const double paths = oracle::exact_path_integral_value(d, m, in.x0, horizon, rate);
        err = std::max(err, std::abs(recursion - paths));
      }
    }
    return err;
  });
}

CheckResult check_jensen(const SuiteOptions& opts) {
  return run_check("jensen_bound", 1e-8, opts.instances, [&](int i) {
    Rng rng(instance_seed(opts, 10, i));
    const int horizon = 1 + int(rng() % 3);
    const Instance in = random_instance(binary_spec(), rng());
    const Models m{in.gen, in.rec, in.ref};
    const double rate = oracle::exact_average_rate(RolloutDensity::Feedback, m, in.x0, 4, 4);
    const double dfe = differential_free_energy(RolloutDensity::Feedback, m, in.x0, horizon, rate).estimate;
    const double value = oracle::exact_path_integral_value(RolloutDensity::Feedback, m, in.x0, horizon, rate);
    const double direct = oracle::exact_expected_advantage_sum(RolloutDensity::Feedback, m, in.x0, horizon, rate);
    return std::max(std::max(0.0, value - dfe), std::abs(dfe - direct));
  });
}

CheckResult check_jensen_equality(const SuiteOptions& opts) {
  return run_check("jensen_equality_constant_advantage", 1e-10, opts.instances, [&](int i) {
    Rng rng(instance_seed(opts, 11, i));
    const int horizon = 1 + int(rng() % 3);
    const ModelSpec s = binary_spec();
    // Only the low-level policy is random: every step objective is the same constant.
    GenerativeModel gen = GenerativeModel::uniform(s);
    gen.pol0 = unfloored(gen.pol0, rng);
    const RecognitionModel rec = RecognitionModel::uniform(s);
    const ReferenceModel ref = ReferenceModel::uniform(s);
    const Models m{gen, rec, ref};
    const CompleteState x0 = random_state(s, rng);
    const double rate = std::normal_distribution<double>(2.0, 1.0)(rng);
    const double dfe = differential_free_energy(RolloutDensity::Feedback, m, x0, horizon, rate).estimate;
    const double value = oracle::exact_path_integral_value(RolloutDensity::Feedback, m, x0, horizon, rate);
    return std::abs(dfe - value);
  });
}

CheckResult check_rvi(const SuiteOptions& opts) {
  return run_check("rvi_gain_consistency", 1e-6, opts.instances, [&](int i) {
    const Instance in = random_instance(binary_spec(), instance_seed(opts, 12, i));
    const ModelSpec& s = in.gen.spec;
    const DifferentialValue v = relative_value_iteration(in.gen, in.ref, {.tol = 1e-10});
    double err = std::abs(v.gain - stationary_rule_rate(in.gen, in.ref, v.greedy));
    err = std::max(err, std::abs(v.gain - oracle::exact_decision_rule_rate(in.gen, in.ref, v.greedy, in.x0, 2000, 20000)));
    err = std::max(err, bellman_residual(in.gen, in.ref, v.gain, v.bias) > 1e-10 ? 1.0 : 0.0);
    err = std::max(err, std::abs(v.bias(Eigen::Index(flat_index(s, v.anchor)), v.anchor_phase)));
    Rng rng(instance_seed(opts, 112, i));
    RviOptions other{.tol = 1e-10};
    other.initial_bias = Eigen::MatrixXd::NullaryExpr(v.bias.rows(), v.bias.cols(), [&] {
      return std::normal_distribution<double>(0.0, 5.0)(rng);
    });
    const DifferentialValue w = relative_value_iteration(in.gen, in.ref, other);
    err = std::max(err, std::abs(v.gain - w.gain) * 100.0);  // gain invariance is held to 1e-8
    if (w.greedy.actions != v.greedy.actions) err = std::max(err, 1.0);
    return err;
  });
}

CheckResult check_rvi_rollout(const SuiteOptions& opts, int steps, int rollouts) {
  CheckResult res = run_check("rvi_rollout_within_3se", 3.0, rollouts, [&](int i) {
    const Instance in = random_instance(binary_spec(), instance_seed(opts, 13, i));
    const DifferentialValue v = relative_value_iteration(in.gen, in.ref, {.tol = 1e-10});
    const std::vector<double> costs = simulate_rule(in.gen, in.ref, v.greedy, in.x0, steps, instance_seed(opts, 113, i));
    double mean = 0.0;
    for (double c : costs) mean += c;
    mean /= double(costs.size());
    return std::abs(mean - v.gain) / batch_stderr(costs, 100);
  });
  res.detail = res.detail.empty() ? "error measured in batch-means standard errors" : res.detail;
  return res;
}

CheckResult check_gradient(const SuiteOptions& opts) {
  constexpr double kStep = 1e-5;
  return run_check("gradient_finite_difference", 1e-4, opts.instances, [&](int i) {
    const Instance in = random_instance(binary_spec(), instance_seed(opts, 14, i));
    const ModelSpec& s = in.gen.spec;
    constexpr int kHorizon = 3;
    const Models m{in.gen, in.rec, in.ref};
    const double rate = oracle::exact_average_rate(RolloutDensity::Feedback, m, in.x0, 4, 4);
    const ObjectiveGradient og = exact_objective_gradient(m, in.x0, kHorizon, rate);

    auto objective = [&](const GenerativeModel& g, const RecognitionModel& r) {
      return differential_free_energy(RolloutDensity::Feedback, {g, r, in.ref}, in.x0, kHorizon, rate).estimate;
    };
    double err = relative_error(og.objective, objective(in.gen, in.rec));

    RecognitionModel::Logits logits = in.rec.logits();
    for (int f = 0; f < RecognitionModel::kFactorCount; ++f) {
      for (Eigen::Index k = 0; k < logits[f].size(); ++k) {
        double& x = logits[f].data()[k];
        const double saved = x;
        x = saved + kStep;
        const double up = objective(in.gen, RecognitionModel(s, logits, in.rec.floored()));
        x = saved - kStep;
        const double down = objective(in.gen, RecognitionModel(s, logits, in.rec.floored()));
        x = saved;
        err = std::max(err, relative_error(og.grad.rec[f].data()[k], (up - down) / (2 * kStep)));
      }
    }

    using Member = ConditionalTable GenerativeModel::*;
    const std::pair<Member, const Eigen::MatrixXd*> tables[] = {
        {&GenerativeModel::lik, &og.grad.lik},   {&GenerativeModel::dyn1, &og.grad.dyn1},
        {&GenerativeModel::dyn2, &og.grad.dyn2}, {&GenerativeModel::pol0, &og.grad.pol0},
        {&GenerativeModel::pol1, &og.grad.pol1}, {&GenerativeModel::pol2, &og.grad.pol2}};
    for (const auto& [member, grad] : tables) {
      const ConditionalTable& table = in.gen.*member;
      Eigen::MatrixXd lg = table.probs().array().log().matrix();
      for (Eigen::Index k = 0; k < lg.size(); ++k) {
        const double saved = lg.data()[k];
        GenerativeModel g = in.gen;
        lg.data()[k] = saved + kStep;
        g.*member = ConditionalTable::from_logits(table.parent_dims(), lg, table.strictly_positive());
        const double up = objective(g, in.rec);
        lg.data()[k] = saved - kStep;
        g.*member = ConditionalTable::from_logits(table.parent_dims(), lg, table.strictly_positive());
        const double down = objective(g, in.rec);
        lg.data()[k] = saved;
        err = std::max(err, relative_error(grad->data()[k], (up - down) / (2 * kStep)));
      }
    }
    return err;
  });
}

std::vector<CheckResult> run_suite(const SuiteOptions& opts) {
  SuiteOptions light = opts;
  light.instances = std::max(1, std::min(opts.instances, 20));
  return {check_transition_normalization(opts),
          check_recognition_normalization(opts),
          check_enumeration(light),
          check_posterior(opts),
          check_free_energy(opts),
          check_surprisal_bound(opts),
          check_qstar_normalization(opts),
          check_kl_identity(opts),
          check_soft_value(opts),
          check_jensen(opts),
          check_jensen_equality(opts),
          check_rvi(opts),
          check_rvi_rollout(opts, 100000, 1),
          check_gradient(light)};
}

std::string report_json(const std::vector<CheckResult>& results) {
  nlohmann::json checks = nlohmann::json::array();
  bool all = true;
  for (const CheckResult& r : results) {
    all = all && r.passed;
    nlohmann::json c = {{"name", r.name},
                        {"passed", r.passed},
                        {"max_error", std::isfinite(r.max_error) ? nlohmann::json(r.max_error) : nlohmann::json(nullptr)},
                        {"tolerance", r.tolerance},
                        {"instances", r.instances},
                        {"seconds", r.seconds}};
    if (!r.detail.empty()) c["detail"] = r.detail;
    checks.push_back(std::move(c));
  }
  return nlohmann::json{{"passed", all}, {"checks", checks}}.dump(2) + "\n";
}

}  // namespace asc::validate
