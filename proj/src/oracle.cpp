#include "asc/oracle.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "asc/logspace.hpp"
#include "asc/objectives.hpp"

namespace asc::oracle {

namespace {

void require_paths(std::size_t states, int horizon, const EnumerationBudget& budget) {
  double count = 1.0;
  for (int t = 0; t < horizon; ++t) count *= double(states);
  if (count > double(budget.max_trajectories)) {
    throw Error(ErrorKind::EnumerationBudget, std::to_string(states) + "^" + std::to_string(horizon) +
                                                  " trajectories exceed budget " +
                                                  std::to_string(budget.max_trajectories));
  }
}

int phase_of(int t, const ModelSpec& spec) { return (t - 1) % spec.tick_period_level2; }

/// Per-phase kernels and costs; the chain is time-homogeneous within a phase.
struct PhaseCache {
  std::vector<Eigen::MatrixXd> kernel;
  std::vector<Eigen::MatrixXd> cost;

  PhaseCache(RolloutDensity density, const Models& m, const EnumerationBudget& budget) {
    for (int k = 0; k < m.gen.spec.tick_period_level2; ++k) {
      kernel.push_back(transition_matrix(density, m, k + 1, budget));
      cost.push_back(cost_matrix(density, m, k + 1, budget));
    }
  }
  const Eigen::MatrixXd& K(int t, const ModelSpec& s) const { return kernel[std::size_t(phase_of(t, s))]; }
  const Eigen::MatrixXd& C(int t, const ModelSpec& s) const { return cost[std::size_t(phase_of(t, s))]; }
};

}  // namespace

void enumerate_trajectories(const GenerativeModel& gen, const CompleteState& x0, int horizon,
                            const TrajectoryVisitor& visit, const EnumerationBudget& budget) {
  const ModelSpec& s = gen.spec;
  s.require_enumerable(budget.max_states);
  require_paths(s.state_count(), horizon, budget);
  check_state(s, x0);
  const std::size_t n = s.state_count();

  Trajectory traj{x0, std::vector<CompleteState>(std::size_t(horizon))};
  std::function<void(int, const CompleteState&, double)> descend = [&](int t, const CompleteState& prev, double lp) {
    if (t > horizon) {
      visit(traj, lp);
      return;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const CompleteState x = state_at(s, i);
      const double step = transition_logprob(gen, prev, x, t);
      if (step == neg_inf()) continue;
      traj.steps[std::size_t(t - 1)] = x;
      descend(t + 1, x, lp + step);
    }
  };
  descend(1, x0, 0.0);
}

double step_log_evidence(const GenerativeModel& gen, const CompleteState& prev, int o, int t) {
  const Eigen::VectorXd prior = latent_prior(gen, prev, t);
  const Eigen::VectorXd lik = observation_likelihood(gen, o);
  Eigen::VectorXd log_joint(prior.size());
  for (Eigen::Index i = 0; i < prior.size(); ++i) {
    log_joint(i) = (prior(i) > 0.0 && lik(i) > 0.0) ? std::log(prior(i)) + std::log(lik(i)) : neg_inf();
  }
  return log_sum_exp(log_joint);
}

Eigen::VectorXd step_posterior(const GenerativeModel& gen, const CompleteState& prev, int o, int t) {
  const double evidence = step_log_evidence(gen, prev, o, t);
  if (evidence == neg_inf()) throw Error(ErrorKind::ImpossibleObservation, "observation has zero marginal");
  const Eigen::VectorXd prior = latent_prior(gen, prev, t);
  const Eigen::VectorXd lik = observation_likelihood(gen, o);
  Eigen::VectorXd post(prior.size());
  for (Eigen::Index i = 0; i < prior.size(); ++i) {
    post(i) = (prior(i) > 0.0 && lik(i) > 0.0) ? std::exp(std::log(prior(i)) + std::log(lik(i)) - evidence) : 0.0;
  }
  return post;
}

namespace {

/// Visits every completion (latents and actions) consistent with the observations.
void enumerate_completions(const GenerativeModel& gen, const CompleteState& x0, const std::vector<int>& obs,
                           const EnumerationBudget& budget, const TrajectoryVisitor& visit) {
  const ModelSpec& s = gen.spec;
  s.require_enumerable(budget.max_states);
  check_state(s, x0);
  for (int o : obs) {
    if (o < 0 || o >= s.card_o) throw Error(ErrorKind::Dimension, "observation symbol out of range");
  }
  const std::size_t per_step = s.state_count() / std::size_t(s.card_o);
  require_paths(per_step, int(obs.size()), budget);

  const int horizon = int(obs.size());
  Trajectory traj{x0, std::vector<CompleteState>(obs.size())};
  std::function<void(int, const CompleteState&, double)> descend = [&](int t, const CompleteState& prev, double lp) {
    if (t > horizon) {
      visit(traj, lp);
      return;
    }
    for (std::size_t i = 0; i < per_step; ++i) {
      // States with o fixed occupy a contiguous block since o is the slowest index.
      const CompleteState x = state_at(s, std::size_t(obs[std::size_t(t - 1)]) * per_step + i);
      const double step = transition_logprob(gen, prev, x, t);
      if (step == neg_inf()) continue;
      traj.steps[std::size_t(t - 1)] = x;
      descend(t + 1, x, lp + step);
    }
  };
  descend(1, x0, 0.0);
}

}  // namespace

double exact_marginal_likelihood(const GenerativeModel& gen, const CompleteState& x0,
                                 const std::vector<int>& observations, const EnumerationBudget& budget) {
  double acc = neg_inf();
  enumerate_completions(gen, x0, observations, budget,
                        [&](const Trajectory&, double lp) { acc = log_add(acc, lp); });
  return acc;
}

std::vector<PosteriorEntry> exact_posterior(const GenerativeModel& gen, const CompleteState& x0,
                                            const std::vector<int>& observations,
                                            const EnumerationBudget& budget) {
  std::vector<PosteriorEntry> out;
  double evidence = neg_inf();
  enumerate_completions(gen, x0, observations, budget, [&](const Trajectory& traj, double lp) {
    out.push_back({traj, lp, 0.0});
    evidence = log_add(evidence, lp);
  });
  if (evidence == neg_inf()) throw Error(ErrorKind::ImpossibleObservation, "observations have zero marginal");
  for (auto& e : out) e.prob = std::exp(e.log_joint - evidence);
  return out;
}

Eigen::MatrixXd transition_matrix(RolloutDensity density, const Models& m, int t, const EnumerationBudget& budget) {
  const ModelSpec& s = m.gen.spec;
  s.require_enumerable(budget.max_states);
  const auto n = Eigen::Index(s.state_count());
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    const CompleteState prev = state_at(s, std::size_t(p));
    if (density == RolloutDensity::Feedforward) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double lp = transition_logprob(m.gen, prev, state_at(s, std::size_t(i)), t);
        K(p, i) = lp == neg_inf() ? 0.0 : std::exp(lp);
      }
      continue;
    }
    const Eigen::MatrixXd emission = emission_marginal(m.gen, prev, t);
    for (int o = 0; o < s.card_o; ++o) {
      for (int a = 0; a < s.card_a; ++a) {
        if (emission(o, a) <= 0.0) continue;
        const Eigen::VectorXd q = m.rec.distribution({o, a, prev, std::nullopt, t});
        for (std::size_t z = 0; z < s.latent_count(); ++z) {
          const auto i = Eigen::Index(flat_index(s, compose(o, a, latents_at(s, z))));
          K(p, i) = emission(o, a) * q(Eigen::Index(z));
        }
      }
    }
  }
  return K;
}

Eigen::MatrixXd cost_matrix(RolloutDensity density, const Models& m, int t, const EnumerationBudget& budget) {
  const ModelSpec& s = m.gen.spec;
  s.require_enumerable(budget.max_states);
  const auto n = Eigen::Index(s.state_count());
  Eigen::MatrixXd C(n, n);
  if (density == RolloutDensity::Feedforward) {
    Eigen::RowVectorXd c(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const CompleteState x = state_at(s, std::size_t(i));
      c(i) = reference_surprisal(m.ref, x) + likelihood_surprisal(m.gen, x);
    }
    C.rowwise() = c;
    return C;
  }
  for (Eigen::Index p = 0; p < n; ++p) {
    const CompleteState prev = state_at(s, std::size_t(p));
    for (int o = 0; o < s.card_o; ++o) {
      for (int a = 0; a < s.card_a; ++a) {
        const double total = step_objective(m.gen, m.rec, m.ref, {o, a, prev, std::nullopt, t}).total;
        for (std::size_t z = 0; z < s.latent_count(); ++z) {
          C(p, Eigen::Index(flat_index(s, compose(o, a, latents_at(s, z))))) = total;
        }
      }
    }
  }
  return C;
}

void enumerate_paths(RolloutDensity density, const Models& m, const CompleteState& x0, int horizon,
                     const PathVisitor& visit, const EnumerationBudget& budget) {
  const ModelSpec& s = m.gen.spec;
  s.require_enumerable(budget.max_states);
  require_paths(s.state_count(), horizon, budget);
  check_state(s, x0);
  const PhaseCache cache(density, m, budget);
  const auto n = Eigen::Index(s.state_count());

  std::vector<std::size_t> path(static_cast<std::size_t>(horizon));
  std::function<void(int, Eigen::Index, double, double)> descend = [&](int t, Eigen::Index prev, double lp,
                                                                       double cost) {
    if (t > horizon) {
      visit(path, lp, cost);
      return;
    }
    const Eigen::MatrixXd& K = cache.K(t, s);
    const Eigen::MatrixXd& C = cache.C(t, s);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (K(prev, i) <= 0.0) continue;
      path[std::size_t(t - 1)] = std::size_t(i);
      descend(t + 1, i, lp + std::log(K(prev, i)), cost + C(prev, i));
    }
  };
  descend(1, Eigen::Index(flat_index(s, x0)), 0.0, 0.0);
}

namespace {

/// Expected step cost at each t = 1..steps from x0 by forward propagation.
std::vector<double> expected_costs(const PhaseCache& cache, const ModelSpec& s, const CompleteState& x0, int steps) {
  Eigen::RowVectorXd d = Eigen::RowVectorXd::Zero(Eigen::Index(s.state_count()));
  d(Eigen::Index(flat_index(s, x0))) = 1.0;
  std::vector<double> out;
  for (int t = 1; t <= steps; ++t) {
    const Eigen::MatrixXd& K = cache.K(t, s);
    const Eigen::MatrixXd& C = cache.C(t, s);
    const Eigen::VectorXd row_cost = K.binaryExpr(C, [](double k, double c) { return k > 0.0 ? k * c : 0.0; })
                                         .rowwise()
                                         .sum();
    out.push_back(expect(d.transpose(), row_cost));
    d = d * K;
  }
  return out;
}

}  // namespace

double exact_average_rate(RolloutDensity density, const Models& m, const CompleteState& x0, int burn_in,
                          int eval_steps, const EnumerationBudget& budget) {
  if (burn_in < 0 || eval_steps < 1) throw Error(ErrorKind::InvalidArgument, "need burn_in >= 0 and eval_steps >= 1");
  check_state(m.gen.spec, x0);
  const PhaseCache cache(density, m, budget);
  const auto costs = expected_costs(cache, m.gen.spec, x0, burn_in + eval_steps);
  double acc = 0.0;
  for (int t = burn_in; t < burn_in + eval_steps; ++t) acc += costs[std::size_t(t)];
  return acc / double(eval_steps);
}

double exact_expected_advantage_sum(RolloutDensity density, const Models& m, const CompleteState& x0, int horizon,
                                    double rate, const EnumerationBudget& budget) {
  check_state(m.gen.spec, x0);
  const PhaseCache cache(density, m, budget);
  double acc = 0.0;
  for (double c : expected_costs(cache, m.gen.spec, x0, horizon)) acc += c - rate;
  return acc;
}

SoftValue exact_soft_value(RolloutDensity density, const Models& m, const CompleteState& x0, int horizon, double rate,
                           const EnumerationBudget& budget) {
  if (horizon < 1) throw Error(ErrorKind::InvalidArgument, "horizon must be >= 1");
  const ModelSpec& s = m.gen.spec;
  check_state(s, x0);
  const PhaseCache cache(density, m, budget);
  const auto n = Eigen::Index(s.state_count());

  SoftValue out;
  out.to_go.assign(std::size_t(horizon + 1), Eigen::VectorXd::Zero(n));
  if (density == RolloutDensity::Feedforward) out.stage.assign(std::size_t(horizon), Eigen::VectorXd::Zero(n));

  Eigen::VectorXd terms(n);
  for (int t = horizon; t >= 1; --t) {
    const Eigen::MatrixXd& K = cache.K(t, s);
    const Eigen::MatrixXd& C = cache.C(t, s);
    const Eigen::VectorXd& next = out.to_go[std::size_t(t)];
    Eigen::VectorXd& cur = out.to_go[std::size_t(t - 1)];
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index i = 0; i < n; ++i) {
        terms(i) = K(p, i) > 0.0 ? std::log(K(p, i)) - (C(p, i) - rate) - next(i) : neg_inf();
      }
      cur(p) = -log_sum_exp(terms);
    }
    if (density == RolloutDensity::Feedforward) {
      // Feedforward costs depend on the successor only, so row 0 holds them all.
      out.stage[std::size_t(t - 1)] = (C.row(0).transpose().array() - rate).matrix() + next;
    }
  }
  out.root = out.to_go[0](Eigen::Index(flat_index(s, x0)));
  return out;
}

double exact_path_integral_value(RolloutDensity density, const Models& m, const CompleteState& x0, int horizon,
                                 double rate, const EnumerationBudget& budget) {
  double acc = neg_inf();
  enumerate_paths(
      density, m, x0, horizon,
      [&](const std::vector<std::size_t>&, double lp, double cost) {
        acc = log_add(acc, lp - (cost - double(horizon) * rate));
      },
      budget);
  return -acc;
}

double exact_decision_rule_rate(const GenerativeModel& gen, const ReferenceModel& ref, const DecisionRule& rule,
                                const CompleteState& x0, int burn_in, int eval_steps,
                                const EnumerationBudget& budget) {
  const ModelSpec& s = gen.spec;
  s.require_enumerable(budget.max_states);
  check_state(s, x0);
  const auto n = Eigen::Index(s.state_count());
  const int period = s.tick_period_level2;
  if (rule.actions.rows() != n || rule.actions.cols() != period) {
    throw Error(ErrorKind::Dimension, "decision rule shape does not match the model spec");
  }

  Eigen::VectorXd cost(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const CompleteState x = state_at(s, std::size_t(i));
    cost(i) = reference_surprisal(ref, x) + likelihood_surprisal(gen, x);
  }

  // Controlled kernel per phase: actions of the successor are forced by the rule.
  std::vector<Eigen::MatrixXd> kernel(std::size_t(period), Eigen::MatrixXd::Zero(n, n));
  for (int k = 0; k < period; ++k) {
    for (Eigen::Index p = 0; p < n; ++p) {
      const CompleteState prev = state_at(s, std::size_t(p));
      const ActionTuple u = action_at(s, std::size_t(rule.actions(p, k)));
      for (int s2 = 0; s2 < s.card_s2; ++s2) {
        const double p2 = k == 0 ? gen.dyn2.prob(gen.dyn2.row_index({prev.s2, prev.a}), s2) : double(s2 == prev.s2);
        if (p2 <= 0.0) continue;
        for (int s1 = 0; s1 < s.card_s1; ++s1) {
          const double p1 = p2 * gen.dyn1.prob(gen.dyn1.row_index({prev.s1, s2, prev.a}), s1);
          for (int o = 0; o < s.card_o; ++o) {
            const double po = p1 * gen.lik.prob(gen.lik.row_index({u.a1, s1}), o);
            const CompleteState x{o, s1, s2, u.a, u.a1, u.a2};
            kernel[std::size_t(k)](p, Eigen::Index(flat_index(s, x))) += po;
          }
        }
      }
    }
  }

  Eigen::RowVectorXd d = Eigen::RowVectorXd::Zero(n);
  d(Eigen::Index(flat_index(s, x0))) = 1.0;
  double acc = 0.0;
  for (int t = 1; t <= burn_in + eval_steps; ++t) {
    d = d * kernel[std::size_t(phase_of(t, s))];
    if (t > burn_in) acc += expect(d.transpose(), cost);
  }
  return acc / double(eval_steps);
}

}  // namespace asc::oracle
