#include "asc/control.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "asc/logspace.hpp"

namespace asc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int phase_of(int t, const ModelSpec& spec) { return (t - 1) % spec.tick_period_level2; }

struct Successor {
  Eigen::Index state;
  double prob;
};

/// Successor lists of the controlled chain for every (carry, phase, action).
class ControlledChain {
 public:
  ControlledChain(const GenerativeModel& gen, const ReferenceModel& ref) : spec_(gen.spec) {
    const ModelSpec& s = spec_;
    s.validate();
    s.require_enumerable(enumeration_budget());
    const auto n = Eigen::Index(s.state_count());
    cost_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const CompleteState x = state_at(s, std::size_t(i));
      cost_(i) = reference_surprisal(ref, x) + likelihood_surprisal(gen, x);
    }
    actions_ = action_count(s);
    succ_.resize(s.carry_count() * std::size_t(s.tick_period_level2) * actions_);
    for (std::size_t y = 0; y < s.carry_count(); ++y) {
      const CompleteState prev = carry_state(s, y);
      for (int k = 0; k < s.tick_period_level2; ++k) {
        for (std::size_t ui = 0; ui < actions_; ++ui) {
          const ActionTuple u = action_at(s, ui);
          auto& list = succ_[slot(y, k, ui)];
          for (int s2 = 0; s2 < s.card_s2; ++s2) {
            const double p2 = k == 0 ? gen.dyn2.prob(gen.dyn2.row_index({prev.s2, prev.a}), s2)
                                     : (s2 == prev.s2 ? 1.0 : 0.0);
            if (p2 <= 0.0) continue;
            for (int s1 = 0; s1 < s.card_s1; ++s1) {
              const double p1 = p2 * gen.dyn1.prob(gen.dyn1.row_index({prev.s1, s2, prev.a}), s1);
              if (p1 <= 0.0) continue;
              for (int o = 0; o < s.card_o; ++o) {
                const double po = p1 * gen.lik.prob(gen.lik.row_index({u.a1, s1}), o);
                if (po <= 0.0) continue;
                list.push_back({Eigen::Index(flat_index(s, {o, s1, s2, u.a, u.a1, u.a2})), po});
              }
            }
          }
        }
      }
    }
  }

  const ModelSpec& spec() const { return spec_; }
  std::size_t actions() const { return actions_; }
  const Eigen::VectorXd& cost() const { return cost_; }
  const std::vector<Successor>& successors(std::size_t carry, int phase, std::size_t action) const {
    return succ_[slot(carry, phase, action)];
  }

  /// E[c(x') + h(x', next phase)] for one (carry, phase, action).
  double q_value(std::size_t carry, int phase, std::size_t action, const Eigen::MatrixXd& bias) const {
    const int next = (phase + 1) % spec_.tick_period_level2;
    double acc = 0.0;
    for (const auto& sx : successors(carry, phase, action)) acc += sx.prob * (cost_(sx.state) + bias(sx.state, next));
    return acc;
  }

  /// Bellman operator T h and its argmin (lowest index among ties).
  void backup(const Eigen::MatrixXd& bias, Eigen::MatrixXd& out, Eigen::MatrixXi& argmin) const {
    const ModelSpec& s = spec_;
    const auto n = Eigen::Index(s.state_count());
    const int period = s.tick_period_level2;
    Eigen::MatrixXd per_carry(Eigen::Index(s.carry_count()), period);
    Eigen::MatrixXi arg_carry(Eigen::Index(s.carry_count()), period);
    for (std::size_t y = 0; y < s.carry_count(); ++y) {
      for (int k = 0; k < period; ++k) {
        double best = kInf;
        int best_u = 0;
        for (std::size_t u = 0; u < actions_; ++u) {
          const double q = q_value(y, k, u, bias);
          const double threshold = std::isfinite(best) ? best - 1e-12 * std::max(1.0, std::abs(best)) : best;
          if (u == 0 || q < threshold) {
            best = q;
            best_u = int(u);
          }
        }
        per_carry(Eigen::Index(y), k) = best;
        arg_carry(Eigen::Index(y), k) = best_u;
      }
    }
    out.resize(n, period);
    argmin.resize(n, period);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto y = Eigen::Index(carry_index(s, state_at(s, std::size_t(i))));
      out.row(i) = per_carry.row(y);
      argmin.row(i) = arg_carry.row(y);
    }
  }

 private:
  std::size_t slot(std::size_t carry, int phase, std::size_t action) const {
    return (carry * std::size_t(spec_.tick_period_level2) + std::size_t(phase)) * actions_ + action;
  }

  ModelSpec spec_;
  Eigen::VectorXd cost_;
  std::size_t actions_ = 0;
  std::vector<std::vector<Successor>> succ_;
};

}  // namespace

Eigen::VectorXd DifferentialValue::bias_at(const ModelSpec& spec, int t) const {
  return bias.col(phase_of(t, spec));
}

DifferentialValue relative_value_iteration(const GenerativeModel& gen, const ReferenceModel& ref,
                                           const RviOptions& options) {
  if (!(options.tol > 0.0)) throw Error(ErrorKind::InvalidArgument, "tolerance must be positive");
  if (!(options.damping > 0.0 && options.damping <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "damping must lie in (0, 1]");
  }
  gen.validate();
  ref.validate(gen.spec);
  const ControlledChain chain(gen, ref);
  const ModelSpec& s = gen.spec;
  const auto n = Eigen::Index(s.state_count());

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, s.tick_period_level2);
  if (options.initial_bias) {
    if (options.initial_bias->rows() != n || options.initial_bias->cols() != s.tick_period_level2) {
      throw Error(ErrorKind::Dimension, "initial bias shape does not match the model spec");
    }
    h = options.initial_bias->array() - (*options.initial_bias)(0, 0);
  }

  Eigen::MatrixXd th;
  Eigen::MatrixXi argmin;
  double residual = kInf;
  for (int iter = 0; iter < options.max_iter; ++iter) {
    chain.backup(h, th, argmin);
    const double gain = th(0, 0) - h(0, 0);
    const Eigen::MatrixXd diff = (th - h).array() - gain;
    residual = diff.cwiseAbs().maxCoeff();
    if (!std::isfinite(residual)) {
      throw Error(ErrorKind::NonFinite, "non-finite Bellman residual", std::size_t(iter), residual);
    }
    if (residual <= options.tol) {
      DifferentialValue v;
      v.gain = gain;
      v.bias = h;
      v.anchor = state_at(s, 0);
      v.anchor_phase = 0;
      v.greedy.actions = argmin;
      v.residual = residual;
      v.iterations = iter;
      return v;
    }
    h += options.damping * diff;
  }
  throw Error(ErrorKind::NonConvergence, "relative value iteration did not reach tolerance",
              std::size_t(options.max_iter), residual);
}

double bellman_residual(const GenerativeModel& gen, const ReferenceModel& ref, double gain,
                        const Eigen::MatrixXd& bias) {
  const ControlledChain chain(gen, ref);
  Eigen::MatrixXd th;
  Eigen::MatrixXi argmin;
  chain.backup(bias, th, argmin);
  return ((th - bias).array() - gain).abs().maxCoeff();
}

double stationary_rule_rate(const GenerativeModel& gen, const ReferenceModel& ref, const DecisionRule& rule) {
  const ControlledChain chain(gen, ref);
  const ModelSpec& s = gen.spec;
  const auto n = Eigen::Index(s.state_count());
  const int period = s.tick_period_level2;
  const Eigen::Index m = n * period;
  auto aug = [&](Eigen::Index x, int k) { return Eigen::Index(k) * n + x; };

  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index x = 0; x < n; ++x) {
    const std::size_t y = carry_index(s, state_at(s, std::size_t(x)));
    for (int k = 0; k < period; ++k) {
      for (const auto& sx : chain.successors(y, k, std::size_t(rule.actions(x, k)))) {
        P(aug(x, k), aug(sx.state, (k + 1) % period)) += sx.prob;
      }
    }
  }
  // pi (P - I) = 0 with sum(pi) = 1, solved in the least-squares sense.
  Eigen::MatrixXd A(m + 1, m);
  A.topRows(m) = P.transpose() - Eigen::MatrixXd::Identity(m, m);
  A.row(m).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m + 1);
  b(m) = 1.0;
  const Eigen::VectorXd pi = A.colPivHouseholderQr().solve(b);
  double rate = 0.0;
  for (int k = 0; k < period; ++k) rate += pi.segment(Eigen::Index(k) * n, n).dot(chain.cost());
  return rate;
}

std::vector<double> simulate_rule(const GenerativeModel& gen, const ReferenceModel& ref, const DecisionRule& rule,
                                  const CompleteState& x0, int steps, std::uint64_t seed) {
  const ControlledChain chain(gen, ref);
  const ModelSpec& s = gen.spec;
  check_state(s, x0);
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> costs;
  costs.reserve(std::size_t(steps));
  auto x = Eigen::Index(flat_index(s, x0));
  for (int t = 1; t <= steps; ++t) {
    const int k = phase_of(t, s);
    const auto& list = chain.successors(carry_index(s, state_at(s, std::size_t(x))), k, std::size_t(rule.actions(x, k)));
    const double u = unif(rng);
    double acc = 0.0;
    Eigen::Index next = list.back().state;
    for (const auto& sx : list) {
      acc += sx.prob;
      if (u < acc) {
        next = sx.state;
        break;
      }
    }
    x = next;
    costs.push_back(chain.cost()(x));
  }
  return costs;
}

// ---------------------------------------------------------------------------
// Soft control

Eigen::VectorXd feedforward_row(const GenerativeModel& gen, const CompleteState& x, int t_next) {
  const ModelSpec& s = gen.spec;
  Eigen::VectorXd p(Eigen::Index(s.state_count()));
  for (std::size_t i = 0; i < s.state_count(); ++i) {
    const double lp = transition_logprob(gen, x, state_at(s, i), t_next);
    p(Eigen::Index(i)) = lp == neg_inf() ? 0.0 : std::exp(lp);
  }
  return p;
}

namespace {

/// log p(x') - H(x') per successor; -inf off the support.
Eigen::VectorXd tilted_log_weights(const Eigen::VectorXd& p, const Eigen::VectorXd& to_go) {
  Eigen::VectorXd lw(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    lw(i) = (p(i) > 0.0 && to_go(i) < kInf) ? std::log(p(i)) - to_go(i) : neg_inf();
  }
  return lw;
}

}  // namespace

Eigen::VectorXd optimal_transition(const GenerativeModel& gen, const Eigen::VectorXd& to_go, const CompleteState& x,
                                   int t_next) {
  const Eigen::VectorXd p = feedforward_row(gen, x, t_next);
  if (to_go.size() != p.size()) throw Error(ErrorKind::Dimension, "value table size does not match state count");
  if (to_go.hasNaN() || (to_go.array() == -kInf).any()) {
    throw Error(ErrorKind::NonFinite, "surprise-to-go must be finite or +inf");
  }
  const Eigen::VectorXd lw = tilted_log_weights(p, to_go);
  const double z = log_sum_exp(lw);
  if (z == neg_inf()) throw Error(ErrorKind::EmptySupport, "no successor carries positive weight");
  return exp_shifted(lw.array(), z).matrix();
}

Eigen::VectorXd optimal_transition(const GenerativeModel& gen, const DifferentialValue& value,
                                   const CompleteState& x, int t_next) {
  // The successor's value is the bias for the step that follows it.
  return optimal_transition(gen, value.bias_at(gen.spec, t_next + 1), x, t_next);
}

KlIdentity kl_qstar_identity(const GenerativeModel& gen, const Eigen::VectorXd& to_go, const CompleteState& x,
                             int t_next) {
  const Eigen::VectorXd p = feedforward_row(gen, x, t_next);
  const Eigen::VectorXd q = optimal_transition(gen, to_go, x, t_next);
  KlIdentity out;
  double expected_to_go = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q(i) <= 0.0) continue;
    out.lhs += q(i) * (std::log(q(i)) - std::log(p(i)));
    expected_to_go += q(i) * to_go(i);
  }
  out.rhs = -expected_to_go - log_sum_exp(tilted_log_weights(p, to_go));
  return out;
}

// ---------------------------------------------------------------------------
// Rollouts

namespace {

/// One-step sampler for either density with per-context caching of the
/// feedback step objective and recognition distribution.
class StepSampler {
 public:
  StepSampler(RolloutDensity density, const Models& m) : density_(density), m_(m) {}

  /// Samples x_t given x_{t-1}; returns the step cost.
  double step(const CompleteState& prev, int t, Rng& rng, CompleteState& out) {
    const ModelSpec& s = m_.gen.spec;
    if (density_ == RolloutDensity::Feedforward) {
      out = sample_transition(m_.gen, prev, t, rng);
      return reference_surprisal(m_.ref, out) + likelihood_surprisal(m_.gen, out);
    }
    Entry& e = carry_entry(prev, t);
    const int oa = sample_categorical(e.emission, rng);
    const int o = oa / s.card_a;
    const int a = oa % s.card_a;
    const Context& c = context_entry(e, prev, o, a, t);
    out = compose(o, a, latents_at(s, std::size_t(sample_categorical(c.q, rng))));
    return c.total;
  }

 private:
  struct Context {
    bool ready = false;
    Eigen::VectorXd q;
    double total = 0.0;
  };
  struct Entry {
    bool ready = false;
    Eigen::VectorXd emission;  // flattened (o, a)
    std::vector<Context> contexts;
  };

  Entry& carry_entry(const CompleteState& prev, int t) {
    const ModelSpec& s = m_.gen.spec;
    const std::size_t slot = carry_index(s, prev) * std::size_t(s.tick_period_level2) + std::size_t(phase_of(t, s));
    if (cache_.size() <= slot) cache_.resize(s.carry_count() * std::size_t(s.tick_period_level2));
    Entry& e = cache_[slot];
    if (!e.ready) {
      const Eigen::MatrixXd em = emission_marginal(m_.gen, prev, t);
      e.emission.resize(em.size());
      for (int o = 0; o < s.card_o; ++o)
        for (int a = 0; a < s.card_a; ++a) e.emission(o * s.card_a + a) = em(o, a);
      e.contexts.resize(std::size_t(em.size()));
      e.ready = true;
    }
    return e;
  }

  const Context& context_entry(Entry& e, const CompleteState& prev, int o, int a, int t) {
    Context& c = e.contexts[std::size_t(o * m_.gen.spec.card_a + a)];
    if (!c.ready) {
      const RecognitionContext ctx{o, a, prev, std::nullopt, t};
      c.q = m_.rec.distribution(ctx);
      c.total = step_objective(m_.gen, m_.ref, ctx, c.q).total;
      c.ready = true;
    }
    return c;
  }

  RolloutDensity density_;
  Models m_;
  std::vector<Entry> cache_;
};

Rng rollout_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(index), std::uint32_t(index >> 32)};
  return Rng(seq);
}

std::vector<double> rollout_costs(RolloutDensity density, const Models& m, const CompleteState& x0, int horizon,
                                  std::size_t rollouts, std::uint64_t seed) {
  check_state(m.gen.spec, x0);
  StepSampler sampler(density, m);
  std::vector<double> sums(rollouts);
  for (std::size_t i = 0; i < rollouts; ++i) {
    Rng rng = rollout_stream(seed, i);
    CompleteState x = x0;
    double acc = 0.0;
    for (int t = 1; t <= horizon; ++t) {
      CompleteState next;
      acc += sampler.step(x, t, rng, next);
      x = next;
    }
    sums[i] = acc;
  }
  return sums;
}

}  // namespace

PathIntegralEstimate mc_path_integral_value(RolloutDensity density, const Models& m, const CompleteState& x0,
                                            int horizon, double rate, std::size_t rollouts, std::uint64_t seed) {
  if (rollouts < 2) throw Error(ErrorKind::InvalidArgument, "need at least two rollouts");
  const std::vector<double> sums = rollout_costs(density, m, x0, horizon, rollouts, seed);
  Eigen::VectorXd log_w(static_cast<Eigen::Index>(rollouts));
  for (std::size_t i = 0; i < rollouts; ++i) log_w(Eigen::Index(i)) = -(sums[i] - double(horizon) * rate);
  const double shift = log_w.maxCoeff();
  if (!std::isfinite(shift)) throw Error(ErrorKind::DegenerateWeights, "every rollout carries zero weight");
  const Eigen::ArrayXd w = exp_shifted(log_w.array(), shift);
  const double mean = w.mean();
  const double var = (w - mean).square().sum() / double(rollouts - 1);
  PathIntegralEstimate out;
  out.estimate = -(shift + std::log(mean));
  out.stderr_ = std::sqrt(var / double(rollouts)) / mean;
  return out;
}

CarryStep carry_step(RolloutDensity density, const Models& m, int t) {
  const ModelSpec& s = m.gen.spec;
  const auto ny = Eigen::Index(s.carry_count());
  CarryStep out{Eigen::MatrixXd::Zero(ny, ny), Eigen::VectorXd::Zero(ny)};
  for (Eigen::Index y = 0; y < ny; ++y) {
    const CompleteState prev = carry_state(s, std::size_t(y));
    if (density == RolloutDensity::Feedforward) {
      const Eigen::VectorXd prior = latent_prior(m.gen, prev, t);
      for (std::size_t zi = 0; zi < s.latent_count(); ++zi) {
        const double pz = prior(Eigen::Index(zi));
        if (pz <= 0.0) continue;
        const Latents z = latents_at(s, zi);
        for (int o = 0; o < s.card_o; ++o) {
          const double po = pz * m.gen.lik.prob(m.gen.lik.row_index({z.a1, z.s1}), o);
          if (po <= 0.0) continue;
          const CompleteState x = compose(o, 0, z);
          out.cost(y) += po * (reference_surprisal(m.ref, x) + likelihood_surprisal(m.gen, x));
          const auto pol = m.gen.pol0.row(m.gen.pol0.row_index({o, z.a1}));
          for (int a = 0; a < s.card_a; ++a) {
            out.transition(y, Eigen::Index(carry_index(s, z.s1, z.s2, a))) += po * pol(a);
          }
        }
      }
      continue;
    }
    const Eigen::MatrixXd emission = emission_marginal(m.gen, prev, t);
    for (int o = 0; o < s.card_o; ++o) {
      for (int a = 0; a < s.card_a; ++a) {
        const double pe = emission(o, a);
        if (pe <= 0.0) continue;
        const RecognitionContext ctx{o, a, prev, std::nullopt, t};
        const Eigen::VectorXd q = m.rec.distribution(ctx);
        out.cost(y) += pe * step_objective(m.gen, m.ref, ctx, q).total;
        for (std::size_t zi = 0; zi < s.latent_count(); ++zi) {
          const Latents z = latents_at(s, zi);
          out.transition(y, Eigen::Index(carry_index(s, z.s1, z.s2, a))) += pe * q(Eigen::Index(zi));
        }
      }
    }
  }
  return out;
}

namespace {

std::vector<double> carry_expected_costs(RolloutDensity density, const Models& m, const CompleteState& x0,
                                         int steps) {
  const ModelSpec& s = m.gen.spec;
  check_state(s, x0);
  std::vector<CarryStep> phases;
  for (int k = 0; k < s.tick_period_level2; ++k) phases.push_back(carry_step(density, m, k + 1));
  Eigen::RowVectorXd d = Eigen::RowVectorXd::Zero(Eigen::Index(s.carry_count()));
  d(Eigen::Index(carry_index(s, x0))) = 1.0;
  std::vector<double> out;
  out.reserve(std::size_t(steps));
  for (int t = 1; t <= steps; ++t) {
    const CarryStep& cs = phases[std::size_t(phase_of(t, s))];
    out.push_back(expect(d.transpose(), cs.cost));
    d = d * cs.transition;
  }
  return out;
}

}  // namespace

PathIntegralEstimate differential_free_energy(RolloutDensity density, const Models& m, const CompleteState& x0,
                                              int horizon, double rate, const EstimatorOptions& est) {
  if (horizon < 1) throw Error(ErrorKind::InvalidArgument, "horizon must be >= 1");
  if (est.kind == Estimator::Exact) {
    double acc = 0.0;
    for (double c : carry_expected_costs(density, m, x0, horizon)) acc += c - rate;
    return {acc, 0.0};
  }
  if (est.rollouts < 2) throw Error(ErrorKind::InvalidArgument, "need at least two rollouts");
  const std::vector<double> sums = rollout_costs(density, m, x0, horizon, est.rollouts, est.seed);
  const Eigen::Map<const Eigen::ArrayXd> v(sums.data(), Eigen::Index(sums.size()));
  const double mean = v.mean() - double(horizon) * rate;
  const double var = (v - v.mean()).square().sum() / double(sums.size() - 1);
  return {mean, std::sqrt(var / double(sums.size()))};
}

double carry_average_rate(RolloutDensity density, const Models& m, const CompleteState& x0, int burn_in,
                          int eval_steps) {
  if (burn_in < 0 || eval_steps < 1) throw Error(ErrorKind::InvalidArgument, "need burn_in >= 0 and eval_steps >= 1");
  const auto costs = carry_expected_costs(density, m, x0, burn_in + eval_steps);
  double acc = 0.0;
  for (int t = burn_in; t < burn_in + eval_steps; ++t) acc += costs[std::size_t(t)];
  return acc / double(eval_steps);
}

}  // namespace asc
