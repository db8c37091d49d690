#include <cmath>
#include <limits>
#include <string>

#include "asc/control.hpp"
#include "asc/logspace.hpp"

namespace asc {

namespace {

int phase_of(int t, const ModelSpec& spec) { return (t - 1) % spec.tick_period_level2; }

/// G(r, :) += w * d log T(r, c) / d logits(r, :).
void add_log_grad(Eigen::MatrixXd& g, const ConditionalTable& table, std::size_t row, int child, double w) {
  const auto r = Eigen::Index(row);
  g.row(r) -= w * table.probs().row(r);
  g(r, child) += w;
}

/// Everything about one filtering or smoothing context that the objective
/// and its gradient need.
struct ContextTerms {
  std::size_t index = 0;
  double emission = 0.0;  // p(o, a | carry)
  Eigen::VectorXd q;
  Eigen::VectorXd base;   // J + L + log q - log prior, per latent tuple
  double total = 0.0;     // E_q[base]
};

/// Per (phase, carry): prior over latents and the filtering contexts.
struct CarryTerms {
  CompleteState prev;
  bool tick = true;
  Eigen::VectorXd prior;
  std::vector<ContextTerms> contexts;  // indexed o * card_a + a
};

class Evaluator {
 public:
  explicit Evaluator(const Models& m) : m_(m), s_(m.gen.spec) {
    const int period = s_.tick_period_level2;
    carries_.resize(std::size_t(period) * s_.carry_count());
    ref_tables_.resize(std::size_t(s_.card_o));
    lik_tables_.resize(std::size_t(s_.card_o));
    for (int o = 0; o < s_.card_o; ++o) {
      ref_tables_[std::size_t(o)] = reference_surprisal_table(s_, m.ref, o);
      lik_tables_[std::size_t(o)] = likelihood_surprisal_table(m.gen, o);
    }
    for (int k = 0; k < period; ++k) {
      for (std::size_t y = 0; y < s_.carry_count(); ++y) build(k, y);
    }
  }

  const CarryTerms& carry(int t, std::size_t y) const {
    return carries_[std::size_t(phase_of(t, s_)) * s_.carry_count() + y];
  }

  /// Smoothing context for a filtering context, built on demand.
  ContextTerms smoothing(int t, std::size_t y, int o, int a, int next_o) const {
    const CarryTerms& c = carry(t, y);
    return make_context(c, {o, a, c.prev, next_o, t});
  }

  const Models& models() const { return m_; }
  const ModelSpec& spec() const { return s_; }

 private:
  ContextTerms make_context(const CarryTerms& c, const RecognitionContext& ctx) const {
    ContextTerms out;
    out.index = context_index(s_, ctx);
    out.q = m_.rec.distribution(ctx);
    out.base = Eigen::VectorXd::Zero(out.q.size());
    const Eigen::VectorXd& J = ref_tables_[std::size_t(ctx.o)];
    const Eigen::VectorXd& L = lik_tables_[std::size_t(ctx.o)];
    for (Eigen::Index z = 0; z < out.q.size(); ++z) {
      if (out.q(z) <= 0.0) continue;
      const double log_prior = c.prior(z) > 0.0 ? std::log(c.prior(z)) : neg_inf();
      out.base(z) = J(z) + L(z) + std::log(out.q(z)) - log_prior;
      out.total += out.q(z) * out.base(z);
    }
    return out;
  }

  void build(int k, std::size_t y) {
    CarryTerms& c = carries_[std::size_t(k) * s_.carry_count() + y];
    const int t = k + 1;
    c.prev = carry_state(s_, y);
    c.tick = level2_ticks(t, s_);
    c.prior = latent_prior(m_.gen, c.prev, t);
    const Eigen::MatrixXd emission = emission_marginal(m_.gen, c.prev, t);
    c.contexts.resize(std::size_t(s_.card_o * s_.card_a));
    for (int o = 0; o < s_.card_o; ++o) {
      for (int a = 0; a < s_.card_a; ++a) {
        ContextTerms& ct = c.contexts[std::size_t(o * s_.card_a + a)];
        ct.emission = emission(o, a);
        if (ct.emission <= 0.0) continue;
        const double e = ct.emission;
        ct = make_context(c, {o, a, c.prev, std::nullopt, t});
        ct.emission = e;
      }
    }
  }

  Models m_;
  ModelSpec s_;
  std::vector<CarryTerms> carries_;
  std::vector<Eigen::VectorXd> ref_tables_;
  std::vector<Eigen::VectorXd> lik_tables_;
};

/// Adds w * d log q(z | context) to the recognition gradient.
void add_recognition_score(ModelGradient& g, const RecognitionModel& rec, bool tick, std::size_t context,
                           const Latents& z, double w) {
  using F = RecognitionModel;
  if (tick) add_log_grad(g.rec[F::kS2], rec.table(F::kS2), rec.row_of(F::kS2, context, z), z.s2, w);
  add_log_grad(g.rec[F::kA2], rec.table(F::kA2), rec.row_of(F::kA2, context, z), z.a2, w);
  add_log_grad(g.rec[F::kS1], rec.table(F::kS1), rec.row_of(F::kS1, context, z), z.s1, w);
  add_log_grad(g.rec[F::kA1], rec.table(F::kA1), rec.row_of(F::kA1, context, z), z.a1, w);
}

/// Adds w * d log p(latents | prev) to the generative gradient.
void add_prior_score(ModelGradient& g, const GenerativeModel& gen, const CarryTerms& c, const Latents& z, double w) {
  const CompleteState& p = c.prev;
  if (c.tick) add_log_grad(g.dyn2, gen.dyn2, gen.dyn2.row_index({p.s2, p.a}), z.s2, w);
  add_log_grad(g.pol2, gen.pol2, std::size_t(z.s2), z.a2, w);
  add_log_grad(g.dyn1, gen.dyn1, gen.dyn1.row_index({p.s1, z.s2, p.a}), z.s1, w);
  add_log_grad(g.pol1, gen.pol1, gen.pol1.row_index({z.s1, z.a2}), z.a1, w);
}

void add_likelihood_score(ModelGradient& g, const GenerativeModel& gen, int o, const Latents& z, double w) {
  add_log_grad(g.lik, gen.lik, gen.lik.row_index({z.a1, z.s1}), o, w);
}

void add_action_score(ModelGradient& g, const GenerativeModel& gen, int o, int a, const Latents& z, double w) {
  add_log_grad(g.pol0, gen.pol0, gen.pol0.row_index({o, z.a1}), a, w);
}

/// w * d log p(o, a | carry) spread over the latent tuples that produce (o, a).
void add_emission_score(ModelGradient& g, const GenerativeModel& gen, const CarryTerms& c, int o, int a, double w) {
  const ModelSpec& s = gen.spec;
  const ContextTerms& ct = c.contexts[std::size_t(o * s.card_a + a)];
  for (std::size_t zi = 0; zi < s.latent_count(); ++zi) {
    const double pz = c.prior(Eigen::Index(zi));
    if (pz <= 0.0) continue;
    const Latents z = latents_at(s, zi);
    const double joint = pz * gen.lik.prob(gen.lik.row_index({z.a1, z.s1}), o) *
                         gen.pol0.prob(gen.pol0.row_index({o, z.a1}), a);
    if (joint <= 0.0) continue;
    const double wz = w * joint / ct.emission;
    add_prior_score(g, gen, c, z, wz);
    add_likelihood_score(g, gen, o, z, wz);
    add_action_score(g, gen, o, a, z, wz);
  }
}

/// Gradient of E_q[base] for a fixed context, without continuation values.
void add_direct_step_gradient(ModelGradient& g, const Models& m, const CarryTerms& c, const ContextTerms& ct, int o,
                              const Eigen::VectorXd* continuation, int a, double w) {
  const ModelSpec& s = m.gen.spec;
  for (std::size_t zi = 0; zi < s.latent_count(); ++zi) {
    const double qz = ct.q(Eigen::Index(zi));
    if (qz <= 0.0) continue;
    const Latents z = latents_at(s, zi);
    double f = ct.base(Eigen::Index(zi));
    if (continuation) f += (*continuation)(Eigen::Index(carry_index(s, z.s1, z.s2, a)));
    add_recognition_score(g, m.rec, c.tick, ct.index, z, w * qz * f);
    add_prior_score(g, m.gen, c, z, -w * qz);
    add_likelihood_score(g, m.gen, o, z, -w * qz);
  }
}

}  // namespace

ModelGradient ModelGradient::zeros(const ModelSpec& spec) {
  ModelGradient g;
  g.rec = RecognitionModel::zero_logits(spec);
  const GenerativeModel u = GenerativeModel::uniform(spec);
  auto z = [](const ConditionalTable& t) { return Eigen::MatrixXd::Zero(t.row_count(), t.child_dim()); };
  g.lik = z(u.lik);
  g.dyn1 = z(u.dyn1);
  g.dyn2 = z(u.dyn2);
  g.pol0 = z(u.pol0);
  g.pol1 = z(u.pol1);
  g.pol2 = z(u.pol2);
  return g;
}

double ModelGradient::squared_norm() const {
  double acc = 0.0;
  for (const auto& r : rec) acc += r.squaredNorm();
  for (const auto* m : {&lik, &dyn1, &dyn2, &pol0, &pol1, &pol2}) acc += m->squaredNorm();
  return acc;
}

ObjectiveGradient exact_objective_gradient(const Models& m, const CompleteState& x0, int horizon, double rate) {
  if (horizon < 1) throw Error(ErrorKind::InvalidArgument, "horizon must be >= 1");
  const ModelSpec& s = m.gen.spec;
  check_state(s, x0);
  const Evaluator ev(m);
  const auto ny = Eigen::Index(s.carry_count());
  const int noa = s.card_o * s.card_a;

  // Backward pass: v[t-1](y) is the expected cost-to-go from carry y at step t.
  std::vector<Eigen::VectorXd> v(std::size_t(horizon + 1), Eigen::VectorXd::Zero(ny));
  std::vector<Eigen::MatrixXd> M(std::size_t(horizon), Eigen::MatrixXd::Zero(ny, noa));
  for (int t = horizon; t >= 1; --t) {
    const Eigen::VectorXd& next = v[std::size_t(t)];
    for (Eigen::Index y = 0; y < ny; ++y) {
      const CarryTerms& c = ev.carry(t, std::size_t(y));
      double acc = 0.0;
      for (int oa = 0; oa < noa; ++oa) {
        const ContextTerms& ct = c.contexts[std::size_t(oa)];
        if (ct.emission <= 0.0) continue;
        const int a = oa % s.card_a;
        double cont = 0.0;
        for (std::size_t zi = 0; zi < s.latent_count(); ++zi) {
          const double qz = ct.q(Eigen::Index(zi));
          if (qz <= 0.0) continue;
          const Latents z = latents_at(s, zi);
          cont += qz * next(Eigen::Index(carry_index(s, z.s1, z.s2, a)));
        }
        M[std::size_t(t - 1)](y, oa) = ct.total + cont;
        acc += ct.emission * (ct.total + cont);
      }
      v[std::size_t(t - 1)](y) = acc;
    }
  }

  ObjectiveGradient out;
  out.grad = ModelGradient::zeros(s);
  out.hindsight_grad = ModelGradient::zeros(s);

  // Forward pass over carry occupancy, accumulating gradient contributions.
  Eigen::VectorXd d = Eigen::VectorXd::Zero(ny);
  d(Eigen::Index(carry_index(s, x0))) = 1.0;
  for (int t = 1; t <= horizon; ++t) {
    Eigen::VectorXd d_next = Eigen::VectorXd::Zero(ny);
    const Eigen::VectorXd& cont = v[std::size_t(t)];
    for (Eigen::Index y = 0; y < ny; ++y) {
      if (d(y) <= 0.0) continue;
      const CarryTerms& c = ev.carry(t, std::size_t(y));
      for (int oa = 0; oa < noa; ++oa) {
        const ContextTerms& ct = c.contexts[std::size_t(oa)];
        if (ct.emission <= 0.0) continue;
        const int o = oa / s.card_a;
        const int a = oa % s.card_a;
        const double w = d(y) * ct.emission;
        out.objective += w * ct.total;

        add_emission_score(out.grad, m.gen, c, o, a, d(y) * ct.emission * M[std::size_t(t - 1)](y, oa));
        add_direct_step_gradient(out.grad, m, c, ct, o, &cont, a, w);

        Eigen::VectorXd next_obs = Eigen::VectorXd::Zero(s.card_o);
        for (std::size_t zi = 0; zi < s.latent_count(); ++zi) {
          const double qz = ct.q(Eigen::Index(zi));
          if (qz <= 0.0) continue;
          const Latents z = latents_at(s, zi);
          const std::size_t y_next = carry_index(s, z.s1, z.s2, a);
          d_next(Eigen::Index(y_next)) += w * qz;
          if (t < horizon) {
            const CarryTerms& cn = ev.carry(t + 1, y_next);
            for (int on = 0; on < s.card_o; ++on) {
              for (int an = 0; an < s.card_a; ++an) {
                next_obs(on) += w * qz * cn.contexts[std::size_t(on * s.card_a + an)].emission;
              }
            }
          }
        }
        // Lag-1 smoothed objective, weighted by the probability of each next observation.
        for (int on = 0; on < s.card_o && t < horizon; ++on) {
          if (next_obs(on) <= 0.0) continue;
          const ContextTerms sm = ev.smoothing(t, std::size_t(y), o, a, on);
          out.hindsight += next_obs(on) * sm.total;
          for (std::size_t zi = 0; zi < s.latent_count(); ++zi) {
            const double qz = sm.q(Eigen::Index(zi));
            if (qz <= 0.0) continue;
            add_recognition_score(out.hindsight_grad, m.rec, c.tick, sm.index, latents_at(s, zi),
                                  next_obs(on) * qz * sm.base(Eigen::Index(zi)));
          }
        }
      }
    }
    d = d_next;
  }
  out.objective -= double(horizon) * rate;
  return out;
}

ModelGradient score_function_gradient(const Models& m, const CompleteState& x0, int horizon, double rate,
                                      std::size_t rollouts, std::uint64_t seed) {
  if (rollouts < 1) throw Error(ErrorKind::InvalidArgument, "need at least one rollout");
  const ModelSpec& s = m.gen.spec;
  check_state(s, x0);
  const Evaluator ev(m);
  ModelGradient g = ModelGradient::zeros(s);

  struct Visit {
    std::size_t carry;
    int o, a;
    std::size_t z;
    double advantage;
  };
  std::vector<Visit> path(static_cast<std::size_t>(horizon));
  Eigen::VectorXd emission(s.card_o * s.card_a);
  Rng rng(seed);
  const double w = 1.0 / double(rollouts);
  for (std::size_t r = 0; r < rollouts; ++r) {
    std::size_t y = carry_index(s, x0);
    for (int t = 1; t <= horizon; ++t) {
      const CarryTerms& c = ev.carry(t, y);
      for (std::size_t oa = 0; oa < c.contexts.size(); ++oa) emission(Eigen::Index(oa)) = c.contexts[oa].emission;
      const int oa = sample_categorical(emission, rng);
      const ContextTerms& ct = c.contexts[std::size_t(oa)];
      const auto zi = std::size_t(sample_categorical(ct.q, rng));
      const Latents z = latents_at(s, zi);
      path[std::size_t(t - 1)] = {y, oa / s.card_a, oa % s.card_a, zi, ct.total - rate};
      y = carry_index(s, z.s1, z.s2, oa % s.card_a);
    }
    double to_go = 0.0;
    for (int t = horizon; t >= 1; --t) {
      const Visit& vt = path[std::size_t(t - 1)];
      to_go += vt.advantage;
      const CarryTerms& c = ev.carry(t, vt.carry);
      const ContextTerms& ct = c.contexts[std::size_t(vt.o * s.card_a + vt.a)];
      add_direct_step_gradient(g, m, c, ct, vt.o, nullptr, vt.a, w);
      add_emission_score(g, m.gen, c, vt.o, vt.a, w * to_go);
      // q(z) enters only the steps after t, whose advantages exclude step t's own.
      add_recognition_score(g, m.rec, c.tick, ct.index, latents_at(s, vt.z), w * (to_go - vt.advantage));
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd logits_of(const ConditionalTable& t) {
  return t.probs().unaryExpr([](double p) { return p > 0.0 ? std::log(p) : -1000.0; });
}

ConditionalTable stepped(const ConditionalTable& t, const Eigen::MatrixXd& g, double step) {
  return ConditionalTable::from_logits(t.parent_dims(), logits_of(t) - step * g, t.strictly_positive());
}

ModelGradient masked(const ObjectiveGradient& og, const Trainables& which) {
  ModelGradient g = og.grad;
  for (int f = 0; f < RecognitionModel::kFactorCount; ++f) {
    if (!which.recognition) g.rec[f].setZero();
    if (which.hindsight) g.rec[f] += og.hindsight_grad.rec[f];
  }
  if (!which.pol0) g.pol0.setZero();
  if (!which.pol1) g.pol1.setZero();
  if (!which.pol2) g.pol2.setZero();
  if (!which.generative) {
    g.lik.setZero();
    g.dyn1.setZero();
    g.dyn2.setZero();
  }
  return g;
}

double long_run_rate(const Models& m, const CompleteState& x0, int horizon) {
  return carry_average_rate(RolloutDensity::Feedback, m, x0, 4 * horizon, 4 * horizon);
}

}  // namespace

GenerativeModel apply_generative_step(const GenerativeModel& gen, const ModelGradient& grad, double step,
                                      const Trainables& which) {
  GenerativeModel out = gen;
  if (which.pol0) out.pol0 = stepped(gen.pol0, grad.pol0, step);
  if (which.pol1) out.pol1 = stepped(gen.pol1, grad.pol1, step);
  if (which.pol2) out.pol2 = stepped(gen.pol2, grad.pol2, step);
  if (which.generative) {
    out.lik = stepped(gen.lik, grad.lik, step);
    out.dyn1 = stepped(gen.dyn1, grad.dyn1, step);
    out.dyn2 = stepped(gen.dyn2, grad.dyn2, step);
  }
  return out;
}

RecognitionModel apply_recognition_step(const RecognitionModel& rec, const ModelGradient& grad, double step) {
  RecognitionModel::Logits logits = rec.logits();
  for (int f = 0; f < RecognitionModel::kFactorCount; ++f) logits[f] -= step * grad.rec[f];
  return RecognitionModel(rec.spec(), std::move(logits), rec.floored());
}

TrainResult train(const GenerativeModel& gen, const RecognitionModel& rec, const ReferenceModel& ref,
                  const CompleteState& x0, const TrainConfig& config) {
  if (config.horizon < 1 || config.iterations < 0 || !(config.learning_rate > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "invalid training configuration");
  }
  gen.validate();
  ref.validate(gen.spec);
  if (!(rec.spec() == gen.spec)) throw Error(ErrorKind::Dimension, "recognition spec differs from generative spec");

  TrainResult res{gen, rec, {}};
  double lr = config.learning_rate;
  double rate = config.rate ? *config.rate : long_run_rate({res.gen, res.rec, ref}, x0, config.horizon);

  auto objective_at = [&](const GenerativeModel& g, const RecognitionModel& r) {
    return differential_free_energy(RolloutDensity::Feedback, {g, r, ref}, x0, config.horizon, rate).estimate;
  };

  for (int iter = 0; iter < config.iterations; ++iter) {
    if (!config.rate && config.rate_refresh > 0 && iter > 0 && iter % config.rate_refresh == 0) {
      rate = long_run_rate({res.gen, res.rec, ref}, x0, config.horizon);
    }
    Trainables which = config.trainables;
    if (iter < config.recognition_warmup) which = {which.recognition, false, false, false, false, which.hindsight};
    const Models m{res.gen, res.rec, ref};
    const ObjectiveGradient og = exact_objective_gradient(m, x0, config.horizon, rate);
    ModelGradient step_dir = masked(og, which);
    if (config.estimator == Estimator::MonteCarlo) {
      ObjectiveGradient mc{og.objective, og.hindsight,
                           score_function_gradient(m, x0, config.horizon, rate, config.rollouts,
                                                   config.seed + std::uint64_t(iter)),
                           og.hindsight_grad};
      step_dir = masked(mc, which);
    }
    step_dir.pol0 *= config.policy_step_scale;
    step_dir.pol1 *= config.policy_step_scale;
    step_dir.pol2 *= config.policy_step_scale;
    const double gnorm = std::sqrt(step_dir.squared_norm());
    if (!std::isfinite(og.objective) || !std::isfinite(gnorm)) {
      throw Error(ErrorKind::NonFinite, "non-finite objective or gradient at iteration " + std::to_string(iter),
                  std::size_t(iter), og.objective);
    }
    res.report.objective_trace.push_back(og.objective);
    res.report.grad_norm_trace.push_back(gnorm);
    res.report.rate_trace.push_back(rate);
    res.report.hindsight_trace.push_back(og.hindsight);

    for (int attempt = 0;; ++attempt) {
      GenerativeModel g_new = apply_generative_step(res.gen, step_dir, lr, which);
      RecognitionModel r_new = apply_recognition_step(res.rec, step_dir, lr);
      if (config.halve_on_increase && attempt < config.max_halvings &&
          objective_at(g_new, r_new) > og.objective + 1e-12 * std::max(1.0, std::abs(og.objective))) {
        lr *= 0.5;
        continue;
      }
      res.gen = std::move(g_new);
      res.rec = std::move(r_new);
      break;
    }
  }
  res.report.iterations = config.iterations;
  res.report.final_rate = rate;
  res.report.final_learning_rate = lr;
  return res;
}

}  // namespace asc
