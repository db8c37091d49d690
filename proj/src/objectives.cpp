#include "asc/objectives.hpp"

#include <cmath>
#include <limits>

#include "asc/logspace.hpp"

namespace asc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double surprisal(double p) { return p > 0.0 ? -std::log(p) : kInf; }

void check_belief(const ModelSpec& spec, const Eigen::VectorXd& q) {
  if (q.size() != Eigen::Index(spec.latent_count())) {
    throw Error(ErrorKind::Dimension, "belief size does not match the latent count");
  }
}

}  // namespace

double reference_surprisal(const ReferenceModel& ref, const CompleteState& x) {
  return surprisal(ref.ref_o.prob(ref.ref_o.row_index({x.a1}), x.o)) +
         surprisal(ref.ref_s1.prob(ref.ref_s1.row_index({x.a2}), x.s1));
}

double likelihood_surprisal(const GenerativeModel& gen, const CompleteState& x) {
  check_state(gen.spec, x);
  return surprisal(gen.lik.prob(gen.lik.row_index({x.a1, x.s1}), x.o));
}

Eigen::VectorXd reference_surprisal_table(const ModelSpec& spec, const ReferenceModel& ref, int o) {
  Eigen::VectorXd out(Eigen::Index(spec.latent_count()));
  for (std::size_t i = 0; i < spec.latent_count(); ++i) {
    out(Eigen::Index(i)) = reference_surprisal(ref, compose(o, 0, latents_at(spec, i)));
  }
  return out;
}

Eigen::VectorXd likelihood_surprisal_table(const GenerativeModel& gen, int o) {
  return observation_likelihood(gen, o).unaryExpr([](double p) { return surprisal(p); });
}

double expect(const Eigen::VectorXd& q, const Eigen::VectorXd& v) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q(i) > 0.0) acc += q(i) * v(i);
  }
  return acc;
}

FreeEnergy variational_free_energy(const GenerativeModel& gen, const RecognitionContext& ctx,
                                   const Eigen::VectorXd& q) {
  check_belief(gen.spec, q);
  const Eigen::VectorXd prior = latent_prior(gen, ctx.prev, ctx.t);
  const Eigen::VectorXd lik = observation_likelihood(gen, ctx.o);

  FreeEnergy fe;
  fe.expected_nll = expect(q, lik.unaryExpr([](double p) { return surprisal(p); }));
  fe.kl = kl_divergence(q, prior);
  fe.value = fe.expected_nll + fe.kl;

  // Single divergence from the unnormalized joint, accumulated term by term in log space.
  double acc = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q(i) <= 0.0) continue;
    const double log_joint = (prior(i) > 0.0 && lik(i) > 0.0) ? std::log(prior(i)) + std::log(lik(i)) : neg_inf();
    acc += q(i) * (std::log(q(i)) - log_joint);
  }
  fe.single_divergence = acc;
  return fe;
}

FreeEnergy variational_free_energy(const GenerativeModel& gen, const RecognitionModel& rec,
                                   const RecognitionContext& ctx) {
  return variational_free_energy(gen, ctx, rec.distribution(ctx));
}

double reference_cross_entropy_rate(const ModelSpec& spec, const std::vector<StepBelief>& window,
                                    const ReferenceModel& ref) {
  if (window.empty()) throw Error(ErrorKind::InvalidArgument, "empty belief window");
  double acc = 0.0;
  for (const auto& b : window) {
    check_belief(spec, b.q);
    acc += expect(b.q, reference_surprisal_table(spec, ref, b.o));
  }
  return acc / double(window.size());
}

MonteCarloEstimate reference_cross_entropy_rate_mc(const ModelSpec& spec, const std::vector<StepBelief>& window,
                                                   const ReferenceModel& ref, std::size_t samples, Rng& rng) {
  if (window.empty()) throw Error(ErrorKind::InvalidArgument, "empty belief window");
  if (samples < 2) throw Error(ErrorKind::InvalidArgument, "need at least two samples");
  // Each draw picks one latent tuple per step and averages over the window.
  std::vector<Eigen::VectorXd> tables;
  for (const auto& b : window) {
    check_belief(spec, b.q);
    tables.push_back(reference_surprisal_table(spec, ref, b.o));
  }
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t n = 0; n < samples; ++n) {
    double v = 0.0;
    for (std::size_t t = 0; t < window.size(); ++t) v += tables[t](sample_categorical(window[t].q, rng));
    v /= double(window.size());
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / double(samples);
  const double var = std::max(0.0, (sum_sq - double(samples) * mean * mean) / double(samples - 1));
  return {mean, std::sqrt(var / double(samples))};
}

StepObjective step_objective(const GenerativeModel& gen, const ReferenceModel& ref, const RecognitionContext& ctx,
                             const Eigen::VectorXd& q) {
  const FreeEnergy fe = variational_free_energy(gen, ctx, q);
  StepObjective s;
  s.j = expect(q, reference_surprisal_table(gen.spec, ref, ctx.o));
  s.l = fe.expected_nll;
  s.kl = fe.kl;
  s.total = s.j + s.l + s.kl;
  return s;
}

StepObjective step_objective(const GenerativeModel& gen, const RecognitionModel& rec, const ReferenceModel& ref,
                             const RecognitionContext& ctx) {
  return step_objective(gen, ref, ctx, rec.distribution(ctx));
}

RateEstimate global_rate(const std::vector<StepObjective>& per_step) {
  if (per_step.empty()) throw Error(ErrorKind::InvalidArgument, "empty objective list");
  RateEstimate r;
  r.steps = per_step.size();
  double acc = 0.0;
  for (const auto& s : per_step) {
    r.per_step.push_back(s.total);
    acc += s.total;
  }
  r.mean_rate = acc / double(r.steps);
  return r;
}

}  // namespace asc
