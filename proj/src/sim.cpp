#include "asc/sim.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "asc/chain.hpp"

namespace asc {

namespace {

void check_params(const ThermostatParams& p) {
  if (p.levels < 2) throw Error(ErrorKind::InvalidArgument, "thermostat needs at least two temperature levels");
  if (p.schedule.empty()) throw Error(ErrorKind::InvalidArgument, "setpoint schedule is empty");
  for (int s : p.schedule) {
    if (s < 0 || s >= p.levels) throw Error(ErrorKind::InvalidArgument, "schedule entry is not a valid level");
  }
  if (p.phase_length < 1) throw Error(ErrorKind::InvalidArgument, "phase length must be >= 1");
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(p.success) || !unit(p.noise) || !(p.drift >= 0.0 && p.drift <= 0.5)) {
    throw Error(ErrorKind::InvalidArgument, "thermostat probabilities out of range");
  }
  if (!(p.preference_width > 0.0)) throw Error(ErrorKind::InvalidArgument, "preference width must be positive");
}

Eigen::RowVectorXd walk(int n, int s, double drift) {
  Eigen::RowVectorXd p = Eigen::RowVectorXd::Zero(n);
  p(s) += 1.0 - 2.0 * drift;
  p(std::max(s - 1, 0)) += drift;
  p(std::min(s + 1, n - 1)) += drift;
  return p;
}

Eigen::RowVectorXd preference(int n, int target, double width) {
  Eigen::RowVectorXd w(n);
  for (int i = 0; i < n; ++i) w(i) = std::exp(-double((i - target) * (i - target)) / (2.0 * width * width));
  return w / w.sum();
}

Rng stream(std::uint64_t seed, std::uint64_t episode, std::uint64_t which) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(episode),
                    std::uint32_t(episode >> 32), std::uint32_t(which)};
  return Rng(seq);
}

}  // namespace

ThermostatTask thermostat_env(const ThermostatParams& p) {
  check_params(p);
  const int n = p.levels;
  const int k = int(p.schedule.size());
  ModelSpec spec{n, n, k, 3, n, k, p.phase_length};

  Eigen::MatrixXd dyn1(n * k * 3, n);
  for (int s = 0; s < n; ++s)
    for (int s2 = 0; s2 < k; ++s2)
      for (int a = 0; a < 3; ++a) {
        Eigen::RowVectorXd row = walk(n, s, p.drift);
        if (a != 1) {
          Eigen::RowVectorXd push = Eigen::RowVectorXd::Zero(n);
          push(a == 2 ? std::min(s + 1, n - 1) : std::max(s - 1, 0)) = 1.0;
          row = p.success * push + (1.0 - p.success) * row;
        }
        dyn1.row((s * k + s2) * 3 + a) = row;
      }

  Eigen::MatrixXd dyn2 = Eigen::MatrixXd::Zero(k * 3, k);
  for (int s2 = 0; s2 < k; ++s2)
    for (int a = 0; a < 3; ++a) dyn2(s2 * 3 + a, (s2 + 1) % k) = 1.0;

  Eigen::MatrixXd lik = Eigen::MatrixXd::Zero(n * n, n);
  for (int a1 = 0; a1 < n; ++a1)
    for (int s = 0; s < n; ++s) {
      auto row = lik.row(a1 * n + s);
      row(s) += 1.0 - p.noise;
      if (s == 0 || s == n - 1) {
        row(s == 0 ? 1 : n - 2) += p.noise;
      } else {
        row(s - 1) += p.noise / 2;
        row(s + 1) += p.noise / 2;
      }
    }

  Eigen::MatrixXd pol1 = Eigen::MatrixXd::Zero(n * k, n);
  for (int s = 0; s < n; ++s)
    for (int a2 = 0; a2 < k; ++a2) pol1(s * k + a2, p.schedule[std::size_t(a2)]) = 1.0;
  const Eigen::MatrixXd pol2 = Eigen::MatrixXd::Identity(k, k);

  Eigen::MatrixXd ref_o(n, n), ref_s1(k, n);
  for (int a1 = 0; a1 < n; ++a1) ref_o.row(a1) = preference(n, a1, p.preference_width);
  ref_s1.setConstant(1.0 / n);

  ThermostatTask task;
  task.params = p;
  task.agent = GenerativeModel{spec,
                               ConditionalTable::normalized({n, n}, lik),
                               ConditionalTable::normalized({n, k, 3}, dyn1),
                               ConditionalTable::normalized({k, 3}, dyn2),
                               ConditionalTable::uniform({n, n}, 3),
                               ConditionalTable::normalized({n, k}, pol1),
                               ConditionalTable::normalized({k}, pol2)};
  task.agent.validate();
  task.ref = {ConditionalTable::normalized({n}, ref_o), ConditionalTable::normalized({k}, ref_s1)};
  task.ref.validate(spec);

  const int start = n / 2;
  task.env.spec = spec;
  task.env.truth = task.agent;
  task.env.x0 = {start, start, k - 1, 1, p.schedule.back(), k - 1};
  task.env.label = "thermostat";
  task.env.setpoints = p.schedule;
  return task;
}

ThermostatTask thermostat_env(int levels, const std::vector<int>& schedule) {
  ThermostatParams p;
  p.levels = levels;
  p.schedule = schedule;
  return thermostat_env(p);
}

double scheduled_reference_surprisal(const Environment& env, const ReferenceModel& ref, int o, int s1, int s2) {
  if (env.setpoints.empty()) return 0.0;
  const int a1 = env.setpoints[std::size_t(s2) % env.setpoints.size()];
  return -ref.ref_o.log_prob(std::size_t(a1), o) - ref.ref_s1.log_prob(std::size_t(s2), s1);
}

std::string Trace::csv() const {
  std::string out = "t,o,s1,s2,a,a1,a2,J,L,KL,total,running_rate,advantage\n";
  for (const TraceRow& r : rows) {
    out += std::to_string(r.t);
    for (int v : {r.x.o, r.x.s1, r.x.s2, r.x.a, r.x.a1, r.x.a2}) out += "," + std::to_string(v);
    for (double v : {r.objective.j, r.objective.l, r.objective.kl, r.objective.total, r.running_rate, r.advantage}) {
      out += "," + format_double(v);
    }
    out += "\n";
  }
  return out;
}

double Trace::mean_scheduled_surprisal() const {
  if (rows.empty()) return 0.0;
  double acc = 0.0;
  for (const TraceRow& r : rows) acc += r.scheduled_surprisal;
  return acc / double(rows.size());
}

Trace run_episode(const Models& agent, const Environment& env, int steps, std::uint64_t seed, std::uint64_t episode) {
  if (steps < 1) throw Error(ErrorKind::InvalidArgument, "episode needs at least one step");
  const ModelSpec& s = env.spec;
  if (!(agent.gen.spec == s) || !(agent.rec.spec() == s)) {
    throw Error(ErrorKind::Dimension, "agent and environment specs differ");
  }
  env.truth.validate();
  check_state(s, env.x0);

  Rng env_rng = stream(seed, episode, 0);
  Rng agent_rng = stream(seed, episode, 1);
  const GenerativeModel& world = env.truth;

  Trace trace;
  trace.episode = episode;
  trace.seed = seed;
  trace.rows.reserve(std::size_t(steps));

  CompleteState truth = env.x0;
  std::vector<CompleteState> belief{env.x0};  // agent's sampled complete states x^_0 .. x^_t
  double running = 0.0;

  auto finalize = [&](int t, std::optional<int> next_o) {
    const CompleteState& x = belief[std::size_t(t)];
    const RecognitionContext ctx{x.o, x.a, belief[std::size_t(t - 1)], next_o, t};
    TraceRow& row = trace.rows[std::size_t(t - 1)];
    row.objective = step_objective(agent.gen, agent.rec, agent.ref, ctx);
    if (!std::isfinite(row.objective.total)) {
      throw Error(ErrorKind::NonFinite, "non-finite step objective", std::size_t(t), row.objective.total);
    }
    running += row.objective.total;
    row.running_rate = running / double(t);
    row.advantage = row.objective.total - row.running_rate;
  };

  for (int t = 1; t <= steps; ++t) {
    const CompleteState prev = belief.back();
    // Environment: one draw per factor every step, so paired seeds stay aligned.
    const int s2_draw = sample_categorical(world.dyn2.row(world.dyn2.row_index({truth.s2, truth.a})), env_rng);
    const int s2 = level2_ticks(t, s) ? s2_draw : truth.s2;
    const int s1 = sample_categorical(world.dyn1.row(world.dyn1.row_index({truth.s1, s2, truth.a})), env_rng);
    const int o = sample_categorical(world.lik.row(world.lik.row_index({prev.a1, s1})), env_rng);

    // Agent: act on the observation, then infer its own latent configuration.
    const Eigen::MatrixXd emission = emission_marginal(agent.gen, prev, t);
    if (!(emission.row(o).sum() > 0.0)) {
      throw Error(ErrorKind::ImpossibleObservation, "observation has zero probability under the agent model");
    }
    const int a = sample_categorical(emission.row(o), agent_rng);
    const Eigen::VectorXd q = agent.rec.distribution({o, a, prev, std::nullopt, t});
    const Latents z = latents_at(s, std::size_t(sample_categorical(q, agent_rng)));
    belief.push_back(compose(o, a, z));

    TraceRow row;
    row.t = t;
    row.x = {o, s1, s2, a, z.a1, z.a2};
    row.scheduled_surprisal = scheduled_reference_surprisal(env, agent.ref, o, s1, s2);
    trace.rows.push_back(row);
    if (t > 1) finalize(t - 1, o);

    truth = {o, s1, s2, a, z.a1, z.a2};
  }
  finalize(steps, std::nullopt);
  return trace;
}

Evaluation evaluate(const Models& agent, const Environment& env, int episodes, int steps, std::uint64_t seed) {
  if (episodes < 1) throw Error(ErrorKind::InvalidArgument, "need at least one episode");
  Evaluation ev;
  for (int e = 0; e < episodes; ++e) {
    const Trace tr = run_episode(agent, env, steps, seed, std::uint64_t(e));
    ev.rates.push_back(tr.rows.back().running_rate);
    ev.reference_surprisal.push_back(tr.mean_scheduled_surprisal());
  }
  const Eigen::Map<const Eigen::VectorXd> r(ev.rates.data(), Eigen::Index(ev.rates.size()));
  ev.mean_rate = r.mean();
  if (episodes > 1) {
    ev.stderr_ = std::sqrt((r.array() - ev.mean_rate).square().sum() / double(episodes - 1) / double(episodes));
  }
  return ev;
}

std::string digest(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace asc
