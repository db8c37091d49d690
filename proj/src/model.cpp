#include "asc/model.hpp"

#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>

#include "asc/chain.hpp"
#include "asc/logspace.hpp"

namespace asc {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::Normalization: return "normalization error";
    case ErrorKind::EnumerationBudget: return "enumeration budget exceeded";
    case ErrorKind::ImpossibleObservation: return "impossible observation";
    case ErrorKind::EmptySupport: return "empty support";
    case ErrorKind::DegenerateWeights: return "degenerate weights";
    case ErrorKind::NonConvergence: return "non-convergence";
    case ErrorKind::NonFinite: return "non-finite value";
    case ErrorKind::Parse: return "parse error";
  }
  return "error";
}

// ---------------------------------------------------------------------------
// ModelSpec

std::size_t ModelSpec::state_count() const {
  return std::size_t(card_o) * card_s1 * card_s2 * card_a * card_a1 * card_a2;
}

std::size_t ModelSpec::latent_count() const { return std::size_t(card_s1) * card_s2 * card_a1 * card_a2; }

std::size_t ModelSpec::carry_count() const { return std::size_t(card_s1) * card_s2 * card_a; }

std::size_t ModelSpec::context_count() const {
  return std::size_t(card_o) * card_a * carry_count() * (card_o + 1);
}

void ModelSpec::validate() const {
  for (int c : {card_o, card_s1, card_s2, card_a, card_a1, card_a2}) {
    if (c < 1) throw Error(ErrorKind::InvalidArgument, "every cardinality must be >= 1");
  }
  if (tick_period_level2 < 1) throw Error(ErrorKind::InvalidArgument, "tick period must be >= 1");
}

void ModelSpec::require_enumerable(std::size_t max_states) const {
  if (state_count() > max_states) {
    throw Error(ErrorKind::EnumerationBudget,
                std::to_string(state_count()) + " complete states exceed budget " + std::to_string(max_states));
  }
}

std::size_t enumeration_budget() {
  if (const char* env = std::getenv("ASC_ENUM_BUDGET")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return kDefaultStateBudget;
}

TickSet tick_levels(int t, const ModelSpec& spec) {
  if (t < 1) throw Error(ErrorKind::InvalidArgument, "time index must be >= 1");
  return TickSet{true, (t - 1) % spec.tick_period_level2 == 0};
}

// ---------------------------------------------------------------------------
// Indexing

namespace {

bool in_range(int v, int card) { return v >= 0 && v < card; }

}  // namespace

void check_state(const ModelSpec& spec, const CompleteState& x) {
  if (!in_range(x.o, spec.card_o) || !in_range(x.s1, spec.card_s1) || !in_range(x.s2, spec.card_s2) ||
      !in_range(x.a, spec.card_a) || !in_range(x.a1, spec.card_a1) || !in_range(x.a2, spec.card_a2)) {
    throw Error(ErrorKind::Dimension, "complete state out of range for model spec");
  }
}

std::size_t flat_index(const ModelSpec& spec, const CompleteState& x) {
  std::size_t i = std::size_t(x.o);
  i = i * spec.card_s1 + x.s1;
  i = i * spec.card_s2 + x.s2;
  i = i * spec.card_a + x.a;
  i = i * spec.card_a1 + x.a1;
  i = i * spec.card_a2 + x.a2;
  return i;
}

CompleteState state_at(const ModelSpec& spec, std::size_t index) {
  CompleteState x;
  x.a2 = int(index % spec.card_a2); index /= spec.card_a2;
  x.a1 = int(index % spec.card_a1); index /= spec.card_a1;
  x.a = int(index % spec.card_a); index /= spec.card_a;
  x.s2 = int(index % spec.card_s2); index /= spec.card_s2;
  x.s1 = int(index % spec.card_s1); index /= spec.card_s1;
  x.o = int(index);
  return x;
}

std::size_t latent_index(const ModelSpec& spec, const Latents& z) {
  return ((std::size_t(z.s2) * spec.card_a2 + z.a2) * spec.card_s1 + z.s1) * spec.card_a1 + z.a1;
}

Latents latents_at(const ModelSpec& spec, std::size_t index) {
  Latents z;
  z.a1 = int(index % spec.card_a1); index /= spec.card_a1;
  z.s1 = int(index % spec.card_s1); index /= spec.card_s1;
  z.a2 = int(index % spec.card_a2); index /= spec.card_a2;
  z.s2 = int(index);
  return z;
}

Latents latents_of(const CompleteState& x) { return Latents{x.s1, x.s2, x.a1, x.a2}; }

CompleteState compose(int o, int a, const Latents& z) { return CompleteState{o, z.s1, z.s2, a, z.a1, z.a2}; }

std::size_t carry_index(const ModelSpec& spec, int s1, int s2, int a) {
  return (std::size_t(s1) * spec.card_s2 + s2) * spec.card_a + a;
}

CompleteState carry_state(const ModelSpec& spec, std::size_t carry) {
  CompleteState x;
  x.a = int(carry % spec.card_a); carry /= spec.card_a;
  x.s2 = int(carry % spec.card_s2); carry /= spec.card_s2;
  x.s1 = int(carry);
  return x;
}

// ---------------------------------------------------------------------------
// ConditionalTable

namespace {

std::size_t product(const std::vector<int>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t(1),
                         [](std::size_t acc, int d) { return acc * std::size_t(d); });
}

void check_dims(const std::vector<int>& parent_dims, int child_dim) {
  if (child_dim < 1) throw Error(ErrorKind::Dimension, "child dimension must be >= 1");
  for (int d : parent_dims) {
    if (d < 1) throw Error(ErrorKind::Dimension, "parent dimension must be >= 1");
  }
}

void apply_floor(Eigen::MatrixXd& probs) {
  const double n = double(probs.cols());
  probs = (kProbabilityFloor + (1.0 - n * kProbabilityFloor) * probs.array()).matrix();
}

}  // namespace

ConditionalTable::ConditionalTable(std::vector<int> parent_dims, int child_dim, Eigen::MatrixXd probs,
                                   bool strictly_positive)
    : parent_dims_(std::move(parent_dims)),
      child_dim_(child_dim),
      probs_(std::move(probs)),
      strictly_positive_(strictly_positive) {
  check_dims(parent_dims_, child_dim_);
  if (probs_.rows() != Eigen::Index(product(parent_dims_)) || probs_.cols() != child_dim_) {
    throw Error(ErrorKind::Dimension, "table shape does not match declared dimensions");
  }
  for (Eigen::Index r = 0; r < probs_.rows(); ++r) {
    if (!probs_.row(r).allFinite() || (probs_.row(r).array() < 0.0).any()) {
      throw Error(ErrorKind::Normalization, "table row " + std::to_string(r) + " has invalid entries");
    }
    if (std::abs(probs_.row(r).sum() - 1.0) > 1e-12) {
      throw Error(ErrorKind::Normalization, "table row " + std::to_string(r) + " does not sum to 1");
    }
    if (strictly_positive_ && probs_.row(r).minCoeff() < kProbabilityFloor) {
      throw Error(ErrorKind::Normalization, "table row " + std::to_string(r) + " violates the positivity floor");
    }
  }
}

ConditionalTable ConditionalTable::uniform(std::vector<int> parent_dims, int child_dim) {
  check_dims(parent_dims, child_dim);
  const auto rows = Eigen::Index(product(parent_dims));
  return ConditionalTable(std::move(parent_dims), child_dim,
                          Eigen::MatrixXd::Constant(rows, child_dim, 1.0 / child_dim));
}

ConditionalTable ConditionalTable::normalized(std::vector<int> parent_dims, Eigen::MatrixXd weights, bool floor) {
  for (Eigen::Index r = 0; r < weights.rows(); ++r) {
    const double s = weights.row(r).sum();
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw Error(ErrorKind::Normalization, "row " + std::to_string(r) + " has no positive mass");
    }
    weights.row(r) /= s;
  }
  if (floor) apply_floor(weights);
  const int child = int(weights.cols());
  return ConditionalTable(std::move(parent_dims), child, std::move(weights), floor);
}

ConditionalTable ConditionalTable::from_logits(std::vector<int> parent_dims, const Eigen::MatrixXd& logits,
                                               bool floor) {
  Eigen::MatrixXd probs(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    if (!logits.row(r).allFinite()) {
      throw Error(ErrorKind::NonFinite, "non-finite logit in row " + std::to_string(r));
    }
    probs.row(r) = softmax(logits.row(r));
  }
  if (floor) apply_floor(probs);
  const int child = int(logits.cols());
  return ConditionalTable(std::move(parent_dims), child, std::move(probs), floor);
}

ConditionalTable ConditionalTable::random(std::vector<int> parent_dims, int child_dim, Rng& rng, double scale) {
  check_dims(parent_dims, child_dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd logits(Eigen::Index(product(parent_dims)), child_dim);
  for (Eigen::Index r = 0; r < logits.rows(); ++r)
    for (Eigen::Index c = 0; c < logits.cols(); ++c) logits(r, c) = scale * normal(rng);
  return from_logits(std::move(parent_dims), logits, true);
}

std::size_t ConditionalTable::row_index(std::initializer_list<int> parents) const {
  if (parents.size() != parent_dims_.size()) throw Error(ErrorKind::Dimension, "wrong number of parent values");
  std::size_t row = 0;
  auto dim = parent_dims_.begin();
  for (int v : parents) {
    if (v < 0 || v >= *dim) throw Error(ErrorKind::Dimension, "parent value out of range");
    row = row * std::size_t(*dim) + std::size_t(v);
    ++dim;
  }
  return row;
}

double ConditionalTable::log_prob(std::size_t row, int child) const {
  const double p = prob(row, child);
  return p > 0.0 ? std::log(p) : neg_inf();
}

Eigen::MatrixXd ConditionalTable::log_probs() const {
  return probs_.unaryExpr([](double p) { return p > 0.0 ? std::log(p) : neg_inf(); });
}

// ---------------------------------------------------------------------------
// Models

namespace {

void expect_shape(const ConditionalTable& t, const std::vector<int>& parents, int child, const char* name) {
  if (t.parent_dims() != parents || t.child_dim() != child) {
    throw Error(ErrorKind::Dimension, std::string("table '") + name + "' does not match the model spec");
  }
}

struct Shapes {
  std::vector<int> parents;
  int child;
};

Shapes lik_shape(const ModelSpec& s) { return {{s.card_a1, s.card_s1}, s.card_o}; }
Shapes dyn1_shape(const ModelSpec& s) { return {{s.card_s1, s.card_s2, s.card_a}, s.card_s1}; }
Shapes dyn2_shape(const ModelSpec& s) { return {{s.card_s2, s.card_a}, s.card_s2}; }
Shapes pol0_shape(const ModelSpec& s) { return {{s.card_o, s.card_a1}, s.card_a}; }
Shapes pol1_shape(const ModelSpec& s) { return {{s.card_s1, s.card_a2}, s.card_a1}; }
Shapes pol2_shape(const ModelSpec& s) { return {{s.card_s2}, s.card_a2}; }
Shapes ref_o_shape(const ModelSpec& s) { return {{s.card_a1}, s.card_o}; }
Shapes ref_s1_shape(const ModelSpec& s) { return {{s.card_a2}, s.card_s1}; }

std::vector<int> context_dims(const ModelSpec& s) {
  return {s.card_o, s.card_a, s.card_s1, s.card_s2, s.card_a, s.card_o + 1};
}

std::array<Shapes, RecognitionModel::kFactorCount> recognition_shapes(const ModelSpec& s) {
  auto dims = context_dims(s);
  std::array<Shapes, RecognitionModel::kFactorCount> out;
  out[RecognitionModel::kS2] = {dims, s.card_s2};
  dims.push_back(s.card_s2);
  out[RecognitionModel::kA2] = {dims, s.card_a2};
  dims.push_back(s.card_a2);
  out[RecognitionModel::kS1] = {dims, s.card_s1};
  dims.push_back(s.card_s1);
  out[RecognitionModel::kA1] = {dims, s.card_a1};
  return out;
}

}  // namespace

void GenerativeModel::validate() const {
  spec.validate();
  auto check = [](const ConditionalTable& t, const Shapes& sh, const char* name) {
    expect_shape(t, sh.parents, sh.child, name);
  };
  check(lik, lik_shape(spec), "lik");
  check(dyn1, dyn1_shape(spec), "dyn1");
  check(dyn2, dyn2_shape(spec), "dyn2");
  check(pol0, pol0_shape(spec), "pol0");
  check(pol1, pol1_shape(spec), "pol1");
  check(pol2, pol2_shape(spec), "pol2");
}

GenerativeModel GenerativeModel::uniform(const ModelSpec& spec) {
  spec.validate();
  auto u = [](const Shapes& sh) { return ConditionalTable::uniform(sh.parents, sh.child); };
  GenerativeModel g{spec,           u(lik_shape(spec)),  u(dyn1_shape(spec)), u(dyn2_shape(spec)),
                    u(pol0_shape(spec)), u(pol1_shape(spec)), u(pol2_shape(spec))};
  return g;
}

GenerativeModel GenerativeModel::random(const ModelSpec& spec, Rng& rng, double scale) {
  spec.validate();
  auto r = [&](const Shapes& sh) { return ConditionalTable::random(sh.parents, sh.child, rng, scale); };
  GenerativeModel g;
  g.spec = spec;
  g.lik = r(lik_shape(spec));
  g.dyn1 = r(dyn1_shape(spec));
  g.dyn2 = r(dyn2_shape(spec));
  g.pol0 = r(pol0_shape(spec));
  g.pol1 = r(pol1_shape(spec));
  g.pol2 = r(pol2_shape(spec));
  return g;
}

void ReferenceModel::validate(const ModelSpec& spec) const {
  const auto o = ref_o_shape(spec);
  const auto s = ref_s1_shape(spec);
  expect_shape(ref_o, o.parents, o.child, "ref_o");
  expect_shape(ref_s1, s.parents, s.child, "ref_s1");
}

ReferenceModel ReferenceModel::uniform(const ModelSpec& spec) {
  const auto o = ref_o_shape(spec);
  const auto s = ref_s1_shape(spec);
  return {ConditionalTable::uniform(o.parents, o.child), ConditionalTable::uniform(s.parents, s.child)};
}

ReferenceModel ReferenceModel::random(const ModelSpec& spec, Rng& rng, double scale) {
  const auto o = ref_o_shape(spec);
  const auto s = ref_s1_shape(spec);
  ReferenceModel ref;
  ref.ref_o = ConditionalTable::random(o.parents, o.child, rng, scale);
  ref.ref_s1 = ConditionalTable::random(s.parents, s.child, rng, scale);
  return ref;
}

// ---------------------------------------------------------------------------
// Recognition

std::size_t context_index(const ModelSpec& spec, const RecognitionContext& ctx) {
  const int next = ctx.next_o ? *ctx.next_o : spec.card_o;
  if (!in_range(ctx.o, spec.card_o) || !in_range(ctx.a, spec.card_a) || !in_range(next, spec.card_o + 1)) {
    throw Error(ErrorKind::Dimension, "recognition context out of range");
  }
  check_state(spec, ctx.prev);
  std::size_t k = std::size_t(ctx.o) * spec.card_a + ctx.a;
  k = k * spec.carry_count() + carry_index(spec, ctx.prev);
  return k * (spec.card_o + 1) + next;
}

RecognitionModel::RecognitionModel(const ModelSpec& spec, Logits logits, bool floor)
    : spec_(spec), logits_(std::move(logits)), floor_(floor) {
  spec_.validate();
  const auto shapes = recognition_shapes(spec_);
  for (int f = 0; f < kFactorCount; ++f) {
    const auto rows = Eigen::Index(product(shapes[f].parents));
    if (logits_[f].rows() != rows || logits_[f].cols() != shapes[f].child) {
      throw Error(ErrorKind::Dimension, "recognition logits do not match the model spec");
    }
    tables_[f] = ConditionalTable::from_logits(shapes[f].parents, logits_[f], floor_);
  }
}

RecognitionModel::Logits RecognitionModel::zero_logits(const ModelSpec& spec) {
  spec.validate();
  const auto shapes = recognition_shapes(spec);
  Logits out;
  for (int f = 0; f < kFactorCount; ++f) {
    out[f] = Eigen::MatrixXd::Zero(Eigen::Index(product(shapes[f].parents)), shapes[f].child);
  }
  return out;
}

RecognitionModel RecognitionModel::uniform(const ModelSpec& spec) { return {spec, zero_logits(spec), true}; }

RecognitionModel RecognitionModel::random(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto logits = zero_logits(spec);
  for (auto& m : logits)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = normal(rng);
  return {spec, std::move(logits), true};
}

std::size_t RecognitionModel::row_of(Factor f, std::size_t context, const Latents& z) const {
  std::size_t row = context;
  if (f == kS2) return row;
  row = row * spec_.card_s2 + z.s2;
  if (f == kA2) return row;
  row = row * spec_.card_a2 + z.a2;
  if (f == kS1) return row;
  return row * spec_.card_s1 + z.s1;
}

Eigen::VectorXd RecognitionModel::distribution(const RecognitionContext& ctx) const {
  const std::size_t k = context_index(spec_, ctx);
  const bool tick = level2_ticks(ctx.t, spec_);
  Eigen::VectorXd q(Eigen::Index(spec_.latent_count()));
  for (std::size_t i = 0; i < spec_.latent_count(); ++i) {
    const Latents z = latents_at(spec_, i);
    double p = tick ? tables_[kS2].prob(row_of(kS2, k, z), z.s2) : (z.s2 == ctx.prev.s2 ? 1.0 : 0.0);
    if (p > 0.0) {
      p *= tables_[kA2].prob(row_of(kA2, k, z), z.a2);
      p *= tables_[kS1].prob(row_of(kS1, k, z), z.s1);
      p *= tables_[kA1].prob(row_of(kA1, k, z), z.a1);
    }
    q(Eigen::Index(i)) = p;
  }
  return q;
}

double recognition_logprob(const RecognitionModel& rec, const Latents& z, const RecognitionContext& ctx) {
  const ModelSpec& spec = rec.spec();
  if (!in_range(z.s1, spec.card_s1) || !in_range(z.s2, spec.card_s2) || !in_range(z.a1, spec.card_a1) ||
      !in_range(z.a2, spec.card_a2)) {
    throw Error(ErrorKind::Dimension, "latent tuple out of range");
  }
  const std::size_t k = context_index(spec, ctx);
  double lp = 0.0;
  if (level2_ticks(ctx.t, spec)) {
    lp += rec.table(RecognitionModel::kS2).log_prob(rec.row_of(RecognitionModel::kS2, k, z), z.s2);
  } else if (z.s2 != ctx.prev.s2) {
    return neg_inf();
  }
  lp += rec.table(RecognitionModel::kA2).log_prob(rec.row_of(RecognitionModel::kA2, k, z), z.a2);
  lp += rec.table(RecognitionModel::kS1).log_prob(rec.row_of(RecognitionModel::kS1, k, z), z.s1);
  lp += rec.table(RecognitionModel::kA1).log_prob(rec.row_of(RecognitionModel::kA1, k, z), z.a1);
  return lp;
}

// ---------------------------------------------------------------------------
// Transitions

bool satisfies_hold(const ModelSpec& spec, const Trajectory& traj) {
  CompleteState prev = traj.x0;
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const int t = int(i) + 1;
    if (!level2_ticks(t, spec) && traj.steps[i].s2 != prev.s2) return false;
    prev = traj.steps[i];
  }
  return true;
}

double transition_logprob(const GenerativeModel& gen, const CompleteState& prev, const CompleteState& x, int t) {
  const ModelSpec& s = gen.spec;
  check_state(s, prev);
  check_state(s, x);
  double lp = 0.0;
  if (level2_ticks(t, s)) {
    lp += gen.dyn2.log_prob(gen.dyn2.row_index({prev.s2, prev.a}), x.s2);
  } else if (x.s2 != prev.s2) {
    return neg_inf();
  }
  lp += gen.pol2.log_prob(gen.pol2.row_index({x.s2}), x.a2);
  lp += gen.dyn1.log_prob(gen.dyn1.row_index({prev.s1, x.s2, prev.a}), x.s1);
  lp += gen.pol1.log_prob(gen.pol1.row_index({x.s1, x.a2}), x.a1);
  lp += gen.lik.log_prob(gen.lik.row_index({x.a1, x.s1}), x.o);
  lp += gen.pol0.log_prob(gen.pol0.row_index({x.o, x.a1}), x.a);
  return lp;
}

double trajectory_logprob(const GenerativeModel& gen, const Trajectory& traj) {
  if (traj.steps.empty()) throw Error(ErrorKind::InvalidArgument, "trajectory has no steps");
  double lp = 0.0;
  CompleteState prev = traj.x0;
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    lp += transition_logprob(gen, prev, traj.steps[i], int(i) + 1);
    prev = traj.steps[i];
  }
  return lp;
}

int sample_categorical(const Eigen::Ref<const Eigen::RowVectorXd>& probs, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng) * probs.sum();
  double acc = 0.0;
  int last = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs(i) <= 0.0) continue;
    acc += probs(i);
    last = int(i);
    if (u < acc) return int(i);
  }
  return last;
}

CompleteState sample_transition(const GenerativeModel& gen, const CompleteState& prev, int t, Rng& rng) {
  const ModelSpec& s = gen.spec;
  check_state(s, prev);
  CompleteState x;
  x.s2 = level2_ticks(t, s) ? sample_categorical(gen.dyn2.row(gen.dyn2.row_index({prev.s2, prev.a})), rng)
                            : prev.s2;
  x.a2 = sample_categorical(gen.pol2.row(gen.pol2.row_index({x.s2})), rng);
  x.s1 = sample_categorical(gen.dyn1.row(gen.dyn1.row_index({prev.s1, x.s2, prev.a})), rng);
  x.a1 = sample_categorical(gen.pol1.row(gen.pol1.row_index({x.s1, x.a2})), rng);
  x.o = sample_categorical(gen.lik.row(gen.lik.row_index({x.a1, x.s1})), rng);
  x.a = sample_categorical(gen.pol0.row(gen.pol0.row_index({x.o, x.a1})), rng);
  return x;
}

Eigen::VectorXd latent_prior(const GenerativeModel& gen, const CompleteState& prev, int t) {
  const ModelSpec& s = gen.spec;
  check_state(s, prev);
  const bool tick = level2_ticks(t, s);
  Eigen::VectorXd p(Eigen::Index(s.latent_count()));
  for (std::size_t i = 0; i < s.latent_count(); ++i) {
    const Latents z = latents_at(s, i);
    double v = tick ? gen.dyn2.prob(gen.dyn2.row_index({prev.s2, prev.a}), z.s2) : (z.s2 == prev.s2 ? 1.0 : 0.0);
    if (v > 0.0) {
      v *= gen.pol2.prob(std::size_t(z.s2), z.a2);
      v *= gen.dyn1.prob(gen.dyn1.row_index({prev.s1, z.s2, prev.a}), z.s1);
      v *= gen.pol1.prob(gen.pol1.row_index({z.s1, z.a2}), z.a1);
    }
    p(Eigen::Index(i)) = v;
  }
  return p;
}

Eigen::VectorXd observation_likelihood(const GenerativeModel& gen, int o) {
  const ModelSpec& s = gen.spec;
  if (!in_range(o, s.card_o)) throw Error(ErrorKind::Dimension, "observation out of range");
  Eigen::VectorXd l(Eigen::Index(s.latent_count()));
  for (std::size_t i = 0; i < s.latent_count(); ++i) {
    const Latents z = latents_at(s, i);
    l(Eigen::Index(i)) = gen.lik.prob(gen.lik.row_index({z.a1, z.s1}), o);
  }
  return l;
}

}  // namespace asc

// ---------------------------------------------------------------------------
// Chain helpers

namespace asc {

const char* to_string(RolloutDensity d) { return d == RolloutDensity::Feedforward ? "feedforward" : "feedback"; }

RolloutDensity parse_density(const std::string& name) {
  if (name == "feedforward") return RolloutDensity::Feedforward;
  if (name == "feedback") return RolloutDensity::Feedback;
  throw Error(ErrorKind::InvalidArgument, "unknown rollout density '" + name + "'");
}

Eigen::MatrixXd emission_marginal(const GenerativeModel& gen, const CompleteState& prev, int t) {
  const ModelSpec& s = gen.spec;
  const Eigen::VectorXd prior = latent_prior(gen, prev, t);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(s.card_o, s.card_a);
  for (std::size_t i = 0; i < s.latent_count(); ++i) {
    const double pz = prior(Eigen::Index(i));
    if (pz <= 0.0) continue;
    const Latents z = latents_at(s, i);
    const std::size_t lrow = gen.lik.row_index({z.a1, z.s1});
    for (int o = 0; o < s.card_o; ++o) {
      const double po = pz * gen.lik.prob(lrow, o);
      if (po <= 0.0) continue;
      out.row(o) += po * gen.pol0.row(gen.pol0.row_index({o, z.a1}));
    }
  }
  return out;
}

std::size_t action_count(const ModelSpec& spec) { return std::size_t(spec.card_a) * spec.card_a1 * spec.card_a2; }

std::size_t action_index(const ModelSpec& spec, const ActionTuple& u) {
  return (std::size_t(u.a) * spec.card_a1 + u.a1) * spec.card_a2 + u.a2;
}

ActionTuple action_at(const ModelSpec& spec, std::size_t index) {
  ActionTuple u;
  u.a2 = int(index % spec.card_a2); index /= spec.card_a2;
  u.a1 = int(index % spec.card_a1); index /= spec.card_a1;
  u.a = int(index);
  return u;
}

}  // namespace asc
