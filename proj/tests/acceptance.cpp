#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "asc/control.hpp"
#include "asc/io.hpp"
#include "asc/sim.hpp"
#include "asc/validate.hpp"

namespace {

using Clock = std::chrono::steady_clock;
namespace v = asc::validate;

constexpr std::uint64_t kSeed = 20240601;

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

Outcome from_checks(const std::vector<v::CheckResult>& checks, double time_limit = 0.0) {
  Outcome out{true, ""};
  double total = 0.0;
  for (const v::CheckResult& c : checks) {
    out.passed = out.passed && c.passed;
    total += c.seconds;
    if (!out.detail.empty()) out.detail += "; ";
    out.detail += c.name + " n=" + std::to_string(c.instances) + fmt(" max_err=%.3g tol=%.3g", c.max_error, c.tolerance);
    if (!c.passed && !c.detail.empty()) out.detail += " (" + c.detail + ")";
  }
  out.detail += fmt("; %.1fs", total);
  if (time_limit > 0.0 && total >= time_limit) {
    out.passed = false;
    out.detail += fmt(" exceeds %.0fs", time_limit);
  }
  return out;
}

struct Paired {
  double mean = 0.0;
  double se = 0.0;
};

Paired paired_difference(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  Eigen::VectorXd d(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) d(Eigen::Index(i)) = b[i] - a[i];
  const double mean = d.mean();
  const double var = (d.array() - mean).square().sum() / double(n - 1);
  return {mean, std::sqrt(var / double(n))};
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / double(v.size());
}

Outcome behavioral_improvement() {
  const auto start = Clock::now();
  const asc::ThermostatTask task = asc::thermostat_env(asc::ThermostatParams{});
  asc::Rng rng(42);
  asc::GenerativeModel init = task.agent;
  init.pol0 = asc::ConditionalTable::random(init.pol0.parent_dims(), init.pol0.child_dim(), rng);
  const asc::RecognitionModel rec0 = asc::RecognitionModel::random(init.spec, 43);

  asc::TrainConfig cfg;
  cfg.horizon = 12;
  cfg.iterations = 100;
  cfg.learning_rate = 1.0;
  const asc::TrainResult trained = asc::train(init, rec0, task.ref, task.env.x0, cfg);

  const int episodes = 50;
  const int steps = 200;
  const std::uint64_t seed = 7;
  const asc::Evaluation e_trained = asc::evaluate({trained.gen, trained.rec, task.ref}, task.env, episodes, steps, seed);
  const asc::Evaluation e_init = asc::evaluate({init, rec0, task.ref}, task.env, episodes, steps, seed);
  const asc::Evaluation e_uniform = asc::evaluate({task.agent, rec0, task.ref}, task.env, episodes, steps, seed);

  const Paired vs_init = paired_difference(e_trained.reference_surprisal, e_init.reference_surprisal);
  const Paired vs_uniform = paired_difference(e_trained.reference_surprisal, e_uniform.reference_surprisal);
  const double secs = seconds_since(start);
  Outcome out;
  out.passed = vs_init.mean > 3.0 * vs_init.se && vs_uniform.mean > 3.0 * vs_uniform.se && secs < 300.0;
  out.detail = fmt("reference surprisal trained %.4f, init %.4f, uniform %.4f", mean_of(e_trained.reference_surprisal),
                   mean_of(e_init.reference_surprisal), mean_of(e_uniform.reference_surprisal)) +
               fmt("; margin vs init %.4f (%.1f SE), vs uniform %.4f (%.1f SE)", vs_init.mean,
                   vs_init.mean / vs_init.se, vs_uniform.mean, vs_uniform.mean / vs_uniform.se) +
               fmt("; %.1fs", secs);
  return out;
}

int run(const std::string& command) { return std::system(command.c_str()); }

Outcome determinism() {
  const auto dir = std::filesystem::temp_directory_path() / ("asc_acceptance_" + std::to_string(kSeed));
  std::filesystem::create_directories(dir);
  const std::string cli = ASC_CLI_PATH;
  const std::string model = (dir / "model.json").string();
  const std::string a = (dir / "a.csv").string();
  const std::string b = (dir / "b.csv").string();
  Outcome out;
  if (run(cli + " init --env thermostat --policy random --seed 5 --out " + model + " > /dev/null") != 0) {
    out.detail = "init failed";
    return out;
  }
  for (const std::string& trace : {a, b}) {
    if (run(cli + " simulate --model " + model + " --env thermostat --steps 500 --seed 31 --trace " + trace +
            " > /dev/null") != 0) {
      out.detail = "simulate failed";
      return out;
    }
  }
  const std::string ta = asc::read_text(a);
  const std::string tb = asc::read_text(b);
  out.passed = !ta.empty() && ta == tb;
  out.detail = std::to_string(ta.size()) + " bytes, digests " + asc::digest(ta) + " / " + asc::digest(tb);
  std::filesystem::remove_all(dir);
  return out;
}

}  // namespace

int main() {
  const v::SuiteOptions full{kSeed, 100};
  const v::SuiteOptions gradient{kSeed, 20};

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "free-energy decomposition", [&] { return from_checks({v::check_free_energy(full)}, 10.0); }},
      {2, "optimal transition normalization", [&] { return from_checks({v::check_qstar_normalization(full)}); }},
      {3, "KL identity", [&] { return from_checks({v::check_kl_identity(full)}); }},
      {4, "soft-value equivalence", [&] { return from_checks({v::check_soft_value(full)}, 60.0); }},
      {5, "Jensen bound",
       [&] { return from_checks({v::check_jensen(full), v::check_jensen_equality(full)}); }},
      {6, "average-cost consistency",
       [&] { return from_checks({v::check_rvi(full), v::check_rvi_rollout(full, 100000)}); }},
      {7, "gradient correctness", [&] { return from_checks({v::check_gradient(gradient)}); }},
      {8, "behavioral improvement", behavioral_improvement},
      {9, "determinism", determinism},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.passed) ++failures;
    std::printf("criterion %d %s: %s (%s)\n", c.id, o.passed ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
