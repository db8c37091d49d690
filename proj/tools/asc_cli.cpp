#include <algorithm>
#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "asc/control.hpp"
#include "asc/io.hpp"
#include "asc/oracle.hpp"
#include "asc/sim.hpp"
#include "asc/validate.hpp"

namespace {

using nlohmann::json;

// Keys of a config file that describe the model rather than run parameters.
bool is_model_key(const std::string& k) {
  return k == "version" || k == "spec" || k == "tables" || k == "recognition" || k == "x0" || k == "env";
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  for (const auto& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return asc::format_double(v.get<double>());
  return v.dump();
}

/// Appends run parameters from a JSON config file as command-line options,
/// without overriding anything given explicitly.
std::vector<std::string> expand_config(std::vector<std::string> args, std::optional<std::string>& config_text) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + long(i), args.begin() + long(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + long(i));
      break;
    }
  }
  if (path.empty()) return args;
  config_text = asc::read_text(path);
  const json doc = json::parse(*config_text);
  for (const auto& [key, value] : doc.items()) {
    if (is_model_key(key)) continue;
    const std::string flag = "--" + key;
    if (has_flag(args, flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) joined += (joined.empty() ? "" : ",") + scalar_text(v);
      args.push_back(flag);
      args.push_back(joined);
    } else {
      args.push_back(flag);
      args.push_back(scalar_text(value));
    }
  }
  return args;
}

asc::ModelFile load_agent(const std::string& path, const std::optional<std::string>& config_text) {
  if (!path.empty()) return asc::load_model(path);
  if (config_text && json::parse(*config_text).contains("spec")) return asc::parse_model(*config_text);
  throw asc::Error(asc::ErrorKind::InvalidArgument, "no model given: pass --model or a config containing one");
}

std::vector<int> parse_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

asc::ThermostatParams thermostat_for(const asc::ModelFile& f) {
  if (f.thermostat) return *f.thermostat;
  asc::ThermostatParams p;
  p.levels = f.gen.spec.card_s1;
  p.phase_length = f.gen.spec.tick_period_level2;
  p.schedule.clear();
  for (int k = 0; k < f.gen.spec.card_s2; ++k) p.schedule.push_back((k * (p.levels - 1)) / std::max(1, f.gen.spec.card_s2 - 1));
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Average-cost active inference on tabular hierarchical models"};
  app.require_subcommand(1);

  std::string model_path, out_path, report_path, trace_path, env_name = "thermostat", mode = "feedback";
  std::string estimator = "exact", schedule = "1,3", cards = "2,2,2,2,2,2", policy = "random";
  std::uint64_t seed = 0;
  int instances = 100, steps = 100, iters = 100, horizon = 8, levels = 5, phase = 6, period = 2, refresh = 10, warmup = 0;
  int max_iter = 100000;
  std::size_t rollouts = 1000;
  double tol = 1e-8, lr = 0.05, damping = 0.5, policy_scale = 1.0;
  std::optional<double> rate;
  bool train_generative = false, no_halving = false, exact = false;

  auto* validate = app.add_subcommand("validate", "Run the invariant suite and print a JSON report");
  validate->add_option("--seed", seed);
  validate->add_option("--instances", instances)->check(CLI::PositiveNumber);
  validate->add_option("--report", report_path, "Also write the report to this file");

  auto* solve = app.add_subcommand("solve", "Relative value iteration; writes the differential value");
  solve->add_option("--model", model_path);
  solve->add_option("--tol", tol)->check(CLI::PositiveNumber);
  solve->add_option("--max-iter", max_iter)->check(CLI::PositiveNumber);
  solve->add_option("--damping", damping);
  solve->add_option("--out", out_path)->required();

  auto* simulate = app.add_subcommand("simulate", "Run one episode and write its trace");
  simulate->add_option("--model", model_path);
  simulate->add_option("--env", env_name)->check(CLI::IsMember({"thermostat"}));
  simulate->add_option("--steps", steps)->check(CLI::PositiveNumber);
  simulate->add_option("--seed", seed);
  simulate->add_option("--trace", trace_path)->required();

  auto* train = app.add_subcommand("train", "Descend the differential free energy");
  train->add_option("--model", model_path);
  train->add_option("--steps", horizon, "Rollout horizon")->check(CLI::PositiveNumber);
  train->add_option("--iters", iters)->check(CLI::NonNegativeNumber);
  train->add_option("--lr", lr)->check(CLI::PositiveNumber);
  train->add_option("--seed", seed);
  train->add_option("--rate", rate, "Fixed rate; default re-estimates every --refresh iterations");
  train->add_option("--refresh", refresh)->check(CLI::NonNegativeNumber);
  train->add_option("--estimator", estimator)->check(CLI::IsMember({"exact", "mc"}));
  train->add_option("--rollouts", rollouts)->check(CLI::PositiveNumber);
  train->add_option("--warmup", warmup, "Leading iterations that update the recognition model only")
      ->check(CLI::NonNegativeNumber);
  train->add_option("--policy-scale", policy_scale, "Policy step size relative to --lr")->check(CLI::PositiveNumber);
  train->add_flag("--train-generative", train_generative, "Also train lik, dyn1 and dyn2");
  train->add_flag("--no-halving", no_halving, "Keep the step size fixed");
  train->add_option("--out", out_path)->required();
  train->add_option("--report", report_path);

  auto* pi = app.add_subcommand("pi-value", "Monte Carlo path-integral value and its free-energy bound");
  pi->add_option("--model", model_path);
  pi->add_option("--mode", mode)->check(CLI::IsMember({"feedforward", "feedback"}));
  pi->add_option("--rollouts", rollouts)->check(CLI::Range(std::size_t(2), std::size_t(1) << 40));
  pi->add_option("--horizon", horizon)->check(CLI::PositiveNumber);
  pi->add_option("--seed", seed);
  pi->add_option("--rate", rate);
  pi->add_flag("--exact", exact, "Also report the enumerated value (small models only)");

  auto* init = app.add_subcommand("init", "Write a fresh model file");
  init->add_option("--env", env_name)->check(CLI::IsMember({"thermostat", "random"}));
  init->add_option("--levels", levels)->check(CLI::Range(2, 64));
  init->add_option("--schedule", schedule, "Comma-separated setpoints, one per phase");
  init->add_option("--phase", phase)->check(CLI::PositiveNumber);
  init->add_option("--cards", cards, "o,s1,s2,a,a1,a2 for a random model");
  init->add_option("--period", period)->check(CLI::PositiveNumber);
  init->add_option("--policy", policy)->check(CLI::IsMember({"random", "uniform"}));
  init->add_option("--seed", seed);
  init->add_option("--out", out_path)->required();

  std::optional<std::string> config_text;
  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(std::move(args), config_text);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*validate) {
      const auto results = asc::validate::run_suite({seed, instances});
      const std::string report = asc::validate::report_json(results);
      std::cout << report;
      if (!report_path.empty()) asc::write_text(report_path, report);
      for (const auto& r : results) {
        if (!r.passed) return 1;
      }
      return 0;
    }

    if (*init) {
      asc::ModelFile f;
      asc::Rng rng(seed);
      if (env_name == "thermostat") {
        asc::ThermostatParams p;
        p.levels = levels;
        p.schedule = parse_list(schedule);
        p.phase_length = phase;
        const asc::ThermostatTask task = asc::thermostat_env(p);
        f.gen = task.agent;
        f.ref = task.ref;
        f.x0 = task.env.x0;
        f.thermostat = p;
        if (policy == "random") f.gen.pol0 = asc::ConditionalTable::random(f.gen.pol0.parent_dims(), 3, rng);
      } else {
        const std::vector<int> c = parse_list(cards);
        if (c.size() != 6) throw asc::Error(asc::ErrorKind::InvalidArgument, "--cards needs six values");
        const asc::ModelSpec spec{c[0], c[1], c[2], c[3], c[4], c[5], period};
        spec.validate();
        f.gen = asc::GenerativeModel::random(spec, rng);
        f.ref = asc::ReferenceModel::random(spec, rng);
      }
      f.rec = policy == "random" ? asc::RecognitionModel::random(f.gen.spec, rng())
                                 : asc::RecognitionModel::uniform(f.gen.spec);
      asc::save_model(out_path, f);
      return 0;
    }

    const asc::ModelFile f = load_agent(model_path, config_text);
    const asc::Models m{f.gen, f.rec, f.ref};

    if (*solve) {
      asc::RviOptions opts;
      opts.tol = tol;
      opts.max_iter = max_iter;
      opts.damping = damping;
      const asc::DifferentialValue v = asc::relative_value_iteration(f.gen, f.ref, opts);
      asc::write_text(out_path, asc::dump_value(f.gen.spec, v));
      std::cout << json{{"gain", v.gain}, {"residual", v.residual}, {"iterations", v.iterations}}.dump() << "\n";
      return 0;
    }

    if (*simulate) {
      const asc::ThermostatTask task = asc::thermostat_env(thermostat_for(f));
      if (!(task.env.spec == f.gen.spec)) {
        throw asc::Error(asc::ErrorKind::Dimension, "model does not match the thermostat environment");
      }
      asc::Trace tr = asc::run_episode(m, task.env, steps, seed);
      tr.config_digest = asc::digest(asc::dump_model(f) + "|" + std::to_string(steps));
      const std::string csv = tr.csv();
      asc::write_text(trace_path, csv);
      std::cout << json{{"seed", seed},
                        {"steps", steps},
                        {"config_digest", tr.config_digest},
                        {"trace_digest", asc::digest(csv)},
                        {"mean_rate", tr.rows.back().running_rate},
                        {"mean_reference_surprisal", tr.mean_scheduled_surprisal()}}
                       .dump()
                << "\n";
      return 0;
    }

    if (*train) {
      asc::TrainConfig cfg;
      cfg.horizon = horizon;
      cfg.iterations = iters;
      cfg.learning_rate = lr;
      cfg.halve_on_increase = !no_halving;
      cfg.rate_refresh = refresh;
      cfg.rate = rate;
      cfg.recognition_warmup = warmup;
      cfg.policy_step_scale = policy_scale;
      cfg.trainables.generative = train_generative;
      cfg.estimator = estimator == "mc" ? asc::Estimator::MonteCarlo : asc::Estimator::Exact;
      cfg.rollouts = rollouts;
      cfg.seed = seed;
      const asc::TrainResult res = asc::train(f.gen, f.rec, f.ref, f.x0, cfg);
      asc::ModelFile out = f;
      out.gen = res.gen;
      out.rec = res.rec;
      asc::save_model(out_path, out);
      const json report = {{"iterations", res.report.iterations},
                           {"objective_trace", res.report.objective_trace},
                           {"grad_norm_trace", res.report.grad_norm_trace},
                           {"rate_trace", res.report.rate_trace},
                           {"hindsight_trace", res.report.hindsight_trace},
                           {"final_rate", res.report.final_rate},
                           {"final_learning_rate", res.report.final_learning_rate}};
      if (!report_path.empty()) asc::write_text(report_path, report.dump(2) + "\n");
      std::cout << json{{"final_rate", res.report.final_rate},
                        {"final_objective",
                         res.report.objective_trace.empty() ? 0.0 : res.report.objective_trace.back()}}
                       .dump()
                << "\n";
      return 0;
    }

    if (*pi) {
      const asc::RolloutDensity d = asc::parse_density(mode);
      const double r = rate ? *rate : asc::carry_average_rate(d, m, f.x0, 4 * horizon, 4 * horizon);
      const auto est = asc::mc_path_integral_value(d, m, f.x0, horizon, r, rollouts, seed);
      const auto dfe = asc::differential_free_energy(d, m, f.x0, horizon, r);
      json out = {{"mode", mode},  {"rate", r},
                  {"estimate", est.estimate}, {"stderr", est.stderr_},
                  {"free_energy_bound", dfe.estimate}};
      if (exact) out["exact"] = asc::oracle::exact_path_integral_value(d, m, f.x0, horizon, r);
      std::cout << out.dump() << "\n";
      return 0;
    }
  } catch (const asc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
