/**
 * Copyright 2026 The fedotp Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "fedotp/config.hpp"
#include "fedotp/federated.hpp"
#include "fedotp/report.hpp"
#include "fedotp/verify.hpp"
#include "json.hpp"

namespace fedotp::cli {
namespace {

namespace fs = std::filesystem;
using fed::ExperimentConfig;
using nlohmann::ordered_json;

const std::vector<double> kSweepGammas = {1.0, 0.9, 0.8, 0.7, 0.6, 0.5};
const std::vector<std::size_t> kSweepShots = {1, 2, 4, 8, 16};

// Raised for bad input files; always exit 1.
struct InputError {
  std::string message;
};

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIoError:
    case ErrorCode::kEmptyCohort:
    case ErrorCode::kShapeMismatch:
    case ErrorCode::kUnsupportedIsa:
      return kExitRuntime;
    default:
      return kExitValidation;
  }
}

std::string describe(const Error& e) {
  std::string s = e.what();
  if (!e.subject().empty() && s.find(e.subject()) == std::string::npos) {
    s += " [" + e.subject() + "]";
  }
  return s;
}

std::string gamma_label(double gamma) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, gamma);
  std::string s(buf, ec == std::errc() ? end : buf);
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos) s += ".0";
  return s;
}

struct CommonOptions {
  std::string config_path;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::size_t jobs = 1;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required) {
  auto* opt = cmd->add_option("config", o.config_path, "experiment config file (INI)");
  if (config_required) opt->required();
  cmd->add_option("-o,--output-dir", o.output_dir, "output directory, overrides the config");
  cmd->add_option("--seed", o.seed, "experiment seed, overrides the config");
  cmd->add_option("--mode", o.mode, "method: fedotp, shared_only, local_only, "
                                    "similarity_avg, classical_ot");
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig c;
  if (!o.config_path.empty()) {
    try {
      c = config::load_config(o.config_path);
    } catch (const Error& e) {
      throw InputError{describe(e) + (e.subject() == o.config_path ? "" : " in " + o.config_path)};
    }
  }
  config::apply_environment(c);
  if (!o.output_dir.empty()) c.output_dir = o.output_dir;
  if (o.seed) c.seed = *o.seed;
  if (!o.mode.empty()) {
    try {
      c.method = fed::parse_method(o.mode);
    } catch (const Error&) {
      throw InputError{"unknown --mode '" + o.mode + "'"};
    }
  }
  c.validate();
  return c;
}

std::string round_line(const fed::RoundReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "round %3zu  mean_acc %.4f  std_acc %.4f  mean_loss %.4f  train_loss %.4f  "
                "solver_iters %.1f\n",
                r.round, r.mean_acc, r.std_acc, r.mean_loss, r.mean_train_loss,
                r.solver_mean_iters);
  return buf;
}

report::PatchGrid parse_grid(const std::string& text, std::size_t patches) {
  if (text.empty()) {
    std::size_t rows = static_cast<std::size_t>(std::sqrt(static_cast<double>(patches)));
    while (rows > 1 && patches % rows != 0) --rows;
    rows = std::max<std::size_t>(rows, 1);
    return {rows, patches / rows};
  }
  const auto x = text.find('x');
  report::PatchGrid g;
  if (x == std::string::npos ||
      std::from_chars(text.data(), text.data() + x, g.rows).ec != std::errc() ||
      std::from_chars(text.data() + x + 1, text.data() + text.size(), g.cols).ec !=
          std::errc()) {
    throw InputError{"--grid expects ROWSxCOLS, got '" + text + "'"};
  }
  return g;
}

// Runs experiments on `jobs` threads; results keep input order.
std::vector<fed::ExperimentResult> run_all(const std::vector<ExperimentConfig>& configs,
                                           std::size_t jobs) {
  std::vector<std::optional<fed::ExperimentResult>> results(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        results[i] = fed::run_experiment(configs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(jobs, configs.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<fed::ExperimentResult> out;
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

// -- run ---------------------------------------------------------------------

struct RunOptions {
  CommonOptions common;
  std::size_t plans = 0;
  std::string grid;
  bool quiet = false;
};

void export_plans(fed::Environment& env, const RunOptions& o, std::ostream& out) {
  const auto mode = env.config.method_matching();
  if (!mode.is_ot()) {
    throw Error(ErrorCode::kInvalidValue,
                "--plans needs an OT mode, not " + std::string(fed::to_string(env.config.method)),
                "--plans");
  }
  const auto grid = parse_grid(o.grid, env.config.data.patches_per_sample);
  const fs::path dir = fs::path(env.config.output_dir) / "plans";
  std::size_t written = 0;
  for (std::size_t i = 0; written < o.plans; ++i) {
    const auto& client = env.clients[i % env.clients.size()];
    const std::size_t sample = i / env.clients.size();
    if (sample >= client.test.size()) {
      if (i >= env.clients.size() * 1024) break;
      continue;
    }
    const auto& ex = client.test[sample];
    const auto text = alignment::encode_prompts(env.text, client.prompts);
    auto s = alignment::score(ex.features, text, mode, env.config.solver, nullptr, true);
    const std::string name = "client" + std::to_string(client.client_id) + "_sample" +
                             std::to_string(sample) + ".json";
    report::export_plan(s.plans[ex.label], grid, {mode.gamma, mode.lambda},
                        (dir / name).string());
    ++written;
  }
  out << "wrote " << written << " plan files to " << dir.string() << "\n";
}

int cmd_run(const RunOptions& o, std::ostream& out) {
  const ExperimentConfig c = resolve_config(o.common);
  fed::Environment env = fed::build_environment(c);
  const auto result = fed::run_experiment(env);
  if (!o.quiet) {
    out << "initial   mean_acc " << std::to_string(result.initial.mean_acc) << "\n";
    for (const auto& r : result.rounds) out << round_line(r);
  }
  const fs::path dir(c.output_dir);
  if (!result.rounds.empty()) report::export_curves(result.rounds, (dir / "curves.csv").string());
  report::export_summary(c, result, (dir / "summary.json").string());
  char buf[128];
  std::snprintf(buf, sizeof buf, "final mean_acc %.4f std_acc %.4f (%s)\n", result.final.mean_acc,
                result.final.std_acc, fed::to_string(c.method));
  out << buf << "wrote " << (dir / "curves.csv").string() << "\n";
  if (o.plans > 0) export_plans(env, o, out);
  return kExitOk;
}

// -- sweeps ------------------------------------------------------------------

struct SweepOptions {
  CommonOptions common;
  std::vector<double> gammas = kSweepGammas;
  std::vector<std::size_t> shots = kSweepShots;
};

int finish_sweep(const std::vector<ExperimentConfig>& configs,
                 const std::vector<std::string>& names, const std::vector<std::string>& labels,
                 std::size_t jobs, std::ostream& out) {
  const auto results = run_all(configs, jobs);
  for (std::size_t i = 0; i < results.size(); ++i) {
    const fs::path path = fs::path(configs[i].output_dir) / names[i];
    report::export_curves(results[i].rounds, path.string());
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-14s final mean_acc %.4f  -> %s\n", labels[i].c_str(),
                  results[i].final.mean_acc, path.string().c_str());
    out << buf;
  }
  return kExitOk;
}

int cmd_sweep_gamma(const SweepOptions& o, std::ostream& out) {
  const ExperimentConfig base = resolve_config(o.common);
  if (base.resolved_rounds() == 0) {
    throw Error(ErrorCode::kInvalidValue, "a sweep needs rounds >= 1", "rounds");
  }
  std::vector<ExperimentConfig> configs;
  std::vector<std::string> names, labels;
  std::set<std::string> seen;
  for (double g : o.gammas) {
    ExperimentConfig c = base;
    c.matching.gamma = g;
    c.validate();
    const std::string label = gamma_label(g);
    if (!seen.insert(label).second) {
      throw Error(ErrorCode::kInvalidValue, "gamma " + label + " listed twice", "--gammas");
    }
    configs.push_back(c);
    names.push_back("curves_gamma_" + label + ".csv");
    labels.push_back("gamma " + label);
  }
  return finish_sweep(configs, names, labels, o.common.jobs, out);
}

int cmd_sweep_shots(const SweepOptions& o, std::ostream& out) {
  const ExperimentConfig base = resolve_config(o.common);
  if (base.resolved_rounds() == 0) {
    throw Error(ErrorCode::kInvalidValue, "a sweep needs rounds >= 1", "rounds");
  }
  std::vector<ExperimentConfig> configs;
  std::vector<std::string> names, labels;
  std::set<std::size_t> seen;
  for (std::size_t s : o.shots) {
    ExperimentConfig c = base;
    c.data.shots_per_class = s;
    c.validate();
    if (!seen.insert(s).second) {
      throw Error(ErrorCode::kInvalidValue, "shots " + std::to_string(s) + " listed twice",
                  "--shots");
    }
    configs.push_back(c);
    names.push_back("curves_shots_" + std::to_string(s) + ".csv");
    labels.push_back("shots " + std::to_string(s));
  }
  return finish_sweep(configs, names, labels, o.common.jobs, out);
}

// -- solve -------------------------------------------------------------------

struct SolveOptions {
  std::string problem_path;
  std::string solver = "dykstra";
  std::optional<int> max_iter;
  std::optional<double> epsilon;
  std::string plan_out;
  std::string grid;
};

std::vector<double> json_vector(const nlohmann::json& j, const char* key) {
  if (!j.is_array()) {
    throw Error(ErrorCode::kInvalidValue, "'" + std::string(key) + "' must be an array", key);
  }
  std::vector<double> v;
  for (const auto& x : j) {
    if (!x.is_number()) {
      throw Error(ErrorCode::kInvalidValue, "'" + std::string(key) + "' holds a non-number", key);
    }
    v.push_back(x.get<double>());
  }
  return v;
}

ot::TransportProblem load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read problem file '" + path + "'", path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what(), path);
  }
  if (!doc.is_object()) throw Error(ErrorCode::kParseError, path + ": expected an object", path);
  static const std::set<std::string> known = {"cost", "lambda", "gamma", "alpha", "beta"};
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) throw Error(ErrorCode::kUnknownKey, "unknown key '" + key + "'", key);
  }
  if (!doc.contains("cost")) throw Error(ErrorCode::kInvalidValue, "missing 'cost'", "cost");
  const auto& rows = doc["cost"];
  if (!rows.is_array() || rows.empty()) {
    throw Error(ErrorCode::kInvalidValue, "'cost' must be a nonempty array of rows", "cost");
  }
  Matrix cost(rows.size(), rows[0].is_array() ? rows[0].size() : 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto row = json_vector(rows[r], "cost");
    if (row.size() != cost.cols() || row.empty()) {
      throw Error(ErrorCode::kDimensionMismatch, "'cost' rows differ in length", "cost");
    }
    std::copy(row.begin(), row.end(), cost.row(r).begin());
  }
  const double lambda = doc.value("lambda", 0.1);
  const double gamma = doc.value("gamma", 0.8);
  ot::TransportProblem p = ot::uniform_problem(std::move(cost), gamma, lambda);
  if (doc.contains("alpha")) p.alpha = json_vector(doc["alpha"], "alpha");
  if (doc.contains("beta")) p.beta = json_vector(doc["beta"], "beta");
  p.validate();
  return p;
}

int cmd_solve(const SolveOptions& o, std::ostream& out) {
  ot::TransportProblem problem;
  try {
    problem = load_problem(o.problem_path);
  } catch (const Error& e) {
    throw InputError{describe(e) + (e.subject() == o.problem_path ? "" : " in " + o.problem_path)};
  }
  ot::SolverConfig config = o.solver == "sinkhorn" ? ot::sinkhorn_defaults() : ot::SolverConfig{};
  if (o.max_iter) config.max_iter = *o.max_iter;
  if (o.epsilon) config.epsilon = *o.epsilon;
  config.validate();

  ot::TransportPlan plan;
  if (o.solver == "dykstra") {
    plan = ot::solve_dykstra_unbalanced(problem, config);
  } else if (o.solver == "sinkhorn") {
    plan = ot::solve_sinkhorn(problem, config);
  } else {
    plan = ot::brute_force_ot_oracle(problem);
  }
  const auto err = ot::marginal_error(plan.plan, problem);
  ordered_json doc;
  doc["solver"] = o.solver;
  doc["objective"] = plan.objective;
  doc["entropic_objective"] = ot::entropic_objective(plan.plan, problem.cost, problem.lambda);
  doc["iterations"] = plan.iterations;
  doc["converged"] = plan.converged;
  doc["underflow"] = plan.underflow;
  doc["column_error"] = err.column;
  doc["row_excess"] = err.row_excess;
  doc["support"] = report::support_size(plan.plan);
  ordered_json rows = ordered_json::array();
  for (std::size_t r = 0; r < plan.plan.rows(); ++r) {
    rows.push_back(std::vector<double>(plan.plan.row(r).begin(), plan.plan.row(r).end()));
  }
  doc["plan"] = std::move(rows);
  out << doc.dump(2) << "\n";
  if (!o.plan_out.empty()) {
    report::export_plan(plan, parse_grid(o.grid, problem.rows()),
                        {problem.gamma(), problem.lambda}, o.plan_out);
  }
  return kExitOk;
}

// -- verify ------------------------------------------------------------------

int cmd_verify(std::ostream& out) {
  const auto results = verify::run_suites();
  for (const auto& r : results) {
    const char* tag = r.passed ? "PASS" : (r.gating ? "FAIL" : "INFO");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s  %-26s ", tag, r.name.c_str());
    out << buf << r.detail << "\n";
  }
  const bool ok = verify::all_passed(results);
  out << (ok ? "all gating suites passed\n" : "verification FAILED\n");
  return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int main_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated prompt learning with unbalanced optimal transport", "fedotp"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "run one experiment and write curves.csv and summary.json");
  add_common(run, run_opts.common, true);
  run->add_option("--plans", run_opts.plans, "export the true-class transport plans of N test "
                                             "samples");
  run->add_option("--grid", run_opts.grid, "patch grid ROWSxCOLS for plan exports");
  run->add_flag("-q,--quiet", run_opts.quiet, "only print the final line");

  SweepOptions gamma_opts;
  auto* sweep_gamma = app.add_subcommand("sweep-gamma", "repeat an experiment over gamma values");
  add_common(sweep_gamma, gamma_opts.common, false);
  sweep_gamma->add_option("--gammas", gamma_opts.gammas, "gamma values")->delimiter(',');
  sweep_gamma->add_option("-j,--jobs", gamma_opts.common.jobs, "parallel experiments")
      ->check(CLI::PositiveNumber);

  SweepOptions shots_opts;
  auto* sweep_shots = app.add_subcommand("sweep-shots", "repeat an experiment over shot counts");
  add_common(sweep_shots, shots_opts.common, false);
  sweep_shots->add_option("--shots", shots_opts.shots, "shots per class")->delimiter(',');
  sweep_shots->add_option("-j,--jobs", shots_opts.common.jobs, "parallel experiments")
      ->check(CLI::PositiveNumber);

  SolveOptions solve_opts;
  auto* solve = app.add_subcommand("solve", "solve one transport problem from a JSON file");
  solve->add_option("problem", solve_opts.problem_path, "problem file")->required();
  solve->add_option("--solver", solve_opts.solver, "dykstra, sinkhorn or lp")
      ->check(CLI::IsMember({"dykstra", "sinkhorn", "lp"}));
  solve->add_option("--max-iter", solve_opts.max_iter, "iteration cap");
  solve->add_option("--epsilon", solve_opts.epsilon, "stopping tolerance on v");
  solve->add_option("--plan-out", solve_opts.plan_out, "also export the plan as heatmap data");
  solve->add_option("--grid", solve_opts.grid, "patch grid ROWSxCOLS for --plan-out");

  auto* verify_cmd = app.add_subcommand("verify", "run the solver and gradient self-checks");

  if (args.size() > 1 && !args[1].empty() && args[1][0] != '-' &&
      app.get_subcommand_no_throw(args[1]) == nullptr) {
    err << "fedotp: unknown subcommand '" << args[1] << "'\n\n" << app.help();
    return kExitValidation;
  }
  // CLI11 consumes the vector from the back.
  std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(reversed.begin(), reversed.end());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto parsed = app.get_subcommands();
    out << (parsed.empty() ? app.help() : parsed.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const auto parsed = app.get_subcommands();
    const std::string where = parsed.empty() ? "fedotp" : "fedotp " + parsed.front()->get_name();
    err << where << ": " << e.what() << "\n\n"
        << (parsed.empty() ? app.help() : parsed.front()->help());
    return kExitValidation;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  try {
    if (chosen == run) return cmd_run(run_opts, out);
    if (chosen == sweep_gamma) return cmd_sweep_gamma(gamma_opts, out);
    if (chosen == sweep_shots) return cmd_sweep_shots(shots_opts, out);
    if (chosen == solve) return cmd_solve(solve_opts, out);
    if (chosen == verify_cmd) return cmd_verify(out);
  } catch (const InputError& e) {
    err << "fedotp " << name << ": " << e.message << "\n";
    return kExitValidation;
  } catch (const Error& e) {
    err << "fedotp " << name << ": " << describe(e) << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "fedotp " << name << ": " << e.what() << "\n";
    return kExitRuntime;
  }
  err << "fedotp: unknown subcommand '" << name << "'\n";
  return kExitValidation;
}

}  // namespace fedotp::cli
