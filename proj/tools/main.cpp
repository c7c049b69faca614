// Command-line driver: train / compare / evaluate / verify-oracle.
// Exit codes: 0 success, 1 validation or I/O failure, 2 training divergence,
// 3 analytic-oracle failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hjbppo/config.hpp"
#include "hjbppo/environment.hpp"
#include "hjbppo/errors.hpp"
#include "hjbppo/lqr.hpp"
#include "hjbppo/metrics.hpp"
#include "hjbppo/trainer.hpp"

namespace {

using hjbppo::ConfigError;
using hjbppo::DivergenceError;
using hjbppo::OracleError;

struct OverrideFlags {
  std::string config_path;
  std::string seed, algorithm, env, timesteps, lambda_hjb, out;

  std::vector<hjbppo::config::KeyValue> to_overrides() const {
    std::vector<hjbppo::config::KeyValue> kv;
    if (!seed.empty()) kv.emplace_back("run.seed", seed);
    if (!algorithm.empty()) kv.emplace_back("run.algorithm", algorithm);
    if (!env.empty()) kv.emplace_back("run.environment", env);
    if (!timesteps.empty()) kv.emplace_back("run.total_timesteps", timesteps);
    if (!lambda_hjb.empty()) kv.emplace_back("trainer.lambda_hjb", lambda_hjb);
    if (!out.empty()) kv.emplace_back("run.out_dir", out);
    return kv;
  }
};

void add_override_flags(CLI::App* cmd, OverrideFlags& f) {
  cmd->add_option("--config", f.config_path, "config file (key = value lines)");
  cmd->add_option("--seed", f.seed, "override run.seed");
  cmd->add_option("--algorithm", f.algorithm, "override run.algorithm (ppo|hjbppo)");
  cmd->add_option("--env", f.env, "override run.environment");
  cmd->add_option("--timesteps", f.timesteps, "override run.total_timesteps");
  cmd->add_option("--lambda-hjb", f.lambda_hjb, "override trainer.lambda_hjb");
  cmd->add_option("--out", f.out, "override run.out_dir");
}

hjbppo::config::BuildResult load_config(const OverrideFlags& f) {
  std::vector<hjbppo::config::KeyValue> file_entries;
  if (!f.config_path.empty()) {
    file_entries = hjbppo::config::parse_config_file(f.config_path);
  }
  return hjbppo::config::build_config(file_entries, f.to_overrides());
}

void write_snapshot(const hjbppo::config::RunConfig& cfg,
                    const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config_resolved.cfg", std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write config snapshot in " + dir.string());
  }
  out << hjbppo::config::serialize_config(cfg);
}

void print_progress(const hjbppo::train::TrainingRun& run,
                    const hjbppo::metrics::IterationRecord& rec) {
  std::printf(
      "[iter %4d] steps %10llu  episodes %4d  reward50 %10.4g  "
      "bellman %9.4g  residual %9.4g  lambda %8.3g\n",
      rec.iteration, static_cast<unsigned long long>(rec.timestep),
      rec.episodes_finished, run.sink().reward_mean(), rec.bellman_mse,
      rec.hjb_mse, rec.lambda_hjb_effective);
  std::fflush(stdout);
}

int cmd_train(const OverrideFlags& flags, const std::string& resume_path) {
  if (!resume_path.empty()) {
    hjbppo::train::TrainingRun run =
        hjbppo::train::TrainingRun::load_checkpoint(resume_path);
    std::printf("resuming from %s at iteration %d (step %llu)\n",
                resume_path.c_str(), run.iteration(),
                static_cast<unsigned long long>(run.timestep()));
    run.run([&run](const hjbppo::metrics::IterationRecord& rec) {
      print_progress(run, rec);
    });
    std::printf("done: %d iterations, %llu steps\n", run.iteration(),
                static_cast<unsigned long long>(run.timestep()));
    return 0;
  }

  auto [cfg, warnings] = load_config(flags);
  for (const std::string& w : warnings) {
    std::fprintf(stderr, "warning: %s\n", w.c_str());
  }
  hjbppo::train::TrainingRun run(cfg.trainer);
  if (!cfg.trainer.out_dir.empty()) write_snapshot(cfg, cfg.trainer.out_dir);
  run.run([&run](const hjbppo::metrics::IterationRecord& rec) {
    print_progress(run, rec);
  });
  std::printf("done: %d iterations, %llu steps, final reward50 %.6g\n",
              run.iteration(), static_cast<unsigned long long>(run.timestep()),
              run.sink().reward_mean());
  return 0;
}

void append_series(std::vector<hjbppo::metrics::SvgSeries>& out,
                   const hjbppo::metrics::MetricsSink& sink,
                   const std::string& label, const std::string& color,
                   int family) {
  hjbppo::metrics::SvgSeries s;
  s.label = label;
  s.color = color;
  for (const auto& row : sink.rows()) {
    s.x.push_back(static_cast<double>(row.record.episode));
    switch (family) {
      case 0:
        s.mean.push_back(row.reward_mean);
        s.std.push_back(row.reward_std);
        break;
      case 1:
        s.mean.push_back(row.hjb_mean);
        break;
      default:
        s.mean.push_back(row.bellman_mean);
        break;
    }
  }
  if (!s.x.empty()) out.push_back(std::move(s));
}

int cmd_compare(const OverrideFlags& flags) {
  auto [cfg, warnings] = load_config(flags);
  for (const std::string& w : warnings) {
    std::fprintf(stderr, "warning: %s\n", w.c_str());
  }
  if (cfg.compare_seeds.empty()) {
    throw ConfigError("compare.seeds: required for the compare command "
                      "(comma-separated seed list)");
  }
  if (cfg.trainer.out_dir.empty()) {
    throw ConfigError("run.out_dir: required for the compare command");
  }
  const std::filesystem::path base = cfg.trainer.out_dir;
  std::filesystem::create_directories(base);

  std::ofstream summary(base / "summary.csv", std::ios::trunc);
  if (!summary) throw std::runtime_error("cannot write summary.csv");
  summary << "algorithm, seed, episodes, reward_mean50, reward_std50, "
             "hjb_mean50, bellman_mean50\n";

  for (const std::uint64_t seed : cfg.compare_seeds) {
    std::vector<hjbppo::metrics::SvgSeries> reward_series, hjb_series,
        bellman_series;
    for (const auto algorithm :
         {hjbppo::train::Algorithm::kPpo, hjbppo::train::Algorithm::kHjbppo}) {
      const std::string name = hjbppo::train::algorithm_name(algorithm);
      hjbppo::config::RunConfig sub = cfg;
      sub.trainer.algorithm = algorithm;
      sub.trainer.seed = seed;
      sub.trainer.out_dir =
          base / ("seed" + std::to_string(seed) + "_" + name);
      std::printf("=== %s, seed %llu ===\n", name.c_str(),
                  static_cast<unsigned long long>(seed));
      hjbppo::train::TrainingRun run(sub.trainer);
      write_snapshot(sub, sub.trainer.out_dir);
      run.run([&run](const hjbppo::metrics::IterationRecord& rec) {
        print_progress(run, rec);
      });

      const auto& sink = run.sink();
      summary << name << ", " << seed << ", " << sink.rows().size() << ", "
              << sink.reward_mean() << ", " << sink.reward_std() << ", "
              << sink.hjb_mean() << ", " << sink.bellman_mean() << "\n";
      const std::string color =
          algorithm == hjbppo::train::Algorithm::kPpo ? "#d62728" : "#1f77b4";
      append_series(reward_series, sink, name, color, 0);
      append_series(hjb_series, sink, name, color, 1);
      append_series(bellman_series, sink, name, color, 2);
    }

    const std::string tag = "seed" + std::to_string(seed);
    if (!reward_series.empty()) {
      hjbppo::metrics::SvgOptions o;
      o.title = "episode reward, " + tag + " (50-episode mean, shaded std)";
      o.y_label = "reward";
      hjbppo::metrics::export_svg(base / ("overlay_" + tag + "_reward.svg"),
                                  reward_series, o);
    }
    if (!hjb_series.empty()) {
      hjbppo::metrics::SvgOptions o;
      o.title = "HJB residual loss, " + tag + " (50-episode mean)";
      o.y_label = "mean squared residual";
      o.log_y = true;
      hjbppo::metrics::export_svg(base / ("overlay_" + tag + "_hjb_loss.svg"),
                                  hjb_series, o);
    }
    if (!bellman_series.empty()) {
      hjbppo::metrics::SvgOptions o;
      o.title = "Bellman loss, " + tag + " (50-episode mean)";
      o.y_label = "mean squared residual";
      o.log_y = true;
      hjbppo::metrics::export_svg(
          base / ("overlay_" + tag + "_bellman_loss.svg"), bellman_series, o);
    }
  }
  if (!summary) throw std::runtime_error("write failed: summary.csv");
  std::printf("compare artifacts written to %s\n", base.string().c_str());
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& run_dir,
                 int episodes, std::uint64_t seed) {
  std::filesystem::path path;
  if (!checkpoint.empty()) {
    path = checkpoint;
  } else if (!run_dir.empty()) {
    path = std::filesystem::path(run_dir) / "checkpoint_final.bin";
  } else {
    throw ConfigError("evaluate: provide --checkpoint or --run-dir");
  }
  hjbppo::train::TrainingRun run =
      hjbppo::train::TrainingRun::load_checkpoint(path);
  hjbppo::RngStream eval_rng(seed);
  const hjbppo::train::EvalReport rep = hjbppo::train::evaluate_policy(
      run.environment(), run.policy(), episodes, eval_rng);
  std::printf(
      "checkpoint %s\nalgorithm %s on %s, trained %llu steps\n"
      "deterministic evaluation: %d episodes, mean reward %.6g, std %.6g, "
      "mean length %.1f\n",
      path.string().c_str(),
      hjbppo::train::algorithm_name(run.config().algorithm).c_str(),
      run.config().env_name.c_str(),
      static_cast<unsigned long long>(run.timestep()), rep.episodes,
      rep.mean_reward, rep.std_reward, rep.mean_length);
  return 0;
}

int cmd_verify_oracle(const std::string& env_name, int probes, double box,
                      double gamma, std::uint64_t seed) {
  const auto env = hjbppo::envs::make_environment(env_name);
  const auto* lqr =
      dynamic_cast<const hjbppo::envs::LqrEnvironment*>(env.get());
  if (lqr == nullptr) {
    throw ConfigError("verify-oracle: environment `" + env_name +
                      "` is not linear-quadratic; use lqr or point_mass");
  }
  const double g = gamma > 0.0 ? gamma : env->spec().gamma;
  const hjbppo::envs::OracleReport rep =
      hjbppo::envs::verify_lqr_oracle(lqr->problem(), g, probes, box, seed);
  std::printf("environment %s, gamma %.6g, %d probe states in [-%g, %g]^%d\n",
              env_name.c_str(), g, rep.probes, box, box,
              lqr->problem().state_dim());
  std::printf("  CARE residual (Frobenius):        %.6g\n",
              rep.care_residual_fro);
  std::printf("  max |HJB residual| at optimum:    %.6g\n",
              rep.max_hjb_residual);
  std::printf("  min supremand drop off-optimum:   %.6g\n",
              rep.min_sup_margin);
  std::string failure;
  if (!(rep.care_residual_fro < 1e-9)) {
    failure += "\n  CARE residual exceeds 1e-9";
  }
  if (!(rep.max_hjb_residual < 1e-8)) {
    failure += "\n  HJB residual at the optimum exceeds 1e-8";
  }
  if (!(rep.min_sup_margin > 0.0)) {
    failure += "\n  a perturbed control failed to decrease the supremand";
  }
  if (!failure.empty()) {
    throw OracleError("oracle verification failed:" + failure);
  }
  std::printf("all oracle checks passed\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continuous-control PPO / HJB-regularized PPO trainer"};
  app.require_subcommand(1);

  OverrideFlags train_flags;
  std::string resume_path;
  CLI::App* train = app.add_subcommand("train", "run one training run");
  add_override_flags(train, train_flags);
  train->add_option("--resume", resume_path,
                    "resume from a checkpoint (ignores other flags)");

  OverrideFlags compare_flags;
  CLI::App* compare = app.add_subcommand(
      "compare", "run PPO and HJBPPO on identical seeds and overlay curves");
  add_override_flags(compare, compare_flags);

  std::string eval_checkpoint, eval_run_dir;
  int eval_episodes = 10;
  std::uint64_t eval_seed = 0;
  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "deterministically roll out a trained checkpoint");
  evaluate->add_option("--checkpoint", eval_checkpoint, "checkpoint file");
  evaluate->add_option("--run-dir", eval_run_dir,
                       "run directory holding checkpoint_final.bin");
  evaluate->add_option("--episodes", eval_episodes, "episodes to average");
  evaluate->add_option("--seed", eval_seed, "evaluation reset seed");

  std::string oracle_env = "lqr";
  int oracle_probes = 100;
  double oracle_box = 5.0;
  double oracle_gamma = 0.0;  // 0 = environment default
  std::uint64_t oracle_seed = 12345;
  CLI::App* verify = app.add_subcommand(
      "verify-oracle", "check the analytic LQR value/control pair");
  verify->add_option("--env", oracle_env, "lqr or point_mass");
  verify->add_option("--probes", oracle_probes, "number of probe states");
  verify->add_option("--box", oracle_box, "probe box half-width");
  verify->add_option("--gamma", oracle_gamma,
                     "discount (default: environment's)");
  verify->add_option("--seed", oracle_seed, "probe RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }

  try {
    if (train->parsed()) return cmd_train(train_flags, resume_path);
    if (compare->parsed()) return cmd_compare(compare_flags);
    if (evaluate->parsed()) {
      return cmd_evaluate(eval_checkpoint, eval_run_dir, eval_episodes,
                          eval_seed);
    }
    if (verify->parsed()) {
      return cmd_verify_oracle(oracle_env, oracle_probes, oracle_box,
                               oracle_gamma, oracle_seed);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return 2;
  } catch (const OracleError& e) {
    std::fprintf(stderr, "oracle failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
