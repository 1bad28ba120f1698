#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <random>

#include "diskill/analysis.hpp"
#include "diskill/errors.hpp"
#include "diskill/stats.hpp"
#include "diskill/trainer.hpp"

using namespace diskill;

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  return out;
}

TrainConfig preset(const std::string& name) {
  if (name == "reacher5") return default_reacher5_config();
  if (name == "desk-reacher2") return desk_reacher2_config();
  if (name == "desk-gate") return desk_gate_config();
  throw ConfigError("unknown preset '" + name + "' (reacher5, desk-reacher2, desk-gate)");
}

ContextBatch axis_goals(const Environment& env, int n) {
  // Goals on the reacher's mirror axis (y = 0), excluding the fully stretched pose.
  const double r = env.context_space().upper[0];
  ContextBatch b;
  b.contexts = Mat::Zero(2, n);
  for (int i = 0; i < n; ++i) b.contexts(0, i) = -0.9 * r + 1.8 * r * (n == 1 ? 0.5 : static_cast<double>(i) / (n - 1));
  return b;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture-of-experts contextual episodic RL with per-expert curricula"};
  app.require_subcommand(1);

  // config
  auto* cfg_cmd = app.add_subcommand("config", "Write a preset configuration file");
  std::string preset_name = "desk-reacher2", cfg_out;
  cfg_cmd->add_option("--preset", preset_name, "reacher5 | desk-reacher2 | desk-gate")->capture_default_str();
  cfg_cmd->add_option("--out", cfg_out, "output path (stdout when omitted)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train from scratch");
  std::string config_path;
  std::uint64_t seed = 0;
  std::optional<std::string> log_override, ckpt_override;
  std::optional<int> iter_override, threads_override;
  bool quiet = false;
  train_cmd->add_option("--config", config_path, "configuration file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", seed, "root seed (overrides the file)");
  train_cmd->add_option("--log", log_override, "iteration log CSV");
  train_cmd->add_option("--checkpoint", ckpt_override, "checkpoint path");
  train_cmd->add_option("--max-iterations", iter_override);
  train_cmd->add_option("--threads", threads_override);
  train_cmd->add_flag("--quiet", quiet);

  // resume
  auto* resume_cmd = app.add_subcommand("resume", "Continue training from a checkpoint");
  std::string ckpt_path;
  std::optional<int> resume_iters;
  std::optional<std::string> resume_log;
  resume_cmd->add_option("--checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  resume_cmd->add_option("--max-iterations", resume_iters);
  resume_cmd->add_option("--log", resume_log);
  resume_cmd->add_flag("--quiet", quiet);

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "Run the trained policy on fresh contexts");
  int n_contexts = 100;
  bool deterministic = false;
  std::uint64_t infer_seed = 0;
  std::string infer_out, expect_config;
  infer_cmd->add_option("--checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--n-contexts", n_contexts)->check(CLI::PositiveNumber);
  infer_cmd->add_flag("--deterministic", deterministic);
  infer_cmd->add_option("--seed", infer_seed);
  infer_cmd->add_option("--out", infer_out, "per-context CSV");
  infer_cmd->add_option("--expect-config", expect_config, "refuse unless the checkpoint matches this config");

  // report
  auto* report = app.add_subcommand("report", "Analysis outputs");
  report->require_subcommand(1);
  std::string logs_glob, metric = "global_mean_return", out_path;
  int n_boot = 2000;
  double level = 0.95;
  std::uint64_t report_seed = 0;
  auto* iqm_cmd = report->add_subcommand("iqm", "IQM learning curve with bootstrap CI across seeds");
  iqm_cmd->add_option("--logs", logs_glob, "glob matching one log per seed")->required();
  iqm_cmd->add_option("--metric", metric)->capture_default_str();
  iqm_cmd->add_option("--out", out_path)->required();
  iqm_cmd->add_option("--n-boot", n_boot)->capture_default_str();
  iqm_cmd->add_option("--level", level)->capture_default_str();
  iqm_cmd->add_option("--seed", report_seed);

  int grid_n = 200;
  double threshold = 0.2;
  auto* act_cmd = report->add_subcommand("activity", "Count active experts per context");
  act_cmd->add_option("--checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  act_cmd->add_option("--grid", grid_n)->capture_default_str();
  act_cmd->add_option("--threshold", threshold)->capture_default_str();
  act_cmd->add_option("--out", out_path);

  std::string svg_path;
  auto* heat_cmd = report->add_subcommand("heatmap", "Per-expert curriculum probabilities on a grid");
  heat_cmd->add_option("--checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  heat_cmd->add_option("--grid", grid_n)->capture_default_str();
  heat_cmd->add_option("--out", out_path)->required();
  heat_cmd->add_option("--svg", svg_path);

  int samples = 32;
  std::string traces_path;
  bool axis = false;
  auto* div_cmd = report->add_subcommand("diversity", "Distinct successful modes per context");
  div_cmd->add_option("--checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  div_cmd->add_option("--n-contexts", n_contexts)->capture_default_str();
  div_cmd->add_option("--samples", samples)->capture_default_str();
  div_cmd->add_flag("--axis", axis, "reacher goals on the mirror axis instead of random contexts");
  div_cmd->add_option("--seed", report_seed);
  div_cmd->add_option("--out", out_path);
  div_cmd->add_option("--traces", traces_path);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cfg_cmd->parsed()) {
      const std::string text = preset(preset_name).to_text();
      if (cfg_out.empty()) {
        std::cout << text;
      } else {
        open_out(cfg_out) << text;
      }
    } else if (train_cmd->parsed()) {
      TrainConfig cfg = TrainConfig::load(config_path);
      if (train_cmd->count("--seed") > 0) cfg.run.seed = seed;
      if (log_override) cfg.run.log_path = *log_override;
      if (ckpt_override) cfg.run.checkpoint_path = *ckpt_override;
      if (iter_override) cfg.run.max_iterations = *iter_override;
      if (threads_override) cfg.run.threads = *threads_override;
      const TrainSummary s = train(cfg, quiet ? nullptr : &std::cout);
      std::cout << "finished " << s.final_iteration << " iterations; checkpoint " << cfg.run.checkpoint_path
                << " (" << s.checkpoint_hash << ")\n";
    } else if (resume_cmd->parsed()) {
      const TrainSummary s = resume(ckpt_path, resume_iters, resume_log, quiet ? nullptr : &std::cout);
      if (s.iterations_run == 0) {
        std::cout << "checkpoint already at iteration " << s.final_iteration << "; nothing to do\n";
      } else {
        std::cout << "resumed to iteration " << s.final_iteration << " (" << s.checkpoint_hash << ")\n";
      }
    } else if (infer_cmd->parsed()) {
      std::optional<TrainConfig> expected;
      if (!expect_config.empty()) expected = TrainConfig::load(expect_config);
      const TrainerState st = load_checkpoint(ckpt_path, expected ? &*expected : nullptr);
      const auto env = make_environment(st.config.env);
      std::mt19937_64 rng(infer_seed);
      const ContextBatch contexts = sample_contexts(env->context_space(), n_contexts, rng);
      const auto results = infer(st.policy, *env, contexts, deterministic, rng);
      double ret = 0.0;
      int succ = 0;
      std::ofstream out;
      if (!infer_out.empty()) {
        out = open_out(infer_out);
        out << "index";
        for (int d = 0; d < env->context_dim(); ++d) out << ",c" << d;
        out << ",expert,return,success,final_distance\n";
      }
      for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        ret += r.episode.episodic_return;
        succ += r.episode.success ? 1 : 0;
        if (out.is_open()) {
          out << i;
          for (Eigen::Index d = 0; d < r.context.size(); ++d) out << ',' << format_double(r.context[d]);
          out << ',' << r.expert << ',' << format_double(r.episode.episodic_return) << ','
              << (r.episode.success ? 1 : 0) << ',' << format_double(r.episode.diagnostics.final_distance) << '\n';
        }
      }
      std::cout << "contexts " << results.size() << "  mean return " << ret / static_cast<double>(results.size())
                << "  success rate " << static_cast<double>(succ) / static_cast<double>(results.size()) << '\n';
    } else if (iqm_cmd->parsed()) {
      const auto files = glob_paths(logs_glob);
      if (files.size() < 2) throw ConfigError("pattern '" + logs_glob + "' matched fewer than 2 logs");
      const SeedRunSet runs = load_runset(files, metric);
      std::mt19937_64 rng(report_seed);
      const auto points = stratified_bootstrap_ci(runs, n_boot, level, rng);
      write_ci_csv(out_path, runs, points);
      std::cout << "wrote " << points.size() << " rows from " << files.size() << " seeds to " << out_path << '\n';
    } else if (act_cmd->parsed()) {
      const TrainerState st = load_checkpoint(ckpt_path);
      const auto env = make_environment(st.config.env);
      const ContextGrid grid = evaluation_grid(env->context_space(), grid_n);
      const ActivityMap map = activity_map(st.policy, grid.batch, threshold);
      if (!out_path.empty()) {
        auto out = open_out(out_path);
        write_activity_csv(out, map);
      }
      std::cout << "grid contexts " << map.counts.size();
      for (int m = 1; m <= map.num_experts; ++m)
        std::cout << "  >=" << m << ": " << map.fraction_with_at_least(m);
      std::cout << '\n';
    } else if (heat_cmd->parsed()) {
      const TrainerState st = load_checkpoint(ckpt_path);
      const auto env = make_environment(st.config.env);
      const ContextGrid grid = evaluation_grid(env->context_space(), grid_n);
      const Mat probs = curriculum_heatmap(st.policy, grid.batch);
      auto out = open_out(out_path);
      write_heatmap_csv(out, grid.batch, probs);
      if (!svg_path.empty()) {
        auto svg = open_out(svg_path);
        write_heatmap_svg(svg, grid, probs, env->context_space());
      }
      std::cout << "wrote " << probs.rows() << " surfaces over " << grid.batch.size() << " contexts\n";
    } else if (div_cmd->parsed()) {
      const TrainerState st = load_checkpoint(ckpt_path);
      const auto env = make_environment(st.config.env);
      std::mt19937_64 rng(report_seed);
      ContextBatch contexts;
      if (axis) {
        if (env->name() != "reacher") throw ConfigError("--axis applies to the reacher only");
        contexts = axis_goals(*env, n_contexts);
      } else {
        contexts = sample_contexts(env->context_space(), n_contexts, rng);
      }
      DiversityConfig dcfg;
      dcfg.samples_per_context = samples;
      std::ofstream traces;
      if (!traces_path.empty()) traces = open_out(traces_path);
      const DiversityReport rep =
          diversity_report(st.policy, *env, contexts, dcfg, rng, traces.is_open() ? &traces : nullptr);
      if (!out_path.empty()) {
        auto out = open_out(out_path);
        write_diversity_csv(out, rep);
      }
      std::cout << "contexts " << rep.contexts.size() << "  with >=2 modes: " << rep.fraction_with_modes(2) << '\n';
      for (int o = 0; o < st.policy.num_experts(); ++o)
        std::cout << "expert " << o << ": samples " << rep.expert_samples[static_cast<std::size_t>(o)]
                  << "  success rate " << rep.expert_success_rate(o) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
