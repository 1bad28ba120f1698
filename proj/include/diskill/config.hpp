#ifndef DISKILL_CONFIG_HPP
#define DISKILL_CONFIG_HPP

#include <cstdint>
#include <string>

#include "diskill/environments.hpp"
#include "diskill/moe_policy.hpp"
#include "diskill/updates.hpp"

namespace diskill {

struct RunConfig {
  int max_iterations = 1000;
  int env_batch_size = 5000;
  std::uint64_t seed = 0;
  std::string checkpoint_path = "diskill.ckpt";
  std::string log_path = "diskill_log.csv";
  int checkpoint_every = 50;  // 0: only at the end
  int eval_every = 10;        // 0: never
  int eval_contexts = 100;
  int threads = 0;  // 0: hardware concurrency
};

/**
 * Everything needed to reproduce a training run.
 *
 * File format: sections [env], [model], [update], [run] with `key = value`
 * lines; `#` starts a comment. Unknown sections or keys are rejected.
 * to_text() writes every key, so parse(to_text()) reproduces the config exactly.
 */
struct TrainConfig {
  EnvConfig env;
  ModelConfig model;
  UpdateConfig update;
  RunConfig run;

  void validate() const;
  std::string to_text() const;
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::string& path);

  /// Hash over everything that shapes the learned model: env, model, update,
  /// seed and batch size. Iteration count, paths and cadences are excluded.
  std::uint64_t model_hash() const;
};

/// Defaults for the 5-link reacher from the published hyperparameter table.
TrainConfig default_reacher5_config();
/// Scaled-down 2-link reacher used for desk-scale experiments.
TrainConfig desk_reacher2_config();
/// Gate environment with the same learning settings as desk_reacher2_config().
TrainConfig desk_gate_config();

}  // namespace diskill

#endif  // DISKILL_CONFIG_HPP
