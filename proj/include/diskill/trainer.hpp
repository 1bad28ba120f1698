#ifndef DISKILL_TRAINER_HPP
#define DISKILL_TRAINER_HPP

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "diskill/config.hpp"
#include "diskill/environments.hpp"
#include "diskill/moe_policy.hpp"
#include "diskill/serialization.hpp"
#include "diskill/updates.hpp"

namespace diskill {

/// Named random streams. Every (stream, iteration, expert) triple gets its own
/// generator derived from the root seed, so results do not depend on the
/// order or thread in which experts are processed.
enum class Stream : std::uint64_t {
  Init = 1,
  EnvBatch = 2,
  Curriculum = 3,
  Params = 4,
  Eval = 5,
};

std::mt19937_64 stream_rng(std::uint64_t root_seed, Stream stream, std::uint64_t iteration, std::uint64_t expert);

struct ExpertLog {
  double mean_return = 0.0;
  double curriculum_entropy = 0.0;
  double policy_entropy = 0.0;
  double surrogate = 0.0;
  double max_kl = 0.0;
  double expert_critic_loss = 0.0;
  double context_critic_loss = 0.0;
};

struct IterationLog {
  int iteration = 0;
  long long episodes = 0;  // cumulative
  double global_mean_return = 0.0;
  double success_rate = 0.0;
  double max_kl = 0.0;
  std::optional<double> eval_mean_return;
  std::optional<double> eval_success_rate;
  std::vector<ExpertLog> experts;
  double wall_time = 0.0;  // seconds; kept out of the CSV so logs stay reproducible
};

/// CSV header: iteration,episodes,global_mean_return,success_rate,max_kl,
/// eval_mean_return,eval_success_rate, then for each expert o:
/// e<o>_return,e<o>_curriculum_entropy,e<o>_policy_entropy,e<o>_surrogate,
/// e<o>_max_kl,e<o>_expert_critic_loss,e<o>_context_critic_loss
std::string log_header(int num_experts);
std::string log_row(const IterationLog& log);

/// Complete mutable training state; what a checkpoint stores.
struct TrainerState {
  TrainConfig config;
  MixturePolicy policy;
  std::vector<CriticPair> critics;
  std::vector<AdamState> expert_adam;
  std::vector<AdamState> ebm_adam;
  int iteration = 0;

  static TrainerState initialize(const TrainConfig& config);

  ParamStore to_store() const;
  static TrainerState from_store(const ParamStore& store);
  void save(const std::string& path) const;
  static TrainerState load(const std::string& path);

  /// Hash of the checkpoint text with run bookkeeping (paths, iteration
  /// budget, cadences, threads) reset, so equal models hash equally.
  std::string model_digest() const;
};

/// Raised after an update diverged; the last consistent state has been checkpointed.
struct TrainingHalted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Runs Algorithm-1 style iterations on a TrainerState.
class Trainer {
 public:
  explicit Trainer(TrainerState state);

  /// One iteration: fresh context batch, snapshot, per-expert rollouts, updates.
  IterationLog step();
  /// Records of the most recent step, grouped by expert.
  const std::vector<std::vector<RolloutRecord>>& last_records() const { return last_records_; }

  const TrainerState& state() const { return state_; }
  TrainerState& state() { return state_; }
  const Environment& environment() const { return *env_; }

 private:
  int thread_count() const;

  TrainerState state_;
  std::unique_ptr<Environment> env_;
  std::vector<std::vector<RolloutRecord>> last_records_;
};

struct TrainSummary {
  int iterations_run = 0;
  int final_iteration = 0;
  std::vector<IterationLog> logs;
  std::string checkpoint_hash;  // TrainerState::model_digest() of the final state
};

/// Train from scratch per config; writes the log CSV and checkpoints.
TrainSummary train(const TrainConfig& config, std::ostream* progress = nullptr);

/// Continue from a checkpoint up to `max_iterations` (default: the stored value).
/// Log rows after the checkpoint's iteration are discarded before appending.
TrainSummary resume(const std::string& checkpoint_path, std::optional<int> max_iterations = std::nullopt,
                    std::optional<std::string> log_path = std::nullopt, std::ostream* progress = nullptr);

struct InferenceResult {
  Vec context;
  int expert = 0;
  Vec theta;
  EpisodeResult episode;
};

/// Algorithm-2 style inference with the stored normalizer estimates.
std::vector<InferenceResult> infer(const MixturePolicy& policy, const Environment& env, const ContextBatch& contexts,
                                   bool deterministic, std::mt19937_64& rng);

/// Load a checkpoint; when `expected` is given its model hash must match.
TrainerState load_checkpoint(const std::string& path, const TrainConfig* expected = nullptr);

}  // namespace diskill

#endif  // DISKILL_TRAINER_HPP
