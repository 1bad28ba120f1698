#include "diskill/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "diskill/errors.hpp"

namespace diskill {

std::mt19937_64 stream_rng(std::uint64_t root_seed, Stream stream, std::uint64_t iteration, std::uint64_t expert) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffULL); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(root_seed), hi(root_seed), static_cast<std::uint32_t>(stream), lo(iteration),
                    hi(iteration),  lo(expert),    hi(expert)};
  return std::mt19937_64(seq);
}

namespace {

template <typename F>
void parallel_for(int n, int threads, F&& body) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  std::vector<std::thread> pool;
  const int workers = std::min(threads, n);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) {
        try {
          body(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  // Lowest index first keeps failures deterministic.
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string csv_num(double v) { return format_double(v); }

void put_adam(ParamStore& store, const std::string& prefix, const AdamState& a) {
  store.put_vec(prefix + ".m", a.m);
  store.put_vec(prefix + ".v", a.v);
  store.put_scalar(prefix + ".step", static_cast<double>(a.step));
  store.put_scalar(prefix + ".lr", a.lr);
}

AdamState get_adam(const ParamStore& store, const std::string& prefix, std::size_t n) {
  AdamState a(n, store.get_scalar(prefix + ".lr"));
  a.m = store.get_vec(prefix + ".m");
  a.v = store.get_vec(prefix + ".v");
  a.step = static_cast<std::int64_t>(store.get_scalar(prefix + ".step"));
  if (a.m.size() != static_cast<Eigen::Index>(n) || a.v.size() != static_cast<Eigen::Index>(n) || a.step < 0)
    throw CheckpointError("optimizer state '" + prefix + "' does not match its parameters");
  return a;
}

void put_critic(ParamStore& store, const std::string& prefix, const ValueCritic& c) {
  put_net(store, prefix + ".net", c.net);
  store.put_scalar(prefix + ".target_mean", c.target_mean);
  store.put_scalar(prefix + ".target_scale", c.target_scale);
  put_adam(store, prefix + ".adam", c.adam);
}

ValueCritic get_critic(const ParamStore& store, const std::string& prefix) {
  ValueCritic c;
  c.net = get_net(store, prefix + ".net");
  c.target_mean = store.get_scalar(prefix + ".target_mean");
  c.target_scale = store.get_scalar(prefix + ".target_scale");
  c.adam = get_adam(store, prefix + ".adam", c.net.num_params());
  return c;
}

std::string key(const std::string& base, int o) { return base + std::to_string(o); }

}  // namespace

std::string log_header(int num_experts) {
  std::string h = "iteration,episodes,global_mean_return,success_rate,max_kl,eval_mean_return,eval_success_rate";
  for (int o = 0; o < num_experts; ++o) {
    const std::string p = ",e" + std::to_string(o) + "_";
    h += p + "return" + p + "curriculum_entropy" + p + "policy_entropy" + p + "surrogate" + p + "max_kl" + p +
         "expert_critic_loss" + p + "context_critic_loss";
  }
  return h;
}

std::string log_row(const IterationLog& log) {
  std::string r = std::to_string(log.iteration) + "," + std::to_string(log.episodes) + "," +
                  csv_num(log.global_mean_return) + "," + csv_num(log.success_rate) + "," + csv_num(log.max_kl) + ",";
  r += log.eval_mean_return ? csv_num(*log.eval_mean_return) : "";
  r += ",";
  r += log.eval_success_rate ? csv_num(*log.eval_success_rate) : "";
  for (const auto& e : log.experts) {
    for (double v : {e.mean_return, e.curriculum_entropy, e.policy_entropy, e.surrogate, e.max_kl,
                     e.expert_critic_loss, e.context_critic_loss})
      r += "," + csv_num(v);
  }
  return r;
}

TrainerState TrainerState::initialize(const TrainConfig& config) {
  config.validate();
  const auto env = make_environment(config.env);
  auto rng = stream_rng(config.run.seed, Stream::Init, 0, 0);
  TrainerState s;
  s.config = config;
  s.policy = MixturePolicy::create(config.model, env->context_dim(), env->param_dim(), rng);
  for (int o = 0; o < config.model.num_experts; ++o) {
    CriticPair pair;
    pair.expert = ValueCritic::create(env->context_dim(), config.model.critic_hidden, config.update.lr_critic, rng);
    pair.context = ValueCritic::create(env->context_dim(), config.model.critic_hidden, config.update.lr_critic, rng);
    s.critics.push_back(std::move(pair));
    s.expert_adam.emplace_back(s.policy.expert(o).num_params(), config.update.lr_policy);
    s.ebm_adam.emplace_back(s.policy.energy_net(o).num_params(), config.update.lr_ebm);
  }
  return s;
}

ParamStore TrainerState::to_store() const {
  ParamStore store;
  store.put_meta("format", "diskill-checkpoint-1");
  store.put_meta("iteration", std::to_string(iteration));
  store.put_meta("config_hash", hex64(config.model_hash()));
  store.put_meta("normalizers_ready", policy.normalizers_ready() ? "true" : "false");
  std::istringstream cfg(config.to_text());
  std::string line;
  int n = 0;
  while (std::getline(cfg, line)) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", n++);
    store.put_meta(std::string("config.") + buf, line.empty() ? "#" : line);
  }
  store.put_vec("log_z", policy.log_normalizers());
  for (int o = 0; o < policy.num_experts(); ++o) {
    put_net(store, key("expert", o) + ".mean", policy.expert(o).mean_net);
    store.put_vec(key("expert", o) + ".chol_raw", policy.expert(o).chol_raw);
    put_net(store, key("energy", o), policy.energy_net(o));
    put_critic(store, key("critic", o) + ".expert", critics[static_cast<std::size_t>(o)].expert);
    put_critic(store, key("critic", o) + ".context", critics[static_cast<std::size_t>(o)].context);
    put_adam(store, key("adam.expert", o), expert_adam[static_cast<std::size_t>(o)]);
    put_adam(store, key("adam.energy", o), ebm_adam[static_cast<std::size_t>(o)]);
  }
  return store;
}

TrainerState TrainerState::from_store(const ParamStore& store) {
  if (!store.has_meta("format") || store.meta("format") != "diskill-checkpoint-1")
    throw CheckpointError("not a diskill checkpoint");
  std::string cfg_text;
  for (int n = 0;; ++n) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", n);
    const std::string k = std::string("config.") + buf;
    if (!store.has_meta(k)) break;
    cfg_text += store.meta(k) + "\n";
  }
  TrainerState s;
  try {
    s.config = TrainConfig::parse(cfg_text);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("embedded config invalid: ") + e.what());
  }
  if (hex64(s.config.model_hash()) != store.meta("config_hash"))
    throw CheckpointError("checkpoint config hash does not match its embedded config");
  s.iteration = std::stoi(store.meta("iteration"));
  if (s.iteration < 0) throw CheckpointError("negative iteration in checkpoint");

  const int k = s.config.model.num_experts;
  const auto env = make_environment(s.config.env);
  std::vector<Expert> experts;
  std::vector<DenseNet> energies;
  for (int o = 0; o < k; ++o) {
    Expert e;
    e.mean_net = get_net(store, key("expert", o) + ".mean");
    e.chol_raw = store.get_vec(key("expert", o) + ".chol_raw");
    if (e.mean_net.input_dim() != env->context_dim() || e.param_dim() != env->param_dim() ||
        e.chol_raw.size() != chol_param_count(e.param_dim()))
      throw CheckpointError("expert " + std::to_string(o) + " has incompatible shapes");
    experts.push_back(std::move(e));
    energies.push_back(get_net(store, key("energy", o)));
    if (energies.back().input_dim() != env->context_dim() || energies.back().output_dim() != 1)
      throw CheckpointError("energy network " + std::to_string(o) + " has incompatible shapes");
  }
  if (store.has(key("expert", k) + ".chol_raw")) throw CheckpointError("checkpoint has more experts than its config");
  s.policy = MixturePolicy(std::move(experts), std::move(energies));
  const Vec log_z = store.get_vec("log_z");
  if (log_z.size() != k) throw CheckpointError("normalizer vector has wrong length");
  if (store.meta("normalizers_ready") == "true") s.policy.set_log_normalizers(log_z);
  for (int o = 0; o < k; ++o) {
    CriticPair pair{get_critic(store, key("critic", o) + ".expert"), get_critic(store, key("critic", o) + ".context")};
    s.critics.push_back(std::move(pair));
    s.expert_adam.push_back(get_adam(store, key("adam.expert", o), s.policy.expert(o).num_params()));
    s.ebm_adam.push_back(get_adam(store, key("adam.energy", o), s.policy.energy_net(o).num_params()));
  }
  return s;
}

void TrainerState::save(const std::string& path) const { to_store().save(path); }

TrainerState TrainerState::load(const std::string& path) { return from_store(ParamStore::load(path)); }

TrainerState load_checkpoint(const std::string& path, const TrainConfig* expected) {
  TrainerState s = TrainerState::load(path);
  if (expected != nullptr && expected->model_hash() != s.config.model_hash())
    throw CheckpointError("checkpoint was trained with a different configuration (hash " +
                          hex64(s.config.model_hash()) + ", expected " + hex64(expected->model_hash()) + ")");
  return s;
}

std::string TrainerState::model_digest() const {
  TrainerState copy = *this;
  RunConfig run;
  run.seed = config.run.seed;
  run.env_batch_size = config.run.env_batch_size;
  copy.config.run = run;
  return hex64(fnv1a64(copy.to_store().to_text()));
}

Trainer::Trainer(TrainerState state) : state_(std::move(state)), env_(make_environment(state_.config.env)) {}

int Trainer::thread_count() const {
  if (state_.config.run.threads > 0) return state_.config.run.threads;
  return static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
}

IterationLog Trainer::step() {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainConfig& cfg = state_.config;
  const int k = state_.policy.num_experts();
  const int ts = cfg.update.samples_per_expert;
  const auto iter = static_cast<std::uint64_t>(state_.iteration);
  const std::uint64_t seed = cfg.run.seed;

  // (1) contexts by environment reset
  auto env_rng = stream_rng(seed, Stream::EnvBatch, iter, 0);
  const ContextBatch batch = sample_contexts(env_->context_space(), cfg.run.env_batch_size, env_rng);

  // (2) normalizers and frozen snapshot
  state_.policy.refresh_normalizers(batch);
  const PolicySnapshot snapshot(state_.policy);
  const MixturePolicy& old = snapshot.policy();

  // (3) per-expert rollouts
  std::vector<std::vector<RolloutRecord>> records(static_cast<std::size_t>(k));
  parallel_for(k, thread_count(), [&](int o) {
    auto ctx_rng = stream_rng(seed, Stream::Curriculum, iter, static_cast<std::uint64_t>(o));
    auto theta_rng = stream_rng(seed, Stream::Params, iter, static_cast<std::uint64_t>(o));
    const auto idx = sample_training_contexts(old, o, batch, ts, ctx_rng);
    auto& recs = records[static_cast<std::size_t>(o)];
    for (int i : idx) {
      RolloutRecord r;
      r.expert = o;
      r.batch_index = i;
      r.context = batch.at(i);
      r.theta = old.expert_sample(o, r.context, theta_rng);
      const EpisodeResult res = env_->evaluate(r.context, MpParams{r.theta});
      r.episodic_return = res.episodic_return;
      r.success = res.success;
      r.log_prob_old = old.expert_log_prob(o, r.context, r.theta);
      r.responsibilities_old = responsibilities(snapshot, r.context, r.theta);
      r.log_gating_old = old.log_gating(r.context)[o];
      recs.push_back(std::move(r));
    }
  });

  // (4) critics, experts, context distributions
  const TrainerState before = state_;
  IterationLog log;
  log.iteration = state_.iteration + 1;
  log.experts.resize(static_cast<std::size_t>(k));
  std::vector<DenseNet> new_energies(static_cast<std::size_t>(k));
  try {
    parallel_for(k, thread_count(), [&](int o) {
      const auto uo = static_cast<std::size_t>(o);
      const auto& recs = records[uo];
      auto& critics = state_.critics[uo];
      ExpertLog& el = log.experts[uo];
      const auto ec = update_expert_critic(critics.expert, recs, cfg.update.alpha, cfg.update.critic_epochs);
      const Vec adv = expert_advantages(recs, critics.expert, cfg.update.alpha, cfg.update.normalize_advantages);
      const auto er = update_expert(state_.policy, snapshot, o, recs, adv, cfg.update, state_.expert_adam[uo]);

      ContextPayoffs payoffs = context_payoff_Lc(recs, cfg.update.alpha, old.expert_entropy(o));
      attach_context_terms(payoffs, recs, cfg.update);
      const auto cc = update_context_critic(critics.context, payoffs, cfg.update.critic_epochs);
      const Vec cadv = context_advantages(payoffs, critics.context);
      new_energies[uo] = state_.policy.energy_net(o);
      const auto br = update_context_ebm(new_energies[uo], snapshot, o, batch, payoffs, cadv, cfg.update,
                                         state_.ebm_adam[uo]);

      double sum = 0.0;
      for (const auto& r : recs) sum += r.episodic_return;
      el.mean_return = recs.empty() ? 0.0 : sum / static_cast<double>(recs.size());
      el.curriculum_entropy = br.entropy;
      el.policy_entropy = er.entropy;
      el.surrogate = er.surrogate;
      el.max_kl = er.trust_region.max_kl;
      el.expert_critic_loss = ec.empty() ? 0.0 : ec.back();
      el.context_critic_loss = cc.empty() ? 0.0 : cc.back();
    });
  } catch (const UpdateAborted& e) {
    state_ = before;
    state_.save(cfg.run.checkpoint_path);
    throw TrainingHalted(std::string("update aborted at iteration ") + std::to_string(log.iteration) + ": " +
                         e.what() + "; last consistent state saved to " + cfg.run.checkpoint_path);
  }
  for (int o = 0; o < k; ++o) state_.policy.energy_net_mut(o) = new_energies[static_cast<std::size_t>(o)];
  // Fresh estimates for the updated energies, used by inference and reports.
  state_.policy.refresh_normalizers(batch);
  ++state_.iteration;

  double total = 0.0;
  int successes = 0;
  for (const auto& recs : records)
    for (const auto& r : recs) {
      total += r.episodic_return;
      successes += r.success ? 1 : 0;
    }
  const double n_eps = static_cast<double>(k) * ts;
  log.episodes = static_cast<long long>(state_.iteration) * k * ts;
  log.global_mean_return = total / n_eps;
  log.success_rate = successes / n_eps;
  for (const auto& e : log.experts) log.max_kl = std::max(log.max_kl, e.max_kl);

  if (cfg.run.eval_every > 0 && state_.iteration % cfg.run.eval_every == 0) {
    auto eval_rng = stream_rng(seed, Stream::Eval, static_cast<std::uint64_t>(state_.iteration), 0);
    const ContextBatch eval_batch = sample_contexts(env_->context_space(), cfg.run.eval_contexts, eval_rng);
    const auto results = infer(state_.policy, *env_, eval_batch, true, eval_rng);
    double ret = 0.0, succ = 0.0;
    for (const auto& r : results) {
      ret += r.episode.episodic_return;
      succ += r.episode.success ? 1.0 : 0.0;
    }
    log.eval_mean_return = ret / static_cast<double>(results.size());
    log.eval_success_rate = succ / static_cast<double>(results.size());
  }

  last_records_ = std::move(records);
  log.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return log;
}

namespace {

TrainSummary run_loop(Trainer& trainer, std::ofstream& log_out, std::ostream* progress) {
  TrainSummary summary;
  const TrainConfig& cfg = trainer.state().config;
  std::ofstream timing(cfg.run.log_path + ".timing", std::ios::app);
  while (trainer.state().iteration < cfg.run.max_iterations) {
    IterationLog log = trainer.step();
    log_out << log_row(log) << '\n';
    log_out.flush();
    if (timing) timing << log.iteration << ',' << format_double(log.wall_time) << '\n';
    if (progress != nullptr) {
      *progress << "iter " << log.iteration << "  return " << log.global_mean_return << "  success "
                << log.success_rate;
      if (log.eval_mean_return) *progress << "  eval " << *log.eval_mean_return;
      *progress << "  max_kl " << log.max_kl << "  (" << log.wall_time << " s)\n";
    }
    const int every = cfg.run.checkpoint_every;
    if (every > 0 && log.iteration % every == 0) trainer.state().save(cfg.run.checkpoint_path);
    summary.logs.push_back(std::move(log));
    ++summary.iterations_run;
  }
  trainer.state().save(cfg.run.checkpoint_path);
  summary.final_iteration = trainer.state().iteration;
  summary.checkpoint_hash = trainer.state().model_digest();
  return summary;
}

}  // namespace

TrainSummary train(const TrainConfig& config, std::ostream* progress) {
  Trainer trainer(TrainerState::initialize(config));
  std::ofstream log_out(config.run.log_path, std::ios::trunc);
  if (!log_out) throw ConfigError("cannot write log '" + config.run.log_path + "'");
  std::ofstream(config.run.log_path + ".timing", std::ios::trunc);
  log_out << log_header(config.model.num_experts) << '\n';
  return run_loop(trainer, log_out, progress);
}

TrainSummary resume(const std::string& checkpoint_path, std::optional<int> max_iterations,
                    std::optional<std::string> log_path, std::ostream* progress) {
  TrainerState state = TrainerState::load(checkpoint_path);
  state.config.run.checkpoint_path = checkpoint_path;
  if (max_iterations) state.config.run.max_iterations = *max_iterations;
  if (log_path) state.config.run.log_path = *log_path;
  const TrainConfig cfg = state.config;
  if (state.iteration >= cfg.run.max_iterations) {
    TrainSummary s;
    s.final_iteration = state.iteration;
    s.checkpoint_hash = hex64(fnv1a64(state.to_store().to_text()));
    return s;
  }

  // Keep only the rows up to the checkpoint so the log continues seamlessly.
  std::vector<std::string> kept;
  {
    std::ifstream in(cfg.run.log_path);
    std::string line;
    if (in && std::getline(in, line)) {
      if (line != log_header(cfg.model.num_experts)) throw CheckpointError("existing log has a different header");
      kept.push_back(line);
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const int it = std::stoi(line.substr(0, line.find(',')));
        if (it <= state.iteration) kept.push_back(line);
      }
    }
  }
  if (kept.empty()) kept.push_back(log_header(cfg.model.num_experts));
  std::ofstream log_out(cfg.run.log_path, std::ios::trunc);
  if (!log_out) throw ConfigError("cannot write log '" + cfg.run.log_path + "'");
  for (const auto& l : kept) log_out << l << '\n';

  Trainer trainer(std::move(state));
  return run_loop(trainer, log_out, progress);
}

std::vector<InferenceResult> infer(const MixturePolicy& policy, const Environment& env, const ContextBatch& contexts,
                                   bool deterministic, std::mt19937_64& rng) {
  std::vector<InferenceResult> out;
  out.reserve(static_cast<std::size_t>(contexts.size()));
  for (int i = 0; i < contexts.size(); ++i) {
    InferenceResult r;
    r.context = contexts.at(i);
    auto [o, theta] = policy.act(r.context, rng, deterministic);
    r.expert = o;
    r.theta = std::move(theta);
    r.episode = env.evaluate(r.context, MpParams{r.theta});
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace diskill
