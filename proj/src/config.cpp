#include "diskill/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "diskill/errors.hpp"
#include "diskill/serialization.hpp"

namespace diskill {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno == ERANGE) throw ConfigError("'" + key + "': expected a number, got '" + v + "'");
  return d;
}

long long to_int(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno == ERANGE) throw ConfigError("'" + key + "': expected an integer, got '" + v + "'");
  return i;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "': expected true/false, got '" + v + "'");
}

std::vector<int> to_dims(const std::string& key, const std::string& v) {
  std::vector<int> out;
  if (v.empty() || v == "none") return out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const long long d = to_int(key, trim(tok));
    if (d < 1) throw ConfigError("'" + key + "': layer sizes must be positive");
    out.push_back(static_cast<int>(d));
  }
  return out;
}

std::string dims_text(const std::vector<int>& dims) {
  if (dims.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
  return s;
}

// One binding per config key: how to print it and how to set it.
struct Field {
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

using FieldTable = std::vector<std::pair<std::string, std::map<std::string, Field>>>;

#define DISKILL_DBL(path)                                                             \
  Field {                                                                             \
    [](const TrainConfig& c) { return format_double(c.path); },                       \
        [](TrainConfig& c, const std::string& v) { c.path = to_double(#path, v); }    \
  }
#define DISKILL_INT(path)                                                                        \
  Field {                                                                                        \
    [](const TrainConfig& c) { return std::to_string(c.path); },                                 \
        [](TrainConfig& c, const std::string& v) { c.path = static_cast<int>(to_int(#path, v)); } \
  }
#define DISKILL_BOOL(path)                                                           \
  Field {                                                                            \
    [](const TrainConfig& c) { return std::string(c.path ? "true" : "false"); },     \
        [](TrainConfig& c, const std::string& v) { c.path = to_bool(#path, v); }     \
  }
#define DISKILL_DIMS(path)                                                          \
  Field {                                                                           \
    [](const TrainConfig& c) { return dims_text(c.path); },                         \
        [](TrainConfig& c, const std::string& v) { c.path = to_dims(#path, v); }    \
  }
#define DISKILL_STR(path)                                                  \
  Field {                                                                  \
    [](const TrainConfig& c) { return c.path; },                           \
        [](TrainConfig& c, const std::string& v) { c.path = v; }           \
  }

const FieldTable& fields() {
  static const FieldTable table = {
      {"env",
       {
           {"kind", DISKILL_STR(env.kind)},
           {"reacher.n_links", DISKILL_INT(env.reacher.n_links)},
           {"reacher.link_length", DISKILL_DBL(env.reacher.link_length)},
           {"reacher.kp", DISKILL_DBL(env.reacher.kp)},
           {"reacher.kd", DISKILL_DBL(env.reacher.kd)},
           {"reacher.max_accel", DISKILL_DBL(env.reacher.max_accel)},
           {"reacher.horizon_steps", DISKILL_INT(env.reacher.horizon_steps)},
           {"reacher.dt", DISKILL_DBL(env.reacher.dt)},
           {"reacher.torque_weight", DISKILL_DBL(env.reacher.torque_weight)},
           {"reacher.goal_weight", DISKILL_DBL(env.reacher.goal_weight)},
           {"reacher.velocity_weight", DISKILL_DBL(env.reacher.velocity_weight)},
           {"reacher.success_threshold", DISKILL_DBL(env.reacher.success_threshold)},
           {"reacher.n_basis", DISKILL_INT(env.reacher.n_basis)},
           {"reacher.bandwidth", DISKILL_DBL(env.reacher.bandwidth)},
           {"gate.wall_y", DISKILL_DBL(env.gate.wall_y)},
           {"gate.goal_y", DISKILL_DBL(env.gate.goal_y)},
           {"gate.gate_half_width", DISKILL_DBL(env.gate.gate_half_width)},
           {"gate.min_gate_gap", DISKILL_DBL(env.gate.min_gate_gap)},
           {"gate.goal_x_range", DISKILL_DBL(env.gate.goal_x_range)},
           {"gate.gate_x_range", DISKILL_DBL(env.gate.gate_x_range)},
           {"gate.kp", DISKILL_DBL(env.gate.kp)},
           {"gate.kd", DISKILL_DBL(env.gate.kd)},
           {"gate.max_accel", DISKILL_DBL(env.gate.max_accel)},
           {"gate.horizon_steps", DISKILL_INT(env.gate.horizon_steps)},
           {"gate.dt", DISKILL_DBL(env.gate.dt)},
           {"gate.torque_weight", DISKILL_DBL(env.gate.torque_weight)},
           {"gate.goal_weight", DISKILL_DBL(env.gate.goal_weight)},
           {"gate.collision_penalty", DISKILL_DBL(env.gate.collision_penalty)},
           {"gate.success_threshold", DISKILL_DBL(env.gate.success_threshold)},
           {"gate.n_basis", DISKILL_INT(env.gate.n_basis)},
           {"gate.bandwidth", DISKILL_DBL(env.gate.bandwidth)},
       }},
      {"model",
       {
           {"num_experts", DISKILL_INT(model.num_experts)},
           {"expert_hidden", DISKILL_DIMS(model.expert_hidden)},
           {"energy_hidden", DISKILL_DIMS(model.energy_hidden)},
           {"critic_hidden", DISKILL_DIMS(model.critic_hidden)},
           {"init_std", DISKILL_DBL(model.init_std)},
       }},
      {"update",
       {
           {"alpha", DISKILL_DBL(update.alpha)},
           {"beta", DISKILL_DBL(update.beta)},
           {"eps_mean", DISKILL_DBL(update.eps_mean)},
           {"eps_cov", DISKILL_DBL(update.eps_cov)},
           {"ppo_clip", DISKILL_DBL(update.ppo_clip)},
           {"expert_epochs", DISKILL_INT(update.expert_epochs)},
           {"ebm_epochs", DISKILL_INT(update.ebm_epochs)},
           {"critic_epochs", DISKILL_INT(update.critic_epochs)},
           {"lr_policy", DISKILL_DBL(update.lr_policy)},
           {"lr_ebm", DISKILL_DBL(update.lr_ebm)},
           {"lr_critic", DISKILL_DBL(update.lr_critic)},
           {"samples_per_expert", DISKILL_INT(update.samples_per_expert)},
           {"normalize_advantages", DISKILL_BOOL(update.normalize_advantages)},
           {"use_gating_variational", DISKILL_BOOL(update.use_gating_variational)},
       }},
      {"run",
       {
           {"max_iterations", DISKILL_INT(run.max_iterations)},
           {"env_batch_size", DISKILL_INT(run.env_batch_size)},
           {"seed", Field{[](const TrainConfig& c) { return std::to_string(c.run.seed); },
                          [](TrainConfig& c, const std::string& v) {
                            const long long s = to_int("run.seed", v);
                            if (s < 0) throw ConfigError("'run.seed' must be non-negative");
                            c.run.seed = static_cast<std::uint64_t>(s);
                          }}},
           {"checkpoint_path", DISKILL_STR(run.checkpoint_path)},
           {"log_path", DISKILL_STR(run.log_path)},
           {"checkpoint_every", DISKILL_INT(run.checkpoint_every)},
           {"eval_every", DISKILL_INT(run.eval_every)},
           {"eval_contexts", DISKILL_INT(run.eval_contexts)},
           {"threads", DISKILL_INT(run.threads)},
       }},
  };
  return table;
}

#undef DISKILL_DBL
#undef DISKILL_INT
#undef DISKILL_BOOL
#undef DISKILL_DIMS
#undef DISKILL_STR

std::string section_text(const TrainConfig& c, const std::string& section) {
  std::string out = "[" + section + "]\n";
  for (const auto& [name, table] : fields()) {
    if (name != section) continue;
    for (const auto& [key, f] : table) out += key + " = " + f.get(c) + "\n";
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  make_environment(env);  // throws on invalid env settings
  if (model.num_experts < 1) throw ConfigError("model.num_experts must be >= 1");
  if (!(model.init_std > 0.0)) throw ConfigError("model.init_std must be positive");
  update.validate();
  if (run.max_iterations < 0) throw ConfigError("run.max_iterations must be >= 0");
  if (run.env_batch_size < 1) throw ConfigError("run.env_batch_size must be >= 1");
  if (run.checkpoint_every < 0 || run.eval_every < 0 || run.eval_contexts < 1 || run.threads < 0)
    throw ConfigError("run cadences and counts must be non-negative");
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const char* s : {"env", "model", "update", "run"}) out += section_text(*this, s) + "\n";
  return out;
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& [name, table] : fields()) known = known || name == section;
      if (!known) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of a section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& [name, table] : fields()) {
      if (name != section) continue;
      auto it = table.find(key);
      if (it != table.end()) field = &it->second;
    }
    if (field == nullptr) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
    field->set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::uint64_t TrainConfig::model_hash() const {
  std::string text = section_text(*this, "env") + section_text(*this, "model") + section_text(*this, "update");
  text += "seed=" + std::to_string(run.seed) + "\nenv_batch_size=" + std::to_string(run.env_batch_size) + "\n";
  return fnv1a64(text);
}

TrainConfig default_reacher5_config() {
  TrainConfig cfg;
  cfg.env.kind = "reacher";
  cfg.model.num_experts = 10;
  cfg.update.samples_per_expert = 25;
  cfg.run.env_batch_size = 5000;
  return cfg;
}

TrainConfig desk_reacher2_config() {
  TrainConfig cfg;
  cfg.env.kind = "reacher";
  cfg.env.reacher.n_links = 2;
  cfg.env.reacher.link_length = 0.5;
  cfg.model.num_experts = 4;
  cfg.update.samples_per_expert = 16;
  cfg.run.env_batch_size = 512;
  cfg.run.max_iterations = 300;
  return cfg;
}

TrainConfig desk_gate_config() {
  TrainConfig cfg = desk_reacher2_config();
  cfg.env.kind = "gate";
  return cfg;
}

}  // namespace diskill
