#include "dsdpg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dsdpg::config {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += v[i];
  }
  return out;
}

template <typename T>
std::string num_str(T v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// typed access over the raw map, tracking which keys were consumed
class Reader {
 public:
  explicit Reader(const std::map<std::string, std::string>& kv) : kv_(kv) {}

  bool has(const std::string& k) const { return kv_.count(k) > 0; }

  std::string str(const std::string& k, const std::string& dflt) {
    seen_.insert(k);
    auto it = kv_.find(k);
    return it == kv_.end() ? dflt : it->second;
  }
  double num(const std::string& k, double dflt) {
    seen_.insert(k);
    auto it = kv_.find(k);
    if (it == kv_.end()) return dflt;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw std::invalid_argument("config: key '" + k + "' is not a number: " + it->second);
    }
  }
  long integer(const std::string& k, long dflt) {
    const double v = num(k, double(dflt));
    const long l = static_cast<long>(v);
    if (double(l) != v)
      throw std::invalid_argument("config: key '" + k + "' must be an integer");
    return l;
  }
  bool boolean(const std::string& k, bool dflt) {
    seen_.insert(k);
    auto it = kv_.find(k);
    if (it == kv_.end()) return dflt;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw std::invalid_argument("config: key '" + k + "' must be true/false");
  }
  std::vector<double> num_list(const std::string& k, std::vector<double> dflt) {
    seen_.insert(k);
    auto it = kv_.find(k);
    if (it == kv_.end()) return dflt;
    std::vector<double> out;
    for (const auto& tok : split(it->second, ','))
      if (!tok.empty()) out.push_back(std::stod(tok));
    return out;
  }

  void reject_unknown() const {
    for (const auto& [k, v] : kv_)
      if (!seen_.count(k))
        throw std::invalid_argument("config: unknown key '" + k + "'");
  }

 private:
  const std::map<std::string, std::string>& kv_;
  std::set<std::string> seen_;
};

std::vector<std::size_t> widths_of(const std::vector<double>& v) {
  std::vector<std::size_t> out;
  for (double x : v) {
    if (x < 1 || double(std::size_t(x)) != x)
      throw std::invalid_argument("config: widths must be positive integers");
    out.push_back(std::size_t(x));
  }
  return out;
}

std::string widths_str(const std::vector<std::size_t>& v) {
  std::vector<std::string> s;
  for (auto x : v) s.push_back(std::to_string(x));
  return join(s);
}

}  // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config: empty key on line " + std::to_string(lineno));
    if (kv.count(key))
      throw std::invalid_argument("config: duplicate key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

std::string serialize_kv(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

ExperimentConfig ExperimentConfig::from_kv(const std::map<std::string, std::string>& kv) {
  Reader r(kv);
  ExperimentConfig c;

  c.env_name = r.str("env.name", c.env_name);
  c.env_bonus_sites = int(r.integer("env.bonus_sites_count", c.env_bonus_sites));

  agent::AgentConfig& a = c.agent;
  a.metric = agent::metric_from_string(r.str("agent.metric", metric_to_string(a.metric)));
  a.gamma = r.num("agent.discount_gamma", a.gamma);
  a.tau = r.num("agent.polyak_tau", a.tau);
  a.batch_size = std::size_t(r.integer("agent.batch_size", long(a.batch_size)));
  a.exploration_noise_std = r.num("agent.exploration_noise_std", a.exploration_noise_std);
  a.critic_lr = r.num("agent.critic_learning_rate", a.critic_lr);
  a.policy_lr = r.num("agent.policy_learning_rate", a.policy_lr);
  a.n_samples = int(r.integer("agent.sample_count", a.n_samples));
  a.truncation_pct = r.num("agent.truncation_pct", a.truncation_pct);
  a.updates_per_env_step = int(r.integer("agent.updates_per_env_step", a.updates_per_env_step));
  a.policy_delay = int(r.integer("agent.policy_delay_steps", a.policy_delay));
  a.m_policy = int(r.integer("agent.policy_sample_count", a.m_policy));
  a.smoothing_std = r.num("agent.smoothing_noise_std", a.smoothing_std);
  a.smoothing_clip = r.num("agent.smoothing_noise_clip", a.smoothing_clip);
  a.huber_delta = r.num("agent.huber_delta", a.huber_delta);
  a.sobolev_weight = r.num("agent.sobolev_weight", a.sobolev_weight);
  a.replay_capacity = std::size_t(r.integer("agent.replay_capacity", long(a.replay_capacity)));

  a.critic_trunk = widths_of(r.num_list("nets.critic_trunk_widths", {400, 400}));
  a.critic_noise_dim = std::size_t(r.integer("nets.critic_noise_dim", long(a.critic_noise_dim)));
  a.critic_noise_hidden = widths_of(r.num_list("nets.critic_noise_widths", {64}));
  a.critic_noise_out = std::size_t(r.integer("nets.critic_noise_out_dim", long(a.critic_noise_out)));
  a.policy_hidden = widths_of(r.num_list("nets.policy_widths", {400, 400}));

  a.world_hidden = widths_of(r.num_list("world.hidden_widths", {1024, 1024, 1024}));
  a.world_lr = r.num("world.learning_rate", a.world_lr);
  a.world_weight_decay = r.num("world.weight_decay", a.world_weight_decay);
  a.world_kl_weight = r.num("world.kl_weight", a.world_kl_weight);

  const std::string family = r.str("kernel.family", "multiquadric");
  if (family == "multiquadric") {
    a.kernel = metrics::KernelSpec::multiquadric(r.num("kernel.mq_scale_h", 100.0));
    r.num_list("kernel.rbf_bandwidths", {});
  } else if (family == "rbf_mixture") {
    r.num("kernel.mq_scale_h", 100.0);
    a.kernel = metrics::KernelSpec::rbf_mixture(
        r.num_list("kernel.rbf_bandwidths", {0.01, 0.05, 0.1, 0.5, 1, 10, 100}));
  } else {
    throw std::invalid_argument("config: unknown kernel.family '" + family + "'");
  }

  a.msmmd.steps = int(r.integer("msmmd.step_count", a.msmmd.steps));
  a.msmmd.lr = r.num("msmmd.learning_rate", a.msmmd.lr);
  a.msmmd.adaptive = r.boolean("msmmd.adaptive", a.msmmd.adaptive);

  a.total_env_steps = r.integer("train.total_env_steps", a.total_env_steps);
  a.warmup_env_steps = r.integer("train.warmup_env_steps", a.warmup_env_steps);
  a.eval_interval_env_steps =
      r.integer("train.eval_interval_env_steps", a.eval_interval_env_steps);
  a.eval_episodes = int(r.integer("train.eval_episodes", a.eval_episodes));

  c.seeds.clear();
  for (double s : r.num_list("run.seed_list", {0, 1, 2, 3, 4}))
    c.seeds.push_back(std::uint64_t(s));
  c.output_dir = r.str("run.output_dir", c.output_dir);
  c.jobs = int(r.integer("run.jobs", c.jobs));

  r.reject_unknown();
  a.validate();
  if (c.seeds.empty()) throw std::invalid_argument("config: run.seed_list is empty");
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_kv(parse_kv_text(ss.str()));
}

std::map<std::string, std::string> ExperimentConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  kv["env.name"] = env_name;
  kv["env.bonus_sites_count"] = std::to_string(env_bonus_sites);

  const agent::AgentConfig& a = agent;
  kv["agent.metric"] = metric_to_string(a.metric);
  kv["agent.discount_gamma"] = num_str(a.gamma);
  kv["agent.polyak_tau"] = num_str(a.tau);
  kv["agent.batch_size"] = std::to_string(a.batch_size);
  kv["agent.exploration_noise_std"] = num_str(a.exploration_noise_std);
  kv["agent.critic_learning_rate"] = num_str(a.critic_lr);
  kv["agent.policy_learning_rate"] = num_str(a.policy_lr);
  kv["agent.sample_count"] = std::to_string(a.n_samples);
  kv["agent.truncation_pct"] = num_str(a.truncation_pct);
  kv["agent.updates_per_env_step"] = std::to_string(a.updates_per_env_step);
  kv["agent.policy_delay_steps"] = std::to_string(a.policy_delay);
  kv["agent.policy_sample_count"] = std::to_string(a.m_policy);
  kv["agent.smoothing_noise_std"] = num_str(a.smoothing_std);
  kv["agent.smoothing_noise_clip"] = num_str(a.smoothing_clip);
  kv["agent.huber_delta"] = num_str(a.huber_delta);
  kv["agent.sobolev_weight"] = num_str(a.sobolev_weight);
  kv["agent.replay_capacity"] = std::to_string(a.replay_capacity);

  kv["nets.critic_trunk_widths"] = widths_str(a.critic_trunk);
  kv["nets.critic_noise_dim"] = std::to_string(a.critic_noise_dim);
  kv["nets.critic_noise_widths"] = widths_str(a.critic_noise_hidden);
  kv["nets.critic_noise_out_dim"] = std::to_string(a.critic_noise_out);
  kv["nets.policy_widths"] = widths_str(a.policy_hidden);

  kv["world.hidden_widths"] = widths_str(a.world_hidden);
  kv["world.learning_rate"] = num_str(a.world_lr);
  kv["world.weight_decay"] = num_str(a.world_weight_decay);
  kv["world.kl_weight"] = num_str(a.world_kl_weight);

  if (a.kernel.family == metrics::KernelFamily::Multiquadric) {
    kv["kernel.family"] = "multiquadric";
    kv["kernel.mq_scale_h"] = num_str(a.kernel.mq_scale);
  } else {
    kv["kernel.family"] = "rbf_mixture";
    std::vector<std::string> bs;
    for (double b : a.kernel.bandwidths) bs.push_back(num_str(b));
    kv["kernel.rbf_bandwidths"] = join(bs);
  }

  kv["msmmd.step_count"] = std::to_string(a.msmmd.steps);
  kv["msmmd.learning_rate"] = num_str(a.msmmd.lr);
  kv["msmmd.adaptive"] = a.msmmd.adaptive ? "true" : "false";

  kv["train.total_env_steps"] = std::to_string(a.total_env_steps);
  kv["train.warmup_env_steps"] = std::to_string(a.warmup_env_steps);
  kv["train.eval_interval_env_steps"] = std::to_string(a.eval_interval_env_steps);
  kv["train.eval_episodes"] = std::to_string(a.eval_episodes);

  std::vector<std::string> seeds;
  for (auto s : this->seeds) seeds.push_back(std::to_string(s));
  kv["run.seed_list"] = join(seeds);
  kv["run.output_dir"] = output_dir;
  kv["run.jobs"] = std::to_string(jobs);
  return kv;
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::invalid_argument("config: cannot write " + path);
  os << serialize_kv(to_kv());
}

}  // namespace dsdpg::config
