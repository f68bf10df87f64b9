#include "dsdpg/harness.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include "dsdpg/runlog.hpp"
#include "dsdpg/suite.hpp"
#include "json.hpp"

namespace dsdpg::harness {

namespace fs = std::filesystem;

std::unique_ptr<envs::Env> make_env(const config::ExperimentConfig& cfg,
                                    std::uint64_t seed) {
  if (cfg.env_name == "toy") {
    envs::ToyConfig tc;
    tc.bonus_sites = cfg.env_bonus_sites;
    return std::make_unique<envs::ToyEnv>(tc, Rng(seed));
  }
  throw std::invalid_argument("unknown env.name '" + cfg.env_name + "'");
}

agent::MetricLog train_single(const config::ExperimentConfig& cfg, std::uint64_t seed,
                              std::vector<double>* wallclock_s) {
  auto env = make_env(cfg, Rng(seed).stream(100).seed());
  auto eval_env = make_env(cfg, Rng(seed).stream(101).seed());
  agent::Agent ag(cfg.agent, env->obs_dim(), env->action_dim(), env->action_bound(),
                  seed);
  const auto t0 = std::chrono::steady_clock::now();
  agent::MetricLog log = ag.train(*env, *eval_env);
  if (wallclock_s) {
    // one cumulative stamp per row (coarse; rows carry no per-row timing)
    const double total =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    wallclock_s->assign(log.rows.size(), 0.0);
    for (std::size_t i = 0; i < log.rows.size(); ++i)
      (*wallclock_s)[i] = total * double(i + 1) / double(std::max<std::size_t>(1, log.rows.size()));
  }
  return log;
}

namespace {

std::string seed_csv_path(const std::string& dir, std::uint64_t seed) {
  return dir + "/seed_" + std::to_string(seed) + ".csv";
}

void save_checkpoints(const config::ExperimentConfig& cfg, std::uint64_t seed,
                      agent::Agent& ag) {
  const std::string base = cfg.output_dir + "/";
  ag.policy().params().save(base + "policy_seed" + std::to_string(seed) + ".ckpt");
  ag.critic(0).params().save(base + "critic1_seed" + std::to_string(seed) + ".ckpt");
  ag.critic(1).params().save(base + "critic2_seed" + std::to_string(seed) + ".ckpt");
  ag.world().params().save(base + "world_seed" + std::to_string(seed) + ".ckpt");
}

}  // namespace

int run_experiment(const config::ExperimentConfig& cfg, std::ostream& log) {
  fs::create_directories(cfg.output_dir);
  cfg.save(cfg.output_dir + "/config.resolved.cfg");

  std::mutex mu;
  bool failed = false;
  std::string fail_reason;
  std::vector<double> finals;
  std::vector<std::uint64_t> seeds = cfg.seeds;
  std::size_t cursor = 0;

  auto worker = [&]() {
    while (true) {
      std::uint64_t seed;
      {
        std::lock_guard<std::mutex> lk(mu);
        if (cursor >= seeds.size() || failed) return;
        seed = seeds[cursor++];
      }
      try {
        auto env = make_env(cfg, Rng(seed).stream(100).seed());
        auto eval_env = make_env(cfg, Rng(seed).stream(101).seed());
        agent::Agent ag(cfg.agent, env->obs_dim(), env->action_dim(),
                        env->action_bound(), seed);
        const auto t0 = std::chrono::steady_clock::now();
        agent::MetricLog mlog = ag.train(*env, *eval_env);
        const double total =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::vector<double> wc(mlog.rows.size(), 0.0);
        for (std::size_t i = 0; i < wc.size(); ++i)
          wc[i] = total * double(i + 1) / double(std::max<std::size_t>(1, wc.size()));
        runlog::write_csv(seed_csv_path(cfg.output_dir, seed), mlog, wc);

        std::lock_guard<std::mutex> lk(mu);
        if (mlog.aborted) {
          failed = true;
          fail_reason = "seed " + std::to_string(seed) + " aborted: " + mlog.abort_reason;
          return;
        }
        save_checkpoints(cfg, seed, ag);
        finals.push_back(mlog.rows.empty() ? 0.0 : mlog.rows.back().eval_median);
        log << "seed " << seed << ": final eval median "
            << (mlog.rows.empty() ? 0.0 : mlog.rows.back().eval_median) << "\n";
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(mu);
        failed = true;
        fail_reason = "seed " + std::to_string(seed) + ": " + e.what();
        return;
      }
    }
  };

  const int jobs = std::max(1, cfg.jobs);
  std::vector<std::thread> pool;
  for (int i = 0; i < std::min<int>(jobs, int(seeds.size())); ++i)
    pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  if (failed) {
    log << "experiment failed: " << fail_reason << "\n";
    return kExitRuntime;
  }

  nlohmann::json j;
  j["schema_version"] = 1;
  j["env"] = cfg.env_name;
  j["bonus_sites"] = cfg.env_bonus_sites;
  j["metric"] = agent::metric_to_string(cfg.agent.metric);
  j["seeds"] = cfg.seeds;
  j["final_eval_median"] = {
      {"median", runlog::median_of(finals)},
      {"q25", runlog::quantile_of(finals, 0.25)},
      {"q75", runlog::quantile_of(finals, 0.75)},
  };
  j["per_seed_final"] = finals;
  std::ofstream os(cfg.output_dir + "/summary.json");
  os << j.dump(2) << "\n";
  log << "summary: median final eval " << runlog::median_of(finals) << "\n";
  return kExitOk;
}

int run_eval(const config::ExperimentConfig& cfg, std::uint64_t seed, int episodes,
             std::ostream& log) {
  const std::string path =
      cfg.output_dir + "/policy_seed" + std::to_string(seed) + ".ckpt";
  if (!fs::exists(path)) {
    log << "no checkpoint at " << path << "\n";
    return kExitRuntime;
  }
  auto env = make_env(cfg, Rng(seed).stream(102).seed());
  nets::PolicyConfig pc;
  pc.state_dim = env->obs_dim();
  pc.action_dim = env->action_dim();
  pc.hidden = cfg.agent.policy_hidden;
  pc.action_scale = env->action_bound();
  Rng init(0);
  nets::PolicyNet policy(pc, init);
  policy.params().set_flat(ParamStore::load(path).flat());
  auto st = agent::Agent::evaluate(policy, *env, episodes);
  log << "eval over " << episodes << " episodes: mean " << st.mean << ", median "
      << st.median << "\n";
  return kExitOk;
}

int emit_plot_data(const std::string& run_dir, int smooth_window, std::ostream& log) {
  std::vector<std::string> csvs;
  if (fs::exists(run_dir))
    for (const auto& e : fs::directory_iterator(run_dir)) {
      const std::string name = e.path().filename().string();
      if (name.rfind("seed_", 0) == 0 && name.size() > 4 &&
          name.substr(name.size() - 4) == ".csv")
        csvs.push_back(e.path().string());
    }
  if (csvs.empty()) {
    log << "no seed CSVs in " << run_dir << "\n";
    return kExitRuntime;
  }
  std::sort(csvs.begin(), csvs.end());
  for (const std::string col :
       {"eval_median", "eval_mean", "critic_loss", "wm_loss", "q_mean"}) {
    auto curve = runlog::aggregate_column(csvs, col, smooth_window);
    runlog::write_curve_csv(run_dir + "/curve_" + col + ".csv", curve);
  }
  log << "wrote aggregated curves for " << csvs.size() << " seeds\n";
  return kExitOk;
}

int run_suite(std::uint64_t seed, int sizes, const std::string& out_dir,
              std::ostream& log) {
  auto report = suite::contraction_suite(seed, sizes);
  for (const auto& p : report.properties)
    log << (p.pass ? "[PASS] " : "[FAIL] ") << p.name << " (cases " << p.cases
        << ", worst " << p.worst_measured << ", bound " << p.bound << ")"
        << (p.counterexample.empty() ? "" : "  counterexample: " + p.counterexample)
        << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream os(out_dir + "/suite_report.json");
    os << report.to_json() << "\n";
  }
  return report.all_pass() ? kExitOk : kExitSuiteFailure;
}

int run_supervised(const supervised::SupervisedConfig& cfg, const std::string& out_dir,
                   std::ostream& log) {
  fs::create_directories(out_dir);
  supervised::SupervisedConfig dist = cfg;
  dist.distributional = true;
  supervised::SupervisedConfig det = cfg;
  det.distributional = false;

  auto write = [&](const supervised::SupervisedLog& l, const std::string& name) {
    std::ofstream os(out_dir + "/" + name);
    os << "step,eval_mmd,l2_to_mean,train_loss\n";
    for (const auto& r : l.rows)
      os << r.step << ',' << r.eval_mmd << ',' << r.l2_to_mean << ',' << r.train_loss
         << "\n";
  };

  auto dlog = supervised::train_supervised(dist);
  write(dlog, "distributional.csv");
  auto rlog = supervised::train_supervised(det);
  write(rlog, "deterministic.csv");

  if (dlog.rows.empty() || rlog.rows.empty()) return kExitRuntime;
  const auto& df = dlog.rows.back();
  const auto& rf = rlog.rows.back();
  log << "distributional: eval MMD " << df.eval_mmd << ", L2-to-mean " << df.l2_to_mean
      << "\n";
  log << "deterministic:  eval MMD " << rf.eval_mmd << ", L2-to-mean " << rf.l2_to_mean
      << "\n";
  log << (df.eval_mmd < rf.eval_mmd ? "distributional wins on the joint MMD\n"
                                    : "deterministic wins on the joint MMD\n");
  return kExitOk;
}

}  // namespace dsdpg::harness
