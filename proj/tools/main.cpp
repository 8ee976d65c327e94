// Command-line driver: generate batches, train models and policies, evaluate
// methods, compute the oracle and print report tables. Everything is driven
// by one JSON config; individual flags override config keys.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ib/harness.hpp"

namespace {

namespace fs = std::filesystem;
using namespace ib;

struct CommonOpts {
  std::string config_path;
  harness::ExperimentConfig cfg;
};

void add_common(CLI::App* app, CommonOpts& opts) {
  app->add_option("--config", opts.config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  app->add_option("--seed", opts.cfg.seed, "master seed");
  app->add_option("--noise-scale", opts.cfg.noise_scale,
                  "stochasticity scale (0 freezes noise at its mean)");
  app->add_option("--out-dir", opts.cfg.out_dir, "artifact directory");
  app->add_option("--episodes", opts.cfg.episodes_per_set_point,
                  "episodes per set point in the generated batch");
  app->add_option("--episode-length", opts.cfg.episode_length,
                  "steps per generated episode");
  app->add_option("--eval-runs", opts.cfg.eval_runs, "evaluation runs");
  app->add_option("--eval-episode-length", opts.cfg.eval_episode_length,
                  "controlled steps per evaluation episode");
  app->add_option("--horizon", opts.cfg.psop_cfg.horizon,
                  "planning horizon for the swarm planner");
  app->add_option("--particles", opts.cfg.psop_cfg.swarm.n_particles,
                  "swarm particles for the planner");
  app->add_option("--iterations", opts.cfg.psop_cfg.swarm.n_iterations,
                  "swarm iterations for the planner");
  app->add_option("--nfq-iterations", opts.cfg.nfq_iterations,
                  "fitted-Q iterations");
  app->add_option("--rcnn-runs", opts.cfg.rcnn_cfg.runs,
                  "recurrent policy training runs");
  app->add_option("--threads", opts.cfg.model_cfg.n_threads,
                  "worker threads for model training");
}

// Parses --config before the override flags are applied on top.
void finalize(CLI::App* app, CommonOpts& opts) {
  if (!opts.config_path.empty()) {
    harness::ExperimentConfig from_file =
        harness::load_config(opts.config_path);
    // Re-apply flag overrides on top of the file values.
    harness::ExperimentConfig defaults;
    auto keep = [&](auto& file_v, const auto& flag_v, const auto& default_v) {
      if (flag_v != default_v) file_v = flag_v;
    };
    keep(from_file.seed, opts.cfg.seed, defaults.seed);
    keep(from_file.noise_scale, opts.cfg.noise_scale, defaults.noise_scale);
    keep(from_file.out_dir, opts.cfg.out_dir, defaults.out_dir);
    keep(from_file.episodes_per_set_point, opts.cfg.episodes_per_set_point,
         defaults.episodes_per_set_point);
    keep(from_file.episode_length, opts.cfg.episode_length,
         defaults.episode_length);
    keep(from_file.eval_runs, opts.cfg.eval_runs, defaults.eval_runs);
    keep(from_file.eval_episode_length, opts.cfg.eval_episode_length,
         defaults.eval_episode_length);
    keep(from_file.psop_cfg.horizon, opts.cfg.psop_cfg.horizon,
         defaults.psop_cfg.horizon);
    keep(from_file.psop_cfg.swarm.n_particles,
         opts.cfg.psop_cfg.swarm.n_particles,
         defaults.psop_cfg.swarm.n_particles);
    keep(from_file.psop_cfg.swarm.n_iterations,
         opts.cfg.psop_cfg.swarm.n_iterations,
         defaults.psop_cfg.swarm.n_iterations);
    keep(from_file.nfq_iterations, opts.cfg.nfq_iterations,
         defaults.nfq_iterations);
    keep(from_file.rcnn_cfg.runs, opts.cfg.rcnn_cfg.runs,
         defaults.rcnn_cfg.runs);
    keep(from_file.model_cfg.n_threads, opts.cfg.model_cfg.n_threads,
         defaults.model_cfg.n_threads);
    opts.cfg = from_file;
  }
  (void)app;
  fs::create_directories(opts.cfg.out_dir);
}

std::string batch_path(const harness::ExperimentConfig& cfg) {
  return cfg.out_dir + "/batch.csv";
}
std::string model_path(const harness::ExperimentConfig& cfg) {
  return cfg.out_dir + "/model.json";
}

TransitionBatch require_batch(const harness::ExperimentConfig& cfg) {
  const std::string path = batch_path(cfg);
  if (!fs::exists(path)) {
    throw std::runtime_error("no batch at " + path + "; run `generate` first");
  }
  return read_batch_csv(path);
}

model::SystemModel require_model(const harness::ExperimentConfig& cfg) {
  const std::string path = model_path(cfg);
  if (!fs::exists(path)) {
    throw std::runtime_error("no model at " + path +
                             "; run `train-model` first");
  }
  return model::load_model(path);
}

int cmd_generate(const harness::ExperimentConfig& cfg) {
  TransitionBatch batch =
      harness::generate_batch(cfg, CounterRng::derive(cfg.seed, 1));
  write_batch_csv(batch, batch_path(cfg));
  std::printf("wrote %zu episodes (%zu transitions) to %s\n",
              batch.episodes.size(), batch.size(), batch_path(cfg).c_str());
  return 0;
}

int cmd_train_model(const harness::ExperimentConfig& cfg) {
  TransitionBatch batch = require_batch(cfg);
  model::SystemModel m = model::train_system_model(
      batch, cfg.model_cfg, CounterRng::derive(cfg.seed, 2));
  model::save_model(m, model_path(cfg));
  std::printf("wrote model (hash %016llx) to %s\n",
              static_cast<unsigned long long>(model::weights_hash(m)),
              model_path(cfg).c_str());
  return 0;
}

std::vector<model::HistoryWindow> pick_histories(
    const TransitionBatch& batch, int history_len, int count,
    std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<model::HistoryWindow> out;
  std::vector<const Episode*> usable;
  for (const auto& ep : batch.episodes) {
    if (static_cast<int>(ep.observations.size()) >= history_len)
      usable.push_back(&ep);
  }
  if (usable.empty())
    throw std::runtime_error("no episode long enough for a history window");
  for (int i = 0; i < count; ++i) {
    const Episode& ep = *usable[rng.next_u64() % usable.size()];
    int max_start = static_cast<int>(ep.observations.size()) - history_len;
    int t0 = static_cast<int>(rng.next_u64() %
                              static_cast<std::uint64_t>(max_start + 1));
    out.emplace_back(ep.observations.begin() + t0,
                     ep.observations.begin() + t0 + history_len);
  }
  return out;
}

int cmd_train_nfq(const harness::ExperimentConfig& cfg) {
  TransitionBatch batch = require_batch(cfg);
  model::SystemModel m = require_model(cfg);
  double gamma =
      psop::gamma_from_q(cfg.psop_cfg.terminal_weight, cfg.psop_cfg.horizon);
  auto snapshots = nfq::train_nfq(batch, cfg.nfq_iterations, gamma,
                                  cfg.nfq_cfg, CounterRng::derive(cfg.seed, 7000));
  int hist_len = std::max(m.consumption.horizon, m.fatigue.horizon) + 1;
  auto histories = pick_histories(batch, hist_len, cfg.nfq_select_histories,
                                  CounterRng::derive(cfg.seed, 3));
  auto sel =
      nfq::select_best_policy(snapshots, m, histories, cfg.nfq_select_horizon);
  const std::string path = cfg.out_dir + "/nfq_policy.json";
  nfq::save_policy(snapshots[sel.index], path);
  std::printf("selected iteration %d (model estimate %.4f); wrote %s\n",
              sel.index + 1, sel.value, path.c_str());
  return 0;
}

int cmd_train_rcnn(const harness::ExperimentConfig& cfg) {
  TransitionBatch batch = require_batch(cfg);
  model::SystemModel m = require_model(cfg);
  rcnn::PolicyNetwork net = rcnn::train_rcnn_policy(
      m, batch, cfg.rcnn_cfg, CounterRng::derive(cfg.seed, 6000));
  const std::string path = cfg.out_dir + "/rcnn_policy.json";
  rcnn::save_policy(net, model::weights_hash(m), path);
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int cmd_eval(const harness::ExperimentConfig& cfg, const std::string& method) {
  harness::PolicyFactory factory;
  std::shared_ptr<model::SystemModel> m;
  std::shared_ptr<nfq::QFunction> q;
  std::shared_ptr<rcnn::PolicyNetwork> net;

  if (method == "random") {
    factory = [&cfg](int run, double) {
      return std::make_unique<harness::RandomPolicy>(
          CounterRng::derive(cfg.seed, 9000 + run));
    };
  } else if (method == "psop") {
    m = std::make_shared<model::SystemModel>(require_model(cfg));
    factory = [&cfg, m](int run, double) {
      return std::make_unique<harness::PsopPolicy>(
          *m, cfg.psop_cfg, CounterRng::derive(cfg.seed, 8000 + run));
    };
  } else if (method == "nfq") {
    q = std::make_shared<nfq::QFunction>(
        nfq::load_policy(cfg.out_dir + "/nfq_policy.json"));
    factory = [q](int, double) {
      return std::make_unique<harness::NfqPolicy>(*q);
    };
  } else if (method == "rcnn") {
    m = std::make_shared<model::SystemModel>(require_model(cfg));
    net = std::make_shared<rcnn::PolicyNetwork>(rcnn::load_policy(
        cfg.out_dir + "/rcnn_policy.json", model::weights_hash(*m)));
    factory = [m, net](int, double) {
      return std::make_unique<harness::RcnnPolicy>(*m, *net);
    };
  } else {
    std::fprintf(stderr, "unknown method: %s\n", method.c_str());
    return 1;
  }

  TransitionBatch trajectories;
  harness::ResultTable table = harness::evaluate_policy(cfg, factory,
                                                        &trajectories);
  table.write_csv(cfg.out_dir + "/results_" + method + ".csv");
  write_batch_csv(trajectories,
                  cfg.out_dir + "/trajectories_" + method + ".csv");
  std::printf("%s", table.pretty().c_str());
  return 0;
}

int cmd_oracle(const harness::ExperimentConfig& cfg) {
  const std::vector<double>& sps =
      cfg.eval_set_points.empty() ? cfg.set_points : cfg.eval_set_points;
  std::uint64_t eval_base = CounterRng::derive(cfg.seed, 424242);
  std::FILE* fp = std::fopen((cfg.out_dir + "/oracle.csv").c_str(), "w");
  if (!fp) throw std::runtime_error("cannot open oracle.csv for writing");
  std::fputs("set_point,max\n", fp);
  for (std::size_t i = 0; i < sps.size(); ++i) {
    // Same env seed as run 0 of a paired evaluation.
    std::uint64_t env_seed = CounterRng::derive(eval_base, i * 100003);
    double v = harness::max_reward_oracle(
        sps[i], env_seed, cfg.noise_scale, cfg.eval_episode_length, cfg,
        CounterRng::derive(cfg.seed, 5000 + i));
    std::fprintf(fp, "%.10g,%.10g\n", sps[i], v);
    std::printf("set point %g: max %.4f\n", sps[i], v);
  }
  std::fclose(fp);
  return 0;
}

int cmd_report(const harness::ExperimentConfig& cfg) {
  std::vector<double> oracle_vals;
  std::vector<double> oracle_sps;
  const std::string opath = cfg.out_dir + "/oracle.csv";
  if (fs::exists(opath)) {
    std::ifstream in(opath);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      auto comma = line.find(',');
      if (comma == std::string::npos) continue;
      oracle_sps.push_back(std::stod(line.substr(0, comma)));
      oracle_vals.push_back(std::stod(line.substr(comma + 1)));
    }
  }
  bool any = false;
  for (const std::string method : {"random", "psop", "nfq", "rcnn"}) {
    const std::string path = cfg.out_dir + "/results_" + method + ".csv";
    if (!fs::exists(path)) continue;
    harness::ResultTable table = harness::ResultTable::read_csv(path);
    if (table.max_values.empty() &&
        oracle_sps == table.set_points) {
      table.max_values = oracle_vals;
    }
    std::printf("== %s ==\n%s\n", method.c_str(), table.pretty().c_str());
    any = true;
  }
  if (!any) {
    std::printf("no results under %s; run `eval` first\n",
                cfg.out_dir.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"industrial benchmark batch-RL experiment driver"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string method = "psop";

  CLI::App* generate = app.add_subcommand("generate", "generate a batch");
  CLI::App* train_model =
      app.add_subcommand("train-model", "train the system model");
  CLI::App* train_nfq =
      app.add_subcommand("train-nfq", "train and select a fitted-Q policy");
  CLI::App* train_rcnn =
      app.add_subcommand("train-rcnn", "train the recurrent policy network");
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a method");
  eval_cmd->add_option("--method", method, "random | psop | nfq | rcnn")
      ->required();
  CLI::App* oracle =
      app.add_subcommand("oracle", "true-environment planning upper bound");
  CLI::App* report = app.add_subcommand("report", "print result tables");

  for (CLI::App* sub :
       {generate, train_model, train_nfq, train_rcnn, eval_cmd, oracle,
        report}) {
    add_common(sub, opts);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    CLI::App* sub = app.get_subcommands().front();
    finalize(sub, opts);
    if (sub == generate) return cmd_generate(opts.cfg);
    if (sub == train_model) return cmd_train_model(opts.cfg);
    if (sub == train_nfq) return cmd_train_nfq(opts.cfg);
    if (sub == train_rcnn) return cmd_train_rcnn(opts.cfg);
    if (sub == eval_cmd) return cmd_eval(opts.cfg, method);
    if (sub == oracle) return cmd_oracle(opts.cfg);
    if (sub == report) return cmd_report(opts.cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
