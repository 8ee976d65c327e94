#include "ib/harness.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ib::harness {

namespace {

using nlohmann::json;

std::vector<double> doubles_from(const json& j) {
  std::vector<double> out;
  for (const auto& v : j) out.push_back(v.get<double>());
  return out;
}

void swarm_from_json(const json& j, swarm::SwarmConfig& s) {
  s.n_particles = j.value("particles", s.n_particles);
  s.n_iterations = j.value("iterations", s.n_iterations);
  s.inertia = j.value("inertia", s.inertia);
  s.cognitive = j.value("cognitive", s.cognitive);
  s.social = j.value("social", s.social);
  s.velocity_cap = j.value("velocity_cap", s.velocity_cap);
  s.n_threads = j.value("threads", s.n_threads);
}

json swarm_to_json(const swarm::SwarmConfig& s) {
  return json{{"particles", s.n_particles}, {"iterations", s.n_iterations},
              {"inertia", s.inertia},       {"cognitive", s.cognitive},
              {"social", s.social},         {"velocity_cap", s.velocity_cap},
              {"threads", s.n_threads}};
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j;
  in >> j;

  ExperimentConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.noise_scale = j.value("noise_scale", cfg.noise_scale);
  if (j.contains("set_points")) cfg.set_points = doubles_from(j["set_points"]);
  cfg.episodes_per_set_point =
      j.value("episodes_per_set_point", cfg.episodes_per_set_point);
  cfg.episode_length = j.value("episode_length", cfg.episode_length);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);

  if (j.contains("model")) {
    const json& m = j["model"];
    cfg.model_cfg.train_fraction =
        m.value("train_fraction", cfg.model_cfg.train_fraction);
    cfg.model_cfg.restarts = m.value("restarts", cfg.model_cfg.restarts);
    cfg.model_cfg.max_epochs = m.value("max_epochs", cfg.model_cfg.max_epochs);
    cfg.model_cfg.patience = m.value("patience", cfg.model_cfg.patience);
    cfg.model_cfg.future_steps =
        m.value("future_steps", cfg.model_cfg.future_steps);
    cfg.model_cfg.windows_per_episode =
        m.value("windows_per_episode", cfg.model_cfg.windows_per_episode);
    cfg.model_cfg.n_threads = m.value("threads", cfg.model_cfg.n_threads);
  }
  if (j.contains("psop")) {
    const json& p = j["psop"];
    cfg.psop_cfg.horizon = p.value("horizon", cfg.psop_cfg.horizon);
    cfg.psop_cfg.terminal_weight =
        p.value("q", cfg.psop_cfg.terminal_weight);
    cfg.psop_cfg.warm_start = p.value("warm_start", cfg.psop_cfg.warm_start);
    swarm_from_json(p, cfg.psop_cfg.swarm);
  }
  if (j.contains("nfq")) {
    const json& n = j["nfq"];
    cfg.nfq_iterations = n.value("iterations", cfg.nfq_iterations);
    cfg.nfq_cfg.max_epochs = n.value("max_epochs", cfg.nfq_cfg.max_epochs);
    cfg.nfq_cfg.patience = n.value("patience", cfg.nfq_cfg.patience);
    cfg.nfq_cfg.learning_rate =
        n.value("learning_rate", cfg.nfq_cfg.learning_rate);
    cfg.nfq_cfg.val_fraction =
        n.value("val_fraction", cfg.nfq_cfg.val_fraction);
    cfg.nfq_select_histories =
        n.value("select_histories", cfg.nfq_select_histories);
    cfg.nfq_select_horizon = n.value("select_horizon", cfg.nfq_select_horizon);
  }
  if (j.contains("rcnn")) {
    const json& r = j["rcnn"];
    cfg.rcnn_cfg.rollout_steps =
        r.value("rollout_steps", cfg.rcnn_cfg.rollout_steps);
    cfg.rcnn_cfg.terminal_weight =
        r.value("q", cfg.rcnn_cfg.terminal_weight);
    cfg.rcnn_cfg.epochs = r.value("epochs", cfg.rcnn_cfg.epochs);
    cfg.rcnn_cfg.samples_per_epoch =
        r.value("samples_per_epoch", cfg.rcnn_cfg.samples_per_epoch);
    cfg.rcnn_cfg.lr_min = r.value("lr_min", cfg.rcnn_cfg.lr_min);
    cfg.rcnn_cfg.lr_max = r.value("lr_max", cfg.rcnn_cfg.lr_max);
    cfg.rcnn_cfg.runs = r.value("runs", cfg.rcnn_cfg.runs);
    cfg.rcnn_cfg.assess_histories =
        r.value("assess_histories", cfg.rcnn_cfg.assess_histories);
    cfg.rcnn_cfg.assess_horizon =
        r.value("assess_horizon", cfg.rcnn_cfg.assess_horizon);
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    if (e.contains("set_points"))
      cfg.eval_set_points = doubles_from(e["set_points"]);
    cfg.eval_runs = e.value("runs", cfg.eval_runs);
    cfg.eval_episode_length =
        e.value("episode_length", cfg.eval_episode_length);
    cfg.paired_env_seeds = e.value("paired_env_seeds", cfg.paired_env_seeds);
  }
  if (j.contains("oracle")) {
    const json& o = j["oracle"];
    cfg.oracle_horizon = o.value("horizon", cfg.oracle_horizon);
    cfg.oracle_q = o.value("q", cfg.oracle_q);
    swarm_from_json(o, cfg.oracle_swarm);
  }
  return cfg;
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  json j{
      {"seed", cfg.seed},
      {"noise_scale", cfg.noise_scale},
      {"set_points", cfg.set_points},
      {"episodes_per_set_point", cfg.episodes_per_set_point},
      {"episode_length", cfg.episode_length},
      {"out_dir", cfg.out_dir},
      {"model",
       {{"train_fraction", cfg.model_cfg.train_fraction},
        {"restarts", cfg.model_cfg.restarts},
        {"max_epochs", cfg.model_cfg.max_epochs},
        {"patience", cfg.model_cfg.patience},
        {"future_steps", cfg.model_cfg.future_steps},
        {"windows_per_episode", cfg.model_cfg.windows_per_episode},
        {"threads", cfg.model_cfg.n_threads}}},
      {"psop",
       [&] {
         json p = swarm_to_json(cfg.psop_cfg.swarm);
         p["horizon"] = cfg.psop_cfg.horizon;
         p["q"] = cfg.psop_cfg.terminal_weight;
         p["warm_start"] = cfg.psop_cfg.warm_start;
         return p;
       }()},
      {"nfq",
       {{"iterations", cfg.nfq_iterations},
        {"max_epochs", cfg.nfq_cfg.max_epochs},
        {"patience", cfg.nfq_cfg.patience},
        {"learning_rate", cfg.nfq_cfg.learning_rate},
        {"val_fraction", cfg.nfq_cfg.val_fraction},
        {"select_histories", cfg.nfq_select_histories},
        {"select_horizon", cfg.nfq_select_horizon}}},
      {"rcnn",
       {{"rollout_steps", cfg.rcnn_cfg.rollout_steps},
        {"q", cfg.rcnn_cfg.terminal_weight},
        {"epochs", cfg.rcnn_cfg.epochs},
        {"samples_per_epoch", cfg.rcnn_cfg.samples_per_epoch},
        {"lr_min", cfg.rcnn_cfg.lr_min},
        {"lr_max", cfg.rcnn_cfg.lr_max},
        {"runs", cfg.rcnn_cfg.runs},
        {"assess_histories", cfg.rcnn_cfg.assess_histories},
        {"assess_horizon", cfg.rcnn_cfg.assess_horizon}}},
      {"eval",
       {{"set_points", cfg.eval_set_points.empty() ? cfg.set_points
                                                   : cfg.eval_set_points},
        {"runs", cfg.eval_runs},
        {"episode_length", cfg.eval_episode_length},
        {"paired_env_seeds", cfg.paired_env_seeds}}},
      {"oracle", [&] {
         json o = swarm_to_json(cfg.oracle_swarm);
         o["horizon"] = cfg.oracle_horizon;
         o["q"] = cfg.oracle_q;
         return o;
       }()}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

TransitionBatch generate_batch(const ExperimentConfig& cfg,
                               std::uint64_t seed) {
  TransitionBatch batch;
  std::uint64_t idx = 0;
  for (double sp : cfg.set_points) {
    for (int e = 0; e < cfg.episodes_per_set_point; ++e, ++idx) {
      EnvState st =
          reset(sp, CounterRng::derive(seed, 2 * idx), cfg.noise_scale);
      CounterRng arng(CounterRng::derive(seed, 2 * idx + 1));
      Episode ep;
      ep.set_point = sp;
      ep.observations.push_back(observe(st));
      for (int t = 0; t < cfg.episode_length; ++t) {
        ActionDelta a(arng.uniform(-1.0, 1.0), arng.uniform(-1.0, 1.0),
                      arng.uniform(-1.0, 1.0));
        auto [next, obs, r] = step(st, a);
        st = next;
        ep.observations.push_back(obs);
        ep.actions.push_back(a);
        ep.rewards.push_back(r);
      }
      batch.episodes.push_back(std::move(ep));
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Policies

ActionDelta RandomPolicy::act(const Observation&) {
  return ActionDelta(rng_.uniform(-1.0, 1.0), rng_.uniform(-1.0, 1.0),
                     rng_.uniform(-1.0, 1.0));
}

ActionDelta NfqPolicy::act(const Observation& current) {
  return nfq::greedy_action(q_, current);
}

int RcnnPolicy::warmup_steps() const {
  return std::max(model_->consumption.horizon, model_->fatigue.horizon);
}

void RcnnPolicy::begin_episode(const std::vector<Observation>& warmup) {
  model::HistoryWindow hist(warmup.end() - (warmup_steps() + 1), warmup.end());
  state_ = model::prime_rollout(*model_, hist);
  prev_ = warmup.back();
  first_ = true;
}

ActionDelta RcnnPolicy::act(const Observation& current) {
  if (!first_) {
    model::observe_step(*model_, state_, prev_, current);
    prev_ = current;
  }
  first_ = false;
  return rcnn::policy_forward(net_, rcnn::policy_input(state_));
}

int PsopPolicy::warmup_steps() const {
  return std::max(model_->consumption.horizon, model_->fatigue.horizon);
}

void PsopPolicy::begin_episode(const std::vector<Observation>& warmup) {
  window_.assign(warmup.end() - (warmup_steps() + 1), warmup.end());
  planner_.reset();
  first_ = true;
}

ActionDelta PsopPolicy::act(const Observation& current) {
  if (!first_) {
    window_.pop_front();
    window_.push_back(current);
  }
  first_ = false;
  model::HistoryWindow hist(window_.begin(), window_.end());
  return planner_.act(hist);
}

// ---------------------------------------------------------------------------
// Result tables

std::vector<double> ResultTable::row_means() const {
  std::vector<double> means;
  means.reserve(values.size());
  for (const auto& row : values) {
    double s = 0.0;
    for (double v : row) s += v;
    means.push_back(s / static_cast<double>(row.size()));
  }
  return means;
}

double ResultTable::overall_mean() const {
  auto means = row_means();
  double s = 0.0;
  for (double m : means) s += m;
  return s / static_cast<double>(means.size());
}

void ResultTable::write_csv(const std::string& path) const {
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);
  const std::size_t runs = values.empty() ? 0 : values[0].size();
  std::fputs("set_point", fp);
  if (!max_values.empty()) std::fputs(",max", fp);
  for (std::size_t r = 0; r < runs; ++r)
    std::fprintf(fp, ",run_%zu", r + 1);
  std::fputs(",mean\n", fp);
  auto means = row_means();
  for (std::size_t i = 0; i < set_points.size(); ++i) {
    std::fprintf(fp, "%.10g", set_points[i]);
    if (!max_values.empty()) std::fprintf(fp, ",%.10g", max_values[i]);
    for (double v : values[i]) std::fprintf(fp, ",%.10g", v);
    std::fprintf(fp, ",%.10g\n", means[i]);
  }
  if (std::fclose(fp) != 0) throw std::runtime_error("write failed: " + path);
}

ResultTable ResultTable::read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty table: " + path);
  bool has_max = line.find(",max,") != std::string::npos;

  ResultTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    std::vector<double> vals;
    while (std::getline(ss, field, ',')) vals.push_back(std::stod(field));
    std::size_t at = 0;
    t.set_points.push_back(vals[at++]);
    if (has_max) t.max_values.push_back(vals[at++]);
    // last column is the mean, recomputed on demand
    t.values.emplace_back(vals.begin() + at, vals.end() - 1);
  }
  return t;
}

std::string ResultTable::pretty() const {
  std::ostringstream out;
  const std::size_t runs = values.empty() ? 0 : values[0].size();
  out << "SetPoint";
  if (!max_values.empty()) out << " (MAX)";
  for (std::size_t r = 0; r < runs; ++r) out << "\t" << (r + 1);
  out << "\tmean\n";
  auto means = row_means();
  char buf[64];
  for (std::size_t i = 0; i < set_points.size(); ++i) {
    out << set_points[i];
    if (!max_values.empty()) {
      std::snprintf(buf, sizeof(buf), " (%.2f)", max_values[i]);
      out << buf;
    }
    for (double v : values[i]) {
      std::snprintf(buf, sizeof(buf), "\t%.2f", v);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "\t%.2f\n", means[i]);
    out << buf;
  }
  // Column means across set points.
  out << "mean";
  if (!max_values.empty()) {
    double s = 0.0;
    for (double v : max_values) s += v;
    std::snprintf(buf, sizeof(buf), " (%.2f)",
                  s / static_cast<double>(max_values.size()));
    out << buf;
  }
  for (std::size_t r = 0; r < runs; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) s += values[i][r];
    std::snprintf(buf, sizeof(buf), "\t%.2f",
                  s / static_cast<double>(values.size()));
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "\t%.2f\n", overall_mean());
  out << buf;
  return out.str();
}

void ResultTable::write_long_csv(const std::string& path) const {
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);
  std::fputs("set_point,run,value\n", fp);
  for (std::size_t i = 0; i < set_points.size(); ++i) {
    for (std::size_t r = 0; r < values[i].size(); ++r) {
      std::fprintf(fp, "%.10g,%zu,%.10g\n", set_points[i], r + 1,
                   values[i][r]);
    }
  }
  if (std::fclose(fp) != 0) throw std::runtime_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

std::uint64_t eval_env_seed(const ExperimentConfig& cfg, std::size_t sp_index,
                            int run) {
  std::uint64_t base = CounterRng::derive(cfg.seed, 424242);
  std::uint64_t stream = sp_index * 100003 +
                         (cfg.paired_env_seeds ? 0 : static_cast<std::uint64_t>(
                                                         run + 1));
  return CounterRng::derive(base, stream);
}

}  // namespace

EpisodeResult evaluate_episode(double set_point, std::uint64_t env_seed,
                               double noise_scale, int steps, Policy& policy) {
  EnvState st = reset(set_point, env_seed, noise_scale);
  Episode traj;
  traj.set_point = set_point;
  Observation cur = observe(st);
  traj.observations.push_back(cur);

  std::vector<Observation> warmup{cur};
  for (int w = 0; w < policy.warmup_steps(); ++w) {
    ActionDelta zero(0, 0, 0);
    auto [next, obs, r] = step(st, zero);
    st = next;
    cur = obs;
    warmup.push_back(obs);
    traj.observations.push_back(obs);
    traj.actions.push_back(zero);
    traj.rewards.push_back(r);
  }
  policy.begin_episode(warmup);

  double total = 0.0;
  for (int t = 0; t < steps; ++t) {
    ActionDelta a = policy.act(cur);
    auto [next, obs, r] = step(st, a);
    st = next;
    cur = obs;
    total += r;
    traj.observations.push_back(obs);
    traj.actions.push_back(a);
    traj.rewards.push_back(r);
  }

  EpisodeResult res;
  res.average_reward = total / static_cast<double>(steps);
  res.trajectory = std::move(traj);
  return res;
}

ResultTable evaluate_policy(const ExperimentConfig& cfg,
                            const PolicyFactory& factory,
                            TransitionBatch* trajectories) {
  const std::vector<double>& sps =
      cfg.eval_set_points.empty() ? cfg.set_points : cfg.eval_set_points;
  ResultTable table;
  table.set_points = sps;
  table.values.assign(sps.size(), std::vector<double>(cfg.eval_runs, 0.0));
  for (std::size_t i = 0; i < sps.size(); ++i) {
    for (int r = 0; r < cfg.eval_runs; ++r) {
      auto policy = factory(r, sps[i]);
      EpisodeResult res =
          evaluate_episode(sps[i], eval_env_seed(cfg, i, r), cfg.noise_scale,
                           cfg.eval_episode_length, *policy);
      table.values[i][r] = res.average_reward;
      if (trajectories) {
        trajectories->episodes.push_back(std::move(res.trajectory));
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Oracle

double max_reward_oracle(double set_point, std::uint64_t env_seed,
                         double noise_scale, int episode_length,
                         const ExperimentConfig& cfg,
                         std::uint64_t plan_seed) {
  EnvState st = reset(set_point, env_seed, noise_scale);
  const int T = cfg.oracle_horizon;
  const double gamma = psop::gamma_from_q(cfg.oracle_q, T);
  swarm::Box box = swarm::Box::uniform(3 * T, -1.0, 1.0);

  double total = 0.0;
  Eigen::VectorXd warm;
  for (int t = 0; t < episode_length; ++t) {
    const EnvState base = st;  // the copy freezes the future randomness
    swarm::FitnessFunction fitness = [&](const Eigen::VectorXd& x) {
      EnvState sim = base;
      double ret = 0.0;
      double g = 1.0;
      for (int k = 0; k < T; ++k) {
        ActionDelta a(x[3 * k], x[3 * k + 1], x[3 * k + 2]);
        auto [next, obs, r] = step(sim, a);
        sim = next;
        ret += g * r;
        g *= gamma;
      }
      return ret;
    };
    // Warm start: seed one particle with the previous plan shifted by one
    // step (zero-filled tail), the receding-horizon analogue of the
    // planner's warm start.
    std::vector<Eigen::VectorXd> seeds;
    if (warm.size() > 0) {
      Eigen::VectorXd shifted = Eigen::VectorXd::Zero(3 * T);
      shifted.head(3 * (T - 1)) = warm.tail(3 * (T - 1));
      seeds.push_back(std::move(shifted));
    }
    swarm::SwarmResult best =
        swarm::pso_maximize(fitness, 3 * T, box, cfg.oracle_swarm,
                            CounterRng::derive(plan_seed, t),
                            seeds.empty() ? nullptr : &seeds);
    warm = best.best_position;
    ActionDelta a(best.best_position[0], best.best_position[1],
                  best.best_position[2]);
    auto [next, obs, r] = step(st, a);
    st = next;
    total += r;
  }
  return total / static_cast<double>(episode_length);
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

std::vector<model::HistoryWindow> selection_histories(
    const TransitionBatch& data, int history_len, int count,
    std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<model::HistoryWindow> out;
  std::vector<const Episode*> usable;
  for (const auto& ep : data.episodes) {
    if (static_cast<int>(ep.observations.size()) >= history_len)
      usable.push_back(&ep);
  }
  if (usable.empty()) {
    throw std::runtime_error("no episode long enough for a history window");
  }
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

}  // namespace

ResultTable run_experiment(const ExperimentConfig& cfg,
                           const std::string& method) {
  std::filesystem::create_directories(cfg.out_dir);

  TransitionBatch batch = generate_batch(cfg, CounterRng::derive(cfg.seed, 1));

  std::shared_ptr<model::SystemModel> m;
  if (method != "random") {
    m = std::make_shared<model::SystemModel>(
        model::train_system_model(batch, cfg.model_cfg,
                                  CounterRng::derive(cfg.seed, 2)));
  }

  PolicyFactory factory;
  if (method == "random") {
    factory = [&](int run, double) {
      return std::make_unique<RandomPolicy>(
          CounterRng::derive(cfg.seed, 9000 + run));
    };
  } else if (method == "psop") {
    factory = [&, m](int run, double) {
      return std::make_unique<PsopPolicy>(
          *m, cfg.psop_cfg, CounterRng::derive(cfg.seed, 8000 + run));
    };
  } else if (method == "nfq") {
    auto cache = std::make_shared<std::map<int, nfq::QFunction>>();
    const int hist_len =
        std::max(m->consumption.horizon, m->fatigue.horizon) + 1;
    auto histories =
        selection_histories(batch, hist_len, cfg.nfq_select_histories,
                            CounterRng::derive(cfg.seed, 3));
    double gamma =
        psop::gamma_from_q(cfg.psop_cfg.terminal_weight, cfg.psop_cfg.horizon);
    factory = [&, m, cache, histories, gamma](int run, double) {
      auto it = cache->find(run);
      if (it == cache->end()) {
        auto snapshots =
            nfq::train_nfq(batch, cfg.nfq_iterations, gamma, cfg.nfq_cfg,
                           CounterRng::derive(cfg.seed, 7000 + run));
        auto sel = nfq::select_best_policy(snapshots, *m, histories,
                                           cfg.nfq_select_horizon);
        it = cache->emplace(run, snapshots[sel.index]).first;
      }
      return std::make_unique<NfqPolicy>(it->second);
    };
  } else if (method == "rcnn") {
    auto cache = std::make_shared<std::map<int, rcnn::PolicyNetwork>>();
    factory = [&, m, cache](int run, double) {
      auto it = cache->find(run);
      if (it == cache->end()) {
        it = cache
                 ->emplace(run, rcnn::train_rcnn_policy(
                                    *m, batch, cfg.rcnn_cfg,
                                    CounterRng::derive(cfg.seed, 6000 + run)))
                 .first;
      }
      return std::make_unique<RcnnPolicy>(*m, it->second);
    };
  } else {
    throw std::invalid_argument("unknown method: " + method);
  }

  TransitionBatch trajectories;
  ResultTable table = evaluate_policy(cfg, factory, &trajectories);

  table.write_csv(cfg.out_dir + "/results_" + method + ".csv");
  write_batch_csv(trajectories,
                  cfg.out_dir + "/trajectories_" + method + ".csv");
  return table;
}

}  // namespace ib::harness
