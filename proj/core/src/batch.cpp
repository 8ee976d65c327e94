#include "ib/batch.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ib {

std::size_t TransitionBatch::size() const {
  std::size_t n = 0;
  for (const auto& ep : episodes) n += ep.steps();
  return n;
}

std::vector<Transition> TransitionBatch::flat() const {
  std::vector<Transition> out;
  out.reserve(size());
  for (const auto& ep : episodes) {
    for (std::size_t t = 0; t < ep.steps(); ++t) out.push_back(ep.transition(t));
  }
  return out;
}

void write_batch_csv(const TransitionBatch& batch, const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw std::runtime_error("cannot open for writing: " + path);
  std::fputs("episode,t,set_point,v,g,h,c,f,reward,dv,dg,dh\n", fp);
  for (std::size_t e = 0; e < batch.episodes.size(); ++e) {
    const Episode& ep = batch.episodes[e];
    for (std::size_t t = 0; t < ep.observations.size(); ++t) {
      const Observation& o = ep.observations[t];
      double r = 0.0, dv = 0.0, dg = 0.0, dh = 0.0;
      if (t > 0) {
        r = ep.rewards[t - 1];
        dv = ep.actions[t - 1].dv();
        dg = ep.actions[t - 1].dg();
        dh = ep.actions[t - 1].dh();
      }
      std::fprintf(fp, "%zu,%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                   e, t, ep.set_point, o.v, o.g, o.h, o.c, o.f, r, dv, dg, dh);
    }
  }
  if (std::fclose(fp) != 0) throw std::runtime_error("write failed: " + path);
}

TransitionBatch read_batch_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV: " + path);

  TransitionBatch batch;
  std::size_t cur_episode = static_cast<std::size_t>(-1);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    double vals[12];
    for (int i = 0; i < 12; ++i) {
      if (!std::getline(ss, field, ',')) {
        throw std::runtime_error("malformed CSV row: " + line);
      }
      vals[i] = std::stod(field);
    }
    auto e = static_cast<std::size_t>(vals[0]);
    auto t = static_cast<std::size_t>(vals[1]);
    if (e != cur_episode) {
      if (t != 0) throw std::runtime_error("episode does not start at t=0");
      batch.episodes.emplace_back();
      batch.episodes.back().set_point = vals[2];
      cur_episode = e;
    }
    Episode& ep = batch.episodes.back();
    Observation o;
    o.p = vals[2];
    o.v = vals[3];
    o.g = vals[4];
    o.h = vals[5];
    o.c = vals[6];
    o.f = vals[7];
    ep.observations.push_back(o);
    if (t > 0) {
      ep.rewards.push_back(vals[8]);
      ep.actions.emplace_back(vals[9], vals[10], vals[11]);
    }
  }
  return batch;
}

}  // namespace ib
