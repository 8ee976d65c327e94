#ifndef IB_BATCH_HPP
#define IB_BATCH_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "ib/env.hpp"

namespace ib {

// One (observation, action, reward, next observation) tuple.
struct Transition {
  Observation obs;
  ActionDelta action;
  double reward = 0.0;
  Observation next_obs;
};

// A single fixed-length trajectory at one set point.
struct Episode {
  double set_point = 0.0;
  std::vector<Observation> observations;  // length = steps + 1
  std::vector<ActionDelta> actions;       // length = steps
  std::vector<double> rewards;            // length = steps

  std::size_t steps() const { return actions.size(); }
  Transition transition(std::size_t t) const {
    return Transition{observations[t], actions[t], rewards[t],
                      observations[t + 1]};
  }
};

// The offline dataset D: a set of episodes plus a flat tuple view.
struct TransitionBatch {
  std::vector<Episode> episodes;

  std::size_t size() const;  // total transition count
  std::vector<Transition> flat() const;
};

// Trajectory CSV, header:
//   episode,t,set_point,v,g,h,c,f,reward,dv,dg,dh
// Row t carries the observation after t steps together with the action and
// reward that produced it; row t=0 is the initial observation with zeros in
// the action/reward columns.
void write_batch_csv(const TransitionBatch& batch, const std::string& path);
TransitionBatch read_batch_csv(const std::string& path);

}  // namespace ib

#endif  // IB_BATCH_HPP
