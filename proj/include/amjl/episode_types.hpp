#pragma once

#include <cstddef>
#include <vector>

#include "amjl/missingness.hpp"

namespace amjl {

struct EpisodeStep {
  MissingState state;  // before the action is taken
  std::size_t action = 0;
  double log_prob = 0.0;  // under the distribution that drew the action
  double explore = 0.0;   // flattening level of that distribution
  std::vector<Vec> dropout_masks;  // actor masks used for this step (empty entries: none)
};

struct Episode {
  std::vector<EpisodeStep> steps;
  MissingState terminal;
  Vec source;  // complete vector acting as the environment

  std::size_t length() const { return steps.size(); }
};

}  // namespace amjl
