#pragma once

#include "peghole/cn.hpp"
#include "peghole/env.hpp"

namespace peghole::baselines {

struct SpiralParams {
    double pitch_mm = 1.0;         // radial gain per turn
    double angular_step_deg = 10.0;  // far-field step; near the center the
                                     // step grows to keep ~1 mm of arc
    double contact_force_limit = 5.0;  // N, contact detection threshold
};

// Press down until contact, then walk an outward Archimedean spiral while
// pressing; the feasibility gate is checked densely along each arc segment.
// Never commands yaw.
env::EpisodeRecord spiral_search(env::Env& environment, uint64_t episode_seed,
                                 const SpiralParams& params = {});

// One sensor reading, one commanded correction, one descent attempt.
env::EpisodeRecord vsn_one_shot(env::Env& environment, uint64_t episode_seed);

// Greedy alignment on the sensor readout: step against the sign of the
// measured error on every axis. The controller-independent sanity anchor
// when driven by the oracle sensor.
env::EpisodeRecord greedy_alignment(env::Env& environment, uint64_t episode_seed);

// Image-input actor-critic baseline: same update machinery, conv encoder over
// the raw label image instead of the virtual sensor.
cn::TrainPolicyResult train_e2e_vision(cn::TrainPolicyConfig config);

}  // namespace peghole::baselines
