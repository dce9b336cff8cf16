#include "peghole/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace peghole::env {

using geometry::Pose;
using geometry::PoseError;

void EpisodeConfig::validate() const {
    if (k_max < 1) throw std::invalid_argument("k_max must be >= 1");
    if (!(init_pos_range_mm > 0) || !(init_rot_range_deg > 0))
        throw std::invalid_argument("init ranges must be positive");
    if (!(step_xy_mm > 0) || !(step_yaw_deg > 0))
        throw std::invalid_argument("step sizes must be positive");
    if (!(gamma > 0) || gamma > 1.0)
        throw std::invalid_argument("gamma must be in (0, 1]");
}

std::string outcome_name(Outcome o) {
    switch (o) {
        case Outcome::active: return "active";
        case Outcome::success: return "success";
        case Outcome::timeout: return "timeout";
        case Outcome::out_of_safe_region: return "out_of_safe_region";
    }
    return "?";
}

double discounted_return(const EpisodeRecord& record, double gamma) {
    double acc = 0.0;
    double weight = 1.0;
    for (const StepRecord& s : record.steps) {
        acc += weight * s.reward;
        weight *= gamma;
    }
    return acc;
}

std::string episode_to_jsonl(const EpisodeRecord& record, double gamma) {
    std::ostringstream out;
    for (size_t t = 0; t < record.steps.size(); ++t) {
        const StepRecord& s = record.steps[t];
        nlohmann::json j;
        j["t"] = t;
        j["action"] = {s.action.ax, s.action.ay, s.action.ayaw};
        j["reward"] = s.reward;
        j["error_before"] = {s.error_before.dx, s.error_before.dy,
                             s.error_before.dtheta};
        if (s.reading) {
            j["reading"]["heatmap"] = s.reading->heatmap.values;
            j["reading"]["rotation"] = s.reading->rotation.values;
        }
        out << j.dump() << "\n";
    }
    nlohmann::json summary;
    summary["summary"] = true;
    summary["seed"] = record.seed;
    summary["shape"] = record.shape;
    summary["initial_error"] = {record.initial_error.dx, record.initial_error.dy,
                                record.initial_error.dtheta};
    summary["outcome"] = outcome_name(record.outcome);
    summary["steps"] = record.steps_used;
    summary["undiscounted_return"] = record.undiscounted_return;
    summary["discounted_return"] = discounted_return(record, gamma);
    out << summary.dump() << "\n";
    return out.str();
}

Env::Env(const EpisodeConfig& config, Sensor& sensor, bool record_readings)
    : config_(config),
      shape_(geometry::shape_by_name(config.shape)),
      sensor_(sensor),
      record_readings_(record_readings),
      rng_(config.seed) {
    config_.validate();
    cam_.config = config.camera;
    double max_r = 0.0;
    for (const auto& s : geometry::all_shapes())
        max_r = std::max(max_r, s.bounding_radius());
    cam_.validate(max_r, config.init_pos_range_mm);
}

double Env::gate_clearance() const {
    return config_.tolerance_mm > 0.0 ? config_.tolerance_mm : shape_.clearance_mm;
}

PoseError Env::true_error() const {
    const Pose peg = plant::forward_kinematics(plant_setup_.arm, state_.q);
    return geometry::relative_error(peg, hole_);
}

const raster::SegImage& Env::current_seg() {
    if (!seg_fresh_) {
        const Pose peg = plant::forward_kinematics(plant_setup_.arm, state_.q);
        seg_ = raster::render_seg(peg, hole_, shape_, cam_);
        seg_fresh_ = true;
    }
    return seg_;
}

bool Env::gate_open() const {
    return geometry::insertion_feasible(shape_, true_error(), gate_clearance());
}

Observation Env::observe() {
    Observation obs;
    PoseError err = true_error();
    // clamp to the sensor's representable ranges; far states terminate anyway
    const double pr = 10.0;
    err.dx = std::clamp(err.dx, -pr, pr);
    err.dy = std::clamp(err.dy, -pr, pr);
    err.dtheta = std::clamp(err.dtheta, -10.0, 10.0);
    const raster::SegImage* seg = sensor_.needs_image() ? &current_seg() : nullptr;
    obs.reading = sensor_.read(err, seg);
    obs.seg = sensor_.needs_image() ? seg : nullptr;
    return obs;
}

Observation Env::reset() { return reset(rng_.next_u64()); }

Observation Env::reset(uint64_t seed) {
    Rng episode_rng(seed);
    PoseError err{episode_rng.uniform(-config_.init_pos_range_mm,
                                      config_.init_pos_range_mm),
                  episode_rng.uniform(-config_.init_pos_range_mm,
                                      config_.init_pos_range_mm),
                  episode_rng.uniform(-config_.init_rot_range_deg,
                                      config_.init_rot_range_deg)};
    const Pose peg{hole_.x + err.dx, hole_.y + err.dy, 0.5,
                   geometry::normalize_deg(hole_.yaw + err.dtheta)};
    state_ = plant::PlantState{};
    state_.q = plant::inverse_kinematics(plant_setup_.arm, peg);
    // start with the press integral at its equilibrium so episodes begin in
    // steady contact rather than mid-transient
    force_integral_ = plant_setup_.gains.f_d / plant_setup_.gains.k_if;
    steps_ = 0;
    done_ = false;
    outcome_ = Outcome::active;
    seg_fresh_ = false;
    record_ = EpisodeRecord{};
    record_.seed = seed;
    record_.shape = shape_.name;
    record_.initial_error = err;
    return observe();
}

bool Env::descend() {
    // the gate is open; press until the peg is inside the hole
    const double max_s = 3.0;
    const plant::TaskVec hold{};
    int substeps = static_cast<int>(max_s / plant_setup_.dt);
    for (int k = 0; k < substeps; ++k) {
        auto res = plant::run_hybrid(plant_setup_, state_, force_integral_, shape_,
                                     hole_, hold, plant_setup_.dt, gate_clearance());
        state_ = res.state;
        force_integral_ = res.force_integral;
        if (state_.q[3] <= -config_.success_depth_mm) return true;
    }
    return state_.q[3] <= -config_.success_depth_mm;
}

StepResult Env::finish_step(const Action& action, double reward, Outcome outcome) {
    StepRecord rec;
    rec.action = action;
    rec.reward = reward;
    record_.steps.push_back(std::move(rec));
    record_.undiscounted_return += reward;
    ++steps_;
    record_.steps_used = steps_;
    StepResult result;
    result.reward = reward;
    if (outcome != Outcome::active) {
        done_ = true;
        outcome_ = outcome;
        record_.outcome = outcome;
        result.done = true;
        result.outcome = outcome;
        return result;
    }
    if (steps_ >= config_.k_max) {
        done_ = true;
        outcome_ = Outcome::timeout;
        record_.outcome = outcome_;
        result.done = true;
        result.outcome = outcome_;
        return result;
    }
    result.observation = observe();
    return result;
}

StepResult Env::step(const Action& action) {
    if (done_) throw std::runtime_error("step() after the episode finished");
    const PoseError err_before = true_error();
    const plant::TaskVec displacement{
        action.ax * config_.step_xy_mm, action.ay * config_.step_xy_mm, 0.0,
        geometry::deg_to_rad(action.ayaw * config_.step_yaw_deg)};
    auto res = plant::run_hybrid(plant_setup_, state_, force_integral_, shape_,
                                 hole_, displacement, config_.settle_s,
                                 gate_clearance());
    state_ = res.state;
    force_integral_ = res.force_integral;
    seg_fresh_ = false;

    const PoseError err = true_error();
    const double planar = std::hypot(err.dx, err.dy);
    Outcome outcome = Outcome::active;
    double reward = -1.0 / config_.k_max;
    if (planar > config_.safe_radius_mm ||
        raster::scene_out_of_view(plant::forward_kinematics(plant_setup_.arm, state_.q),
                                  hole_, shape_, cam_)) {
        outcome = Outcome::out_of_safe_region;
    } else if (gate_open() && descend()) {
        outcome = Outcome::success;
        reward = 1.0;
    }
    StepResult result = finish_step(action, reward, outcome);
    record_.steps.back().error_before = err_before;
    if (record_readings_ && !result.done)
        record_.steps.back().reading = result.observation.reading;
    return result;
}

StepResult Env::apply_correction(double dx_mm, double dy_mm, double dtheta_deg) {
    if (done_) throw std::runtime_error("apply_correction() after done");
    const PoseError err_before = true_error();
    const plant::TaskVec displacement{dx_mm, dy_mm, 0.0,
                                      geometry::deg_to_rad(dtheta_deg)};
    // longer settle window: the correction can span the whole error range
    auto res = plant::run_hybrid(plant_setup_, state_, force_integral_, shape_,
                                 hole_, displacement, 1.0, gate_clearance());
    state_ = res.state;
    force_integral_ = res.force_integral;
    seg_fresh_ = false;
    const PoseError err = true_error();
    const double planar = std::hypot(err.dx, err.dy);
    Outcome outcome = Outcome::active;
    double reward = -1.0 / config_.k_max;
    if (planar > config_.safe_radius_mm) {
        outcome = Outcome::out_of_safe_region;
    } else if (gate_open() && descend()) {
        outcome = Outcome::success;
        reward = 1.0;
    }
    StepResult result = finish_step({0, 0, 0}, reward, outcome);
    record_.steps.back().error_before = err_before;
    return result;
}

}  // namespace peghole::env
