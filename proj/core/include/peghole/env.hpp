#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "peghole/geometry.hpp"
#include "peghole/plant.hpp"
#include "peghole/raster.hpp"
#include "peghole/rng.hpp"
#include "peghole/vsn.hpp"

namespace peghole::env {

struct EpisodeConfig {
    std::string shape = "square";
    raster::CameraConfig camera = raster::CameraConfig::eye_to_hand;
    // feasibility-gate tolerance; <= 0 means the shape's own clearance.
    // Rendering always uses the shape clearance so trajectories are
    // tolerance-invariant (defines a pathwise-monotone sweep).
    double tolerance_mm = 1.0;
    double init_pos_range_mm = 10.0;
    double init_rot_range_deg = 10.0;
    int k_max = 100;
    double safe_radius_mm = 50.0;
    double step_xy_mm = 1.0;
    double step_yaw_deg = 1.0;
    double gamma = 0.995;
    double settle_s = 0.2;
    double success_depth_mm = 3.0;
    uint64_t seed = 0;

    void validate() const;
};

enum class Outcome { active, success, timeout, out_of_safe_region };
std::string outcome_name(Outcome o);

struct Action {
    int ax = 0, ay = 0, ayaw = 0;  // each in {-1, 0, +1}
};

// Peg-side view of the world handed to policies. The oracle sensor fills
// `reading` from the true error without rendering; image-input policies ask
// for `seg` explicitly.
struct Observation {
    vsn::SensorReading reading;
    const raster::SegImage* seg = nullptr;
};

struct StepRecord {
    Action action;
    double reward = 0.0;
    geometry::PoseError error_before;
    std::optional<vsn::SensorReading> reading;
};

struct EpisodeRecord {
    uint64_t seed = 0;
    std::string shape;
    geometry::PoseError initial_error;
    std::vector<StepRecord> steps;
    Outcome outcome = Outcome::active;
    int steps_used = 0;
    double undiscounted_return = 0.0;
};

double discounted_return(const EpisodeRecord& record, double gamma);
std::string episode_to_jsonl(const EpisodeRecord& record, double gamma);

// Sensor abstraction: exact oracle or the trained virtual sensor.
class Sensor {
public:
    virtual ~Sensor() = default;
    virtual bool needs_image() const = 0;
    virtual vsn::SensorReading read(const geometry::PoseError& clamped_err,
                                    const raster::SegImage* seg) = 0;
};

class OracleSensor : public Sensor {
public:
    explicit OracleSensor(vsn::HeatmapSpec spec = {}, double beta = 2.0)
        : spec_(spec), beta_(beta) {}
    bool needs_image() const override { return false; }
    vsn::SensorReading read(const geometry::PoseError& clamped_err,
                            const raster::SegImage*) override {
        return vsn::oracle_reading(clamped_err, spec_, beta_);
    }

private:
    vsn::HeatmapSpec spec_;
    double beta_;
};

class VsnSensorAdapter : public Sensor {
public:
    VsnSensorAdapter(neuro::ParamStore& store, const vsn::VsnConfig& config)
        : sensor_(store, config) {}
    bool needs_image() const override { return true; }
    vsn::SensorReading read(const geometry::PoseError&,
                            const raster::SegImage* seg) override {
        return sensor_.read(*seg);
    }

private:
    vsn::VsnSensor sensor_;
};

// For image-input policies: renders the observation but returns an empty
// reading (the policy consumes the label image directly).
class SegOnlySensor : public Sensor {
public:
    bool needs_image() const override { return true; }
    vsn::SensorReading read(const geometry::PoseError&,
                            const raster::SegImage*) override {
        return vsn::SensorReading{};
    }
};

struct StepResult {
    Observation observation;
    double reward = 0.0;
    bool done = false;
    Outcome outcome = Outcome::active;
};

// Episodic insertion MDP. One instance per worker; never shared.
class Env {
public:
    Env(const EpisodeConfig& config, Sensor& sensor, bool record_readings = false);

    Observation reset();
    Observation reset(uint64_t seed);
    StepResult step(const Action& action);

    // One-shot interface used by baselines: a single task-space correction
    // with a longer settle window, then the descent attempt.
    StepResult apply_correction(double dx_mm, double dy_mm, double dtheta_deg);

    bool done() const { return done_; }
    Outcome outcome() const { return outcome_; }
    int steps_used() const { return steps_; }
    geometry::PoseError true_error() const;
    const raster::SegImage& current_seg();
    const EpisodeConfig& config() const { return config_; }
    const EpisodeRecord& record() const { return record_; }
    const geometry::ShapeSpec& shape() const { return shape_; }
    double gate_clearance() const;

private:
    Observation observe();
    bool gate_open() const;
    StepResult finish_step(const Action& action, double reward, Outcome outcome);
    bool descend();

    EpisodeConfig config_;
    geometry::ShapeSpec shape_;
    raster::Camera cam_;
    Sensor& sensor_;
    bool record_readings_;
    plant::HybridSetup plant_setup_;
    plant::PlantState state_;
    double force_integral_ = 0.0;
    geometry::Pose hole_{};
    Rng rng_;
    int steps_ = 0;
    bool done_ = true;
    Outcome outcome_ = Outcome::active;
    EpisodeRecord record_;
    raster::SegImage seg_;
    bool seg_fresh_ = false;
};

}  // namespace peghole::env
