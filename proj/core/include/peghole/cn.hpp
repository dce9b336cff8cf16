#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "peghole/env.hpp"
#include "peghole/nets.hpp"
#include "peghole/params.hpp"
#include "peghole/vsn.hpp"

namespace peghole::cn {

enum class Variant { single_frame, multi_frame, image_input };
std::string variant_name(Variant v);

inline constexpr int kFrameWindow = 5;     // recurrent input window
inline constexpr int kSensorDims = 452;    // flattened heatmap 441 + rotation 11
inline constexpr int kFrameDims = 461;     // sensor dims + one-hot prev action
inline constexpr int kActionOneHot = 9;    // 3 axes x 3 choices

// Policy input: one of a flat sensor vector, a window of frames, or a raw
// label image (image-input baseline).
struct PolicyInput {
    std::vector<double> flat;                 // single_frame: 452 values
    std::vector<std::vector<double>> window;  // multi_frame: kFrameWindow x 461
    raster::SegImage image;                   // image_input
};

std::vector<double> sensor_features(const vsn::SensorReading& reading);
std::vector<double> action_one_hot(const env::Action& a);

// Rolling per-episode buffer feeding the multi-frame controller. The window
// is re-encoded from scratch each step (zero-padded before t = n), so the
// encoding is a pure function of the recent frames.
class HistoryBuffer {
public:
    void reset();
    void push(const vsn::SensorReading& reading, const env::Action& prev_action);
    PolicyInput window() const;

private:
    std::deque<std::vector<double>> frames_;
};

struct PolicyOutput {
    double logits[3][3];   // per-axis categorical scores
    double value = 0.0;
};

// Advantage actor-critic over sensor features: dense trunk, three ternary
// action heads and a scalar value head. The multi-frame variant inserts a
// recurrent cell before the heads; the image-input variant replaces the
// trunk input with a strided conv encoder.
class ActorCritic {
public:
    struct Config {
        Variant variant = Variant::single_frame;
        int image_size = 63;
    };

    ActorCritic(neuro::ParamStore& store, const Config& config);

    const Config& config() const { return config_; }
    PolicyOutput forward(const PolicyInput& input);
    // Backward for the last forward() call. Head gradients are the
    // d(loss)/d(logit) per axis and d(loss)/d(value).
    void backward(const double glogits[3][3], double gvalue);

private:
    neuro::Tensor encode(const PolicyInput& input, int frame_slot);
    Config config_;
    std::unique_ptr<neuro::ImageEncoderNet> image_encoder_;
    struct Trunk {
        neuro::Dense fc1;
        neuro::Relu r1;
        neuro::Dense fc2;
        neuro::Relu r2;
        Trunk(neuro::ParamStore& store, const std::string& prefix, int in);
    };
    std::vector<std::unique_ptr<Trunk>> trunks_;  // one per window slot
    std::unique_ptr<neuro::LstmCell> lstm_;
    neuro::Dense head_x_, head_y_, head_yaw_, head_value_;
    neuro::Tensor feat_, gfeat_;
    int frames_used_ = 0;
};

env::Action act(ActorCritic& model, const PolicyInput& input, bool greedy,
                Rng& rng);

double action_log_prob(const PolicyOutput& out, const env::Action& a);

// ---------------------------------------------------------------------------
// training

struct TrainedPolicy {
    std::shared_ptr<neuro::ParamStore> store;
    ActorCritic::Config config;
};

struct A2cConfig {
    double gamma = 0.995;
    double lr = 3e-4;
    double value_coef = 0.5;
    double entropy_coef = 0.01;
    double grad_clip = 5.0;
    int collectors = 8;
    int segment_len = 32;  // collectors x segment_len = steps per update
};

struct Transition {
    PolicyInput input;
    env::Action action;
    double reward = 0.0;
    bool done = false;
};

struct Segment {
    std::vector<Transition> steps;
    double bootstrap_value = 0.0;  // value of the state after the last step
};

struct LossReport {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
};

// One synchronous update over a batch of segments; gradients flow through the
// shared store bound to `model`.
LossReport a2c_update(ActorCritic& model, neuro::ParamStore& store,
                      const std::vector<Segment>& batch, const A2cConfig& config,
                      neuro::Adam& adam);

// Returns per-step discounted returns-to-go of a segment (bootstrapped at a
// truncation, reset at terminals).
std::vector<double> returns_to_go(const Segment& segment, double gamma);

enum class SensorKind { oracle, trained_vsn, seg_only };

struct TrainPolicyConfig {
    Variant variant = Variant::single_frame;
    SensorKind sensor = SensorKind::oracle;
    std::vector<std::string> shapes;  // training shapes (round-robin)
    env::EpisodeConfig episode;       // template; shape/seed overridden
    A2cConfig a2c;
    long budget_steps = 200000;
    int eval_every_steps = 5000;
    int eval_episodes = 24;
    double stop_success = 0.97;  // early stop once reached twice in a row
    uint64_t seed = 1;
    // weights of the trained virtual sensor (required for trained_vsn)
    neuro::ParamStore* vsn_store = nullptr;
    vsn::VsnConfig vsn_config;
};

struct TrainCurvePoint {
    long env_steps = 0;
    double eval_success = 0.0;
    double mean_steps = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
};

struct TrainPolicyResult {
    TrainedPolicy policy;  // best-by-evaluation weights
    std::vector<TrainCurvePoint> curve;
    double best_success = 0.0;
};

TrainPolicyResult train_policy(const TrainPolicyConfig& config);

// Runs one greedy episode with the given policy; returns the record.
env::EpisodeRecord run_policy_episode(ActorCritic& model, env::Env& environment,
                                      uint64_t episode_seed);

std::unique_ptr<env::Sensor> make_sensor(SensorKind kind,
                                         neuro::ParamStore* vsn_store,
                                         const vsn::VsnConfig& vsn_config);

// Weights plus a JSON manifest of the architecture hyperparameters.
void save_policy(const TrainedPolicy& policy, const std::string& path_prefix);
TrainedPolicy load_policy(const std::string& path_prefix);

}  // namespace peghole::cn
