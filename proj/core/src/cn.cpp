#include "peghole/cn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "peghole/thread_pool.hpp"

namespace peghole::cn {

using neuro::Tensor;

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::single_frame: return "single_frame";
        case Variant::multi_frame: return "multi_frame";
        case Variant::image_input: return "image_input";
    }
    return "?";
}

std::vector<double> sensor_features(const vsn::SensorReading& reading) {
    std::vector<double> out = vsn::flatten(reading.heatmap);
    out.insert(out.end(), reading.rotation.values.begin(),
               reading.rotation.values.end());
    if (out.size() != kSensorDims)
        out.resize(kSensorDims, 0.0);  // empty readings from SegOnlySensor
    return out;
}

std::vector<double> action_one_hot(const env::Action& a) {
    std::vector<double> out(kActionOneHot, 0.0);
    out[size_t(a.ax + 1)] = 1.0;
    out[3 + size_t(a.ay + 1)] = 1.0;
    out[6 + size_t(a.ayaw + 1)] = 1.0;
    return out;
}

void HistoryBuffer::reset() { frames_.clear(); }

void HistoryBuffer::push(const vsn::SensorReading& reading,
                         const env::Action& prev_action) {
    std::vector<double> frame = sensor_features(reading);
    const std::vector<double> act = action_one_hot(prev_action);
    frame.insert(frame.end(), act.begin(), act.end());
    frames_.push_back(std::move(frame));
    while (frames_.size() > kFrameWindow) frames_.pop_front();
}

PolicyInput HistoryBuffer::window() const {
    PolicyInput input;
    input.window.assign(kFrameWindow, std::vector<double>(kFrameDims, 0.0));
    const size_t have = frames_.size();
    for (size_t k = 0; k < have; ++k)
        input.window[kFrameWindow - have + k] = frames_[k];
    return input;
}

// ---------------------------------------------------------------------------
// model

ActorCritic::Trunk::Trunk(neuro::ParamStore& store, const std::string& prefix,
                          int in)
    : fc1(store, prefix + ".fc1", in, 128), fc2(store, prefix + ".fc2", 128, 64) {}

ActorCritic::ActorCritic(neuro::ParamStore& store, const Config& config)
    : config_(config),
      head_x_(store, "policy.head_x",
              config.variant == Variant::multi_frame ? 32 : 64, 3),
      head_y_(store, "policy.head_y",
              config.variant == Variant::multi_frame ? 32 : 64, 3),
      head_yaw_(store, "policy.head_yaw",
                config.variant == Variant::multi_frame ? 32 : 64, 3),
      head_value_(store, "policy.value",
                  config.variant == Variant::multi_frame ? 32 : 64, 1) {
    switch (config.variant) {
        case Variant::single_frame:
            trunks_.push_back(std::make_unique<Trunk>(store, "policy.trunk", kSensorDims));
            break;
        case Variant::multi_frame:
            // one instance per window slot; parameters are shared by name
            for (int i = 0; i < kFrameWindow; ++i)
                trunks_.push_back(
                    std::make_unique<Trunk>(store, "policy.trunk", kFrameDims));
            lstm_ = std::make_unique<neuro::LstmCell>(store, "policy.lstm", 64, 32);
            break;
        case Variant::image_input:
            image_encoder_ = std::make_unique<neuro::ImageEncoderNet>(
                store, "policy.encoder", config.image_size, config.image_size);
            trunks_.push_back(std::make_unique<Trunk>(store, "policy.trunk", 128));
            break;
    }
}

Tensor ActorCritic::encode(const PolicyInput& input, int frame_slot) {
    Tensor x;
    if (config_.variant == Variant::multi_frame) {
        x.dims = {kFrameDims};
        x.data = input.window[size_t(frame_slot)];
    } else if (config_.variant == Variant::single_frame) {
        x.dims = {static_cast<int>(input.flat.size())};
        x.data = input.flat;
    }
    return x;
}

PolicyOutput ActorCritic::forward(const PolicyInput& input) {
    const Tensor* feature = nullptr;
    if (config_.variant == Variant::single_frame) {
        Tensor x = encode(input, 0);
        Trunk& t = *trunks_[0];
        feature = &t.r2.forward(t.fc2.forward(t.r1.forward(t.fc1.forward(x))));
    } else if (config_.variant == Variant::multi_frame) {
        lstm_->reset();
        auto state = lstm_->initial_state();
        for (int k = 0; k < kFrameWindow; ++k) {
            Tensor x = encode(input, k);
            Trunk& t = *trunks_[size_t(k)];
            const Tensor& f =
                t.r2.forward(t.fc2.forward(t.r1.forward(t.fc1.forward(x))));
            state = lstm_->step(f, state);
        }
        feat_ = state.h;
        feature = &feat_;
    } else {
        Tensor x({3, config_.image_size, config_.image_size});
        const auto& img = input.image;
        for (int v = 0; v < img.height; ++v)
            for (int u = 0; u < img.width; ++u)
                x.data[size_t(img.at(u, v)) * img.height * img.width +
                       size_t(v) * img.width + u] = 1.0;
        const Tensor& enc = image_encoder_->forward(x);
        Trunk& t = *trunks_[0];
        feature = &t.r2.forward(t.fc2.forward(t.r1.forward(t.fc1.forward(enc))));
    }
    PolicyOutput out;
    const Tensor& fx = head_x_.forward(*feature);
    for (int k = 0; k < 3; ++k) out.logits[0][k] = fx.data[k];
    const Tensor& fy = head_y_.forward(*feature);
    for (int k = 0; k < 3; ++k) out.logits[1][k] = fy.data[k];
    const Tensor& fyaw = head_yaw_.forward(*feature);
    for (int k = 0; k < 3; ++k) out.logits[2][k] = fyaw.data[k];
    out.value = head_value_.forward(*feature).data[0];
    return out;
}

void ActorCritic::backward(const double glogits[3][3], double gvalue) {
    Tensor g({3});
    const int feat_dim = config_.variant == Variant::multi_frame ? 32 : 64;
    Tensor gfeat({feat_dim});
    auto add = [&](const Tensor& gx) {
        for (int i = 0; i < feat_dim; ++i) gfeat.data[i] += gx.data[i];
    };
    g.data = {glogits[0][0], glogits[0][1], glogits[0][2]};
    add(head_x_.backward(g));
    g.data = {glogits[1][0], glogits[1][1], glogits[1][2]};
    add(head_y_.backward(g));
    g.data = {glogits[2][0], glogits[2][1], glogits[2][2]};
    add(head_yaw_.backward(g));
    Tensor gv({1});
    gv.data = {gvalue};
    add(head_value_.backward(gv));

    if (config_.variant == Variant::multi_frame) {
        std::vector<Tensor> gx_steps;
        lstm_->backward(gfeat, gx_steps);
        for (int k = kFrameWindow - 1; k >= 0; --k) {
            Trunk& t = *trunks_[size_t(k)];
            t.fc1.backward(t.r1.backward(t.fc2.backward(t.r2.backward(gx_steps[size_t(k)]))));
        }
    } else {
        Trunk& t = *trunks_[0];
        const Tensor& gin =
            t.fc1.backward(t.r1.backward(t.fc2.backward(t.r2.backward(gfeat))));
        if (config_.variant == Variant::image_input) image_encoder_->backward(gin);
    }
}

namespace {

void axis_probs(const double logits[3], double probs[3]) {
    const double mx = std::max(logits[0], std::max(logits[1], logits[2]));
    double sum = 0.0;
    for (int k = 0; k < 3; ++k) {
        probs[k] = std::exp(logits[k] - mx);
        sum += probs[k];
    }
    for (int k = 0; k < 3; ++k) probs[k] /= sum;
}

int sample_axis(const double probs[3], Rng& rng) {
    const double u = rng.uniform();
    if (u < probs[0]) return -1;
    if (u < probs[0] + probs[1]) return 0;
    return 1;
}

int greedy_axis(const double logits[3]) {
    int best = 0;
    for (int k = 1; k < 3; ++k)
        if (logits[k] > logits[best]) best = k;
    return best - 1;
}

}  // namespace

env::Action act(ActorCritic& model, const PolicyInput& input, bool greedy,
                Rng& rng) {
    const PolicyOutput out = model.forward(input);
    env::Action a;
    if (greedy) {
        a.ax = greedy_axis(out.logits[0]);
        a.ay = greedy_axis(out.logits[1]);
        a.ayaw = greedy_axis(out.logits[2]);
    } else {
        double p[3];
        axis_probs(out.logits[0], p);
        a.ax = sample_axis(p, rng);
        axis_probs(out.logits[1], p);
        a.ay = sample_axis(p, rng);
        axis_probs(out.logits[2], p);
        a.ayaw = sample_axis(p, rng);
    }
    return a;
}

double action_log_prob(const PolicyOutput& out, const env::Action& a) {
    double lp = 0.0;
    const int picks[3] = {a.ax + 1, a.ay + 1, a.ayaw + 1};
    for (int axis = 0; axis < 3; ++axis) {
        double p[3];
        axis_probs(out.logits[axis], p);
        lp += std::log(std::max(p[picks[axis]], 1e-12));
    }
    return lp;
}

// ---------------------------------------------------------------------------
// update

std::vector<double> returns_to_go(const Segment& segment, double gamma) {
    std::vector<double> g(segment.steps.size(), 0.0);
    double acc = segment.bootstrap_value;
    for (int t = static_cast<int>(segment.steps.size()) - 1; t >= 0; --t) {
        const Transition& tr = segment.steps[size_t(t)];
        acc = tr.done ? tr.reward : tr.reward + gamma * acc;
        g[size_t(t)] = acc;
    }
    return g;
}

LossReport a2c_update(ActorCritic& model, neuro::ParamStore& store,
                      const std::vector<Segment>& batch, const A2cConfig& config,
                      neuro::Adam& adam) {
    LossReport report;
    size_t total = 0;
    for (const Segment& s : batch) total += s.steps.size();
    if (total == 0) return report;
    const double inv_n = 1.0 / static_cast<double>(total);

    for (const Segment& segment : batch) {
        const std::vector<double> g = returns_to_go(segment, config.gamma);
        for (size_t t = 0; t < segment.steps.size(); ++t) {
            const Transition& tr = segment.steps[t];
            const PolicyOutput out = model.forward(tr.input);
            if (!std::isfinite(out.value))
                throw std::runtime_error("non-finite value estimate");
            const double advantage = g[t] - out.value;
            if (!std::isfinite(advantage))
                throw std::runtime_error("non-finite advantage");

            double glogits[3][3];
            const int picks[3] = {tr.action.ax + 1, tr.action.ay + 1,
                                  tr.action.ayaw + 1};
            double entropy = 0.0, logp = 0.0;
            for (int axis = 0; axis < 3; ++axis) {
                double p[3];
                axis_probs(out.logits[axis], p);
                double h = 0.0;
                for (int k = 0; k < 3; ++k)
                    h -= p[k] * std::log(std::max(p[k], 1e-12));
                entropy += h;
                logp += std::log(std::max(p[picks[axis]], 1e-12));
                for (int k = 0; k < 3; ++k) {
                    const double onehot = k == picks[axis] ? 1.0 : 0.0;
                    const double gpolicy = advantage * (p[k] - onehot);
                    const double gentropy =
                        config.entropy_coef * p[k] *
                        (std::log(std::max(p[k], 1e-12)) + h);
                    glogits[axis][k] = inv_n * (gpolicy + gentropy);
                }
            }
            const double gvalue =
                inv_n * config.value_coef * 2.0 * (out.value - g[t]);
            model.backward(glogits, gvalue);

            report.policy_loss += inv_n * (-logp * advantage);
            report.value_loss += inv_n * (g[t] - out.value) * (g[t] - out.value);
            report.entropy += inv_n * entropy;
        }
    }

    // global-norm gradient clip
    double norm2 = 0.0;
    for (const auto& p : store.params())
        for (double v : p->grad.data) norm2 += v * v;
    const double norm = std::sqrt(norm2);
    if (norm > config.grad_clip) {
        const double scale = config.grad_clip / norm;
        for (auto& p : store.params())
            for (double& v : p->grad.data) v *= scale;
    }
    adam.step(store);
    return report;
}

// ---------------------------------------------------------------------------
// training loop

std::unique_ptr<env::Sensor> make_sensor(SensorKind kind,
                                         neuro::ParamStore* vsn_store,
                                         const vsn::VsnConfig& vsn_config) {
    if (kind == SensorKind::oracle)
        return std::make_unique<env::OracleSensor>(vsn_config.heatmap,
                                                   vsn_config.beta_deg);
    if (kind == SensorKind::seg_only)
        return std::make_unique<env::SegOnlySensor>();
    if (!vsn_store)
        throw std::invalid_argument("trained_vsn sensor requires weights");
    return std::make_unique<env::VsnSensorAdapter>(*vsn_store, vsn_config);
}

namespace {

PolicyInput make_input(Variant variant, const env::Observation& obs,
                       const HistoryBuffer* history) {
    PolicyInput input;
    switch (variant) {
        case Variant::single_frame:
            input.flat = sensor_features(obs.reading);
            break;
        case Variant::multi_frame:
            input = history->window();
            break;
        case Variant::image_input:
            input.image = *obs.seg;
            break;
    }
    return input;
}

// Per-collector episode stream: owns an env, a sensor, a policy view and a
// history buffer; produces fixed-length segments.
struct Collector {
    std::unique_ptr<env::Sensor> sensor;
    std::unique_ptr<env::Env> environment;
    std::unique_ptr<ActorCritic> view;
    HistoryBuffer history;
    env::Observation obs;
    env::Action prev_action;
    Rng rng{0};
    long episodes = 0;
    int id = 0;

    void start_episode(const TrainPolicyConfig& config) {
        const auto& shapes = config.shapes;
        const std::string shape =
            shapes[(size_t(id) + size_t(episodes)) % shapes.size()];
        env::EpisodeConfig ec = config.episode;
        ec.shape = shape;
        const uint64_t ep_seed =
            sub_seed(config.seed, "collector", uint64_t(id) * 1000003 + uint64_t(episodes));
        if (environment == nullptr || environment->config().shape != shape) {
            environment = std::make_unique<env::Env>(ec, *sensor);
        }
        obs = environment->reset(ep_seed);
        history.reset();
        prev_action = env::Action{};
        history.push(obs.reading, prev_action);
        ++episodes;
    }

    Segment collect(const TrainPolicyConfig& config) {
        Segment segment;
        for (int k = 0; k < config.a2c.segment_len; ++k) {
            PolicyInput input =
                make_input(config.variant, obs,
                           config.variant == Variant::multi_frame ? &history : nullptr);
            const env::Action action = act(*view, input, false, rng);
            const env::StepResult res = environment->step(action);
            Transition tr;
            tr.input = std::move(input);
            tr.action = action;
            tr.reward = res.reward;
            tr.done = res.done;
            segment.steps.push_back(std::move(tr));
            if (res.done) {
                start_episode(config);
            } else {
                obs = res.observation;
                prev_action = action;
                history.push(obs.reading, prev_action);
            }
        }
        if (!segment.steps.back().done) {
            PolicyInput next =
                make_input(config.variant, obs,
                           config.variant == Variant::multi_frame ? &history : nullptr);
            segment.bootstrap_value = view->forward(next).value;
        }
        return segment;
    }
};

}  // namespace

env::EpisodeRecord run_policy_episode(ActorCritic& model, env::Env& environment,
                                      uint64_t episode_seed) {
    env::Observation obs = environment.reset(episode_seed);
    HistoryBuffer history;
    history.push(obs.reading, env::Action{});
    Rng rng(episode_seed ^ 0x5eedf00d);
    while (!environment.done()) {
        PolicyInput input = make_input(model.config().variant, obs, &history);
        const env::Action action = act(model, input, true, rng);
        const env::StepResult res = environment.step(action);
        if (res.done) break;
        obs = res.observation;
        history.push(obs.reading, action);
    }
    return environment.record();
}

TrainPolicyResult train_policy(const TrainPolicyConfig& config) {
    if (config.shapes.empty())
        throw std::invalid_argument("train_policy requires at least one shape");
    TrainPolicyResult result;
    auto store = std::make_shared<neuro::ParamStore>(config.seed);
    ActorCritic::Config mc;
    mc.variant = config.variant;
    ActorCritic learner(*store, mc);
    neuro::Adam adam(config.a2c.lr);

    std::vector<std::unique_ptr<Collector>> collectors;
    for (int c = 0; c < config.a2c.collectors; ++c) {
        auto col = std::make_unique<Collector>();
        col->id = c;
        col->rng = Rng(sub_seed(config.seed, "collector_rng", uint64_t(c)));
        col->sensor = make_sensor(config.sensor, config.vsn_store, config.vsn_config);
        col->view = std::make_unique<ActorCritic>(*store, mc);
        col->start_episode(config);
        collectors.push_back(std::move(col));
    }
    auto eval_sensor = make_sensor(config.sensor, config.vsn_store, config.vsn_config);
    ActorCritic eval_view(*store, mc);

    std::vector<std::vector<double>> best_values;
    auto snapshot = [&] {
        best_values.clear();
        for (const auto& p : store->params()) best_values.push_back(p->value.data);
    };
    snapshot();

    auto evaluate = [&](long round) {
        int successes = 0;
        double steps_sum = 0.0;
        int success_count = 0;
        for (int e = 0; e < config.eval_episodes; ++e) {
            env::EpisodeConfig ec = config.episode;
            ec.shape = config.shapes[size_t(e) % config.shapes.size()];
            env::Env environment(ec, *eval_sensor);
            const uint64_t seed =
                sub_seed(config.seed, "eval", uint64_t(round) * 100000 + uint64_t(e));
            const env::EpisodeRecord rec =
                run_policy_episode(eval_view, environment, seed);
            if (rec.outcome == env::Outcome::success) {
                ++successes;
                steps_sum += rec.steps_used;
                ++success_count;
            }
        }
        const double rate =
            static_cast<double>(successes) / config.eval_episodes;
        const double mean_steps =
            success_count > 0 ? steps_sum / success_count : 0.0;
        return std::make_pair(rate, mean_steps);
    };

    long steps_done = 0;
    long next_eval = config.eval_every_steps;
    int stop_hits = 0;
    std::vector<Segment> batch(collectors.size());
    LossReport last_losses;
    long eval_round = 0;
    while (steps_done < config.budget_steps) {
        parallel_for(collectors.size(), [&](size_t c) {
            batch[c] = collectors[c]->collect(config);
        });
        steps_done +=
            static_cast<long>(collectors.size()) * config.a2c.segment_len;
        last_losses = a2c_update(learner, *store, batch, config.a2c, adam);

        if (steps_done >= next_eval) {
            next_eval += config.eval_every_steps;
            const auto [rate, mean_steps] = evaluate(eval_round++);
            TrainCurvePoint pt;
            pt.env_steps = steps_done;
            pt.eval_success = rate;
            pt.mean_steps = mean_steps;
            pt.policy_loss = last_losses.policy_loss;
            pt.value_loss = last_losses.value_loss;
            pt.entropy = last_losses.entropy;
            result.curve.push_back(pt);
            if (rate > result.best_success) {
                result.best_success = rate;
                snapshot();
            }
            stop_hits = rate >= config.stop_success ? stop_hits + 1 : 0;
            if (stop_hits >= 2) break;
        }
    }

    auto best_store = std::make_shared<neuro::ParamStore>(config.seed);
    ActorCritic materialize(*best_store, mc);
    for (size_t k = 0; k < best_store->params().size(); ++k)
        best_store->params()[k]->value.data = best_values[k];
    result.policy.store = best_store;
    result.policy.config = mc;
    return result;
}

// ---------------------------------------------------------------------------
// persistence

void save_policy(const TrainedPolicy& policy, const std::string& path_prefix) {
    policy.store->save(path_prefix + ".phw");
    nlohmann::json j;
    j["variant"] = variant_name(policy.config.variant);
    j["image_size"] = policy.config.image_size;
    std::ofstream out(path_prefix + ".json");
    out << j.dump(2) << "\n";
}

TrainedPolicy load_policy(const std::string& path_prefix) {
    std::ifstream in(path_prefix + ".json");
    if (!in) throw std::runtime_error("missing manifest " + path_prefix + ".json");
    nlohmann::json j = nlohmann::json::parse(in);
    TrainedPolicy policy;
    const std::string v = j.at("variant").get<std::string>();
    if (v == "single_frame") policy.config.variant = Variant::single_frame;
    else if (v == "multi_frame") policy.config.variant = Variant::multi_frame;
    else if (v == "image_input") policy.config.variant = Variant::image_input;
    else throw std::runtime_error("unknown policy variant " + v);
    policy.config.image_size = j.at("image_size").get<int>();
    policy.store = std::make_shared<neuro::ParamStore>(0);
    policy.store->load(path_prefix + ".phw");
    return policy;
}

}  // namespace peghole::cn
