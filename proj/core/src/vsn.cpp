#include "peghole/vsn.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "peghole/csv.hpp"
#include "peghole/replicate.hpp"
#include "peghole/rng.hpp"

namespace peghole::vsn {

using geometry::PoseError;
using neuro::Tensor;

void HeatmapSpec::validate() const {
    if (size % 2 == 0) throw std::invalid_argument("heatmap size must be odd");
    if (!(cell_mm > 0.0)) throw std::invalid_argument("cell_mm must be positive");
    if (range_mm() < 10.0)
        throw std::invalid_argument("heatmap must cover the +-10 mm error range");
}

Heatmap position_target(const PoseError& err, const HeatmapSpec& spec) {
    spec.validate();
    const int c = spec.center();
    const int i = c + static_cast<int>(std::round(err.dx / spec.cell_mm));
    const int j = c + static_cast<int>(std::round(err.dy / spec.cell_mm));
    if (i < 0 || i >= spec.size || j < 0 || j >= spec.size)
        throw std::out_of_range("displacement outside the heatmap range");
    Heatmap hm(spec);
    hm.at(i, j) = 1.0;
    return hm;
}

namespace {
constexpr double kProbFloor = 1e-7;
constexpr double kProbCeil = 1.0 - 1e-7;
}  // namespace

double position_loss(const Heatmap& pred, const Heatmap& target) {
    if (pred.spec.size != target.spec.size)
        throw std::invalid_argument("heatmap size mismatch");
    double loss = 0.0;
    for (size_t k = 0; k < pred.values.size(); ++k) {
        const double p = std::clamp(pred.values[k], kProbFloor, kProbCeil);
        const double t = target.values[k];
        loss -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    }
    return loss;
}

std::pair<double, double> heatmap_argmax(const Heatmap& hm) {
    size_t best = 0;
    for (size_t k = 1; k < hm.values.size(); ++k)
        if (hm.values[k] > hm.values[best]) best = k;
    const int i = static_cast<int>(best) / hm.spec.size;
    const int j = static_cast<int>(best) % hm.spec.size;
    const int c = hm.spec.center();
    return {(i - c) * hm.spec.cell_mm, (j - c) * hm.spec.cell_mm};
}

std::vector<double> flatten(const Heatmap& hm) { return hm.values; }

double rotation_loss(const RotationVector& d, int positive_index) {
    if (positive_index < 0 || positive_index >= 11)
        throw std::out_of_range("positive rotation index");
    const double dp = d.values[positive_index];
    double loss = 0.0;
    for (int i = 0; i < 11; ++i) {
        if (i == positive_index) continue;
        loss += std::max(d.values[i] - dp + 1.0, 0.0);
    }
    return loss / 10.0;
}

double rotation_argmax(const RotationVector& d) {
    int best = 0;
    for (int i = 1; i < 11; ++i)
        if (d.values[i] > d.values[best]) best = i;
    return d.beta * (best - 5);
}

int positive_rotation_bin(double dtheta_deg, double beta_deg) {
    const int prev = std::fegetround();
    std::fesetround(FE_TONEAREST);
    const int bin = 5 + static_cast<int>(std::nearbyint(dtheta_deg / beta_deg));
    std::fesetround(prev);
    if (bin < 0 || bin >= 11)
        throw std::out_of_range("rotation outside the representable range");
    return bin;
}

SensorReading oracle_reading(const PoseError& err, const HeatmapSpec& spec,
                             double beta_deg) {
    SensorReading r;
    r.heatmap = position_target(err, spec);
    r.rotation.beta = beta_deg;
    std::fill(r.rotation.values.begin(), r.rotation.values.end(), 0.01);
    r.rotation.values[positive_rotation_bin(err.dtheta, beta_deg)] = 1.0;
    return r;
}

// ---------------------------------------------------------------------------
// model

namespace {

void seg_to_onehot(const raster::SegImage& seg, Tensor& out) {
    const int h = seg.height, w = seg.width;
    out.resize({3, h, w});
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u)
            out.data[size_t(seg.at(u, v)) * h * w + size_t(v) * w + u] = 1.0;
}

void seg_to_mask(const raster::SegImage& seg, Tensor& out) {
    const int h = seg.height, w = seg.width;
    out.resize({1, h, w});
    for (size_t k = 0; k < seg.labels.size(); ++k)
        out.data[k] = seg.labels[k] != raster::kBackground ? 1.0 : 0.0;
}

double feature_distance(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (size_t k = 0; k < a.size(); ++k) {
        const double d = a.data[k] - b.data[k];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

VsnModel::VsnModel(neuro::ParamStore& store, const VsnConfig& config)
    : config_(config), position_net_(store, "position", 3, 1) {
    config_.heatmap.validate();
    for (int i = 0; i < 12; ++i)
        branches_.push_back(std::make_unique<neuro::MaskEncoderNet>(store, "rotation"));
}

Heatmap VsnModel::position_forward(const raster::SegImage& seg) {
    seg_to_onehot(seg, onehot_);
    const Tensor& logits = position_net_.forward(onehot_);
    const Tensor& cropped = crop_.forward(logits, config_.heatmap.size);
    neuro::sigmoid(cropped, heat_probs_);
    Heatmap hm(config_.heatmap);
    const int m = config_.heatmap.size;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) hm.at(i, j) = heat_probs_.data[size_t(j) * m + i];
    return hm;
}

RotationVector VsnModel::rotation_forward(
    const raster::SegImage& peg_only,
    const std::vector<raster::SegImage>& hole_rotations) {
    if (hole_rotations.size() != 11)
        throw std::invalid_argument("expected 11 hole rotations");
    seg_to_mask(peg_only, mask_);
    const Tensor up = branches_[0]->forward(mask_);
    RotationVector d;
    d.beta = config_.beta_deg;
    const double n = static_cast<double>(up.size());
    for (int i = 0; i < 11; ++i) {
        seg_to_mask(hole_rotations[i], mask_);
        const Tensor& uh = branches_[size_t(i) + 1]->forward(mask_);
        d.values[i] = std::exp(-feature_distance(up, uh) / n);
    }
    return d;
}

SensorReading VsnModel::read(const raster::SegImage& seg) {
    auto [peg_only, hole_only] = raster::split_channels(seg);
    SensorReading r;
    r.heatmap = position_forward(seg);
    r.rotation =
        rotation_forward(peg_only, raster::rotated_holes(hole_only, config_.beta_deg));
    return r;
}

Tensor VsnModel::branch_features(const raster::SegImage& mask) {
    seg_to_mask(mask, mask_);
    return branches_[0]->forward(mask_);
}

RotationVector VsnModel::rotation_from_features(
    const Tensor& peg_features, const std::vector<const Tensor*>& hole_features,
    double beta_deg) {
    RotationVector d;
    d.beta = beta_deg;
    const double n = static_cast<double>(peg_features.size());
    for (size_t i = 0; i < hole_features.size(); ++i)
        d.values[i] = std::exp(-feature_distance(peg_features, *hole_features[i]) / n);
    return d;
}

double VsnModel::position_loss_forward(const raster::SegImage& seg,
                                       const Heatmap& target) {
    return position_loss(position_forward(seg), target);
}

double VsnModel::position_train_sample(const raster::SegImage& seg,
                                       const Heatmap& target) {
    const Heatmap pred = position_forward(seg);
    const double loss = position_loss(pred, target);
    // d(loss)/d(logit) = p - t inside the clamp band, 0 where clamped flat
    const int m = config_.heatmap.size;
    heat_grad_.resize({1, m, m});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            const double p = pred.at(i, j);
            const double t = target.at(i, j);
            double g = 0.0;
            if (p > kProbFloor && p < kProbCeil) g = p - t;
            heat_grad_.data[size_t(j) * m + i] = g;
        }
    }
    position_net_.backward(crop_.backward(heat_grad_));
    return loss;
}

double VsnModel::rotation_loss_forward(
    const raster::SegImage& peg_only,
    const std::vector<raster::SegImage>& rotations, int positive_index) {
    return rotation_loss(rotation_forward(peg_only, rotations), positive_index);
}

double VsnModel::rotation_train_sample(
    const raster::SegImage& peg_only,
    const std::vector<raster::SegImage>& rotations, int positive_index) {
    if (rotations.size() != 11)
        throw std::invalid_argument("expected 11 hole rotations");
    // forward all branches, keeping each branch instance's activation cache
    seg_to_mask(peg_only, mask_);
    const Tensor up = branches_[0]->forward(mask_);
    const double n = static_cast<double>(up.size());
    std::vector<Tensor> uh(11);
    RotationVector d;
    d.beta = config_.beta_deg;
    for (int i = 0; i < 11; ++i) {
        seg_to_mask(rotations[i], mask_);
        uh[i] = branches_[size_t(i) + 1]->forward(mask_);
        d.values[i] = std::exp(-feature_distance(up, uh[i]) / n);
    }
    const double loss = rotation_loss(d, positive_index);

    // hinge gradient wrt the similarity scores
    std::vector<double> gd(11, 0.0);
    const double dp = d.values[positive_index];
    for (int i = 0; i < 11; ++i) {
        if (i == positive_index) continue;
        if (d.values[i] - dp + 1.0 > 0.0) {
            gd[i] += 0.1;
            gd[size_t(positive_index)] -= 0.1;
        }
    }
    // chain through d_i = exp(-dist_i / n)
    Tensor gup(up.dims);
    for (int i = 0; i < 11; ++i) {
        if (gd[i] == 0.0) continue;
        const double dist = -std::log(d.values[i]) * n;
        if (dist < 1e-12) continue;  // identical features: flat direction
        const double scale = gd[i] * (-d.values[i] / n) / dist;
        Tensor guh(up.dims);
        for (size_t k = 0; k < up.size(); ++k) {
            const double diff = up.data[k] - uh[i].data[k];
            gup.data[k] += scale * diff;
            guh.data[k] = -scale * diff;
        }
        branches_[size_t(i) + 1]->backward(guh);
    }
    branches_[0]->backward(gup);
    return loss;
}

// ---------------------------------------------------------------------------
// datasets

std::vector<VsnSample> make_vsn_dataset(
    const std::vector<geometry::ShapeSpec>& shapes, const raster::Camera& cam,
    int n, uint64_t seed, double pos_range_mm, double rot_range_deg) {
    std::vector<VsnSample> out;
    out.reserve(n);
    Rng rng(seed);
    for (int k = 0; k < n; ++k) {
        const geometry::ShapeSpec& shape = shapes[k % shapes.size()];
        PoseError err{rng.uniform(-pos_range_mm, pos_range_mm),
                      rng.uniform(-pos_range_mm, pos_range_mm),
                      rng.uniform(-rot_range_deg, rot_range_deg)};
        geometry::Pose peg{err.dx, err.dy, 0.5, err.dtheta};
        out.push_back({raster::render_seg(peg, {}, shape, cam), err, shape.name});
    }
    return out;
}

void save_vsn_dataset(const std::string& dir, const std::vector<VsnSample>& data,
                      raster::CameraConfig camera) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    CsvTable index;
    index.header = {"sample_id", "dx_mm", "dy_mm", "dtheta_deg", "shape",
                    "camera_config"};
    const std::string cam_name =
        camera == raster::CameraConfig::eye_to_hand ? "eye_to_hand" : "eye_in_hand";
    for (size_t k = 0; k < data.size(); ++k) {
        const std::string id = std::to_string(k);
        auto [peg_only, hole_only] = raster::split_channels(data[k].seg);
        raster::write_pgm(dir + "/" + id + "_peg.pgm", peg_only);
        raster::write_pgm(dir + "/" + id + "_hole.pgm", hole_only);
        index.rows.push_back({id, format_double(data[k].err.dx),
                              format_double(data[k].err.dy),
                              format_double(data[k].err.dtheta), data[k].shape,
                              cam_name});
    }
    index.save(dir + "/index.csv");
}

std::vector<VsnSample> load_vsn_dataset(const std::string& dir) {
    CsvTable index = CsvTable::load(dir + "/index.csv");
    std::vector<VsnSample> out;
    for (const auto& row : index.rows) {
        VsnSample s;
        const std::string id = row[0];
        raster::SegImage peg_only = raster::read_pgm(dir + "/" + id + "_peg.pgm");
        raster::SegImage hole_only = raster::read_pgm(dir + "/" + id + "_hole.pgm");
        s.seg = hole_only;
        for (size_t k = 0; k < s.seg.labels.size(); ++k)
            if (peg_only.labels[k] == raster::kPegLabel)
                s.seg.labels[k] = raster::kPegLabel;
        s.err = {std::stod(row[1]), std::stod(row[2]), std::stod(row[3])};
        s.shape = row[4];
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// training

VsnTrainReport train_vsn(neuro::ParamStore& store, const VsnConfig& mc,
                         const std::vector<VsnSample>& dataset,
                         const VsnTrainConfig& tc) {
    if (dataset.empty()) throw std::invalid_argument("empty training dataset");
    VsnTrainReport report;
    VsnModel master(store, mc);  // registers parameters in the master store
    neuro::Replicated<VsnModel, VsnConfig> replicas(
        store, mc, std::min(max_threads(), tc.batch));
    neuro::Adam adam(tc.lr);
    Rng rng(tc.seed);

    if (tc.train_position) {
        std::vector<Heatmap> targets(dataset.size());
        for (size_t k = 0; k < dataset.size(); ++k)
            targets[k] = position_target(dataset[k].err, mc.heatmap);
        const int steps = tc.position_samples / tc.batch;
        std::vector<size_t> picks(tc.batch);
        std::vector<double> losses(tc.batch);
        for (int s = 0; s < steps; ++s) {
            for (int b = 0; b < tc.batch; ++b)
                picks[b] = rng.uniform_int(dataset.size());
            replicas.run_batch(tc.batch, [&](int w, size_t b0, size_t b1) {
                for (size_t b = b0; b < b1; ++b)
                    losses[b] = replicas.model(w).position_train_sample(
                        dataset[picks[b]].seg, targets[picks[b]]);
            });
            adam.step(store);
            double mean = 0.0;
            for (int b = 0; b < tc.batch; ++b) mean += losses[b];
            report.position_losses.push_back(mean / tc.batch);
        }
    }

    if (tc.train_rotation) {
        const int steps = tc.rotation_samples / tc.batch;
        std::vector<size_t> picks(tc.batch);
        std::vector<double> losses(tc.batch);
        // the rotation bank of a sample is deterministic; build lazily once
        std::vector<
            std::unique_ptr<std::pair<raster::SegImage, std::vector<raster::SegImage>>>>
            banks(dataset.size());
        auto bank = [&](size_t k) -> auto& {
            if (!banks[k]) {
                auto [peg_only, hole_only] = raster::split_channels(dataset[k].seg);
                banks[k] = std::make_unique<
                    std::pair<raster::SegImage, std::vector<raster::SegImage>>>(
                    std::move(peg_only),
                    raster::rotated_holes(hole_only, mc.beta_deg));
            }
            return *banks[k];
        };
        for (int s = 0; s < steps; ++s) {
            for (int b = 0; b < tc.batch; ++b) {
                picks[b] = rng.uniform_int(dataset.size());
                bank(picks[b]);  // materialize outside the parallel region
            }
            replicas.run_batch(tc.batch, [&](int w, size_t b0, size_t b1) {
                for (size_t b = b0; b < b1; ++b) {
                    const auto& [peg_only, rotations] = bank(picks[b]);
                    const int pos = positive_rotation_bin(
                        dataset[picks[b]].err.dtheta, mc.beta_deg);
                    losses[b] = replicas.model(w).rotation_train_sample(
                        peg_only, rotations, pos);
                }
            });
            adam.step(store);
            double mean = 0.0;
            for (int b = 0; b < tc.batch; ++b) mean += losses[b];
            report.rotation_losses.push_back(mean / tc.batch);
        }
    }
    return report;
}

ErrorRatios error_ratio(VsnModel& model, const std::vector<VsnSample>& dataset,
                        double tol) {
    if (dataset.empty()) throw std::invalid_argument("empty evaluation dataset");
    ErrorRatios r;
    r.trials = dataset.size();
    for (const VsnSample& s : dataset) {
        const SensorReading reading = model.read(s.seg);
        const auto [dx, dy] = heatmap_argmax(reading.heatmap);
        const double dtheta = rotation_argmax(reading.rotation);
        if (std::abs(dx - s.err.dx) > tol) r.x += 1.0;
        if (std::abs(dy - s.err.dy) > tol) r.y += 1.0;
        if (std::abs(dtheta - s.err.dtheta) > tol) r.theta += 1.0;
    }
    r.x /= static_cast<double>(r.trials);
    r.y /= static_cast<double>(r.trials);
    r.theta /= static_cast<double>(r.trials);
    return r;
}

// ---------------------------------------------------------------------------
// persistence

void save_vsn(const neuro::ParamStore& store, const VsnConfig& config,
              const std::string& path_prefix) {
    store.save(path_prefix + ".phw");
    nlohmann::json j;
    j["camera"] = config.camera == raster::CameraConfig::eye_to_hand
                      ? "eye_to_hand"
                      : "eye_in_hand";
    j["heatmap_size"] = config.heatmap.size;
    j["heatmap_cell_mm"] = config.heatmap.cell_mm;
    j["beta_deg"] = config.beta_deg;
    std::ofstream out(path_prefix + ".json");
    out << j.dump(2) << "\n";
}

std::pair<std::shared_ptr<neuro::ParamStore>, VsnConfig> load_vsn(
    const std::string& path_prefix) {
    std::ifstream in(path_prefix + ".json");
    if (!in) throw std::runtime_error("missing manifest " + path_prefix + ".json");
    nlohmann::json j = nlohmann::json::parse(in);
    VsnConfig config;
    config.camera = j.at("camera").get<std::string>() == "eye_in_hand"
                        ? raster::CameraConfig::eye_in_hand
                        : raster::CameraConfig::eye_to_hand;
    config.heatmap.size = j.at("heatmap_size").get<int>();
    config.heatmap.cell_mm = j.at("heatmap_cell_mm").get<double>();
    config.beta_deg = j.at("beta_deg").get<double>();
    auto store = std::make_shared<neuro::ParamStore>(0);
    store->load(path_prefix + ".phw");
    return {store, config};
}

// ---------------------------------------------------------------------------
// cached sensor

VsnSensor::VsnSensor(neuro::ParamStore& store, const VsnConfig& config)
    : model_(store, config) {}

const Tensor* VsnSensor::cached_features(const raster::SegImage& mask) {
    const uint64_t h =
        hash_tag({reinterpret_cast<const char*>(mask.labels.data()),
                  mask.labels.size()});
    auto it = cache_.find(h);
    if (it == cache_.end()) {
        if (cache_.size() >= 1024) cache_.clear();
        it = cache_
                 .emplace(h, std::make_unique<Tensor>(model_.branch_features(mask)))
                 .first;
    }
    return it->second.get();
}

SensorReading VsnSensor::read(const raster::SegImage& seg) {
    auto [peg_only, hole_only] = raster::split_channels(seg);
    SensorReading r;
    r.heatmap = model_.position_forward(seg);
    const Tensor* up = cached_features(peg_only);
    const auto rotations =
        raster::rotated_holes(hole_only, model_.config().beta_deg);
    std::vector<const Tensor*> uh(11);
    for (int i = 0; i < 11; ++i) uh[i] = cached_features(rotations[i]);
    r.rotation = VsnModel::rotation_from_features(*up, uh, model_.config().beta_deg);
    return r;
}

}  // namespace peghole::vsn
