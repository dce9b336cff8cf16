#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "peghole/geometry.hpp"
#include "peghole/nets.hpp"
#include "peghole/params.hpp"
#include "peghole/raster.hpp"

namespace peghole::vsn {

// Position belief grid. Cell (i, j) holds the belief that the planar
// displacement is ((i - c) * cell_mm, (j - c) * cell_mm) with c the center
// index; storage is row-major values[i * size + j].
struct HeatmapSpec {
    int size = 21;
    double cell_mm = 1.0;

    int center() const { return (size - 1) / 2; }
    double range_mm() const { return center() * cell_mm; }
    void validate() const;
};

struct Heatmap {
    HeatmapSpec spec;
    std::vector<double> values;

    Heatmap() = default;
    explicit Heatmap(const HeatmapSpec& s)
        : spec(s), values(size_t(s.size) * s.size, 0.0) {}
    double& at(int i, int j) { return values[size_t(i) * spec.size + j]; }
    double at(int i, int j) const { return values[size_t(i) * spec.size + j]; }
};

// 11 similarity scores in (0,1]; index i corresponds to a hole rotation of
// (i - 5) * beta degrees.
struct RotationVector {
    double beta = 2.0;
    std::vector<double> values = std::vector<double>(11, 0.0);
};

struct SensorReading {
    Heatmap heatmap;
    RotationVector rotation;
};

Heatmap position_target(const geometry::PoseError& err, const HeatmapSpec& spec);
double position_loss(const Heatmap& pred, const Heatmap& target);
std::pair<double, double> heatmap_argmax(const Heatmap& hm);  // (dx, dy) mm
std::vector<double> flatten(const Heatmap& hm);
double rotation_loss(const RotationVector& d, int positive_index);
double rotation_argmax(const RotationVector& d);  // degrees
// nearest bin to the true rotation, round-half-to-even
int positive_rotation_bin(double dtheta_deg, double beta_deg);

// Exact-sensing test double: one-hot heatmap from the quantized error plus a
// near-one-hot rotation vector (0.01 off-bin floor).
SensorReading oracle_reading(const geometry::PoseError& err,
                             const HeatmapSpec& spec = {}, double beta_deg = 2.0);

struct VsnConfig {
    raster::CameraConfig camera = raster::CameraConfig::eye_to_hand;
    HeatmapSpec heatmap;
    double beta_deg = 2.0;
};

// The virtual sensor: a position heatmap head (encoder-decoder, sigmoid over
// the center crop) and a rotation head (shared-weight mask encoder pairs,
// exp(-distance/N) similarity).
class VsnModel {
public:
    VsnModel(neuro::ParamStore& store, const VsnConfig& config);

    const VsnConfig& config() const { return config_; }

    Heatmap position_forward(const raster::SegImage& seg);
    RotationVector rotation_forward(const raster::SegImage& peg_only,
                                    const std::vector<raster::SegImage>& hole_rotations);
    SensorReading read(const raster::SegImage& seg);

    // feature-level access used by the caching sensor
    neuro::Tensor branch_features(const raster::SegImage& mask);
    static RotationVector rotation_from_features(
        const neuro::Tensor& peg_features,
        const std::vector<const neuro::Tensor*>& hole_features, double beta_deg);

    // training: forward + backward, gradients accumulate in the store
    double position_loss_forward(const raster::SegImage& seg, const Heatmap& target);
    double position_train_sample(const raster::SegImage& seg, const Heatmap& target);
    double rotation_loss_forward(const raster::SegImage& peg_only,
                                 const std::vector<raster::SegImage>& rotations,
                                 int positive_index);
    double rotation_train_sample(const raster::SegImage& peg_only,
                                 const std::vector<raster::SegImage>& rotations,
                                 int positive_index);

private:
    friend class VsnSensor;
    VsnConfig config_;
    neuro::EncoderDecoderNet position_net_;
    std::vector<std::unique_ptr<neuro::MaskEncoderNet>> branches_;
    neuro::CropCenter crop_;
    neuro::Tensor onehot_, mask_, heat_probs_, heat_grad_;
};

struct VsnSample {
    raster::SegImage seg;
    geometry::PoseError err;
    std::string shape;
};

// Renders n scenes of the given shapes with errors uniform in +-range.
std::vector<VsnSample> make_vsn_dataset(
    const std::vector<geometry::ShapeSpec>& shapes, const raster::Camera& cam,
    int n, uint64_t seed, double pos_range_mm = 10.0, double rot_range_deg = 10.0);

// Dataset directory: <id>_peg.pgm / <id>_hole.pgm pairs plus index.csv with
// sample_id, dx_mm, dy_mm, dtheta_deg, shape, camera_config.
void save_vsn_dataset(const std::string& dir, const std::vector<VsnSample>& data,
                      raster::CameraConfig camera);
std::vector<VsnSample> load_vsn_dataset(const std::string& dir);

struct VsnTrainConfig {
    int position_samples = 6000;
    int rotation_samples = 2500;
    int batch = 8;
    double lr = 1e-3;
    uint64_t seed = 1;
    bool train_position = true;
    bool train_rotation = true;
};

struct VsnTrainReport {
    std::vector<double> position_losses;  // per optimizer step
    std::vector<double> rotation_losses;
};

VsnTrainReport train_vsn(neuro::ParamStore& store, const VsnConfig& mc,
                         const std::vector<VsnSample>& dataset,
                         const VsnTrainConfig& tc);

struct ErrorRatios {
    double x = 0.0, y = 0.0, theta = 0.0;
    size_t trials = 0;
};

// Fraction of trials whose estimate deviates from ground truth by more than
// tol, per axis.
ErrorRatios error_ratio(VsnModel& model, const std::vector<VsnSample>& dataset,
                        double tol);

// Weights plus a JSON manifest of the architecture hyperparameters.
void save_vsn(const neuro::ParamStore& store, const VsnConfig& config,
              const std::string& path_prefix);
std::pair<std::shared_ptr<neuro::ParamStore>, VsnConfig> load_vsn(
    const std::string& path_prefix);

// Inference wrapper with content-addressed caching of branch features: the
// static side of a scene (hole bank eye-to-hand, peg mask eye-in-hand)
// repeats across steps, so its encoder passes are reused.
class VsnSensor {
public:
    VsnSensor(neuro::ParamStore& store, const VsnConfig& config);

    SensorReading read(const raster::SegImage& seg);
    VsnModel& model() { return model_; }

private:
    const neuro::Tensor* cached_features(const raster::SegImage& mask);
    VsnModel model_;
    std::unordered_map<uint64_t, std::unique_ptr<neuro::Tensor>> cache_;
};

}  // namespace peghole::vsn
