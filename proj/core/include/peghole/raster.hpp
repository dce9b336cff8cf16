#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "peghole/geometry.hpp"

namespace peghole::raster {

enum class CameraConfig { eye_to_hand, eye_in_hand };

// Orthographic top-down camera. eye_to_hand looks at a fixed world point;
// eye_in_hand renders in the peg frame (peg centered, view rotates with it).
struct Camera {
    CameraConfig config = CameraConfig::eye_to_hand;
    int width = 63;
    int height = 63;
    double pitch = 1.0;                 // mm per pixel
    geometry::Vec2 center{0.0, 0.0};    // eye_to_hand: world point on the axis

    void validate(double max_shape_radius_mm, double max_init_error_mm = 10.0) const;
};

constexpr uint8_t kBackground = 0;
constexpr uint8_t kPegLabel = 1;
constexpr uint8_t kHoleLabel = 2;

struct SegImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> labels;  // row-major, values in {0,1,2}

    uint8_t at(int x, int y) const { return labels[size_t(y) * width + x]; }
    uint8_t& at(int x, int y) { return labels[size_t(y) * width + x]; }
    size_t count(uint8_t label) const;
    bool operator==(const SegImage&) const = default;
};

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;  // row-major, 3 bytes per pixel

    bool operator==(const RgbImage&) const = default;
};

// Synthetic appearance used in place of a real camera: flat per-class colors,
// additive noise, and a low-frequency textured background.
struct AppearanceDomain {
    uint8_t bg_color[3] = {70, 90, 110};
    uint8_t peg_color[3] = {200, 60, 40};
    uint8_t hole_color[3] = {40, 40, 45};
    double noise_amplitude = 12.0;  // max abs per-channel perturbation
    double texture_amplitude = 25.0;
    uint64_t texture_seed = 0;
};

// Scanline rasterization of the peg/hole scene. The hole outline is the peg
// polygon dilated by its clearance; the peg is drawn on top. Throws
// out_of_view_error if the off-center object has no pixel in frame.
struct out_of_view_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

SegImage render_seg(const geometry::Pose& peg, const geometry::Pose& hole,
                    const geometry::ShapeSpec& shape, const Camera& cam);

// True iff render_seg would throw (off-center object fully outside the view).
bool scene_out_of_view(const geometry::Pose& peg, const geometry::Pose& hole,
                       const geometry::ShapeSpec& shape, const Camera& cam);

std::pair<SegImage, SegImage> split_channels(const SegImage& img);  // peg, hole

// 11 rotations of the hole-only image about the image center:
// index i maps to (i - 5) * beta degrees, nearest-neighbor resampling.
std::vector<SegImage> rotated_holes(const SegImage& hole_only, double beta_deg);

SegImage rotate_labels(const SegImage& img, double angle_deg);

std::pair<RgbImage, SegImage> render_rgb(const geometry::Pose& peg,
                                         const geometry::Pose& hole,
                                         const geometry::ShapeSpec& shape,
                                         const Camera& cam,
                                         const AppearanceDomain& appearance,
                                         uint64_t seed);

// PGM (P5) with labels mapped to {0,128,255}; PPM (P6) for RGB.
void write_pgm(const std::string& path, const SegImage& img);
SegImage read_pgm(const std::string& path);
void write_ppm(const std::string& path, const RgbImage& img);
RgbImage read_ppm(const std::string& path);

}  // namespace peghole::raster
