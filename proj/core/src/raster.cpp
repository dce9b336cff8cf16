#include "peghole/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "peghole/rng.hpp"

namespace peghole::raster {

using geometry::Pose;
using geometry::ShapeSpec;
using geometry::Vec2;

void Camera::validate(double max_shape_radius_mm, double max_init_error_mm) const {
    if (!(pitch > 0.0)) throw std::invalid_argument("camera pitch must be > 0");
    if (width != height) throw std::invalid_argument("camera must be square");
    const double fov = width * pitch;
    if (fov < 2.0 * (max_init_error_mm + max_shape_radius_mm))
        throw std::invalid_argument("camera field of view too small");
}

size_t SegImage::count(uint8_t label) const {
    return std::count(labels.begin(), labels.end(), label);
}

namespace {

// Polygon in view-frame mm -> label raster via scanline fill. Pixel (u,v)
// center sits at ((u - cx) * pitch, (v - cy) * pitch) in the view frame.
void fill_polygon(SegImage& img, const std::vector<Vec2>& poly, double pitch,
                  uint8_t label, size_t* painted) {
    const double cx = (img.width - 1) * 0.5;
    const double cy = (img.height - 1) * 0.5;
    std::vector<double> crossings;
    for (int v = 0; v < img.height; ++v) {
        const double y = (v - cy) * pitch;
        crossings.clear();
        const size_t n = poly.size();
        for (size_t i = 0, j = n - 1; i < n; j = i++) {
            const Vec2& a = poly[i];
            const Vec2& b = poly[j];
            if ((a.y > y) != (b.y > y))
                crossings.push_back(a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x));
        }
        std::sort(crossings.begin(), crossings.end());
        for (size_t k = 0; k + 1 < crossings.size(); k += 2) {
            // pixels with center x in [crossings[k], crossings[k+1])
            int u0 = static_cast<int>(std::ceil(crossings[k] / pitch + cx));
            double q1 = crossings[k + 1] / pitch + cx;
            int u1 = static_cast<int>(std::ceil(q1)) - 1;
            u0 = std::max(u0, 0);
            u1 = std::min(u1, img.width - 1);
            for (int u = u0; u <= u1; ++u) {
                img.at(u, v) = label;
                if (painted) ++*painted;
            }
        }
    }
}

std::vector<Vec2> posed_polygon(const std::vector<Vec2>& verts, const Pose& pose) {
    std::vector<Vec2> out(verts.size());
    for (size_t i = 0; i < verts.size(); ++i)
        out[i] = geometry::transform_point(pose, verts[i]);
    return out;
}

// World point -> view frame (mm, relative to the view center).
std::vector<Vec2> to_view(const std::vector<Vec2>& world, const Pose& peg,
                          const Camera& cam) {
    std::vector<Vec2> out(world.size());
    if (cam.config == CameraConfig::eye_to_hand) {
        for (size_t i = 0; i < world.size(); ++i)
            out[i] = world[i] - cam.center;
    } else {
        // peg frame: rotate by -yaw about the peg position, then shift by
        // the fixed camera offset
        const double a = geometry::deg_to_rad(-peg.yaw);
        const double c = std::cos(a), s = std::sin(a);
        for (size_t i = 0; i < world.size(); ++i) {
            const Vec2 d = world[i] - Vec2{peg.x, peg.y};
            out[i] = Vec2{c * d.x - s * d.y, s * d.x + c * d.y} - cam.center;
        }
    }
    return out;
}

struct SceneRaster {
    SegImage composite;
    size_t peg_pixels = 0;
    size_t hole_pixels = 0;
};

SceneRaster rasterize_scene(const Pose& peg, const Pose& hole,
                            const ShapeSpec& shape, const Camera& cam) {
    SceneRaster out;
    out.composite.width = cam.width;
    out.composite.height = cam.height;
    out.composite.labels.assign(size_t(cam.width) * cam.height, kBackground);

    const std::vector<Vec2> hole_world =
        posed_polygon(geometry::dilate_polygon(shape.vertices, shape.clearance_mm),
                      hole);
    const std::vector<Vec2> peg_world = posed_polygon(shape.vertices, peg);
    fill_polygon(out.composite, to_view(hole_world, peg, cam), cam.pitch,
                 kHoleLabel, &out.hole_pixels);
    fill_polygon(out.composite, to_view(peg_world, peg, cam), cam.pitch,
                 kPegLabel, &out.peg_pixels);
    return out;
}

}  // namespace

SegImage render_seg(const Pose& peg, const Pose& hole, const ShapeSpec& shape,
                    const Camera& cam) {
    SceneRaster raster = rasterize_scene(peg, hole, shape, cam);
    if (raster.peg_pixels == 0 || raster.hole_pixels == 0)
        throw out_of_view_error(
            "object fully outside the camera view; the episode should have "
            "terminated at the safe-region boundary");
    return std::move(raster.composite);
}

bool scene_out_of_view(const Pose& peg, const Pose& hole, const ShapeSpec& shape,
                       const Camera& cam) {
    SceneRaster raster = rasterize_scene(peg, hole, shape, cam);
    return raster.peg_pixels == 0 || raster.hole_pixels == 0;
}

std::pair<SegImage, SegImage> split_channels(const SegImage& img) {
    SegImage peg = img, hole = img;
    for (uint8_t& l : peg.labels)
        if (l == kHoleLabel) l = kBackground;
    for (uint8_t& l : hole.labels)
        if (l == kPegLabel) l = kBackground;
    return {std::move(peg), std::move(hole)};
}

SegImage rotate_labels(const SegImage& img, double angle_deg) {
    SegImage out;
    out.width = img.width;
    out.height = img.height;
    out.labels.assign(img.labels.size(), kBackground);
    const double cx = (img.width - 1) * 0.5;
    const double cy = (img.height - 1) * 0.5;
    const double a = geometry::deg_to_rad(-angle_deg);  // inverse map
    const double c = std::cos(a), s = std::sin(a);
    for (int v = 0; v < img.height; ++v) {
        for (int u = 0; u < img.width; ++u) {
            const double x = u - cx, y = v - cy;
            const long su = std::lround(c * x - s * y + cx);
            const long sv = std::lround(s * x + c * y + cy);
            if (su >= 0 && su < img.width && sv >= 0 && sv < img.height)
                out.at(u, v) = img.at(static_cast<int>(su), static_cast<int>(sv));
        }
    }
    return out;
}

std::vector<SegImage> rotated_holes(const SegImage& hole_only, double beta_deg) {
    if (!(beta_deg > 0.0)) throw std::invalid_argument("beta must be > 0");
    std::vector<SegImage> out;
    out.reserve(11);
    for (int i = 0; i < 11; ++i) {
        if (i == 5)
            out.push_back(hole_only);
        else
            out.push_back(rotate_labels(hole_only, (i - 5) * beta_deg));
    }
    return out;
}

namespace {

// Smooth hash-based value noise in [-1, 1], cell size 8 px.
double texture_field(uint64_t seed, int u, int v) {
    auto corner = [seed](int cu, int cv) {
        uint64_t h = seed;
        h ^= static_cast<uint64_t>(static_cast<uint32_t>(cu)) * 0x9e3779b97f4a7c15ull;
        h ^= static_cast<uint64_t>(static_cast<uint32_t>(cv)) * 0xbf58476d1ce4e5b9ull;
        h = (h ^ (h >> 30)) * 0x94d049bb133111ebull;
        h ^= h >> 31;
        return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    };
    const int cell = 8;
    const int cu = u / cell, cv = v / cell;
    const double fu = double(u % cell) / cell, fv = double(v % cell) / cell;
    const double su = fu * fu * (3 - 2 * fu), sv = fv * fv * (3 - 2 * fv);
    const double top = corner(cu, cv) * (1 - su) + corner(cu + 1, cv) * su;
    const double bot = corner(cu, cv + 1) * (1 - su) + corner(cu + 1, cv + 1) * su;
    return top * (1 - sv) + bot * sv;
}

uint8_t clamp_channel(double v) {
    return static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
}

}  // namespace

std::pair<RgbImage, SegImage> render_rgb(const Pose& peg, const Pose& hole,
                                         const ShapeSpec& shape, const Camera& cam,
                                         const AppearanceDomain& appearance,
                                         uint64_t seed) {
    SegImage truth = render_seg(peg, hole, shape, cam);
    RgbImage rgb;
    rgb.width = truth.width;
    rgb.height = truth.height;
    rgb.data.resize(size_t(rgb.width) * rgb.height * 3);
    Rng rng(seed);
    for (int v = 0; v < rgb.height; ++v) {
        for (int u = 0; u < rgb.width; ++u) {
            const uint8_t label = truth.at(u, v);
            const uint8_t* base = appearance.bg_color;
            if (label == kPegLabel) base = appearance.peg_color;
            else if (label == kHoleLabel) base = appearance.hole_color;
            const double tex = label == kBackground
                                   ? appearance.texture_amplitude *
                                         texture_field(appearance.texture_seed, u, v)
                                   : 0.0;
            uint8_t* px = &rgb.data[(size_t(v) * rgb.width + u) * 3];
            for (int ch = 0; ch < 3; ++ch) {
                const double noise =
                    appearance.noise_amplitude * (rng.uniform() * 2.0 - 1.0);
                px[ch] = clamp_channel(base[ch] + tex + noise);
            }
        }
    }
    return {std::move(rgb), std::move(truth)};
}

namespace {

constexpr uint8_t kLabelGray[3] = {0, 128, 255};

uint8_t gray_to_label(int g) {
    if (g < 64) return kBackground;
    if (g < 192) return kPegLabel;
    return kHoleLabel;
}

void expect_token(std::istream& in, const std::string& want) {
    std::string tok;
    in >> tok;
    if (tok != want) throw std::runtime_error("bad image header token: " + tok);
}

}  // namespace

void write_pgm(const std::string& path, const SegImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> buf(img.labels.size());
    for (size_t i = 0; i < img.labels.size(); ++i) buf[i] = kLabelGray[img.labels[i]];
    out.write(reinterpret_cast<const char*>(buf.data()), buf.size());
}

SegImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    expect_token(in, "P5");
    SegImage img;
    int maxval = 0;
    in >> img.width >> img.height >> maxval;
    in.get();
    if (maxval != 255) throw std::runtime_error("expected maxval 255");
    std::vector<uint8_t> buf(size_t(img.width) * img.height);
    in.read(reinterpret_cast<char*>(buf.data()), buf.size());
    if (!in) throw std::runtime_error("truncated pgm: " + path);
    img.labels.resize(buf.size());
    for (size_t i = 0; i < buf.size(); ++i) img.labels[i] = gray_to_label(buf[i]);
    return img;
}

void write_ppm(const std::string& path, const RgbImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data.data()), img.data.size());
}

RgbImage read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    expect_token(in, "P6");
    RgbImage img;
    int maxval = 0;
    in >> img.width >> img.height >> maxval;
    in.get();
    if (maxval != 255) throw std::runtime_error("expected maxval 255");
    img.data.resize(size_t(img.width) * img.height * 3);
    in.read(reinterpret_cast<char*>(img.data.data()), img.data.size());
    if (!in) throw std::runtime_error("truncated ppm: " + path);
    return img;
}

}  // namespace peghole::raster
