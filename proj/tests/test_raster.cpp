#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "peghole/geometry.hpp"
#include "peghole/raster.hpp"
#include "peghole/rng.hpp"

using namespace peghole;
using namespace peghole::geometry;
using namespace peghole::raster;

namespace {

Camera default_cam(CameraConfig config = CameraConfig::eye_to_hand) {
    Camera cam;
    cam.config = config;
    return cam;
}

}  // namespace

TEST_CASE("camera invariant holds for the shape library") {
    Camera cam = default_cam();
    double max_r = 0.0;
    for (const ShapeSpec& s : all_shapes()) max_r = std::max(max_r, s.bounding_radius());
    CHECK_NOTHROW(cam.validate(max_r));
    Camera tiny = cam;
    tiny.width = tiny.height = 31;
    CHECK_THROWS(tiny.validate(max_r));
}

TEST_CASE("hole pixel count matches the dilated polygon area") {
    Camera cam = default_cam();
    const ShapeSpec& shape = shape_by_name("pentagon");
    // peg shifted far from the hole so the hole outline is unoccluded
    Pose peg{22, 18, 0, 0};
    Pose hole{};
    SegImage img = render_seg(peg, hole, shape, cam);
    const double hole_area =
        polygon_area(dilate_polygon(shape.vertices, shape.clearance_mm));
    const double count = static_cast<double>(img.count(kHoleLabel));
    CHECK(count == doctest::Approx(hole_area / (cam.pitch * cam.pitch)).epsilon(0.02));
}

TEST_CASE("aligned peg occludes all but the clearance ring") {
    Camera cam = default_cam();
    const ShapeSpec& shape = shape_by_name("square");
    Pose zero{};
    SegImage img = render_seg(zero, zero, shape, cam);
    CHECK(img.count(kPegLabel) > 0);
    const auto dilated = dilate_polygon(shape.vertices, shape.clearance_mm);
    const double cx = (cam.width - 1) * 0.5, cy = (cam.height - 1) * 0.5;
    for (int v = 0; v < img.height; ++v) {
        for (int u = 0; u < img.width; ++u) {
            if (img.at(u, v) != kHoleLabel) continue;
            Vec2 p{(u - cx) * cam.pitch, (v - cy) * cam.pitch};
            CHECK(point_in_polygon(dilated, p));
            CHECK_FALSE(point_in_polygon(shape.vertices, p));
        }
    }
    // ring occupancy is on the order of perimeter * clearance
    const double ring_bound = (polygon_perimeter(dilated) *
                               (shape.clearance_mm + 2 * cam.pitch)) /
                              (cam.pitch * cam.pitch);
    CHECK(static_cast<double>(img.count(kHoleLabel)) <= ring_bound);
}

TEST_CASE("rendering is deterministic") {
    Camera cam = default_cam();
    const ShapeSpec& shape = shape_by_name("cross");
    Pose peg{3.2, -4.7, 0, 6.4};
    SegImage a = render_seg(peg, {}, shape, cam);
    SegImage b = render_seg(peg, {}, shape, cam);
    CHECK(a == b);
}

TEST_CASE("fully out-of-view peg raises the safe-region error") {
    Camera cam = default_cam();
    const ShapeSpec& shape = shape_by_name("square");
    Pose far{55, 0, 0, 0};
    CHECK(scene_out_of_view(far, {}, shape, cam));
    CHECK_THROWS_AS(render_seg(far, {}, shape, cam), out_of_view_error);
    CHECK_FALSE(scene_out_of_view({8, 8, 0, 0}, {}, shape, cam));
}

TEST_CASE("split_channels conserves labels and merges back") {
    Camera cam = default_cam();
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const ShapeSpec& shape =
            all_shapes()[rng.uniform_int(all_shapes().size())];
        Pose peg{rng.uniform(-10, 10), rng.uniform(-10, 10), 0, rng.uniform(-10, 10)};
        SegImage img = render_seg(peg, {}, shape, cam);
        auto [peg_only, hole_only] = split_channels(img);
        CHECK(peg_only.count(kPegLabel) == img.count(kPegLabel));
        CHECK(peg_only.count(kHoleLabel) == 0);
        CHECK(hole_only.count(kHoleLabel) == img.count(kHoleLabel));
        CHECK(hole_only.count(kPegLabel) == 0);
        // peg drawn over hole reconstructs the composite
        SegImage merged = hole_only;
        for (size_t i = 0; i < merged.labels.size(); ++i)
            if (peg_only.labels[i] == kPegLabel) merged.labels[i] = kPegLabel;
        CHECK(merged == img);
    }
    SegImage empty;
    empty.width = empty.height = 8;
    empty.labels.assign(64, kHoleLabel);
    auto [peg_only, hole_only] = split_channels(empty);
    CHECK(peg_only.count(kPegLabel) == 0);
    CHECK(peg_only.count(kBackground) == 64);
}

TEST_CASE("rotated_holes") {
    Camera cam = default_cam();
    const ShapeSpec& shape = shape_by_name("t_shape");
    SegImage img = render_seg({6, -2, 0, 3}, {}, shape, cam);
    auto [peg_only, hole_only] = split_channels(img);
    auto rotations = rotated_holes(hole_only, 2.0);
    CHECK(rotations.size() == 11);
    CHECK(rotations[5] == hole_only);

    // +2 then -2 degrees keeps nearly all labeled pixels
    SegImage fwd = rotate_labels(hole_only, 2.0);
    SegImage back = rotate_labels(fwd, -2.0);
    size_t labeled = 0, kept = 0;
    for (size_t i = 0; i < hole_only.labels.size(); ++i) {
        if (hole_only.labels[i] == kBackground) continue;
        ++labeled;
        if (back.labels[i] == hole_only.labels[i]) ++kept;
    }
    CHECK(labeled > 0);
    CHECK(static_cast<double>(kept) / labeled >= 0.98);
}

TEST_CASE("render_rgb appearance") {
    Camera cam = default_cam();
    const ShapeSpec& shape = shape_by_name("hexagon");
    Pose peg{4, 4, 0, -5};
    AppearanceDomain flat;
    flat.noise_amplitude = 0.0;
    flat.texture_amplitude = 0.0;
    auto [rgb, truth] = render_rgb(peg, {}, shape, cam, flat, 11);
    for (int v = 0; v < truth.height; ++v) {
        for (int u = 0; u < truth.width; ++u) {
            const uint8_t* base = flat.bg_color;
            if (truth.at(u, v) == kPegLabel) base = flat.peg_color;
            if (truth.at(u, v) == kHoleLabel) base = flat.hole_color;
            const uint8_t* px = &rgb.data[(size_t(v) * rgb.width + u) * 3];
            for (int c = 0; c < 3; ++c) CHECK(px[c] == base[c]);
        }
    }

    AppearanceDomain noisy;
    auto [rgb1, truth1] = render_rgb(peg, {}, shape, cam, noisy, 1);
    auto [rgb2, truth2] = render_rgb(peg, {}, shape, cam, noisy, 2);
    CHECK(truth1 == truth2);
    CHECK(rgb1.data != rgb2.data);
    auto [rgb1b, truth1b] = render_rgb(peg, {}, shape, cam, noisy, 1);
    CHECK(rgb1 == rgb1b);

    // per-class mean color approaches the base color (uniform noise)
    double sum[3] = {0, 0, 0};
    size_t n = 0;
    for (int v = 0; v < truth1.height; ++v)
        for (int u = 0; u < truth1.width; ++u)
            if (truth1.at(u, v) == kPegLabel) {
                const uint8_t* px = &rgb1.data[(size_t(v) * rgb1.width + u) * 3];
                for (int c = 0; c < 3; ++c) sum[c] += px[c];
                ++n;
            }
    REQUIRE(n > 100);
    const double sigma = noisy.noise_amplitude / std::sqrt(3.0);
    for (int c = 0; c < 3; ++c) {
        const double mean = sum[c] / static_cast<double>(n);
        CHECK(std::abs(mean - noisy.peg_color[c]) <
              4.0 * sigma / std::sqrt(static_cast<double>(n)) + 0.5);
    }
}

TEST_CASE("frame duality of the two camera configs") {
    const ShapeSpec& shape = shape_by_name("l_shape");
    const Vec2 o{4, -6};
    Pose peg{10, 5, 0, 0};
    Pose hole{peg.x - o.x, peg.y - o.y, 0, 0};
    Camera fixed = default_cam(CameraConfig::eye_to_hand);
    fixed.center = {peg.x, peg.y};
    Camera riding = default_cam(CameraConfig::eye_in_hand);
    SegImage a = render_seg(peg, hole, shape, fixed);
    SegImage b = render_seg(peg, hole, shape, riding);
    CHECK(a == b);
}

TEST_CASE("labels ignore pure z motion") {
    Camera cam = default_cam();
    const ShapeSpec& shape = shape_by_name("star");
    Pose peg{5, 1, 4.0, 7};
    Pose lowered = peg;
    lowered.z = -2.0;
    CHECK(render_seg(peg, {}, shape, cam) == render_seg(lowered, {}, shape, cam));
}

TEST_CASE("translation by whole pixels shifts the peg pixel set") {
    Camera cam = default_cam();
    const ShapeSpec& shape = shape_by_name("trapezoid");
    const int k = 3;
    SegImage a = render_seg({1, -2, 0, 9}, {}, shape, cam);
    SegImage b = render_seg({1 + k * cam.pitch, -2, 0, 9}, {}, shape, cam);
    for (int v = 0; v < a.height; ++v) {
        for (int u = 0; u + k < a.width; ++u) {
            const bool peg_a = a.at(u, v) == kPegLabel;
            const bool peg_b = b.at(u + k, v) == kPegLabel;
            CHECK(peg_a == peg_b);
        }
    }
}

TEST_CASE("pgm/ppm round trip") {
    Camera cam = default_cam();
    const ShapeSpec& shape = shape_by_name("u_channel");
    SegImage img = render_seg({2, 3, 0, -4}, {}, shape, cam);
    const std::string path = "test_roundtrip.pgm";
    write_pgm(path, img);
    SegImage back = read_pgm(path);
    CHECK(back == img);
    std::remove(path.c_str());

    AppearanceDomain app;
    auto [rgb, truth] = render_rgb({2, 3, 0, -4}, {}, shape, cam, app, 3);
    const std::string path2 = "test_roundtrip.ppm";
    write_ppm(path2, rgb);
    RgbImage rback = read_ppm(path2);
    CHECK(rback == rgb);
    std::remove(path2.c_str());
}
