#include <cmath>

#include "doctest.h"
#include "peghole/geometry.hpp"
#include "peghole/rng.hpp"

using namespace peghole;
using namespace peghole::geometry;

TEST_CASE("transform_point basics") {
    CHECK(transform_point({}, {3, 4}).x == doctest::Approx(3).epsilon(1e-12));
    CHECK(transform_point({}, {3, 4}).y == doctest::Approx(4).epsilon(1e-12));

    Vec2 t = transform_point({1, 2, 0, 0}, {3, 4});
    CHECK(t.x == doctest::Approx(4).epsilon(1e-12));
    CHECK(t.y == doctest::Approx(6).epsilon(1e-12));

    Vec2 q = transform_point({0, 0, 0, 90}, {1, 0});
    CHECK(q.x == doctest::Approx(0).epsilon(1e-12));
    CHECK(q.y == doctest::Approx(1).epsilon(1e-12));
}

TEST_CASE("transform_point inverse round trip") {
    Rng rng(42);
    for (int i = 0; i < 200; ++i) {
        Pose pose{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-5, 5),
                  rng.uniform(-180, 180)};
        Vec2 p{rng.uniform(-30, 30), rng.uniform(-30, 30)};
        Vec2 back = transform_point(pose, transform_point(inverse(pose), p));
        CHECK(std::abs(back.x - p.x) < 1e-9);
        CHECK(std::abs(back.y - p.y) < 1e-9);
    }
}

TEST_CASE("relative_error examples") {
    Pose peg{5, -3, 0, 4};
    PoseError e = relative_error(peg, {});
    CHECK(e.dx == doctest::Approx(5).epsilon(1e-12));
    CHECK(e.dy == doctest::Approx(-3).epsilon(1e-12));
    CHECK(e.dtheta == doctest::Approx(4).epsilon(1e-12));

    PoseError zero = relative_error(peg, peg);
    CHECK(std::abs(zero.dx) < 1e-12);
    CHECK(std::abs(zero.dy) < 1e-12);
    CHECK(std::abs(zero.dtheta) < 1e-12);

    // hole yaw 90, peg (0,1,0,90) -> (1,0,0): the peg sits one unit along
    // the hole frame's +x axis
    PoseError r = relative_error({0, 1, 0, 90}, {0, 0, 0, 90});
    CHECK(r.dx == doctest::Approx(1).epsilon(1e-9));
    CHECK(std::abs(r.dy) < 1e-9);
    CHECK(std::abs(r.dtheta) < 1e-9);
    // cross-check by mapping the error back through the hole pose
    Vec2 world = transform_point({0, 0, 0, 90}, {r.dx, r.dy});
    CHECK(world.x == doctest::Approx(0).epsilon(1e-9));
    CHECK(world.y == doctest::Approx(1).epsilon(1e-9));
}

TEST_CASE("relative_error is equivariant under a common rigid transform") {
    Rng rng(7);
    for (int i = 0; i < 100; ++i) {
        Pose peg{rng.uniform(-20, 20), rng.uniform(-20, 20), 0, rng.uniform(-90, 90)};
        Pose hole{rng.uniform(-20, 20), rng.uniform(-20, 20), 0, rng.uniform(-90, 90)};
        Pose g{rng.uniform(-30, 30), rng.uniform(-30, 30), 0, rng.uniform(-180, 180)};
        PoseError a = relative_error(peg, hole);
        PoseError b = relative_error(compose(g, peg), compose(g, hole));
        CHECK(std::abs(a.dx - b.dx) < 1e-9);
        CHECK(std::abs(a.dy - b.dy) < 1e-9);
        CHECK(std::abs(normalize_deg(a.dtheta - b.dtheta)) < 1e-9);
    }
}

TEST_CASE("shape libraries") {
    CHECK(seen_shapes().size() == 4);
    CHECK(unseen_shapes().size() == 8);
    for (const ShapeSpec& s : all_shapes()) {
        CHECK_NOTHROW(validate_shape(s));
        CHECK(s.bounding_radius() >= 10.0);
        CHECK(s.bounding_radius() <= 15.0);
        Vec2 c = polygon_centroid(s.vertices);
        CHECK(std::abs(c.x) < 1e-9);
        CHECK(std::abs(c.y) < 1e-9);
    }
}

TEST_CASE("shape json round trip") {
    for (const ShapeSpec& s : all_shapes()) {
        ShapeSpec back = shape_from_json(shape_to_json(s));
        CHECK(back.name == s.name);
        CHECK(back.split == s.split);
        CHECK(back.clearance_mm == doctest::Approx(s.clearance_mm));
        REQUIRE(back.vertices.size() == s.vertices.size());
        for (size_t i = 0; i < s.vertices.size(); ++i) {
            CHECK(back.vertices[i].x == doctest::Approx(s.vertices[i].x).epsilon(1e-12));
            CHECK(back.vertices[i].y == doctest::Approx(s.vertices[i].y).epsilon(1e-12));
        }
    }
}

TEST_CASE("insertion_feasible basics") {
    const ShapeSpec& square = shape_by_name("square");
    CHECK(insertion_feasible(square, {0, 0, 0}, 0.5));
    CHECK_FALSE(insertion_feasible(square, {1.0, 0, 0}, 0.5));
    for (const ShapeSpec& s : all_shapes())
        CHECK(insertion_feasible(s, {0, 0, 0}));
}

TEST_CASE("square rotation limit matches the brute-force oracle") {
    const ShapeSpec& square = shape_by_name("square");
    const double c = 0.5;
    // bisect the largest feasible pure rotation with the oracle
    double lo = 0.0, hi = 10.0;
    for (int it = 0; it < 30; ++it) {
        double mid = 0.5 * (lo + hi);
        if (insertion_feasible_brute(square, {0, 0, mid}, c, 0.01))
            lo = mid;
        else
            hi = mid;
    }
    const double theta_max = lo;
    // corners sit at radius 10*sqrt(2); a rotation by theta moves them about
    // r*theta, so the limit lands near c/r = 2.0 degrees
    CHECK(theta_max > 1.0);
    CHECK(theta_max < 3.0);
    CHECK(insertion_feasible(square, {0, 0, theta_max - 0.02}, c));
    CHECK_FALSE(insertion_feasible(square, {0, 0, theta_max + 0.02}, c));
}

TEST_CASE("insertion_feasible agrees with the brute-force oracle") {
    Rng rng(2024);
    int checked = 0;
    for (const ShapeSpec& s : all_shapes()) {
        for (int i = 0; i < 84; ++i) {
            const double c = rng.uniform(0.2, 1.2);
            // concentrate samples near the feasibility boundary
            PoseError e{rng.uniform(-2 * c, 2 * c), rng.uniform(-2 * c, 2 * c),
                        rng.uniform(-4, 4)};
            if (i % 7 == 0) e = {rng.uniform(-8, 8), rng.uniform(-8, 8), rng.uniform(-10, 10)};
            const bool fast = insertion_feasible(s, e, c);
            const bool brute = insertion_feasible_brute(s, e, c, 0.01);
            CHECK(fast == brute);
            ++checked;
        }
    }
    CHECK(checked >= 1000);
}

TEST_CASE("infeasibility is monotone in the error magnitude") {
    Rng rng(99);
    for (const ShapeSpec& s : all_shapes()) {
        for (int i = 0; i < 40; ++i) {
            const double c = 1.0;
            PoseError e{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                        rng.uniform(-4, 4)};
            if (!insertion_feasible(s, e, c)) {
                const double kx = rng.uniform(1.0, 2.0);
                PoseError worse{e.dx * kx, e.dy * kx, e.dtheta * kx};
                CHECK_FALSE(insertion_feasible(s, worse, c));
            }
        }
    }
}

TEST_CASE("dilation grows the polygon uniformly") {
    for (const ShapeSpec& s : all_shapes()) {
        auto d = dilate_polygon(s.vertices, 0.6);
        CHECK(polygon_is_simple(d));
        CHECK(polygon_area(d) > polygon_area(s.vertices));
        // every original vertex is strictly inside the dilated outline
        for (const Vec2& v : s.vertices) CHECK(point_in_polygon(d, v));
    }
}
