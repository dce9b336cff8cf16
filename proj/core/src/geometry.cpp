#include "peghole/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>

#include "json.hpp"

namespace peghole::geometry {

double normalize_deg(double deg) {
    double d = std::fmod(deg, 360.0);
    if (d > 180.0) d -= 360.0;
    if (d <= -180.0) d += 360.0;
    return d;
}

double deg_to_rad(double deg) { return deg * (M_PI / 180.0); }

Vec2 transform_point(const Pose& pose, Vec2 p) {
    const double a = deg_to_rad(pose.yaw);
    const double c = std::cos(a), s = std::sin(a);
    return {c * p.x - s * p.y + pose.x, s * p.x + c * p.y + pose.y};
}

Pose inverse(const Pose& pose) {
    const double a = deg_to_rad(pose.yaw);
    const double c = std::cos(a), s = std::sin(a);
    // R^T * (-t)
    return {-(c * pose.x + s * pose.y), -(-s * pose.x + c * pose.y), -pose.z,
            normalize_deg(-pose.yaw)};
}

Pose compose(const Pose& a, const Pose& b) {
    Vec2 t = transform_point(a, {b.x, b.y});
    return {t.x, t.y, a.z + b.z, normalize_deg(a.yaw + b.yaw)};
}

PoseError relative_error(const Pose& peg, const Pose& hole) {
    Pose rel = compose(inverse(hole), peg);
    return {rel.x, rel.y, normalize_deg(rel.yaw)};
}

double polygon_area(const std::vector<Vec2>& poly) {
    double a = 0.0;
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) a += cross(poly[i], poly[(i + 1) % n]);
    return 0.5 * a;
}

Vec2 polygon_centroid(const std::vector<Vec2>& poly) {
    double a = 0.0, cx = 0.0, cy = 0.0;
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % n];
        const double w = cross(p, q);
        a += w;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    a *= 0.5;
    return {cx / (6.0 * a), cy / (6.0 * a)};
}

double polygon_perimeter(const std::vector<Vec2>& poly) {
    double s = 0.0;
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        Vec2 d = poly[(i + 1) % n] - poly[i];
        s += std::hypot(d.x, d.y);
    }
    return s;
}

namespace {

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
    auto orient = [](Vec2 p, Vec2 q, Vec2 r) {
        double v = cross(q - p, r - p);
        if (v > 1e-12) return 1;
        if (v < -1e-12) return -1;
        return 0;
    };
    int o1 = orient(a, b, c), o2 = orient(a, b, d);
    int o3 = orient(c, d, a), o4 = orient(c, d, b);
    return o1 != o2 && o3 != o4;
}

}  // namespace

bool polygon_is_simple(const std::vector<Vec2>& poly) {
    const size_t n = poly.size();
    if (n < 3) return false;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            // skip adjacent edges (shared vertex)
            if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
            if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j],
                                   poly[(j + 1) % n]))
                return false;
        }
    }
    return true;
}

bool polygon_is_ccw(const std::vector<Vec2>& poly) {
    return polygon_area(poly) > 0.0;
}

bool point_in_polygon(const std::vector<Vec2>& poly, Vec2 p) {
    // even-odd rule, half-open in y so shared edges don't double count
    bool inside = false;
    const size_t n = poly.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            double x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if (p.x < x_cross) inside = !inside;
        }
    }
    return inside;
}

std::vector<Vec2> dilate_polygon(const std::vector<Vec2>& poly, double c) {
    const size_t n = poly.size();
    std::vector<Vec2> out(n);
    for (size_t i = 0; i < n; ++i) {
        const Vec2 prev = poly[(i + n - 1) % n];
        const Vec2 cur = poly[i];
        const Vec2 next = poly[(i + 1) % n];
        Vec2 d0 = cur - prev;
        Vec2 d1 = next - cur;
        const double l0 = std::hypot(d0.x, d0.y), l1 = std::hypot(d1.x, d1.y);
        d0 = (1.0 / l0) * d0;
        d1 = (1.0 / l1) * d1;
        // outward normals for a CCW polygon
        const Vec2 n0{d0.y, -d0.x};
        const Vec2 n1{d1.y, -d1.x};
        const Vec2 p0 = cur + c * n0;  // point on offset line of edge prev->cur
        const Vec2 p1 = cur + c * n1;
        const double denom = cross(d0, d1);
        if (std::abs(denom) < 1e-12) {
            out[i] = cur + c * n0;  // collinear edges
        } else {
            // intersection of p0 + t*d0 and p1 + s*d1
            const double t = cross(p1 - p0, d1) / denom;
            out[i] = p0 + t * d0;
        }
    }
    return out;
}

namespace {

std::vector<Vec2> transformed_peg(const ShapeSpec& shape, const PoseError& err) {
    Pose pose{err.dx, err.dy, 0.0, err.dtheta};
    std::vector<Vec2> out(shape.vertices.size());
    for (size_t i = 0; i < shape.vertices.size(); ++i)
        out[i] = transform_point(pose, shape.vertices[i]);
    return out;
}

}  // namespace

bool insertion_feasible(const ShapeSpec& shape, const PoseError& err,
                        double clearance_override_mm, double edge_step_mm) {
    if (!std::isfinite(err.dx) || !std::isfinite(err.dy) ||
        !std::isfinite(err.dtheta))
        throw std::invalid_argument("insertion_feasible: non-finite error");
    const double c =
        clearance_override_mm > 0.0 ? clearance_override_mm : shape.clearance_mm;
    const std::vector<Vec2> hole = dilate_polygon(shape.vertices, c);
    const std::vector<Vec2> peg = transformed_peg(shape, err);
    const size_t n = peg.size();
    for (size_t i = 0; i < n; ++i) {
        if (!point_in_polygon(hole, peg[i])) return false;
        const Vec2 a = peg[i];
        const Vec2 b = peg[(i + 1) % n];
        const double len = std::hypot(b.x - a.x, b.y - a.y);
        const int steps = static_cast<int>(std::floor(len / edge_step_mm));
        for (int k = 1; k < steps; ++k) {
            const double t = static_cast<double>(k) / steps;
            if (!point_in_polygon(hole, a + t * (b - a))) return false;
        }
    }
    return true;
}

bool insertion_feasible_brute(const ShapeSpec& shape, const PoseError& err,
                              double clearance_override_mm, double step_mm) {
    const double c =
        clearance_override_mm > 0.0 ? clearance_override_mm : shape.clearance_mm;
    const std::vector<Vec2> hole = dilate_polygon(shape.vertices, c);
    const std::vector<Vec2> peg = transformed_peg(shape, err);
    const size_t n = peg.size();
    for (size_t i = 0; i < n; ++i) {
        const Vec2 a = peg[i];
        const Vec2 b = peg[(i + 1) % n];
        const double len = std::hypot(b.x - a.x, b.y - a.y);
        const int steps = std::max(1, static_cast<int>(std::ceil(len / step_mm)));
        for (int k = 0; k < steps; ++k) {
            const double t = static_cast<double>(k) / steps;
            if (!point_in_polygon(hole, a + t * (b - a))) return false;
        }
    }
    return true;
}

double ShapeSpec::bounding_radius() const {
    double r = 0.0;
    for (const Vec2& v : vertices) r = std::max(r, std::hypot(v.x, v.y));
    return r;
}

void validate_shape(const ShapeSpec& shape) {
    if (shape.vertices.size() < 3)
        throw std::invalid_argument(shape.name + ": fewer than 3 vertices");
    if (!polygon_is_simple(shape.vertices))
        throw std::invalid_argument(shape.name + ": polygon is not simple");
    if (!polygon_is_ccw(shape.vertices))
        throw std::invalid_argument(shape.name + ": polygon is not CCW");
    Vec2 cen = polygon_centroid(shape.vertices);
    if (std::abs(cen.x) > 1e-9 || std::abs(cen.y) > 1e-9)
        throw std::invalid_argument(shape.name + ": centroid not at origin");
    if (!(shape.clearance_mm > 0.0))
        throw std::invalid_argument(shape.name + ": clearance must be positive");
}

namespace {

std::vector<Vec2> recenter(std::vector<Vec2> v) {
    Vec2 c = polygon_centroid(v);
    for (Vec2& p : v) p = p - c;
    return v;
}

std::vector<Vec2> regular_ngon(int n, double circumradius, double phase_deg = 90.0) {
    std::vector<Vec2> v(n);
    for (int i = 0; i < n; ++i) {
        double a = deg_to_rad(phase_deg + 360.0 * i / n);
        v[i] = {circumradius * std::cos(a), circumradius * std::sin(a)};
    }
    return v;
}

ShapeSpec make_shape(std::string name, std::vector<Vec2> verts, Split split,
                     double clearance = 0.6) {
    ShapeSpec s;
    s.name = std::move(name);
    s.vertices = recenter(std::move(verts));
    s.clearance_mm = clearance;
    s.split = split;
    validate_shape(s);
    return s;
}

std::vector<ShapeSpec> build_seen() {
    std::vector<ShapeSpec> out;
    // square 20x20
    out.push_back(make_shape(
        "square",
        {{-10, -10}, {10, -10}, {10, 10}, {-10, 10}}, Split::seen));
    // equilateral triangle, side 24
    {
        const double r = 24.0 / std::sqrt(3.0);
        out.push_back(make_shape("triangle", regular_ngon(3, r), Split::seen));
    }
    // regular pentagon, circumradius 12
    out.push_back(make_shape("pentagon", regular_ngon(5, 12.0), Split::seen));
    // plus cross: two 8x24 bars
    out.push_back(make_shape(
        "cross",
        {{-4, -12}, {4, -12}, {4, -4},  {12, -4}, {12, 4},  {4, 4},
         {4, 12},  {-4, 12}, {-4, 4},  {-12, 4}, {-12, -4}, {-4, -4}},
        Split::seen));
    return out;
}

std::vector<ShapeSpec> build_unseen() {
    std::vector<ShapeSpec> out;
    out.push_back(make_shape("hexagon", regular_ngon(6, 12.0), Split::unseen));
    // L: 20x20 outer with a 10x10 notch removed
    out.push_back(make_shape(
        "l_shape",
        {{-10, -10}, {10, -10}, {10, 0}, {0, 0}, {0, 10}, {-10, 10}},
        Split::unseen));
    // T: 24x8 top bar with an 8x14 stem
    out.push_back(make_shape(
        "t_shape",
        {{-4, -14}, {4, -14}, {4, 0}, {12, 0}, {12, 8}, {-12, 8}, {-12, 0}, {-4, 0}},
        Split::unseen));
    // U channel: 20x16 outer with an 8x10 slot from the top
    out.push_back(make_shape(
        "u_channel",
        {{-10, -8}, {10, -8}, {10, 8}, {4, 8}, {4, -2}, {-4, -2}, {-4, 8}, {-10, 8}},
        Split::unseen));
    // isosceles trapezoid, bases 24/14, height 16
    out.push_back(make_shape(
        "trapezoid", {{-12, -8}, {12, -8}, {7, 8}, {-7, 8}}, Split::unseen));
    // 5-point star, outer 14 / inner 7
    {
        std::vector<Vec2> v;
        for (int i = 0; i < 5; ++i) {
            double a0 = deg_to_rad(90.0 + 72.0 * i);
            double a1 = deg_to_rad(90.0 + 72.0 * i + 36.0);
            v.push_back({14.0 * std::cos(a0), 14.0 * std::sin(a0)});
            v.push_back({7.0 * std::cos(a1), 7.0 * std::sin(a1)});
        }
        out.push_back(make_shape("star", v, Split::unseen));
    }
    // rounded square: 20x20 with 45-degree corner cuts of depth 3
    out.push_back(make_shape(
        "fillet_square",
        {{-7, -10}, {7, -10}, {10, -7}, {10, 7}, {7, 10}, {-7, 10}, {-10, 7}, {-10, -7}},
        Split::unseen));
    // keyed circle: 16-gon of radius 11 with a rectangular key notch cut
    // into the +x side between the two vertices nearest the x axis
    {
        std::vector<Vec2> v = regular_ngon(16, 11.0, 11.25);
        const Vec2 lower = v.back();   // at -11.25 deg
        const Vec2 upper = v.front();  // at +11.25 deg
        const double notch_depth = 5.0;
        v.push_back({lower.x - notch_depth, lower.y});
        v.push_back({upper.x - notch_depth, upper.y});
        out.push_back(make_shape("keyed_circle", v, Split::unseen));
    }
    return out;
}

}  // namespace

const std::vector<ShapeSpec>& seen_shapes() {
    static const std::vector<ShapeSpec> shapes = build_seen();
    return shapes;
}

const std::vector<ShapeSpec>& unseen_shapes() {
    static const std::vector<ShapeSpec> shapes = build_unseen();
    return shapes;
}

const std::vector<ShapeSpec>& all_shapes() {
    static const std::vector<ShapeSpec> shapes = [] {
        std::vector<ShapeSpec> v = seen_shapes();
        const auto& u = unseen_shapes();
        v.insert(v.end(), u.begin(), u.end());
        return v;
    }();
    return shapes;
}

const ShapeSpec& shape_by_name(const std::string& name) {
    for (const ShapeSpec& s : all_shapes())
        if (s.name == name) return s;
    throw std::invalid_argument("unknown shape: " + name);
}

std::string shape_to_json(const ShapeSpec& shape) {
    nlohmann::json j;
    j["name"] = shape.name;
    j["vertices"] = nlohmann::json::array();
    for (const Vec2& v : shape.vertices) j["vertices"].push_back({v.x, v.y});
    j["clearance_mm"] = shape.clearance_mm;
    j["split"] = shape.split == Split::seen ? "seen" : "unseen";
    return j.dump(2);
}

ShapeSpec shape_from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    ShapeSpec s;
    s.name = j.at("name").get<std::string>();
    for (const auto& v : j.at("vertices"))
        s.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    s.clearance_mm = j.at("clearance_mm").get<double>();
    const std::string split = j.at("split").get<std::string>();
    if (split == "seen") s.split = Split::seen;
    else if (split == "unseen") s.split = Split::unseen;
    else throw std::invalid_argument("bad split: " + split);
    validate_shape(s);
    return s;
}

}  // namespace peghole::geometry
