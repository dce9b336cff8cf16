#pragma once

#include <string>
#include <vector>

namespace peghole::geometry {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

// Planar task pose. z is the insertion axis (0 = hole surface plane),
// yaw in degrees, normalized to (-180, 180].
struct Pose {
    double x = 0.0;   // mm
    double y = 0.0;   // mm
    double z = 0.0;   // mm
    double yaw = 0.0; // deg
};

// Peg pose minus hole pose, expressed in the hole frame.
struct PoseError {
    double dx = 0.0;     // mm
    double dy = 0.0;     // mm
    double dtheta = 0.0; // deg
};

enum class Split { seen, unseen };

// A peg outline as a simple CCW polygon centered at its centroid (mm),
// with the radial clearance of its matching hole.
struct ShapeSpec {
    std::string name;
    std::vector<Vec2> vertices;
    double clearance_mm = 0.6;
    Split split = Split::seen;

    double bounding_radius() const;
};

double normalize_deg(double deg);
double deg_to_rad(double deg);

Vec2 transform_point(const Pose& pose, Vec2 p);
Pose inverse(const Pose& pose);
// Composition a*b: apply b first, then a.
Pose compose(const Pose& a, const Pose& b);
PoseError relative_error(const Pose& peg, const Pose& hole);

// Polygon utilities (simple polygons, vertices in order).
double polygon_area(const std::vector<Vec2>& poly);          // signed, CCW > 0
Vec2 polygon_centroid(const std::vector<Vec2>& poly);
double polygon_perimeter(const std::vector<Vec2>& poly);
bool polygon_is_simple(const std::vector<Vec2>& poly);
bool polygon_is_ccw(const std::vector<Vec2>& poly);
bool point_in_polygon(const std::vector<Vec2>& poly, Vec2 p);
// Outward offset by c with mitered corners. Valid for the small offsets
// used here (c well below the feature size).
std::vector<Vec2> dilate_polygon(const std::vector<Vec2>& poly, double c);

// Peg vertices (plus edge samples every `edge_step` mm) transformed by err
// must lie inside the hole polygon = peg outline dilated by clearance.
bool insertion_feasible(const ShapeSpec& shape, const PoseError& err,
                        double clearance_override_mm = -1.0,
                        double edge_step_mm = 0.25);

// Exhaustive reference check: samples the whole peg boundary at `step` mm.
// Test oracle; independent of the sampling strategy above.
bool insertion_feasible_brute(const ShapeSpec& shape, const PoseError& err,
                              double clearance_override_mm = -1.0,
                              double step_mm = 0.01);

// Fixed shape libraries: 4 training shapes, 8 evaluation-only shapes.
const std::vector<ShapeSpec>& seen_shapes();
const std::vector<ShapeSpec>& unseen_shapes();
const std::vector<ShapeSpec>& all_shapes();
const ShapeSpec& shape_by_name(const std::string& name);

void validate_shape(const ShapeSpec& shape);  // throws on invariant breach

std::string shape_to_json(const ShapeSpec& shape);
ShapeSpec shape_from_json(const std::string& json_text);

}  // namespace peghole::geometry
