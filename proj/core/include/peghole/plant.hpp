#pragma once

#include <array>
#include <string>
#include <vector>

#include "peghole/geometry.hpp"

namespace peghole::plant {

// Task space is (x, y, z, yaw); joints are three planar revolutes, a
// prismatic z axis, and a wrist yaw.
inline constexpr int kTaskDims = 4;
inline constexpr int kJointDims = 5;

using TaskVec = std::array<double, kTaskDims>;
using JointVec = std::array<double, kJointDims>;

struct ControllerGains {
    double k_pm = 20.0;   // motion proportional
    double k_vm = 5.0;    // motion reference-rate feedforward
    double k_pf = 0.004;  // force proportional
    double k_if = 1.0;    // force integral
    double f_d = 10.0;    // desired contact force, N

    void validate() const;
};

// Diagonal 0/1 split of the task axes: motion on {x, y, yaw}, force on {z}.
struct SelectionMatrix {
    std::array<double, kTaskDims> diag{1.0, 1.0, 0.0, 1.0};

    TaskVec motion(const TaskVec& v) const;
    TaskVec force(const TaskVec& v) const;  // complement
};

struct ArmGeometry {
    double l1 = 300.0;  // mm
    double l2 = 250.0;
    double l3 = 50.0;          // tool plate
    double base_x = -400.0;    // places the workspace over the hole region
    double base_y = 0.0;
    double revolute_limit = geometry::deg_to_rad(170.0);
    double z_min = -20.0, z_max = 50.0;
    double z_rate_limit = 2.5;        // mm/s, bounds the contact-entry speed
    double revolute_rate_limit = 2.0; // rad/s
};

struct PlantState {
    JointVec q{};      // q0..q2 rad, q3 mm (z), q4 rad (wrist)
    JointVec qd{};     // joint velocities
    double contact_depth = 0.0;  // mm, >= 0 while pressing
};

struct ContactParams {
    double stiffness = 5.0;  // N/mm
    double damping = 4.0;    // N*s/mm, resists penetration only
};

geometry::Pose forward_kinematics(const ArmGeometry& arm, const JointVec& q);

// Deterministic inverse kinematics (elbow-down, tool plate at zero yaw).
// Throws if the target is out of reach or beyond joint limits.
JointVec inverse_kinematics(const ArmGeometry& arm, const geometry::Pose& pose);

// 4x5 task Jacobian. Throws on a singular planar block
// (|l1*l2*sin(q1)| < 1e-9, the straight/folded arm).
struct Jacobian {
    std::array<std::array<double, kJointDims>, kTaskDims> j;

    TaskVec apply(const JointVec& dq) const;
    JointVec apply_transpose(const TaskVec& f) const;
    // minimum-norm resolved-rate inverse: J^T (J J^T)^{-1} v
    JointVec pseudo_solve(const TaskVec& v) const;
};

Jacobian jacobian(const ArmGeometry& arm, const JointVec& q);

// Finite-difference Jacobian; test oracle for the analytic one.
Jacobian jacobian_fd(const ArmGeometry& arm, const JointVec& q, double h = 1e-6);

// PD motion law on the selected axes. a_t is the commanded task displacement
// for the current macro step, measured from the step's start pose;
// a_t_rate is its reference rate (zero for held steps).
JointVec motion_control(const ArmGeometry& arm, const PlantState& state,
                        const JointVec& q_step_start, const TaskVec& a_t,
                        const TaskVec& a_t_rate, const ControllerGains& gains,
                        const SelectionMatrix& sel);

// PI constant-force law on the complement axes. e_f integrates outside.
JointVec force_control(const ArmGeometry& arm, const PlantState& state,
                       const TaskVec& measured_force, double integral_z,
                       const ControllerGains& gains, const SelectionMatrix& sel);

// Compliant normal contact: spring-damper below the surface while the planar
// pose is infeasible; zero once insertion is feasible (the peg slides in).
TaskVec contact_force(const geometry::ShapeSpec& shape, const geometry::Pose& peg,
                      const geometry::Pose& hole, double zdot,
                      const ContactParams& contact,
                      double clearance_override_mm = -1.0);

// Kinematic integration: qd := u (rate-limited), q += qd * dt, limits clamped.
PlantState step_plant(const ArmGeometry& arm, const PlantState& state,
                      const JointVec& u, double dt);

// One settle window of the hybrid loop: motion control tracks a task-space
// displacement while force control presses. Returns the trajectory's states.
struct HybridResult {
    PlantState state;
    double force_integral = 0.0;
    std::vector<double> fz_history;  // per substep
};

struct HybridSetup {
    ArmGeometry arm;
    ControllerGains gains;
    SelectionMatrix sel;
    ContactParams contact;
    double dt = 0.01;
    double integral_clamp = 50.0;
};

HybridResult run_hybrid(const HybridSetup& setup, const PlantState& start,
                        double force_integral, const geometry::ShapeSpec& shape,
                        const geometry::Pose& hole, const TaskVec& displacement,
                        double duration_s, double clearance_override_mm = -1.0);

// Trajectory dump row: t, q0..q4, x, y, z, yaw, fz, phase.
std::string trajectory_csv_header();

}  // namespace peghole::plant
