#include "peghole/plant.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace peghole::plant {

using geometry::Pose;

void ControllerGains::validate() const {
    if (!(k_pm > 0 && k_vm > 0 && k_pf > 0 && k_if > 0 && f_d > 0))
        throw std::invalid_argument("controller gains must be positive");
}

TaskVec SelectionMatrix::motion(const TaskVec& v) const {
    TaskVec out{};
    for (int i = 0; i < kTaskDims; ++i) out[i] = diag[i] * v[i];
    return out;
}

TaskVec SelectionMatrix::force(const TaskVec& v) const {
    TaskVec out{};
    for (int i = 0; i < kTaskDims; ++i) out[i] = (1.0 - diag[i]) * v[i];
    return out;
}

Pose forward_kinematics(const ArmGeometry& arm, const JointVec& q) {
    const double a01 = q[0] + q[1];
    const double a012 = a01 + q[2];
    const double x = arm.base_x + arm.l1 * std::cos(q[0]) +
                     arm.l2 * std::cos(a01) + arm.l3 * std::cos(a012);
    const double y = arm.base_y + arm.l1 * std::sin(q[0]) +
                     arm.l2 * std::sin(a01) + arm.l3 * std::sin(a012);
    return {x, y, q[3], geometry::normalize_deg((a012 + q[4]) * 180.0 / M_PI)};
}

JointVec inverse_kinematics(const ArmGeometry& arm, const Pose& pose) {
    // wrist center with the tool plate held at zero world angle
    const double wx = pose.x - arm.base_x - arm.l3;
    const double wy = pose.y - arm.base_y;
    const double r2 = wx * wx + wy * wy;
    const double r = std::sqrt(r2);
    if (r > arm.l1 + arm.l2 - 1e-9 || r < std::abs(arm.l1 - arm.l2) + 1e-9)
        throw std::invalid_argument("pose out of reach");
    const double cos_q1 =
        (r2 - arm.l1 * arm.l1 - arm.l2 * arm.l2) / (2.0 * arm.l1 * arm.l2);
    const double q1 = std::acos(std::clamp(cos_q1, -1.0, 1.0));  // elbow down
    const double q0 = std::atan2(wy, wx) -
                      std::atan2(arm.l2 * std::sin(q1), arm.l1 + arm.l2 * std::cos(q1));
    const double q2 = -(q0 + q1);  // plate at zero world angle
    const double q4 = geometry::deg_to_rad(pose.yaw);
    JointVec q{q0, q1, q2, pose.z, q4};
    for (int i : {0, 1, 2})
        if (std::abs(q[i]) > arm.revolute_limit)
            throw std::invalid_argument("inverse kinematics beyond joint limits");
    if (pose.z < arm.z_min || pose.z > arm.z_max)
        throw std::invalid_argument("z outside prismatic range");
    return q;
}

TaskVec Jacobian::apply(const JointVec& dq) const {
    TaskVec out{};
    for (int r = 0; r < kTaskDims; ++r)
        for (int c = 0; c < kJointDims; ++c) out[r] += j[r][c] * dq[c];
    return out;
}

JointVec Jacobian::apply_transpose(const TaskVec& f) const {
    JointVec out{};
    for (int c = 0; c < kJointDims; ++c)
        for (int r = 0; r < kTaskDims; ++r) out[c] += j[r][c] * f[r];
    return out;
}

namespace {

// solve the 4x4 system A x = b by partial-pivot elimination
std::array<double, 4> solve4(std::array<std::array<double, 4>, 4> a,
                             std::array<double, 4> b) {
    for (int col = 0; col < 4; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 4; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        if (std::abs(a[pivot][col]) < 1e-12)
            throw std::runtime_error("singular task-space metric");
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (int r = col + 1; r < 4; ++r) {
            const double f = a[r][col] / a[col][col];
            for (int c = col; c < 4; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::array<double, 4> x{};
    for (int r = 3; r >= 0; --r) {
        double acc = b[r];
        for (int c = r + 1; c < 4; ++c) acc -= a[r][c] * x[c];
        x[r] = acc / a[r][r];
    }
    return x;
}

}  // namespace

JointVec Jacobian::pseudo_solve(const TaskVec& v) const {
    std::array<std::array<double, 4>, 4> jjt{};
    for (int r = 0; r < kTaskDims; ++r)
        for (int c = 0; c < kTaskDims; ++c)
            for (int k = 0; k < kJointDims; ++k) jjt[r][c] += j[r][k] * j[c][k];
    const std::array<double, 4> lambda = solve4(jjt, {v[0], v[1], v[2], v[3]});
    return apply_transpose({lambda[0], lambda[1], lambda[2], lambda[3]});
}

Jacobian jacobian(const ArmGeometry& arm, const JointVec& q) {
    const double planar_det = arm.l1 * arm.l2 * std::sin(q[1]);
    if (std::abs(planar_det) < 1e-9)
        throw std::runtime_error("singular configuration (straight/folded arm)");
    const double s0 = std::sin(q[0]), c0 = std::cos(q[0]);
    const double s01 = std::sin(q[0] + q[1]), c01 = std::cos(q[0] + q[1]);
    const double s012 = std::sin(q[0] + q[1] + q[2]);
    const double c012 = std::cos(q[0] + q[1] + q[2]);
    Jacobian out{};
    // x row
    out.j[0] = {-arm.l1 * s0 - arm.l2 * s01 - arm.l3 * s012,
                -arm.l2 * s01 - arm.l3 * s012, -arm.l3 * s012, 0.0, 0.0};
    // y row
    out.j[1] = {arm.l1 * c0 + arm.l2 * c01 + arm.l3 * c012,
                arm.l2 * c01 + arm.l3 * c012, arm.l3 * c012, 0.0, 0.0};
    // z row: the prismatic joint alone
    out.j[2] = {0.0, 0.0, 0.0, 1.0, 0.0};
    // yaw row (radians)
    out.j[3] = {1.0, 1.0, 1.0, 0.0, 1.0};
    return out;
}

Jacobian jacobian_fd(const ArmGeometry& arm, const JointVec& q, double h) {
    Jacobian out{};
    for (int c = 0; c < kJointDims; ++c) {
        JointVec qp = q, qm = q;
        qp[c] += h;
        qm[c] -= h;
        const Pose pp = forward_kinematics(arm, qp);
        const Pose pm = forward_kinematics(arm, qm);
        out.j[0][c] = (pp.x - pm.x) / (2 * h);
        out.j[1][c] = (pp.y - pm.y) / (2 * h);
        out.j[2][c] = (pp.z - pm.z) / (2 * h);
        out.j[3][c] = geometry::deg_to_rad(geometry::normalize_deg(pp.yaw - pm.yaw)) / (2 * h);
    }
    return out;
}

JointVec motion_control(const ArmGeometry& arm, const PlantState& state,
                        const JointVec& q_step_start, const TaskVec& a_t,
                        const TaskVec& a_t_rate, const ControllerGains& gains,
                        const SelectionMatrix& sel) {
    const Pose start = forward_kinematics(arm, q_step_start);
    const Pose now = forward_kinematics(arm, state.q);
    const TaskVec displacement{
        now.x - start.x, now.y - start.y, now.z - start.z,
        geometry::deg_to_rad(geometry::normalize_deg(now.yaw - start.yaw))};
    TaskVec err{};
    for (int i = 0; i < kTaskDims; ++i) err[i] = a_t[i] - displacement[i];
    const Jacobian jac = jacobian(arm, state.q);
    const JointVec e_q = jac.pseudo_solve(sel.motion(err));
    const JointVec e_q_rate = jac.pseudo_solve(sel.motion(a_t_rate));
    JointVec u{};
    for (int i = 0; i < kJointDims; ++i)
        u[i] = gains.k_pm * e_q[i] + gains.k_vm * e_q_rate[i];
    return u;
}

JointVec force_control(const ArmGeometry& arm, const PlantState& state,
                       const TaskVec& measured_force, double integral_z,
                       const ControllerGains& gains, const SelectionMatrix& sel) {
    const TaskVec desired{0.0, 0.0, gains.f_d, 0.0};
    TaskVec e_f{};
    for (int i = 0; i < kTaskDims; ++i) e_f[i] = -(desired[i] - measured_force[i]);
    e_f = sel.force(e_f);
    TaskVec integral{0.0, 0.0, integral_z, 0.0};
    TaskVec term{};
    const TaskVec ff = sel.force(desired);
    for (int i = 0; i < kTaskDims; ++i)
        term[i] = gains.k_pf * e_f[i] + gains.k_if * integral[i] - ff[i];
    const Jacobian jac = jacobian(arm, state.q);
    return jac.apply_transpose(term);
}

TaskVec contact_force(const geometry::ShapeSpec& shape, const Pose& peg,
                      const Pose& hole, double zdot, const ContactParams& contact,
                      double clearance_override_mm) {
    TaskVec wrench{};
    if (peg.z >= 0.0) return wrench;
    const geometry::PoseError err = geometry::relative_error(peg, hole);
    if (geometry::insertion_feasible(shape, err, clearance_override_mm))
        return wrench;  // aligned: the peg slides in without resistance
    const double depth = -peg.z;
    const double inward = std::max(-zdot, 0.0);
    wrench[2] = contact.stiffness * depth + contact.damping * inward;
    return wrench;
}

PlantState step_plant(const ArmGeometry& arm, const PlantState& state,
                      const JointVec& u, double dt) {
    PlantState next = state;
    for (int i = 0; i < kJointDims; ++i) {
        double rate = u[i];
        const double limit = i == 3 ? arm.z_rate_limit : arm.revolute_rate_limit;
        rate = std::clamp(rate, -limit, limit);
        next.qd[i] = rate;
        next.q[i] += rate * dt;
    }
    for (int i : {0, 1, 2})
        next.q[i] = std::clamp(next.q[i], -arm.revolute_limit, arm.revolute_limit);
    next.q[3] = std::clamp(next.q[3], arm.z_min, arm.z_max);
    next.contact_depth = std::max(0.0, -next.q[3]);
    return next;
}

HybridResult run_hybrid(const HybridSetup& setup, const PlantState& start,
                        double force_integral, const geometry::ShapeSpec& shape,
                        const geometry::Pose& hole, const TaskVec& displacement,
                        double duration_s, double clearance_override_mm) {
    HybridResult out;
    out.state = start;
    out.force_integral = force_integral;
    const JointVec q_start = start.q;
    const int substeps = static_cast<int>(std::round(duration_s / setup.dt));
    const TaskVec zero_rate{};
    for (int k = 0; k < substeps; ++k) {
        const Pose pose = forward_kinematics(setup.arm, out.state.q);
        const double zdot = out.state.qd[3];
        const TaskVec f_t = contact_force(shape, pose, hole, zdot, setup.contact,
                                          clearance_override_mm);
        out.fz_history.push_back(f_t[2]);
        const JointVec u_m =
            motion_control(setup.arm, out.state, q_start, displacement, zero_rate,
                           setup.gains, setup.sel);
        const JointVec u_f = force_control(setup.arm, out.state, f_t,
                                           out.force_integral, setup.gains, setup.sel);
        JointVec u{};
        for (int i = 0; i < kJointDims; ++i) u[i] = u_m[i] + u_f[i];
        out.state = step_plant(setup.arm, out.state, u, setup.dt);
        // integrate the force error on the force axis, anti-windup clamped
        out.force_integral += (f_t[2] - setup.gains.f_d) * setup.dt;
        out.force_integral =
            std::clamp(out.force_integral, -setup.integral_clamp, setup.integral_clamp);
    }
    return out;
}

std::string trajectory_csv_header() {
    return "t,q0,q1,q2,q3,q4,x,y,z,yaw,fz,phase";
}

}  // namespace peghole::plant
