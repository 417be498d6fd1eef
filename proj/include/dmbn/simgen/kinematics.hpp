#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dmbn/error.hpp"

namespace dmbn::sim {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
    Vec2 unit() const {
        const double n = norm();
        return {x / n, y / n};
    }
    Vec2 rotated(double angle) const {
        const double c = std::cos(angle), s = std::sin(angle);
        return {c * x - s * y, s * x + c * y};
    }
    friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline Vec2 direction(double angle) { return {std::cos(angle), std::sin(angle)}; }

struct Pose2 {
    Vec2 position;
    double heading = 0.0;

    Vec2 to_world(Vec2 local) const { return position + local.rotated(heading); }
    Vec2 to_local(Vec2 world) const { return (world - position).rotated(-heading); }
    friend bool operator==(const Pose2&, const Pose2&) = default;
};

struct ArmGeometry {
    double upper = 0.6;  // L1
    double fore = 0.6;   // L2
};

struct ArmPoints {
    Vec2 elbow;
    Vec2 tip;
};

inline ArmPoints forward_kinematics(double theta1, double theta2, const ArmGeometry& arm, const Pose2& base = {}) {
    const Vec2 elbow = direction(theta1) * arm.upper;
    const Vec2 tip = elbow + direction(theta1 + theta2) * arm.fore;
    return {base.to_world(elbow), base.to_world(tip)};
}

class IkError : public ValueError {
   public:
    using ValueError::ValueError;
};

struct JointAngles {
    double theta1 = 0.0;
    double theta2 = 0.0;
};

inline constexpr double kIkTolerance = 1e-6;

// Elbow-up solution (theta2 <= 0) for a target in the base frame. Targets
// within kIkTolerance of the outer boundary snap to full extension.
inline JointAngles inverse_kinematics(Vec2 target, const ArmGeometry& arm) {
    const double d = target.norm();
    const double inner = std::abs(arm.upper - arm.fore) + kIkTolerance;
    const double outer = arm.upper + arm.fore;
    if (d < inner || d > outer + kIkTolerance || !std::isfinite(d)) {
        std::ostringstream os;
        os << "inverse_kinematics: target distance " << d << " outside reachable annulus [" << inner << ", "
           << outer - kIkTolerance << "]";
        throw IkError(os.str());
    }
    double c2 = (d * d - arm.upper * arm.upper - arm.fore * arm.fore) / (2.0 * arm.upper * arm.fore);
    c2 = std::clamp(c2, -1.0, 1.0);
    const double theta2 = -std::acos(c2);
    const double theta1 =
        std::atan2(target.y, target.x) - std::atan2(arm.fore * std::sin(theta2), arm.upper + arm.fore * std::cos(theta2));
    return {theta1, theta2};
}

}  // namespace dmbn::sim
