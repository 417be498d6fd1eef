#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dmbn/simgen/kinematics.hpp"
#include "dmbn/simgen/scene.hpp"

namespace dmbn::sim {

enum class Action : std::uint8_t { push = 0, grasp = 1 };

inline std::string_view to_string(Action a) { return a == Action::push ? "push" : "grasp"; }

inline Action parse_action(std::string_view s) {
    if (s == "push") return Action::push;
    if (s == "grasp" || s == "pull") return Action::grasp;
    throw ValueError("unknown action '" + std::string(s) + "'");
}

// Timeline of every interaction (step indices on the T = 50 grid).
namespace timeline {
inline constexpr int kSteps = 50;
inline constexpr int kReach = 20;       // tip at the approach point
inline constexpr int kContact = 30;     // tip touches (push) or encloses (grasp) the object
inline constexpr int kPreContact = 25;  // conditioning frame, just before contact
inline constexpr double kApproachOffset = 0.30;
inline constexpr double kPushContactOffset = world::kObjectRadius + 0.04;
inline constexpr double kDisplacement = 0.30;
inline constexpr double kHomeReach = 0.45;

inline double time_at(int step) { return static_cast<double>(step) / (kSteps - 1); }
}  // namespace timeline

// Minimum-jerk profile on [0, 1].
inline double min_jerk(double s) {
    s = std::clamp(s, 0.0, 1.0);
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

inline Vec2 home_tip(const Pose2& base) { return base.position + direction(base.heading) * timeline::kHomeReach; }

// Tip waypoints, gripper aperture and object position per step for one
// action. The object starts at the table centre; `approach` is the direction
// the tip travels when it meets the object.
struct PlannedStep {
    Vec2 tip;
    double aperture = 1.0;
    Vec2 object;
};

inline std::vector<PlannedStep> plan_waypoints(Action action, double approach, const Pose2& base) {
    using namespace timeline;
    const Vec2 center = world::kTableCenter;
    const Vec2 u = direction(approach);
    const Vec2 home = home_tip(base);
    const Vec2 reach = center - u * kApproachOffset;
    const Vec2 contact = action == Action::push ? center - u * kPushContactOffset : center;
    const Vec2 retract = (base.position - center).unit();

    std::vector<PlannedStep> steps(kSteps);
    for (int k = 0; k < kSteps; ++k) {
        PlannedStep& st = steps[k];
        st.object = center;
        st.aperture = 1.0;
        if (k <= kReach) {
            st.tip = home + (reach - home) * min_jerk(static_cast<double>(k) / kReach);
        } else if (k <= kContact) {
            const double s = min_jerk(static_cast<double>(k - kReach) / (kContact - kReach));
            st.tip = reach + (contact - reach) * s;
            if (action == Action::grasp) st.aperture = 1.0 - s;
        } else {
            const double s = min_jerk(static_cast<double>(k - kContact) / (kSteps - 1 - kContact));
            if (action == Action::push) {
                st.tip = contact + u * (kDisplacement * s);
                st.object = center + u * (kDisplacement * s);
            } else {
                st.tip = center + retract * (kDisplacement * s);
                st.object = st.tip;
                st.aperture = 0.0;
            }
        }
    }
    return steps;
}

// Full scene sequence. Throws IkError when any waypoint is unreachable, in
// which case the caller draws a new approach angle.
inline std::vector<SceneState> plan_action(Action action, double approach, const Pose2& base = world::kOwnBase) {
    const auto waypoints = plan_waypoints(action, approach, base);
    std::vector<SceneState> scenes;
    scenes.reserve(waypoints.size());
    for (const auto& wp : waypoints) {
        const JointAngles q = inverse_kinematics(base.to_local(wp.tip), world::kArmGeometry);
        SceneState s;
        s.theta1 = q.theta1;
        s.theta2 = q.theta2;
        s.aperture = wp.aperture;
        s.object = wp.object;
        s.base = base;
        scenes.push_back(normalized(s));
    }
    return scenes;
}

}  // namespace dmbn::sim
