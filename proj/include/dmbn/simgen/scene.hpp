#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "dmbn/error.hpp"
#include "dmbn/simgen/kinematics.hpp"

namespace dmbn::sim {

using Rgb = std::array<float, 3>;

// Fixed scene constants. Workspace units; the table is centred at the origin
// and the camera sees the square [-1, 1]^2 at 16 px per unit.
namespace world {
inline constexpr double kWorkspaceHalf = 1.5;
inline constexpr double kViewHalf = 1.0;
inline constexpr int kImageSize = 32;
inline constexpr double kPixelsPerUnit = kImageSize / (2.0 * kViewHalf);
inline constexpr double kTableHalf = 0.95;
inline constexpr double kObjectRadius = 0.12;
inline constexpr double kFingerLength = 0.15;
inline constexpr double kBaseHalfPx = 1.5;
inline constexpr double kLinkHalfWidthPx = 1.0;
inline constexpr double kFingerHalfWidthPx = 0.75;
inline constexpr Vec2 kTableCenter{0.0, 0.0};

inline constexpr Rgb kBackground{0.10f, 0.10f, 0.12f};
inline constexpr Rgb kTable{0.45f, 0.45f, 0.45f};
inline constexpr Rgb kArm{0.90f, 0.90f, 0.90f};
inline constexpr Rgb kGripper{0.20f, 0.85f, 0.30f};
inline constexpr Rgb kBase{0.70f, 0.15f, 0.15f};
inline constexpr Rgb kObject{0.95f, 0.80f, 0.10f};
inline constexpr Rgb kBlue{0.10f, 0.25f, 0.95f};

inline const Pose2 kOwnBase{{0.0, -0.85}, std::numbers::pi / 2.0};
inline const ArmGeometry kArmGeometry{0.6, 0.6};
}  // namespace world

struct SceneState {
    double theta1 = 0.0;
    double theta2 = 0.0;
    double aperture = 1.0;
    Vec2 object{0.0, 0.0};
    double object_radius = world::kObjectRadius;
    Rgb object_color = world::kObject;
    Pose2 base = world::kOwnBase;

    friend bool operator==(const SceneState&, const SceneState&) = default;
};

// Throws when the object leaves the workspace; clamps the aperture.
inline SceneState normalized(SceneState s) {
    if (std::abs(s.object.x) > world::kWorkspaceHalf || std::abs(s.object.y) > world::kWorkspaceHalf) {
        throw ValueError("scene: object outside workspace bounds");
    }
    s.aperture = std::clamp(s.aperture, 0.0, 1.0);
    return s;
}

// Replaces the object colour and/or radius, leaving everything else intact.
inline SceneState variant_scene(const SceneState& base, std::optional<Rgb> color = std::nullopt,
                                std::optional<double> radius = std::nullopt) {
    SceneState out = base;
    if (color) out.object_color = *color;
    if (radius) {
        if (!(*radius > 0.0) || *radius * world::kPixelsPerUnit > world::kImageSize / 4.0) {
            throw ValueError("variant_scene: radius " + std::to_string(*radius) + " outside render bounds");
        }
        out.object_radius = *radius;
    }
    return out;
}

enum class Viewpoint { own, opposite, left, right };
// hide-arm: only the gripper stays visible. hide-base: arm and gripper
// visible, base square removed.
enum class Occlusion { none, hide_arm, hide_base };

inline std::string_view to_string(Viewpoint v) {
    switch (v) {
        case Viewpoint::own: return "own";
        case Viewpoint::opposite: return "opposite";
        case Viewpoint::left: return "left";
        case Viewpoint::right: return "right";
    }
    return "?";
}

inline std::string_view to_string(Occlusion o) {
    switch (o) {
        case Occlusion::none: return "none";
        case Occlusion::hide_arm: return "hide-arm";
        case Occlusion::hide_base: return "hide-base";
    }
    return "?";
}

inline Viewpoint parse_viewpoint(std::string_view s) {
    if (s == "own") return Viewpoint::own;
    if (s == "opposite") return Viewpoint::opposite;
    if (s == "left") return Viewpoint::left;
    if (s == "right") return Viewpoint::right;
    throw ValueError("unknown viewpoint '" + std::string(s) + "'");
}

inline Occlusion parse_occlusion(std::string_view s) {
    if (s == "none") return Occlusion::none;
    if (s == "hide-arm") return Occlusion::hide_arm;
    if (s == "hide-base") return Occlusion::hide_base;
    throw ValueError("unknown occlusion '" + std::string(s) + "'");
}

// Rotation applied to scene points before projection. A viewpoint names
// where the acting agent appears to the camera: `left` puts its base on the
// left of the image, which is the world rotated by -pi/2 (the camera frame
// rotated by +pi/2).
inline double view_rotation(Viewpoint v) {
    switch (v) {
        case Viewpoint::own: return 0.0;
        case Viewpoint::opposite: return std::numbers::pi;
        case Viewpoint::left: return -std::numbers::pi / 2.0;
        case Viewpoint::right: return std::numbers::pi / 2.0;
    }
    return 0.0;
}

// Continuous pixel coordinates (column, row) of a world point; integer values
// are pixel centres.
struct PixelPoint {
    double col = 0.0;
    double row = 0.0;
};

inline PixelPoint project(Vec2 p, Viewpoint v = Viewpoint::own) {
    const Vec2 r = (p - world::kTableCenter).rotated(view_rotation(v)) + world::kTableCenter;
    const double half = world::kImageSize / 2.0;
    return {half + r.x * world::kPixelsPerUnit, half - r.y * world::kPixelsPerUnit};
}

}  // namespace dmbn::sim
