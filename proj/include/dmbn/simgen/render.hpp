#pragma once

#include <algorithm>
#include <cmath>

#include "dmbn/numcore/tensor.hpp"
#include "dmbn/simgen/scene.hpp"

namespace dmbn::sim {

using Image = nc::Tensor<float>;  // (3, H, W), values in [0, 1]

namespace detail {

inline double segment_distance(PixelPoint p, PixelPoint a, PixelPoint b) {
    const double vx = b.col - a.col, vy = b.row - a.row;
    const double wx = p.col - a.col, wy = p.row - a.row;
    const double len2 = vx * vx + vy * vy;
    double s = len2 > 0.0 ? (wx * vx + wy * vy) / len2 : 0.0;
    s = std::clamp(s, 0.0, 1.0);
    return std::hypot(wx - s * vx, wy - s * vy);
}

inline void put(Image& img, int row, int col, const Rgb& c) {
    for (int ch = 0; ch < 3; ++ch) img.at(ch, row, col) = c[ch];
}

inline void stroke(Image& img, PixelPoint a, PixelPoint b, double half_width, const Rgb& c) {
    const int n = world::kImageSize;
    const int r0 = std::max(0, static_cast<int>(std::floor(std::min(a.row, b.row) - half_width)));
    const int r1 = std::min(n - 1, static_cast<int>(std::ceil(std::max(a.row, b.row) + half_width)));
    const int c0 = std::max(0, static_cast<int>(std::floor(std::min(a.col, b.col) - half_width)));
    const int c1 = std::min(n - 1, static_cast<int>(std::ceil(std::max(a.col, b.col) + half_width)));
    for (int r = r0; r <= r1; ++r) {
        for (int col = c0; col <= c1; ++col) {
            if (segment_distance({static_cast<double>(col), static_cast<double>(r)}, a, b) <= half_width) {
                put(img, r, col, c);
            }
        }
    }
}

inline void disk(Image& img, PixelPoint center, double radius_px, const Rgb& c) {
    const int n = world::kImageSize;
    const int r0 = std::max(0, static_cast<int>(std::floor(center.row - radius_px)));
    const int r1 = std::min(n - 1, static_cast<int>(std::ceil(center.row + radius_px)));
    const int c0 = std::max(0, static_cast<int>(std::floor(center.col - radius_px)));
    const int c1 = std::min(n - 1, static_cast<int>(std::ceil(center.col + radius_px)));
    for (int r = r0; r <= r1; ++r) {
        for (int col = c0; col <= c1; ++col) {
            if (std::hypot(col - center.col, r - center.row) <= radius_px) put(img, r, col, c);
        }
    }
}

}  // namespace detail

// Rasterizes one frame. Paint order: table, base, arm links, gripper, object.
inline Image render_frame(const SceneState& scene, Viewpoint view = Viewpoint::own, Occlusion occlusion = Occlusion::none) {
    const int n = world::kImageSize;
    Image img(nc::Shape{3, n, n});
    const PixelPoint lo = project({-world::kTableHalf, world::kTableHalf}, Viewpoint::own);
    const PixelPoint hi = project({world::kTableHalf, -world::kTableHalf}, Viewpoint::own);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const bool on_table = r >= lo.row && r <= hi.row && c >= lo.col && c <= hi.col;
            detail::put(img, r, c, on_table ? world::kTable : world::kBackground);
        }
    }

    const ArmPoints arm = forward_kinematics(scene.theta1, scene.theta2, world::kArmGeometry, scene.base);
    const PixelPoint base_px = project(scene.base.position, view);
    const PixelPoint elbow_px = project(arm.elbow, view);
    const PixelPoint tip_px = project(arm.tip, view);

    // hide-arm leaves only the hand: links and base are both suppressed.
    if (occlusion == Occlusion::none) {
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                if (std::abs(r - base_px.row) <= world::kBaseHalfPx && std::abs(c - base_px.col) <= world::kBaseHalfPx) {
                    detail::put(img, r, c, world::kBase);
                }
            }
        }
    }
    if (occlusion != Occlusion::hide_arm) {
        detail::stroke(img, base_px, elbow_px, world::kLinkHalfWidthPx, world::kArm);
        detail::stroke(img, elbow_px, tip_px, world::kLinkHalfWidthPx, world::kArm);
    }

    // Fingers splay symmetrically about the forearm; fully open is +-90 deg.
    const double forearm = scene.base.heading + scene.theta1 + scene.theta2;
    const double spread = std::clamp(scene.aperture, 0.0, 1.0) * std::numbers::pi / 2.0;
    for (double side : {-1.0, 1.0}) {
        const Vec2 end = arm.tip + direction(forearm + side * spread) * world::kFingerLength;
        detail::stroke(img, tip_px, project(end, view), world::kFingerHalfWidthPx, world::kGripper);
    }

    detail::disk(img, project(scene.object, view), scene.object_radius * world::kPixelsPerUnit, scene.object_color);
    return img;
}

// Number of pixels within `tol` (max abs channel difference) of `color`.
inline int count_color(const Image& img, const Rgb& color, float tol = 0.05f) {
    const int h = img.dim(1), w = img.dim(2);
    int count = 0;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            bool match = true;
            for (int ch = 0; ch < 3 && match; ++ch) match = std::abs(img.at(ch, r, c) - color[ch]) <= tol;
            count += match ? 1 : 0;
        }
    }
    return count;
}

}  // namespace dmbn::sim
