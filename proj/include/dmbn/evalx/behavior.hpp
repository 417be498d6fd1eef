#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dmbn/error.hpp"
#include "dmbn/model/dmbn.hpp"
#include "dmbn/simgen/dataset.hpp"

namespace dmbn::evalx {

enum class Behavior { egocentric, effect, none, incoherent };

inline std::string_view to_string(Behavior b) {
    switch (b) {
        case Behavior::egocentric: return "egocentric";
        case Behavior::effect: return "effect";
        case Behavior::none: return "none";
        case Behavior::incoherent: return "incoherent";
    }
    return "?";
}

struct BehaviorLabel {
    Behavior label = Behavior::none;
    double dx = 0.0;  // object displacement, pixel columns
    double dy = 0.0;  // pixel rows, downward positive
    double arm_pixels = 0.0;       // mean per frame
    int frames_without_object = 0;
    std::string reason;
};

// Calibration constants of the decision rule.
struct BehaviorRule {
    double min_displacement_px = 3.0;
    double cone_deg = 45.0;
    double arm_fraction = 0.25;
    float color_tolerance = 0.15f;
};

namespace detail {

inline bool near_color(const nc::Tensor<float>& frames, std::size_t frame, int r, int c, const sim::Rgb& color, float tol) {
    const int h = frames.dim(2), w = frames.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const float* f = frames.data() + frame * 3 * plane;
    for (int ch = 0; ch < 3; ++ch) {
        if (std::abs(f[ch * plane + static_cast<std::size_t>(r) * w + c] - color[ch]) > tol) return false;
    }
    return true;
}

// Centroid (col, row) of the largest 4-connected component of pixels near
// `color`; nullopt when there is none.
inline std::optional<std::array<double, 2>> blob_centroid(const nc::Tensor<float>& frames, std::size_t frame,
                                                          const sim::Rgb& color, float tol) {
    const int h = frames.dim(2), w = frames.dim(3);
    std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
    std::vector<int> stack;
    int best = 0;
    std::array<double, 2> best_c{};
    for (int start = 0; start < h * w; ++start) {
        if (label[start] >= 0 || !near_color(frames, frame, start / w, start % w, color, tol)) continue;
        int count = 0;
        double sc = 0.0, sr = 0.0;
        stack.assign(1, start);
        label[start] = start;
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            const int r = p / w, c = p % w;
            ++count;
            sc += c;
            sr += r;
            const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
            for (const auto& q : nb) {
                if (q[0] < 0 || q[0] >= h || q[1] < 0 || q[1] >= w) continue;
                const int idx = q[0] * w + q[1];
                if (label[idx] < 0 && near_color(frames, frame, q[0], q[1], color, tol)) {
                    label[idx] = start;
                    stack.push_back(idx);
                }
            }
        }
        if (count > best) {
            best = count;
            best_c = {sc / count, sr / count};
        }
    }
    if (best == 0) return std::nullopt;
    return best_c;
}

inline double angle_between(double ax, double ay, double bx, double by) {
    const double na = std::hypot(ax, ay), nb = std::hypot(bx, by);
    if (na == 0.0 || nb == 0.0) return std::numbers::pi;
    return std::acos(std::clamp((ax * bx + ay * by) / (na * nb), -1.0, 1.0));
}

}  // namespace detail

// Pixels of arm or gripper colour in one (3, H, W) frame slice of `frames`.
inline int arm_pixel_count(const nc::Tensor<float>& frames, std::size_t frame, float tol) {
    const int h = frames.dim(2), w = frames.dim(3);
    int n = 0;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            n += detail::near_color(frames, frame, r, c, sim::world::kArm, tol) ||
                 detail::near_color(frames, frame, r, c, sim::world::kGripper, tol);
        }
    }
    return n;
}

// Mean arm-pixel count over every frame of the given interactions.
inline double mean_arm_pixels(std::span<const sim::Interaction> pool, int image_stream, float tol) {
    double total = 0.0;
    std::size_t frames = 0;
    for (const auto& it : pool) {
        const auto& imgs = it.streams.at(static_cast<std::size_t>(image_stream));
        for (int k = 0; k < imgs.dim(0); ++k) total += arm_pixel_count(imgs, static_cast<std::size_t>(k), tol);
        frames += static_cast<std::size_t>(imgs.dim(0));
    }
    return frames ? total / static_cast<double>(frames) : 0.0;
}

// Labels a predicted image sequence (T, 3, H, W). `demo_dx/dy` is the
// demonstrated object motion projected into the own camera; the egocentric
// direction points from the object's start toward the own base.
inline BehaviorLabel classify_behavior(const nc::Tensor<float>& frames, double demo_dx, double demo_dy,
                                       double reference_arm_pixels, const BehaviorRule& rule = {},
                                       const sim::Rgb& object_color = sim::world::kObject) {
    if (frames.rank() != 4 || frames.dim(1) != 3 || frames.dim(0) < 2) {
        throw ShapeError("classify_behavior: expected (T >= 2, 3, H, W) frames, got " + nc::shape_str(frames.shape()));
    }
    const std::size_t n = static_cast<std::size_t>(frames.dim(0));
    BehaviorLabel out;
    std::vector<std::optional<std::array<double, 2>>> centroids(n);
    double arm = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        centroids[k] = detail::blob_centroid(frames, k, object_color, rule.color_tolerance);
        if (!centroids[k]) ++out.frames_without_object;
        arm += arm_pixel_count(frames, k, rule.color_tolerance);
    }
    out.arm_pixels = arm / static_cast<double>(n);
    if (2 * static_cast<std::size_t>(out.frames_without_object) >= n) {
        out.label = Behavior::incoherent;
        out.reason = "object missing in " + std::to_string(out.frames_without_object) + " of " + std::to_string(n) +
                     " frames";
        return out;
    }
    std::size_t first = 0, last = n - 1;
    while (!centroids[first]) ++first;
    while (!centroids[last]) --last;
    out.dx = (*centroids[last])[0] - (*centroids[first])[0];
    out.dy = (*centroids[last])[1] - (*centroids[first])[1];
    if (out.arm_pixels < rule.arm_fraction * reference_arm_pixels) {
        out.label = Behavior::incoherent;
        out.reason = "arm pixels below reference fraction";
        return out;
    }
    if (std::hypot(out.dx, out.dy) < rule.min_displacement_px) {
        out.label = Behavior::none;
        out.reason = "object static";
        return out;
    }
    const sim::PixelPoint base = sim::project(sim::world::kOwnBase.position);
    const double to_base_x = base.col - (*centroids[first])[0];
    const double to_base_y = base.row - (*centroids[first])[1];
    const double cone = rule.cone_deg * std::numbers::pi / 180.0;
    if (detail::angle_between(out.dx, out.dy, to_base_x, to_base_y) < cone) {
        out.label = Behavior::egocentric;
        out.reason = "object moves toward own base";
    } else if (detail::angle_between(out.dx, out.dy, demo_dx, demo_dy) < cone) {
        out.label = Behavior::effect;
        out.reason = "object moves with the demonstrated effect";
    } else {
        out.label = Behavior::incoherent;
        out.reason = "object motion matches neither direction";
    }
    return out;
}

struct Scenario {
    sim::Viewpoint viewpoint = sim::Viewpoint::opposite;
    sim::Occlusion occlusion = sim::Occlusion::none;
    sim::Action action = sim::Action::grasp;
    double approach = std::numbers::pi / 2.0;  // in the demonstrator's frame

    std::string name() const {
        return std::string(sim::to_string(viewpoint)) + "/" + std::string(sim::to_string(occlusion)) + "/" +
               std::string(action == sim::Action::grasp ? "pull" : "push");
    }
};

// Parses "viewpoint/occlusion/pull|push", the inverse of Scenario::name.
inline Scenario parse_scenario(std::string_view text) {
    const auto a = text.find('/');
    const auto b = a == std::string_view::npos ? a : text.find('/', a + 1);
    if (b == std::string_view::npos) throw ValueError("scenario '" + std::string(text) + "' is not view/occlusion/action");
    Scenario s;
    s.viewpoint = sim::parse_viewpoint(text.substr(0, a));
    s.occlusion = sim::parse_occlusion(text.substr(a + 1, b - a - 1));
    const std::string_view act = text.substr(b + 1);
    if (act == "pull") {
        s.action = sim::Action::grasp;
    } else if (act == "push") {
        s.action = sim::Action::push;
    } else {
        throw ValueError("scenario action must be pull or push, got '" + std::string(act) + "'");
    }
    return s;
}

// The two canonical cases: a demonstrator opposite and to the left pulls
// the object straight toward itself.
inline std::vector<Scenario> canonical_scenarios() {
    return {{sim::Viewpoint::opposite, sim::Occlusion::none, sim::Action::grasp, std::numbers::pi / 2.0},
            {sim::Viewpoint::left, sim::Occlusion::none, sim::Action::grasp, std::numbers::pi / 2.0}};
}

// Demonstration as seen by the own camera.
inline sim::Interaction render_demo(const Scenario& s) {
    return sim::simulate(s.action, s.approach, s.viewpoint, s.occlusion);
}

// World object displacement of the demonstration projected into the own
// camera, in pixels.
inline std::array<double, 2> demo_direction(const Scenario& s) {
    const auto scenes = sim::plan_action(s.action, s.approach);
    const sim::PixelPoint a = sim::project(scenes.front().object, s.viewpoint);
    const sim::PixelPoint b = sim::project(scenes.back().object, s.viewpoint);
    return {b.col - a.col, b.row - a.row};
}

struct MirrorResult {
    Scenario scenario;
    nc::Tensor<float> images;                 // (T, 3, H, W)
    std::optional<nc::Tensor<float>> joints;  // (T, J) when the model has a joint modality
    BehaviorLabel behavior;
};

// Conditions on the demonstration's pre-contact frame with only the image
// modality available and labels the predicted own-view trajectory.
template <typename T>
MirrorResult mirror_test(const model::Dmbn<T>& net, const Scenario& s, double reference_arm_pixels,
                         const BehaviorRule& rule = {}, int condition_step = sim::timeline::kPreContact) {
    const sim::Interaction demo = render_demo(s);
    const int img = net.spec().index_of("image");
    model::ObservationSet obs;
    obs.per_modality.resize(static_cast<std::size_t>(net.modality_count()));
    obs.per_modality[img].push_back({demo.times[condition_step], nc::take_row(demo.streams[0], condition_step)});
    std::vector<double> w(static_cast<std::size_t>(net.modality_count()), 0.0);
    w[img] = 1.0;
    const auto pred = model::predict_trajectory(net, obs, w, demo.times);
    MirrorResult out;
    out.scenario = s;
    out.images = nc::Tensor<float>::cast(pred[img].mean);
    for (int m = 0; m < net.modality_count(); ++m) {
        if (m != img && net.spec().modalities[m].name == "joint") out.joints = nc::Tensor<float>::cast(pred[m].mean);
    }
    const auto dir = demo_direction(s);
    out.behavior = classify_behavior(out.images, dir[0], dir[1], reference_arm_pixels, rule);
    return out;
}

}  // namespace dmbn::evalx
