#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dmbn/error.hpp"
#include "dmbn/numcore/parameter.hpp"

namespace dmbn::nc {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adam with bias correction. Moments are keyed by position in the
// ParameterSet, so the set must not change between steps.
template <typename T>
struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<Tensor<T>> first_moment;
    std::vector<Tensor<T>> second_moment;

    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : config(cfg) {}
};

// Applies one update using each parameter's grad buffer. Any non-finite
// gradient aborts before a single parameter is touched.
template <typename T>
void adam_step(AdamState<T>& state, ParameterSet<T>& params) {
    for (const auto& p : params) {
        if (!p.trainable) continue;
        if (!p.grad.same_shape(p.value)) throw ShapeError("adam_step: gradient shape mismatch for '" + p.name + "'");
        if (!Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(p.grad.data(), p.grad.size()).allFinite()) {
            throw NumericalError("adam_step: non-finite gradient in parameter '" + p.name + "' at step " +
                                 std::to_string(state.step + 1));
        }
    }
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.value.shape());
            state.second_moment.emplace_back(p.value.shape());
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, model has " + std::to_string(params.size()));
    }
    state.step += 1;
    const auto& c = state.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
    const T step_size = static_cast<T>(c.learning_rate / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(c.epsilon);
    const T tiny = std::numeric_limits<T>::min();
    std::size_t k = 0;
    for (auto& p : params) {
        auto& m = state.first_moment[k];
        auto& v = state.second_moment[k];
        ++k;
        if (!m.same_shape(p.value)) throw ShapeError("adam_step: moment shape mismatch for '" + p.name + "'");
        if (!p.trainable) continue;
        using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
        const auto n = static_cast<Eigen::Index>(p.value.size());
        Eigen::Map<const Arr> g(p.grad.data(), n);
        Eigen::Map<Arr> mm(m.data(), n), vv(v.data(), n), w(p.value.data(), n);
        mm = b1 * mm + (T(1) - b1) * g;
        vv = b2 * vv + (T(1) - b2) * g * g;
        // Moments of idle parameters decay into subnormals, which are very
        // slow on x86; they are flushed to zero instead.
        mm = (mm.abs() < tiny).select(T(0), mm);
        vv = (vv < tiny).select(T(0), vv);
        w -= step_size * mm / (vv.sqrt() * inv_sqrt_bc2 + eps);
    }
}

}  // namespace dmbn::nc
