#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dmbn/numcore.hpp"

namespace dmbn::check {

// Five-point central difference; its O(h^4) truncation error lets 32-bit
// checks use a step large enough to keep rounding noise small.
template <typename T, typename F>
double central_difference(T& x, double h, F&& f) {
    const T saved = x;
    auto at = [&](double d) {
        x = static_cast<T>(saved + d);
        return f();
    };
    const double v = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12.0 * h);
    x = saved;
    return v;
}

struct GradReport {
    double worst = 0.0;  // largest per-input relative error
    std::string where;
};

// Norm-wise relative error ||a - n|| / max(||a||, ||n||) between the tape
// gradient and a central difference, for every element of every input.
// `build` records a scalar loss from one Var per input.
template <typename T>
GradReport check_gradients(std::vector<nc::Tensor<T>> inputs,
                           const std::function<nc::Var(nc::Tape<T>&, const std::vector<nc::Var>&)>& build, double h) {
    nc::ParameterSet<T> params;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        params.add("in" + std::to_string(i), inputs[i].shape()).value = inputs[i];
    }
    auto eval = [&](bool grad) {
        nc::Tape<T> tp;
        std::vector<nc::Var> vars;
        for (auto& p : params) vars.push_back(tp.param(p));
        const nc::Var l = build(tp, vars);
        const double v = tp.value(l).item();
        if (grad) tp.backward(l);
        return v;
    };
    eval(true);
    GradReport rep;
    std::size_t idx = 0;
    for (auto& p : params) {
        const nc::Tensor<T> analytic = p.grad;
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            const double numeric = central_difference(p.value[k], h, [&] { return eval(false); });
            diff2 += (analytic[k] - numeric) * (analytic[k] - numeric);
            a2 += static_cast<double>(analytic[k]) * analytic[k];
            n2 += numeric * numeric;
        }
        const double denom = std::max(std::sqrt(std::max(a2, n2)), 1e-12);
        const double rel = std::sqrt(diff2) / denom;
        if (rel > rep.worst) {
            rep.worst = rel;
            rep.where = "input " + std::to_string(idx);
        }
        ++idx;
    }
    return rep;
}

// Same check over every element of every parameter in `params`; `loss`
// records the scalar on the given tape.
template <typename T>
GradReport check_parameter_gradients(nc::ParameterSet<T>& params,
                                     const std::function<nc::Var(nc::Tape<T>&)>& loss, double h) {
    auto eval = [&](bool grad) {
        nc::Tape<T> tp;
        const nc::Var l = loss(tp);
        const double v = tp.value(l).item();
        if (grad) tp.backward(l);
        return v;
    };
    params.zero_grad();
    eval(true);
    GradReport rep;
    for (auto& p : params) {
        const nc::Tensor<T> analytic = p.grad;
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            const double numeric = central_difference(p.value[k], h, [&] { return eval(false); });
            diff2 += (analytic[k] - numeric) * (analytic[k] - numeric);
            a2 += static_cast<double>(analytic[k]) * analytic[k];
            n2 += numeric * numeric;
        }
        const double rel = std::sqrt(diff2) / std::max(std::sqrt(std::max(a2, n2)), 1e-12);
        if (rel > rep.worst) {
            rep.worst = rel;
            rep.where = p.name;
        }
    }
    return rep;
}

// Uniform values in [lo, hi] kept at least `gap` away from zero, so kinks of
// relu-like ops are not straddled by the finite difference.
template <typename T>
nc::Tensor<T> random_tensor(nc::Shape shape, nc::Rng& rng, double lo = -1.0, double hi = 1.0, double gap = 0.0) {
    nc::Tensor<T> t(std::move(shape));
    for (auto& v : t) {
        double x;
        do {
            x = rng.uniform(lo, hi);
        } while (std::abs(x) < gap);
        v = static_cast<T>(x);
    }
    return t;
}

}  // namespace dmbn::check
