#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "dmbn/error.hpp"
#include "dmbn/numcore/tape.hpp"
#include "dmbn/numcore/tensor.hpp"

// Differentiable operations over Tape<T>. Image tensors are NCHW; feature
// tensors are (N, F). Every op validates shapes and names itself in errors.
namespace dmbn::nc {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const RowMat<T>>;

[[noreturn]] inline void shape_fail(const std::string& op, const Shape& a, const Shape& b, const std::string& why) {
    throw ShapeError(op + ": " + why + " (got " + shape_str(a) + " and " + shape_str(b) + ")");
}

inline void require_rank(const std::string& op, const Shape& s, int rank) {
    if (static_cast<int>(s.size()) != rank) {
        throw ShapeError(op + ": expected rank " + std::to_string(rank) + " input, got " + shape_str(s));
    }
}

// 3x3, stride 1, zero padding 1. col is (C*9, H*W) row-major.
template <typename T>
void im2col3x3(const T* img, int C, int H, int W, T* col) {
    const int hw = H * W;
    for (int c = 0; c < C; ++c) {
        const T* plane = img + static_cast<std::size_t>(c) * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* row = col + static_cast<std::size_t>(c * 9 + ky * 3 + kx) * hw;
                const int dx = kx - 1;
                const int x0 = std::max(0, -dx);
                const int x1 = std::min(W, W - dx);
                for (int y = 0; y < H; ++y) {
                    T* dst = row + y * W;
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= H) {
                        std::fill(dst, dst + W, T(0));
                        continue;
                    }
                    const T* src = plane + sy * W + dx;
                    for (int x = 0; x < x0; ++x) dst[x] = T(0);
                    for (int x = x0; x < x1; ++x) dst[x] = src[x];
                    for (int x = x1; x < W; ++x) dst[x] = T(0);
                }
            }
        }
    }
}

template <typename T>
void col2im3x3_add(const T* col, int C, int H, int W, T* img) {
    const int hw = H * W;
    for (int c = 0; c < C; ++c) {
        T* plane = img + static_cast<std::size_t>(c) * hw;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* row = col + static_cast<std::size_t>(c * 9 + ky * 3 + kx) * hw;
                const int dx = kx - 1;
                const int x0 = std::max(0, -dx);
                const int x1 = std::min(W, W - dx);
                for (int y = 0; y < H; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= H) continue;
                    const T* src = row + y * W;
                    T* dst = plane + sy * W + dx;
                    for (int x = x0; x < x1; ++x) dst[x] += src[x];
                }
            }
        }
    }
}

template <typename T, typename F, typename G>
Var unary(Tape<T>& tp, Var x, F forward, G derivative) {
    const Tensor<T>& xv = tp.value(x);
    Tensor<T> y(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) y[i] = forward(xv[i]);
    return tp.record(std::move(y), tp.requires_grad(x), [x, derivative, out = Var{static_cast<int>(tp.size())}](Tape<T>& t) {
        const Tensor<T>& xv = t.value(x);
        const Tensor<T>& yv = t.value(out);
        const Tensor<T>& gy = t.grad(out);
        Tensor<T>& gx = t.grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * derivative(xv[i], yv[i]);
    });
}

}  // namespace detail

// y = x W^T + b with x (N, in), W (out, in), b (out).
template <typename T>
Var dense(Tape<T>& tp, Var x, Var w, Var b) {
    const auto& xs = tp.value(x).shape();
    const auto& ws = tp.value(w).shape();
    detail::require_rank("dense", xs, 2);
    detail::require_rank("dense", ws, 2);
    if (xs[1] != ws[1]) detail::shape_fail("dense", xs, ws, "input features do not match weight columns");
    if (tp.value(b).size() != static_cast<std::size_t>(ws[0])) {
        detail::shape_fail("dense", ws, tp.value(b).shape(), "bias length does not match weight rows");
    }
    const int n = xs[0], in = xs[1], out = ws[0];
    Tensor<T> y(Shape{n, out});
    {
        detail::CMatMap<T> X(tp.value(x).data(), n, in);
        detail::CMatMap<T> Wm(tp.value(w).data(), out, in);
        Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> B(tp.value(b).data(), out);
        detail::MatMap<T> Y(y.data(), n, out);
        Y.noalias() = X * Wm.transpose();
        Y.rowwise() += B;
    }
    const bool rg = tp.requires_grad(x) || tp.requires_grad(w) || tp.requires_grad(b);
    const Var o{static_cast<int>(tp.size())};
    return tp.record(std::move(y), rg, [x, w, b, o, n, in, out](Tape<T>& t) {
        detail::CMatMap<T> GY(t.grad(o).data(), n, out);
        if (t.requires_grad(x)) {
            detail::MatMap<T> GX(t.grad(x).data(), n, in);
            GX.noalias() += GY * detail::CMatMap<T>(t.value(w).data(), out, in);
        }
        if (t.requires_grad(w)) {
            detail::MatMap<T> GW(t.grad(w).data(), out, in);
            GW.noalias() += GY.transpose() * detail::CMatMap<T>(t.value(x).data(), n, in);
        }
        if (t.requires_grad(b)) {
            Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> GB(t.grad(b).data(), out);
            GB += GY.colwise().sum();
        }
    });
}

// 3x3 convolution, stride 1, padding 1. x (N, C, H, W), w (O, C, 3, 3), b (O).
template <typename T>
Var conv3x3(Tape<T>& tp, Var x, Var w, Var b) {
    const auto& xs = tp.value(x).shape();
    const auto& ws = tp.value(w).shape();
    detail::require_rank("conv3x3", xs, 4);
    detail::require_rank("conv3x3", ws, 4);
    if (ws[1] != xs[1] || ws[2] != 3 || ws[3] != 3) {
        detail::shape_fail("conv3x3", xs, ws, "kernel must be (O, C, 3, 3) with C matching input channels");
    }
    if (tp.value(b).size() != static_cast<std::size_t>(ws[0])) {
        detail::shape_fail("conv3x3", ws, tp.value(b).shape(), "bias length does not match output channels");
    }
    const int n = xs[0], c = xs[1], h = xs[2], wd = xs[3], oc = ws[0];
    const int hw = h * wd, k = c * 9;
    Tensor<T> y(Shape{n, oc, h, wd});
    AlignedVector<T> col(static_cast<std::size_t>(k) * hw);
    {
        detail::CMatMap<T> Wm(tp.value(w).data(), oc, k);
        detail::CMatMap<T> Col(col.data(), k, hw);
        const T* bias = tp.value(b).data();
        for (int i = 0; i < n; ++i) {
            detail::im2col3x3(tp.value(x).data() + static_cast<std::size_t>(i) * c * hw, c, h, wd, col.data());
            detail::MatMap<T> Y(y.data() + static_cast<std::size_t>(i) * oc * hw, oc, hw);
            Y.noalias() = Wm * Col;
            for (int o = 0; o < oc; ++o) Y.row(o).array() += bias[o];
        }
    }
    const bool rg = tp.requires_grad(x) || tp.requires_grad(w) || tp.requires_grad(b);
    const Var o{static_cast<int>(tp.size())};
    return tp.record(std::move(y), rg, [x, w, b, o, n, c, h, wd, oc, hw, k](Tape<T>& t) {
        AlignedVector<T> col(static_cast<std::size_t>(k) * hw);
        detail::CMatMap<T> Col(col.data(), k, hw);
        detail::CMatMap<T> Wm(t.value(w).data(), oc, k);
        const bool gx_needed = t.requires_grad(x);
        const bool gw_needed = t.requires_grad(w);
        const bool gb_needed = t.requires_grad(b);
        const T* gy = t.grad(o).data();
        for (int i = 0; i < n; ++i) {
            detail::CMatMap<T> GY(gy + static_cast<std::size_t>(i) * oc * hw, oc, hw);
            if (gw_needed) {
                detail::im2col3x3(t.value(x).data() + static_cast<std::size_t>(i) * c * hw, c, h, wd, col.data());
                detail::MatMap<T> GW(t.grad(w).data(), oc, k);
                GW.noalias() += GY * Col.transpose();
            }
            if (gb_needed) {
                T* gb = t.grad(b).data();
                for (int q = 0; q < oc; ++q) gb[q] += GY.row(q).sum();
            }
            if (gx_needed) {
                detail::MatMap<T> DCol(col.data(), k, hw);
                DCol.noalias() = Wm.transpose() * GY;
                detail::col2im3x3_add(col.data(), c, h, wd, t.grad(x).data() + static_cast<std::size_t>(i) * c * hw);
            }
        }
    });
}

// 2x2 max pooling with stride 2; spatial extents must be even. Ties route
// the gradient to the first maximum in row-major window order.
template <typename T>
Var maxpool2x2(Tape<T>& tp, Var x) {
    const auto& xs = tp.value(x).shape();
    detail::require_rank("maxpool2x2", xs, 4);
    if (xs[2] % 2 != 0 || xs[3] % 2 != 0) {
        throw ShapeError("maxpool2x2: spatial extents must be even, got " + shape_str(xs));
    }
    const int planes = xs[0] * xs[1], h = xs[2], w = xs[3], oh = h / 2, ow = w / 2;
    Tensor<T> y(Shape{xs[0], xs[1], oh, ow});
    std::vector<std::uint32_t> arg(y.size());
    const T* xd = tp.value(x).data();
    for (int p = 0; p < planes; ++p) {
        const T* in = xd + static_cast<std::size_t>(p) * h * w;
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                std::uint32_t best = static_cast<std::uint32_t>((2 * i) * w + 2 * j);
                const std::uint32_t cand[3] = {best + 1, best + static_cast<std::uint32_t>(w),
                                               best + static_cast<std::uint32_t>(w) + 1};
                for (std::uint32_t q : cand) {
                    if (in[q] > in[best]) best = q;
                }
                const std::size_t oi = (static_cast<std::size_t>(p) * oh + i) * ow + j;
                y[oi] = in[best];
                arg[oi] = static_cast<std::uint32_t>(p) * h * w + best;
            }
        }
    }
    const Var o{static_cast<int>(tp.size())};
    return tp.record(std::move(y), tp.requires_grad(x), [x, o, arg = std::move(arg)](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(o);
        Tensor<T>& gx = t.grad(x);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[arg[i]] += gy[i];
    });
}

// Nearest-neighbour 2x upsampling.
template <typename T>
Var upsample2x2(Tape<T>& tp, Var x) {
    const auto& xs = tp.value(x).shape();
    detail::require_rank("upsample2x2", xs, 4);
    const int planes = xs[0] * xs[1], h = xs[2], w = xs[3];
    Tensor<T> y(Shape{xs[0], xs[1], 2 * h, 2 * w});
    const T* xd = tp.value(x).data();
    for (int p = 0; p < planes; ++p) {
        const T* in = xd + static_cast<std::size_t>(p) * h * w;
        T* out = y.data() + static_cast<std::size_t>(p) * 4 * h * w;
        for (int i = 0; i < 2 * h; ++i) {
            for (int j = 0; j < 2 * w; ++j) out[i * 2 * w + j] = in[(i / 2) * w + j / 2];
        }
    }
    const Var o{static_cast<int>(tp.size())};
    return tp.record(std::move(y), tp.requires_grad(x), [x, o, planes, h, w](Tape<T>& t) {
        const T* gy = t.grad(o).data();
        T* gx = t.grad(x).data();
        for (int p = 0; p < planes; ++p) {
            const T* go = gy + static_cast<std::size_t>(p) * 4 * h * w;
            T* gi = gx + static_cast<std::size_t>(p) * h * w;
            for (int i = 0; i < 2 * h; ++i) {
                for (int j = 0; j < 2 * w; ++j) gi[(i / 2) * w + j / 2] += go[i * 2 * w + j];
            }
        }
    });
}

template <typename T>
Var relu(Tape<T>& tp, Var x) {
    return detail::unary(
        tp, x, [](T v) { return v < T(0) ? T(0) : v; }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var tanh(Tape<T>& tp, Var x) {
    return detail::unary(
        tp, x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var sigmoid(Tape<T>& tp, Var x) {
    return detail::unary(
        tp, x,
        [](T v) {
            if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
            const T e = std::exp(v);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

// log(1 + exp(x)), computed without overflow.
template <typename T>
Var softplus(Tape<T>& tp, Var x) {
    return detail::unary(
        tp, x, [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); },
        [](T v, T) {
            if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
            const T e = std::exp(v);
            return e / (T(1) + e);
        });
}

template <typename T>
Var scale(Tape<T>& tp, Var x, T factor) {
    return detail::unary(
        tp, x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var add_scalar(Tape<T>& tp, Var x, T offset) {
    return detail::unary(
        tp, x, [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Var add(Tape<T>& tp, Var a, Var b) {
    const Tensor<T>& av = tp.value(a);
    const Tensor<T>& bv = tp.value(b);
    if (av.shape() != bv.shape()) detail::shape_fail("add", av.shape(), bv.shape(), "operand shapes differ");
    Tensor<T> y(av.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
    const Var o{static_cast<int>(tp.size())};
    return tp.record(std::move(y), tp.requires_grad(a) || tp.requires_grad(b), [a, b, o](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(o);
        for (Var in : {a, b}) {
            if (!t.requires_grad(in)) continue;
            Tensor<T>& g = t.grad(in);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
        }
    });
}

template <typename T>
Var reshape(Tape<T>& tp, Var x, Shape shape) {
    const Tensor<T>& xv = tp.value(x);
    if (shape_size(shape) != xv.size()) detail::shape_fail("reshape", xv.shape(), shape, "element counts differ");
    const Var o{static_cast<int>(tp.size())};
    return tp.record(xv.reshaped(std::move(shape)), tp.requires_grad(x), [x, o](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(o);
        Tensor<T>& gx = t.grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
    });
}

// Concatenation along `axis`; all other extents must agree.
template <typename T>
Var concat(Tape<T>& tp, const std::vector<Var>& xs, int axis) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = tp.value(xs[0]).shape();
    if (axis < 0 || axis >= static_cast<int>(first.size())) {
        throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
    }
    Shape out_shape = first;
    out_shape[axis] = 0;
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= first[i];
    for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
    bool rg = false;
    std::vector<int> widths;
    for (Var v : xs) {
        const Shape& s = tp.value(v).shape();
        Shape a = s, b = first;
        if (a.size() != b.size()) detail::shape_fail("concat", first, s, "ranks differ");
        a[axis] = b[axis] = 0;
        if (a != b) detail::shape_fail("concat", first, s, "extents off the concat axis differ");
        out_shape[axis] += s[axis];
        widths.push_back(s[axis]);
        rg = rg || tp.requires_grad(v);
    }
    Tensor<T> y(out_shape);
    const std::size_t out_stride = static_cast<std::size_t>(out_shape[axis]) * inner;
    std::size_t offset = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const T* src = tp.value(xs[k]).data();
        const std::size_t chunk = static_cast<std::size_t>(widths[k]) * inner;
        for (std::size_t r = 0; r < outer; ++r) std::copy(src + r * chunk, src + (r + 1) * chunk, y.data() + r * out_stride + offset);
        offset += chunk;
    }
    const Var o{static_cast<int>(tp.size())};
    return tp.record(std::move(y), rg, [xs, widths, outer, inner, out_stride, o](Tape<T>& t) {
        const T* gy = t.grad(o).data();
        std::size_t off = 0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const std::size_t chunk = static_cast<std::size_t>(widths[k]) * inner;
            if (t.requires_grad(xs[k])) {
                T* gx = t.grad(xs[k]).data();
                for (std::size_t r = 0; r < outer; ++r) {
                    for (std::size_t q = 0; q < chunk; ++q) gx[r * chunk + q] += gy[r * out_stride + off + q];
                }
            }
            off += chunk;
        }
    });
}

// Elements [begin, end) along `axis`.
template <typename T>
Var slice(Tape<T>& tp, Var x, int axis, int begin, int end) {
    const Shape& s = tp.value(x).shape();
    if (axis < 0 || axis >= static_cast<int>(s.size()) || begin < 0 || end > s[axis] || begin >= end) {
        throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                         std::to_string(axis) + " invalid for " + shape_str(s));
    }
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    Shape os = s;
    os[axis] = end - begin;
    Tensor<T> y(os);
    const std::size_t in_stride = static_cast<std::size_t>(s[axis]) * inner;
    const std::size_t chunk = static_cast<std::size_t>(end - begin) * inner;
    const std::size_t off = static_cast<std::size_t>(begin) * inner;
    const T* xd = tp.value(x).data();
    for (std::size_t r = 0; r < outer; ++r) std::copy(xd + r * in_stride + off, xd + r * in_stride + off + chunk, y.data() + r * chunk);
    const Var o{static_cast<int>(tp.size())};
    return tp.record(std::move(y), tp.requires_grad(x), [x, o, outer, in_stride, chunk, off](Tape<T>& t) {
        const T* gy = t.grad(o).data();
        T* gx = t.grad(x).data();
        for (std::size_t r = 0; r < outer; ++r) {
            for (std::size_t q = 0; q < chunk; ++q) gx[r * in_stride + off + q] += gy[r * chunk + q];
        }
    });
}

// Mean over the leading (set) axis, keeping it with extent 1.
template <typename T>
Var mean_over_set(Tape<T>& tp, Var x) {
    const Tensor<T>& xv = tp.value(x);
    if (xv.rank() < 1 || xv.dim(0) == 0) throw ShapeError("mean_over_set: empty set " + shape_str(xv.shape()));
    const int n = xv.dim(0);
    Shape os = xv.shape();
    os[0] = 1;
    const std::size_t m = xv.size() / n;
    Tensor<T> y(os);
    for (std::size_t j = 0; j < m; ++j) {
        T acc = T(0);
        for (int i = 0; i < n; ++i) acc += xv[i * m + j];
        y[j] = acc / static_cast<T>(n);
    }
    const Var o{static_cast<int>(tp.size())};
    return tp.record(std::move(y), tp.requires_grad(x), [x, o, n, m](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(o);
        Tensor<T>& gx = t.grad(x);
        const T inv = T(1) / static_cast<T>(n);
        for (int i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += gy[j] * inv;
        }
    });
}

// Tiles a leading-extent-1 tensor `n` times along the leading axis.
template <typename T>
Var repeat_rows(Tape<T>& tp, Var x, int n) {
    const Tensor<T>& xv = tp.value(x);
    if (xv.rank() < 1 || xv.dim(0) != 1 || n < 1) {
        throw ShapeError("repeat_rows: need leading extent 1 and n >= 1, got " + shape_str(xv.shape()));
    }
    Shape os = xv.shape();
    os[0] = n;
    Tensor<T> y(os);
    for (int i = 0; i < n; ++i) std::copy(xv.begin(), xv.end(), y.data() + i * xv.size());
    const Var o{static_cast<int>(tp.size())};
    return tp.record(std::move(y), tp.requires_grad(x), [x, o, n](Tape<T>& t) {
        const Tensor<T>& gy = t.grad(o);
        Tensor<T>& gx = t.grad(x);
        for (int i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < gx.size(); ++j) gx[j] += gy[i * gx.size() + j];
        }
    });
}

template <typename T>
Var sum(Tape<T>& tp, Var x) {
    const Tensor<T>& xv = tp.value(x);
    double acc = 0.0;
    for (T v : xv) acc += v;
    const Var o{static_cast<int>(tp.size())};
    return tp.record(Tensor<T>::scalar(static_cast<T>(acc)), tp.requires_grad(x), [x, o](Tape<T>& t) {
        const T g = t.grad(o)[0];
        for (auto& v : t.grad(x)) v += g;
    });
}

// sum(x * weights) for a constant weight tensor of the same shape.
template <typename T>
Var weighted_sum(Tape<T>& tp, Var x, const Tensor<T>& weights) {
    const Tensor<T>& xv = tp.value(x);
    if (!xv.same_shape(weights)) detail::shape_fail("weighted_sum", xv.shape(), weights.shape(), "shapes differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) acc += static_cast<double>(xv[i]) * weights[i];
    const Var o{static_cast<int>(tp.size())};
    return tp.record(Tensor<T>::scalar(static_cast<T>(acc)), tp.requires_grad(x), [x, o, weights](Tape<T>& t) {
        const T g = t.grad(o)[0];
        Tensor<T>& gx = t.grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * weights[i];
    });
}

// Sum over elements of 0.5*ln(2*pi*std^2) + (target - mean)^2 / (2*std^2).
template <typename T>
Var gaussian_nll(Tape<T>& tp, const Tensor<T>& target, Var mean, Var stddev) {
    const Tensor<T>& mv = tp.value(mean);
    const Tensor<T>& sv = tp.value(stddev);
    if (!target.same_shape(mv) || !mv.same_shape(sv)) {
        throw ShapeError("gaussian_nll: target " + shape_str(target.shape()) + ", mean " + shape_str(mv.shape()) +
                         " and std " + shape_str(sv.shape()) + " must match");
    }
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    double acc = 0.0;
    for (std::size_t i = 0; i < mv.size(); ++i) {
        const double s = sv[i];
        if (std::isnan(s)) throw NumericalError("gaussian_nll: std is NaN at element " + std::to_string(i));
        if (!(s > 0.0)) {
            throw ValueError("gaussian_nll: std must be > 0, got " + std::to_string(s) + " at element " +
                             std::to_string(i));
        }
        const double d = static_cast<double>(target[i]) - mv[i];
        acc += half_log_2pi + std::log(s) + d * d / (2.0 * s * s);
    }
    const Var o{static_cast<int>(tp.size())};
    const bool rg = tp.requires_grad(mean) || tp.requires_grad(stddev);
    return tp.record(Tensor<T>::scalar(static_cast<T>(acc)), rg, [target, mean, stddev, o](Tape<T>& t) {
        const T g = t.grad(o)[0];
        const Tensor<T>& mv = t.value(mean);
        const Tensor<T>& sv = t.value(stddev);
        const bool gm = t.requires_grad(mean), gs = t.requires_grad(stddev);
        for (std::size_t i = 0; i < mv.size(); ++i) {
            const T s = sv[i];
            const T d = target[i] - mv[i];
            const T inv_var = T(1) / (s * s);
            if (gm) t.grad(mean)[i] += g * (-d * inv_var);
            if (gs) t.grad(stddev)[i] += g * (T(1) / s - d * d * inv_var / s);
        }
    });
}

// gaussian_nll with std fixed to 1: 0.5*(x - mean)^2 + 0.5*ln(2*pi) per element.
template <typename T>
Var gaussian_nll_unit(Tape<T>& tp, const Tensor<T>& target, Var mean) {
    const Tensor<T>& mv = tp.value(mean);
    if (!target.same_shape(mv)) detail::shape_fail("gaussian_nll_unit", target.shape(), mv.shape(), "shapes differ");
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    double acc = 0.0;
    for (std::size_t i = 0; i < mv.size(); ++i) {
        const double d = static_cast<double>(target[i]) - mv[i];
        acc += half_log_2pi + 0.5 * d * d;
    }
    const Var o{static_cast<int>(tp.size())};
    return tp.record(Tensor<T>::scalar(static_cast<T>(acc)), tp.requires_grad(mean), [target, mean, o](Tape<T>& t) {
        const T g = t.grad(o)[0];
        const Tensor<T>& mv = t.value(mean);
        Tensor<T>& gm = t.grad(mean);
        for (std::size_t i = 0; i < mv.size(); ++i) gm[i] += g * (mv[i] - target[i]);
    });
}

// Mean squared error over all elements.
template <typename T>
Var mse(Tape<T>& tp, Var pred, const Tensor<T>& target) {
    const Tensor<T>& pv = tp.value(pred);
    if (!target.same_shape(pv)) detail::shape_fail("mse", pv.shape(), target.shape(), "shapes differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double d = static_cast<double>(pv[i]) - target[i];
        acc += d * d;
    }
    const T inv_n = T(1) / static_cast<T>(pv.size());
    const Var o{static_cast<int>(tp.size())};
    return tp.record(Tensor<T>::scalar(static_cast<T>(acc / pv.size())), tp.requires_grad(pred), [pred, target, o, inv_n](Tape<T>& t) {
        const T g = t.grad(o)[0] * T(2) * inv_n;
        const Tensor<T>& pv = t.value(pred);
        Tensor<T>& gp = t.grad(pred);
        for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += g * (pv[i] - target[i]);
    });
}

}  // namespace dmbn::nc
