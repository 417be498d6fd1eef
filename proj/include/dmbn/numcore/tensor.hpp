#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dmbn/error.hpp"

namespace dmbn::nc {

using Shape = std::vector<int>;

inline std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

// Every buffer starts on a 64-byte boundary. Vectorized kernels peel
// unaligned heads, so without this the summation order (and the last bits of
// a result) would depend on where the allocator placed the data.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const {
        return true;
    }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

// Dense row-major array. Rank-0 tensors (empty shape) hold one element and
// are the only legal loss values.
template <typename T>
class Tensor {
   public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
        check_extents();
        data_.assign(shape_size(shape_), fill);
    }

    Tensor(Shape shape, AlignedVector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_extents();
        if (data_.size() != shape_size(shape_)) {
            throw ShapeError("Tensor: " + std::to_string(data_.size()) + " elements do not fill shape " +
                             shape_str(shape_));
        }
    }

    Tensor(Shape shape, const std::vector<T>& data) : Tensor(std::move(shape), AlignedVector<T>(data.begin(), data.end())) {}
    Tensor(Shape shape, std::initializer_list<T> data) : Tensor(std::move(shape), AlignedVector<T>(data)) {}

    static Tensor scalar(T v) { return Tensor(Shape{}, AlignedVector<T>{v}); }

    template <typename U>
    static Tensor cast(const Tensor<U>& other) {
        AlignedVector<T> out(other.size());
        std::transform(other.begin(), other.end(), out.begin(), [](U v) { return static_cast<T>(v); });
        return Tensor(other.shape(), std::move(out));
    }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }
    std::vector<T> storage() const { return {data_.begin(), data_.end()}; }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T item() const {
        if (data_.size() != 1) throw ShapeError("Tensor::item on shape " + shape_str(shape_));
        return data_[0];
    }

    // Index helpers for the ranks used by the networks.
    T& at(int i, int j) { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    const T& at(int i, int j) const { return data_[static_cast<std::size_t>(i) * shape_[1] + j]; }
    T& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x]; }
    const T& at(int c, int y, int x) const {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }

    Tensor reshaped(Shape shape) const {
        if (shape_size(shape) != data_.size()) {
            throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
        }
        return Tensor(std::move(shape), data_);
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

   private:
    void check_extents() const {
        for (int d : shape_) {
            if (d < 0) throw ShapeError("Tensor: negative extent in " + shape_str(shape_));
        }
    }

    Shape shape_;
    AlignedVector<T> data_;
};

// Row `i` of the leading axis, as an independent tensor with that axis dropped.
template <typename T>
Tensor<T> take_row(const Tensor<T>& t, int i) {
    if (t.rank() < 1 || i < 0 || i >= t.dim(0)) throw ShapeError("take_row: index out of range");
    Shape inner(t.shape().begin() + 1, t.shape().end());
    const std::size_t n = shape_size(inner);
    AlignedVector<T> out(t.data() + i * n, t.data() + (i + 1) * n);
    return Tensor<T>(std::move(inner), std::move(out));
}

// Stack equally shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack(std::span<const Tensor<T>> parts) {
    if (parts.empty()) throw ShapeError("stack: no inputs");
    Shape shape = parts.front().shape();
    AlignedVector<T> out;
    out.reserve(parts.size() * parts.front().size());
    for (const auto& p : parts) {
        if (p.shape() != shape) {
            throw ShapeError("stack: shape " + shape_str(p.shape()) + " differs from " + shape_str(shape));
        }
        out.insert(out.end(), p.begin(), p.end());
    }
    shape.insert(shape.begin(), static_cast<int>(parts.size()));
    return Tensor<T>(std::move(shape), std::move(out));
}

template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts) {
    return stack(std::span<const Tensor<T>>(parts));
}

}  // namespace dmbn::nc
