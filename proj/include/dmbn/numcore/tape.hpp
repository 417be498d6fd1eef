#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dmbn/error.hpp"
#include "dmbn/numcore/parameter.hpp"
#include "dmbn/numcore/tensor.hpp"

namespace dmbn::nc {

// Handle to a value recorded on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff tape. Operations append nodes in execution order;
// backward() walks them in reverse. A tape is single-use per forward pass:
// clear() it (or make a new one) before the next step.
template <typename T>
class Tape {
   public:
    using Backward = std::function<void(Tape&)>;

    // With record_grad = false parameters enter as constants and nothing is
    // written back to them, so a frozen model can be shared across threads.
    explicit Tape(bool record_grad = true) : record_grad_(record_grad) {}

    bool records_grad() const { return record_grad_; }

    Var constant(Tensor<T> value) { return push(std::move(value), false, nullptr, nullptr); }

    // Parameter leaves alias the parameter tensor; it must outlive the tape.
    Var param(Parameter<T>& p) {
        const bool rg = record_grad_ && p.trainable;
        Var v = push(Tensor<T>(), rg, nullptr, rg ? &p : nullptr);
        nodes_.back().alias = &p.value;
        return v;
    }

    // Appends an operation result. `fn` runs during backward() once the
    // output gradient is complete; it is skipped when no input needs one.
    Var record(Tensor<T> value, bool requires_grad, Backward fn) {
        return push(std::move(value), requires_grad, requires_grad ? std::move(fn) : nullptr, nullptr);
    }

    const Tensor<T>& value(Var v) const {
        const Node& n = node(v);
        return n.alias ? *n.alias : n.value;
    }
    bool requires_grad(Var v) const { return node(v).requires_grad; }

    // Gradient buffer of `v`, allocated as zeros on first access.
    Tensor<T>& grad(Var v) {
        Node& n = node(v);
        const Tensor<T>& val = n.alias ? *n.alias : n.value;
        if (n.grad.size() != val.size() || n.grad.empty()) n.grad = Tensor<T>(val.shape());
        return n.grad;
    }

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // Fills Parameter::grad for every trainable parameter on the tape with
    // d(loss)/d(parameter). Gradients are zeroed first, never accumulated
    // across calls.
    void backward(Var loss) {
        const Node& ln = node(loss);
        if (value(loss).rank() != 0) {
            throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(value(loss).shape()));
        }
        for (Node& n : nodes_) {
            if (n.param != nullptr && n.requires_grad) n.param->zero_grad();
            if (!n.grad.empty()) n.grad.fill(T(0));
        }
        if (!ln.requires_grad) return;
        grad(loss)[0] = T(1);
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (!n.requires_grad || n.grad.empty()) continue;
            if (n.backward) n.backward(*this);
            if (n.param != nullptr) {
                auto& pg = n.param->grad;
                for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
            }
        }
    }

   private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        Backward backward;
        const Tensor<T>* alias = nullptr;
        Parameter<T>* param = nullptr;
        bool requires_grad = false;
    };

    Var push(Tensor<T> value, bool rg, Backward fn, Parameter<T>* p) {
        Node& n = nodes_.emplace_back();
        n.value = std::move(value);
        n.backward = std::move(fn);
        n.param = p;
        n.requires_grad = rg;
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    Node& node(Var v) {
        if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw ValueError("Tape: invalid Var");
        return nodes_[static_cast<std::size_t>(v.id)];
    }
    const Node& node(Var v) const {
        if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw ValueError("Tape: invalid Var");
        return nodes_[static_cast<std::size_t>(v.id)];
    }

    std::vector<Node> nodes_;
    bool record_grad_ = true;
};

}  // namespace dmbn::nc
