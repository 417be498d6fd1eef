#pragma once

#include <cmath>
#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "dmbn/numcore/rng.hpp"
#include "dmbn/numcore/tensor.hpp"

namespace dmbn::nc {

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;

    void zero_grad() {
        if (!grad.same_shape(value)) grad = Tensor<T>(value.shape());
        grad.fill(T(0));
    }
};

// Owns the parameters of one model. Addresses are stable (deque) so layers
// can hold plain references.
template <typename T>
class ParameterSet {
   public:
    ParameterSet() = default;
    ParameterSet(const ParameterSet&) = delete;
    ParameterSet& operator=(const ParameterSet&) = delete;
    ParameterSet(ParameterSet&&) = default;
    ParameterSet& operator=(ParameterSet&&) = default;

    Parameter<T>& add(const std::string& name, Shape shape, bool trainable = true) {
        if (index_.contains(name)) throw ValueError("duplicate parameter name '" + name + "'");
        Parameter<T>& p = params_.emplace_back();
        p.name = name;
        p.value = Tensor<T>(shape);
        p.grad = Tensor<T>(std::move(shape));
        p.trainable = trainable;
        index_.emplace(name, params_.size() - 1);
        return p;
    }

    Parameter<T>* find(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &params_[it->second];
    }
    const Parameter<T>* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &params_[it->second];
    }

    Parameter<T>& get(const std::string& name) {
        auto* p = find(name);
        if (!p) throw ValueError("unknown parameter '" + name + "'");
        return *p;
    }

    std::size_t size() const { return params_.size(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    std::size_t element_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

   private:
    std::deque<Parameter<T>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Fan-in scaled uniform weights, U(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <typename T>
void init_fan_in_uniform(Tensor<T>& w, int fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace dmbn::nc
