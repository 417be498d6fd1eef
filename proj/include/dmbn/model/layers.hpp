#pragma once

#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dmbn/error.hpp"
#include "dmbn/numcore.hpp"

namespace dmbn::model {

enum class LayerKind { dense, conv3x3, maxpool2x2, upsample2x2, relu, tanh, sigmoid, flatten, reshape };

struct LayerDesc {
    LayerKind kind;
    int units = 0;    // dense width or conv output channels
    nc::Shape shape;  // reshape target, per sample

    friend bool operator==(const LayerDesc&, const LayerDesc&) = default;
};

// A layer stack. Textual form, used in config files and checkpoints:
//   "conv:16 relu pool conv:32 relu pool flatten dense:64"
using Topology = std::vector<LayerDesc>;

inline std::string to_string(const Topology& topo) {
    std::ostringstream os;
    bool first = true;
    for (const auto& l : topo) {
        if (!first) os << ' ';
        first = false;
        switch (l.kind) {
            case LayerKind::dense: os << "dense:" << l.units; break;
            case LayerKind::conv3x3: os << "conv:" << l.units; break;
            case LayerKind::maxpool2x2: os << "pool"; break;
            case LayerKind::upsample2x2: os << "up"; break;
            case LayerKind::relu: os << "relu"; break;
            case LayerKind::tanh: os << "tanh"; break;
            case LayerKind::sigmoid: os << "sigmoid"; break;
            case LayerKind::flatten: os << "flatten"; break;
            case LayerKind::reshape: {
                os << "reshape:";
                for (std::size_t i = 0; i < l.shape.size(); ++i) os << (i ? "x" : "") << l.shape[i];
                break;
            }
        }
    }
    return os.str();
}

inline Topology parse_topology(std::string_view text) {
    Topology topo;
    std::string norm(text);
    for (char& c : norm) {
        if (c == ',') c = ' ';
    }
    std::istringstream is(norm);
    std::string tok;
    auto positive = [](const std::string& s, const std::string& tok) {
        try {
            std::size_t pos = 0;
            const int v = std::stoi(s, &pos);
            if (pos == s.size() && v > 0) return v;
        } catch (const std::exception&) {
        }
        throw ValueError("topology: bad size in token '" + tok + "'");
    };
    while (is >> tok) {
        const auto colon = tok.find(':');
        const std::string head = tok.substr(0, colon);
        const std::string arg = colon == std::string::npos ? "" : tok.substr(colon + 1);
        if (head == "dense") {
            topo.push_back({LayerKind::dense, positive(arg, tok), {}});
        } else if (head == "conv") {
            topo.push_back({LayerKind::conv3x3, positive(arg, tok), {}});
        } else if (head == "pool" && arg.empty()) {
            topo.push_back({LayerKind::maxpool2x2, 0, {}});
        } else if (head == "up" && arg.empty()) {
            topo.push_back({LayerKind::upsample2x2, 0, {}});
        } else if (head == "relu" && arg.empty()) {
            topo.push_back({LayerKind::relu, 0, {}});
        } else if (head == "tanh" && arg.empty()) {
            topo.push_back({LayerKind::tanh, 0, {}});
        } else if (head == "sigmoid" && arg.empty()) {
            topo.push_back({LayerKind::sigmoid, 0, {}});
        } else if (head == "flatten" && arg.empty()) {
            topo.push_back({LayerKind::flatten, 0, {}});
        } else if (head == "reshape") {
            nc::Shape s;
            std::string part;
            std::istringstream ps(arg);
            while (std::getline(ps, part, 'x')) s.push_back(positive(part, tok));
            if (s.empty()) throw ValueError("topology: reshape needs extents in '" + tok + "'");
            topo.push_back({LayerKind::reshape, 0, s});
        } else {
            throw ValueError("topology: unknown layer token '" + tok + "'");
        }
    }
    return topo;
}

// Per-sample output shape of `topo` applied to `in`; throws on any mismatch.
inline nc::Shape infer_shape(nc::Shape in, const Topology& topo) {
    for (const auto& l : topo) {
        switch (l.kind) {
            case LayerKind::dense:
                if (in.size() != 1) throw ShapeError("dense layer needs a flat input, got " + nc::shape_str(in));
                in = {l.units};
                break;
            case LayerKind::conv3x3:
                if (in.size() != 3) throw ShapeError("conv layer needs (C, H, W) input, got " + nc::shape_str(in));
                in[0] = l.units;
                break;
            case LayerKind::maxpool2x2:
                if (in.size() != 3 || in[1] % 2 || in[2] % 2) {
                    throw ShapeError("pool layer needs (C, H, W) with even H, W, got " + nc::shape_str(in));
                }
                in[1] /= 2;
                in[2] /= 2;
                break;
            case LayerKind::upsample2x2:
                if (in.size() != 3) throw ShapeError("up layer needs (C, H, W) input, got " + nc::shape_str(in));
                in[1] *= 2;
                in[2] *= 2;
                break;
            case LayerKind::flatten: in = {static_cast<int>(nc::shape_size(in))}; break;
            case LayerKind::reshape:
                if (nc::shape_size(l.shape) != nc::shape_size(in)) {
                    throw ShapeError("reshape layer cannot view " + nc::shape_str(in) + " as " + nc::shape_str(l.shape));
                }
                in = l.shape;
                break;
            default: break;
        }
    }
    return in;
}

// Feed-forward stack whose parameters live in a caller-owned ParameterSet.
template <typename T>
class Sequential {
   public:
    Sequential() = default;

    Sequential(nc::ParameterSet<T>& params, const std::string& prefix, nc::Shape in_shape, Topology topo, nc::Rng& rng)
        : in_shape_(std::move(in_shape)), topo_(std::move(topo)) {
        nc::Shape cur = in_shape_;
        for (std::size_t i = 0; i < topo_.size(); ++i) {
            const auto& l = topo_[i];
            const std::string base = prefix + "." + std::to_string(i);
            if (l.kind == LayerKind::dense) {
                const nc::Shape next = infer_shape(cur, {l});
                auto& w = params.add(base + ".w", {l.units, cur[0]});
                auto& b = params.add(base + ".b", {l.units});
                nc::init_fan_in_uniform(w.value, cur[0], rng);
                weights_.push_back(&w);
                biases_.push_back(&b);
                cur = next;
            } else if (l.kind == LayerKind::conv3x3) {
                const nc::Shape next = infer_shape(cur, {l});
                auto& w = params.add(base + ".w", {l.units, cur[0], 3, 3});
                auto& b = params.add(base + ".b", {l.units});
                nc::init_fan_in_uniform(w.value, cur[0] * 9, rng);
                weights_.push_back(&w);
                biases_.push_back(&b);
                cur = next;
            } else {
                cur = infer_shape(cur, {l});
                weights_.push_back(nullptr);
                biases_.push_back(nullptr);
            }
        }
        out_shape_ = cur;
    }

    const nc::Shape& input_shape() const { return in_shape_; }
    const nc::Shape& output_shape() const { return out_shape_; }
    const Topology& topology() const { return topo_; }

    // x carries a leading batch axis.
    nc::Var forward(nc::Tape<T>& tp, nc::Var x) const {
        const nc::Shape& xs = tp.value(x).shape();
        if (xs.size() != in_shape_.size() + 1 || !std::equal(in_shape_.begin(), in_shape_.end(), xs.begin() + 1)) {
            throw ShapeError("network input " + nc::shape_str(xs) + " does not match (N, " +
                             nc::shape_str(in_shape_).substr(1));
        }
        const int n = xs[0];
        for (std::size_t i = 0; i < topo_.size(); ++i) {
            const auto& l = topo_[i];
            switch (l.kind) {
                case LayerKind::dense:
                    x = nc::dense(tp, x, tp.param(*weights_[i]), tp.param(*biases_[i]));
                    break;
                case LayerKind::conv3x3:
                    x = nc::conv3x3(tp, x, tp.param(*weights_[i]), tp.param(*biases_[i]));
                    break;
                case LayerKind::maxpool2x2: x = nc::maxpool2x2(tp, x); break;
                case LayerKind::upsample2x2: x = nc::upsample2x2(tp, x); break;
                case LayerKind::relu: x = nc::relu(tp, x); break;
                case LayerKind::tanh: x = nc::tanh(tp, x); break;
                case LayerKind::sigmoid: x = nc::sigmoid(tp, x); break;
                case LayerKind::flatten: {
                    const auto& s = tp.value(x).shape();
                    x = nc::reshape(tp, x, {n, static_cast<int>(tp.value(x).size() / s[0])});
                    break;
                }
                case LayerKind::reshape: {
                    nc::Shape s = l.shape;
                    s.insert(s.begin(), n);
                    x = nc::reshape(tp, x, s);
                    break;
                }
            }
        }
        return x;
    }

   private:
    nc::Shape in_shape_;
    nc::Shape out_shape_;
    Topology topo_;
    std::vector<nc::Parameter<T>*> weights_;
    std::vector<nc::Parameter<T>*> biases_;
};

}  // namespace dmbn::model
