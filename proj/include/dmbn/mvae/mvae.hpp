#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "dmbn/error.hpp"
#include "dmbn/model/checkpoint.hpp"
#include "dmbn/model/layers.hpp"
#include "dmbn/model/spec.hpp"
#include "dmbn/numcore.hpp"
#include "dmbn/simgen/dataset.hpp"

namespace dmbn::mvae {

inline constexpr float kMaskValue = -2.0f;
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Per-modality branch of the baseline. Encoders see the (t, t+1) pair, so
// the leading extent of the pair shape is twice that of `shape`.
struct BranchSpec {
    std::string name;
    nc::Shape shape;
    model::Topology encoder;
    model::Topology decoder;
    model::MeanActivation mean_activation = model::MeanActivation::identity;

    nc::Shape pair_shape() const {
        nc::Shape s = shape;
        s[0] *= 2;
        return s;
    }
    friend bool operator==(const BranchSpec&, const BranchSpec&) = default;
};

struct MvaeSpec {
    std::vector<BranchSpec> branches;
    int latent_dim = 64;
    std::uint64_t seed = 0;

    int index_of(const std::string& name) const {
        for (std::size_t i = 0; i < branches.size(); ++i) {
            if (branches[i].name == name) return static_cast<int>(i);
        }
        throw ValueError("baseline has no modality '" + name + "'");
    }

    void validate() const {
        if (branches.empty()) throw ValueError("baseline spec needs at least one modality");
        if (latent_dim < 1) throw ValueError("latent dimension must be positive");
        for (const auto& b : branches) {
            if (b.shape.size() != 1 && b.shape.size() != 3) {
                throw ShapeError("modality '" + b.name + "' must be a vector or (C, H, W) image");
            }
            const nc::Shape enc = model::infer_shape(b.pair_shape(), b.encoder);
            if (enc.size() != 1) throw ShapeError("encoder of '" + b.name + "' must end flat, got " + nc::shape_str(enc));
            const nc::Shape dec = model::infer_shape({latent_dim}, b.decoder);
            if (dec != b.pair_shape()) {
                throw ShapeError("decoder of '" + b.name + "' ends at " + nc::shape_str(dec) + ", expected " +
                                 nc::shape_str(b.pair_shape()));
            }
        }
    }
    friend bool operator==(const MvaeSpec&, const MvaeSpec&) = default;
};

// Mirrors a DMBN spec: same encoder/decoder layer kinds and sizes, inputs
// widened to the pair, means only at the output, encoders closed with relu.
inline MvaeSpec from_dmbn_spec(const model::ModelSpec& dm) {
    MvaeSpec s;
    s.latent_dim = dm.latent_dim;
    s.seed = dm.seed;
    for (const auto& m : dm.modalities) {
        BranchSpec b{m.name, m.shape, m.encoder, m.decoder, m.mean_activation};
        if (b.encoder.empty() || b.encoder.back().kind != model::LayerKind::relu) {
            b.encoder.push_back({model::LayerKind::relu, 0, {}});
        }
        auto last = std::find_if(b.decoder.rbegin(), b.decoder.rend(), [](const model::LayerDesc& l) {
            return l.kind == model::LayerKind::dense || l.kind == model::LayerKind::conv3x3;
        });
        if (last == b.decoder.rend()) throw ValueError("decoder of '" + m.name + "' has no output layer");
        last->units = 2 * m.shape[0];
        s.branches.push_back(std::move(b));
    }
    s.validate();
    return s;
}

inline MvaeSpec desk_spec(std::uint64_t seed = 0, int latent_dim = 64) {
    return from_dmbn_spec(model::desk_spec(seed, latent_dim));
}

enum class MaskScheme : std::uint8_t { none, joints_next, image_next, all_next, joints_now, image_now };

inline constexpr std::array<MaskScheme, 6> kAllSchemes = {MaskScheme::none,     MaskScheme::joints_next,
                                                          MaskScheme::image_next, MaskScheme::all_next,
                                                          MaskScheme::joints_now, MaskScheme::image_now};

inline std::string_view to_string(MaskScheme s) {
    switch (s) {
        case MaskScheme::none: return "none";
        case MaskScheme::joints_next: return "joints@t+1";
        case MaskScheme::image_next: return "image@t+1";
        case MaskScheme::all_next: return "all@t+1";
        case MaskScheme::joints_now: return "joints@t";
        case MaskScheme::image_now: return "image@t";
    }
    return "?";
}

inline MaskScheme parse_mask_scheme(std::string_view text) {
    for (MaskScheme s : kAllSchemes) {
        if (to_string(s) == text) return s;
    }
    throw ValueError("unknown mask scheme '" + std::string(text) + "'");
}

// Pair tensors, one per modality, each shaped (pair shape...) or with a
// leading batch axis. The first half of the leading per-sample axis is
// time t, the second half t+1.
using Pair = std::vector<nc::Tensor<float>>;

// Overwrites one half (slot 0 = t, 1 = t+1) of a modality's pair block.
inline void mask_block(nc::Tensor<float>& pair, const nc::Shape& pair_shape, int slot) {
    const std::size_t per = nc::shape_size(pair_shape);
    if (pair.size() % per != 0) throw ShapeError("mask: pair tensor does not match " + nc::shape_str(pair_shape));
    const std::size_t half = per / 2;
    for (std::size_t off = 0; off < pair.size(); off += per) {
        std::fill_n(pair.data() + off + slot * half, half, kMaskValue);
    }
}

inline Pair mask_input(Pair pair, const MvaeSpec& spec, MaskScheme scheme) {
    if (pair.size() != spec.branches.size()) throw ShapeError("mask: one pair block per modality expected");
    auto apply = [&](const char* name, int slot) {
        for (std::size_t m = 0; m < spec.branches.size(); ++m) {
            if (name == nullptr || spec.branches[m].name == name) mask_block(pair[m], spec.branches[m].pair_shape(), slot);
        }
    };
    switch (scheme) {
        case MaskScheme::none: break;
        case MaskScheme::joints_next: apply("joint", 1); break;
        case MaskScheme::image_next: apply("image", 1); break;
        case MaskScheme::all_next: apply(nullptr, 1); break;
        case MaskScheme::joints_now: apply("joint", 0); break;
        case MaskScheme::image_now: apply("image", 0); break;
    }
    return pair;
}

// Deterministic multimodal autoencoder: per-modality encoders, concatenation,
// a tanh bottleneck, a shared relu layer split across the decoders.
template <typename T>
class Mvae {
   public:
    explicit Mvae(MvaeSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        nc::Rng rng = nc::Rng::stream(spec_.seed, "mvae-init");
        int fused = 0;
        for (const auto& b : spec_.branches) {
            encoders_.emplace_back(params_, b.name + ".enc", b.pair_shape(), b.encoder, rng);
            fused += encoders_.back().output_shape()[0];
        }
        fuse_ = model::Sequential<T>(params_, "fuse", {fused}, model::parse_topology("dense:" + std::to_string(spec_.latent_dim) + " tanh"), rng);
        const int width = spec_.latent_dim * static_cast<int>(spec_.branches.size());
        shared_ = model::Sequential<T>(params_, "shared", {spec_.latent_dim}, model::parse_topology("dense:" + std::to_string(width) + " relu"), rng);
        for (const auto& b : spec_.branches) {
            decoders_.emplace_back(params_, b.name + ".dec", nc::Shape{spec_.latent_dim}, b.decoder, rng);
        }
    }

    Mvae(const Mvae&) = delete;
    Mvae& operator=(const Mvae&) = delete;
    Mvae(Mvae&&) = default;
    Mvae& operator=(Mvae&&) = default;

    const MvaeSpec& spec() const { return spec_; }
    nc::ParameterSet<T>& params() { return params_; }
    const nc::ParameterSet<T>& params() const { return params_; }
    int modality_count() const { return static_cast<int>(spec_.branches.size()); }

    // Inputs are (N, pair shape...) per modality; returns reconstructions of
    // the same shapes.
    std::vector<nc::Var> forward(nc::Tape<T>& tp, const Pair& batch) const {
        if (static_cast<int>(batch.size()) != modality_count()) {
            throw ShapeError("mvae forward: expected " + std::to_string(modality_count()) + " modality blocks, got " +
                             std::to_string(batch.size()));
        }
        std::vector<nc::Var> codes;
        int n = -1;
        for (std::size_t m = 0; m < batch.size(); ++m) {
            const nc::Shape want = spec_.branches[m].pair_shape();
            const nc::Shape& got = batch[m].shape();
            if (got.size() != want.size() + 1 || !std::equal(want.begin(), want.end(), got.begin() + 1) ||
                (n >= 0 && got[0] != n)) {
                throw ShapeError("mvae forward: block '" + spec_.branches[m].name + "' is " + nc::shape_str(got) +
                                 ", expected (N, " + nc::shape_str(want).substr(1));
            }
            n = got[0];
            codes.push_back(encoders_[m].forward(tp, tp.constant(nc::Tensor<T>::cast(batch[m]))));
        }
        const nc::Var z = fuse_.forward(tp, nc::concat(tp, codes, 1));
        const nc::Var h = shared_.forward(tp, z);
        std::vector<nc::Var> out;
        for (std::size_t m = 0; m < batch.size(); ++m) {
            const int d = spec_.latent_dim;
            nc::Var y = decoders_[m].forward(tp, nc::slice(tp, h, 1, static_cast<int>(m) * d, static_cast<int>(m + 1) * d));
            if (spec_.branches[m].mean_activation == model::MeanActivation::sigmoid) y = nc::sigmoid(tp, y);
            out.push_back(y);
        }
        return out;
    }

    Pair reconstruct(const Pair& batch) const {
        nc::Tape<T> tp(false);
        const auto out = forward(tp, batch);
        Pair r;
        for (const auto& v : out) r.push_back(nc::Tensor<float>::cast(tp.value(v)));
        return r;
    }

   private:
    MvaeSpec spec_;
    nc::ParameterSet<T> params_;
    std::vector<model::Sequential<T>> encoders_;
    model::Sequential<T> fuse_;
    model::Sequential<T> shared_;
    std::vector<model::Sequential<T>> decoders_;
};

// Sum over modalities of the per-element MSE against the unmasked pair.
template <typename T>
nc::Var reconstruction_loss(nc::Tape<T>& tp, const std::vector<nc::Var>& recon, const Pair& target) {
    nc::Var total = nc::mse(tp, recon.at(0), nc::Tensor<T>::cast(target.at(0)));
    for (std::size_t m = 1; m < recon.size(); ++m) {
        total = nc::add(tp, total, nc::mse(tp, recon[m], nc::Tensor<T>::cast(target.at(m))));
    }
    return total;
}

struct PairRef {
    std::size_t interaction = 0;
    int step = 0;  // pair (step, step + 1)
};

// Every consecutive pair of every interaction in `pool`.
inline std::vector<PairRef> enumerate_pairs(std::span<const sim::Interaction> pool) {
    std::vector<PairRef> refs;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        for (int k = 0; k + 1 < pool[i].steps(); ++k) refs.push_back({i, k});
    }
    return refs;
}

// Dataset stream index for each branch.
inline std::vector<int> branch_streams(const MvaeSpec& spec, const sim::Dataset& ds) {
    std::vector<int> idx;
    for (const auto& b : spec.branches) {
        const int s = ds.modality_index(b.name);
        if (ds.modalities[s].shape != b.shape) {
            throw ShapeError("dataset modality '" + b.name + "' is " + nc::shape_str(ds.modalities[s].shape) +
                             ", baseline expects " + nc::shape_str(b.shape));
        }
        idx.push_back(s);
    }
    return idx;
}

// Batched pair blocks (N, pair shape...) for the given references.
inline Pair gather_pairs(const MvaeSpec& spec, std::span<const sim::Interaction> pool, const std::vector<int>& streams,
                         std::span<const PairRef> refs) {
    Pair out;
    for (std::size_t m = 0; m < spec.branches.size(); ++m) {
        nc::Shape s = spec.branches[m].pair_shape();
        s.insert(s.begin(), static_cast<int>(refs.size()));
        nc::Tensor<float> t(s);
        const std::size_t per = nc::shape_size(spec.branches[m].shape);
        for (std::size_t r = 0; r < refs.size(); ++r) {
            const nc::Tensor<float>& src = pool[refs[r].interaction].streams[static_cast<std::size_t>(streams[m])];
            const float* a = src.data() + static_cast<std::size_t>(refs[r].step) * per;
            std::copy(a, a + 2 * per, t.data() + r * 2 * per);
        }
        out.push_back(std::move(t));
    }
    return out;
}

struct TrainConfig {
    int epochs = 200;
    int batch_size = 128;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

struct EpochPoint {
    int epoch = 0;
    double mean_loss = 0.0;
    friend bool operator==(const EpochPoint&, const EpochPoint&) = default;
};

// Shuffled minibatches over all training pairs; each sample draws one mask
// scheme uniformly per epoch.
template <typename T>
std::vector<EpochPoint> train(Mvae<T>& net, const sim::Dataset& ds, const TrainConfig& cfg,
                              std::type_identity_t<nc::AdamState<T>>* state = nullptr,
                              const std::function<void(const EpochPoint&)>& on_epoch = {}) {
    const auto pool = ds.train();
    if (pool.empty()) throw ValueError("mvae train: dataset has no training interactions");
    if (cfg.batch_size < 1) throw ValueError("mvae train: batch size must be >= 1");
    if (cfg.epochs < 0) throw ValueError("mvae train: epochs must be >= 0");
    const auto streams = branch_streams(net.spec(), ds);
    std::vector<PairRef> refs = enumerate_pairs(pool);
    if (refs.empty()) throw ValueError("mvae train: interactions need at least two steps");
    nc::AdamState<T> local(nc::AdamConfig{cfg.learning_rate});
    nc::AdamState<T>& opt = state ? *state : local;
    opt.config.learning_rate = cfg.learning_rate;
    nc::Rng rng = nc::Rng::stream(cfg.seed, "mvae-training");

    std::vector<EpochPoint> curve;
    nc::Tape<T> tp;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = refs.size(); i > 1; --i) std::swap(refs[i - 1], refs[rng.below(i)]);
        double total = 0.0;
        std::size_t seen = 0;
        for (std::size_t b = 0; b < refs.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t e = std::min(refs.size(), b + static_cast<std::size_t>(cfg.batch_size));
            const std::span<const PairRef> chunk(refs.data() + b, e - b);
            const Pair target = gather_pairs(net.spec(), pool, streams, chunk);
            Pair input = target;
            for (std::size_t r = 0; r < chunk.size(); ++r) {
                const MaskScheme s = kAllSchemes[rng.below(kAllSchemes.size())];
                if (s == MaskScheme::none) continue;
                Pair one;
                for (std::size_t m = 0; m < input.size(); ++m) one.push_back(nc::take_row(input[m], static_cast<int>(r)));
                one = mask_input(std::move(one), net.spec(), s);
                for (std::size_t m = 0; m < input.size(); ++m) {
                    std::copy(one[m].begin(), one[m].end(), input[m].data() + r * one[m].size());
                }
            }
            tp.clear();
            const nc::Var l = reconstruction_loss(tp, net.forward(tp, input), target);
            const double lv = tp.value(l).item();
            if (!std::isfinite(lv)) {
                throw NumericalError("mvae train: non-finite loss in epoch " + std::to_string(epoch) + " (learning rate " +
                                     std::to_string(opt.config.learning_rate) + ")");
            }
            net.params().zero_grad();
            tp.backward(l);
            nc::adam_step(opt, net.params());
            total += lv * static_cast<double>(chunk.size());
            seen += chunk.size();
        }
        curve.push_back({epoch + 1, total / static_cast<double>(seen)});
        if (on_epoch) on_epoch(curve.back());
    }
    return curve;
}

enum class Direction { forward, backward };

// Iterative prediction. Forward: step 1 sees the observation in the t block
// (absent modalities masked) and a fully masked t+1 block; every later step
// feeds the previous t+1 prediction back as its t block. Backward mirrors
// this with the roles of the two blocks swapped. Returns, per modality, a
// (k, state shape...) tensor; row j is the state j + 1 steps away.
template <typename T>
std::vector<nc::Tensor<float>> rollout(const Mvae<T>& net, const std::vector<std::optional<nc::Tensor<float>>>& initial,
                                       int k, Direction dir = Direction::forward) {
    const auto& spec = net.spec();
    if (k < 1) throw ValueError("mvae rollout: step count must be >= 1");
    if (initial.size() != spec.branches.size()) throw ValueError("mvae rollout: one initial entry per modality expected");
    bool any = false;
    std::vector<nc::Tensor<float>> current;
    for (std::size_t m = 0; m < initial.size(); ++m) {
        const auto& b = spec.branches[m];
        if (initial[m]) {
            if (initial[m]->shape() != b.shape) {
                throw ShapeError("mvae rollout: initial '" + b.name + "' is " + nc::shape_str(initial[m]->shape()) +
                                 ", expected " + nc::shape_str(b.shape));
            }
            current.push_back(*initial[m]);
            any = true;
        } else {
            current.emplace_back(b.shape, kMaskValue);
        }
    }
    if (!any) throw ValueError("mvae rollout: at least one modality must be observed");

    const std::size_t known = dir == Direction::forward ? 0 : 1;
    std::vector<nc::Tensor<float>> seq;
    for (const auto& b : spec.branches) {
        nc::Shape s = b.shape;
        s.insert(s.begin(), k);
        seq.emplace_back(s);
    }
    for (int step = 0; step < k; ++step) {
        Pair input;
        for (std::size_t m = 0; m < spec.branches.size(); ++m) {
            nc::Shape s = spec.branches[m].pair_shape();
            s.insert(s.begin(), 1);
            nc::Tensor<float> t(s, kMaskValue);
            std::copy(current[m].begin(), current[m].end(), t.begin() + known * current[m].size());
            input.push_back(std::move(t));
        }
        const Pair out = net.reconstruct(input);
        for (std::size_t m = 0; m < spec.branches.size(); ++m) {
            const std::size_t per = current[m].size();
            const auto src = out[m].begin() + static_cast<std::ptrdiff_t>((1 - known) * per);
            std::copy(src, src + static_cast<std::ptrdiff_t>(per), current[m].begin());
            std::copy(current[m].begin(), current[m].end(), seq[m].data() + static_cast<std::size_t>(step) * per);
        }
    }
    return seq;
}

// Whole trajectory of `steps` states from an observation at step `c`: the
// observed step is the t-block reconstruction of the first forward pass,
// later steps roll forward and earlier steps roll backward.
template <typename T>
std::vector<nc::Tensor<float>> full_trajectory(const Mvae<T>& net,
                                               const std::vector<std::optional<nc::Tensor<float>>>& obs, int c,
                                               int steps) {
    if (c < 0 || c >= steps) throw ValueError("mvae trajectory: observed step outside the trajectory");
    const auto& spec = net.spec();
    std::vector<nc::Tensor<float>> out;
    for (const auto& b : spec.branches) {
        nc::Shape s = b.shape;
        s.insert(s.begin(), steps);
        out.emplace_back(s);
    }
    Pair input;
    for (std::size_t m = 0; m < spec.branches.size(); ++m) {
        nc::Shape s = spec.branches[m].pair_shape();
        s.insert(s.begin(), 1);
        nc::Tensor<float> t(s, kMaskValue);
        if (m < obs.size() && obs[m]) {
            if (obs[m]->shape() != spec.branches[m].shape) throw ShapeError("mvae trajectory: observation shape mismatch");
            std::copy(obs[m]->begin(), obs[m]->end(), t.begin());
        }
        input.push_back(std::move(t));
    }
    const Pair now = net.reconstruct(input);
    for (std::size_t m = 0; m < spec.branches.size(); ++m) {
        const std::size_t per = nc::shape_size(spec.branches[m].shape);
        std::copy(now[m].begin(), now[m].begin() + static_cast<std::ptrdiff_t>(per), out[m].data() + c * per);
    }
    auto place = [&](const std::vector<nc::Tensor<float>>& seq, int sign) {
        for (std::size_t m = 0; m < spec.branches.size(); ++m) {
            const std::size_t per = nc::shape_size(spec.branches[m].shape);
            for (int j = 0; j < seq[m].dim(0); ++j) {
                std::copy(seq[m].data() + j * per, seq[m].data() + (j + 1) * per, out[m].data() + (c + sign * (j + 1)) * per);
            }
        }
    };
    if (c + 1 < steps) place(rollout(net, obs, steps - 1 - c, Direction::forward), 1);
    if (c > 0) place(rollout(net, obs, c, Direction::backward), -1);
    return out;
}

inline void write_spec(io::Writer& w, const MvaeSpec& s) {
    w.u32(static_cast<std::uint32_t>(s.branches.size()));
    for (const auto& b : s.branches) {
        w.str(b.name);
        w.u32(static_cast<std::uint32_t>(b.shape.size()));
        for (int e : b.shape) w.u32(static_cast<std::uint32_t>(e));
        w.str(model::to_string(b.encoder));
        w.str(model::to_string(b.decoder));
        w.u8(static_cast<std::uint8_t>(b.mean_activation));
    }
    w.u32(static_cast<std::uint32_t>(s.latent_dim));
    w.u64(s.seed);
}

inline MvaeSpec read_spec(io::Reader& r) {
    MvaeSpec s;
    const std::uint32_t n = r.u32();
    if (n == 0 || n > 64) throw FormatError("implausible modality count " + std::to_string(n));
    for (std::uint32_t i = 0; i < n; ++i) {
        BranchSpec b;
        b.name = r.str(256);
        const std::uint32_t rank = r.u32();
        if (rank != 1 && rank != 3) throw FormatError("bad modality rank in baseline checkpoint");
        for (std::uint32_t k = 0; k < rank; ++k) b.shape.push_back(static_cast<int>(r.u32()));
        try {
            b.encoder = model::parse_topology(r.str(4096));
            b.decoder = model::parse_topology(r.str(4096));
        } catch (const ValueError& e) {
            throw FormatError(std::string("baseline checkpoint topology: ") + e.what());
        }
        const std::uint8_t act = r.u8();
        if (act > 1) throw FormatError("bad mean activation in baseline checkpoint");
        b.mean_activation = static_cast<model::MeanActivation>(act);
        s.branches.push_back(std::move(b));
    }
    s.latent_dim = static_cast<int>(r.u32());
    s.seed = r.u64();
    try {
        s.validate();
    } catch (const Error& e) {
        throw FormatError(std::string("baseline checkpoint spec: ") + e.what());
    }
    return s;
}

template <typename T>
void save_checkpoint(const Mvae<T>& net, std::ostream& os, const nc::AdamState<T>* opt = nullptr) {
    io::Writer w(os);
    w.magic("MVAE");
    w.u32(kCheckpointVersion);
    write_spec(w, net.spec());
    model::write_param_table(w, net.params());
    model::write_optimizer(w, opt);
    w.check();
}

template <typename T>
Mvae<T> load_checkpoint(std::istream& is, nc::AdamState<T>* opt = nullptr) {
    io::Reader r(is);
    r.expect_magic("MVAE");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) throw FormatError("unsupported MVAE checkpoint version " + std::to_string(version));
    Mvae<T> net(read_spec(r));
    model::read_param_table(r, net.params());
    nc::AdamState<T> scratch;
    model::read_optimizer(r, net.params(), opt ? *opt : scratch);
    return net;
}

template <typename T>
void save_checkpoint(const Mvae<T>& net, const std::filesystem::path& path, const nc::AdamState<T>* opt = nullptr) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    save_checkpoint(net, os, opt);
}

template <typename T = float>
Mvae<T> load_checkpoint(const std::filesystem::path& path, nc::AdamState<T>* opt = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint " + path.string());
    return load_checkpoint<T>(is, opt);
}

}  // namespace dmbn::mvae
