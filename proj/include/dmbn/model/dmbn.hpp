#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "dmbn/error.hpp"
#include "dmbn/model/layers.hpp"
#include "dmbn/model/spec.hpp"
#include "dmbn/numcore.hpp"
#include "dmbn/simgen/dataset.hpp"

namespace dmbn::model {

inline constexpr double kBlendFloor = 1e-6;

// Mixture coefficients p and availability w, one entry per modality.
struct BlendWeights {
    std::vector<double> p;
    std::vector<double> w;

    // Training/inference invariants: p on the simplex with p >= floor,
    // w in [0, 1] with at least one positive entry.
    void validate(std::size_t modalities) const {
        if (p.size() != modalities || w.size() != modalities) {
            throw ValueError("blend weights sized " + std::to_string(p.size()) + "/" + std::to_string(w.size()) +
                             " for " + std::to_string(modalities) + " modalities");
        }
        double sum = 0.0;
        bool any = false;
        for (std::size_t i = 0; i < modalities; ++i) {
            if (!(p[i] >= kBlendFloor - 1e-12)) throw ValueError("blend: p below floor");
            if (!(w[i] >= 0.0 && w[i] <= 1.0)) throw ValueError("blend: availability outside [0, 1]");
            sum += p[i];
            any = any || w[i] > 0.0;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ValueError("blend: p does not sum to 1");
        if (!any) throw ValueError("blend: all availabilities are zero");
    }
};

// Normalized per-modality factors p^m w^m / sum_k p^k w^k.
inline std::vector<double> blend_factors(const BlendWeights& bw) {
    if (bw.p.size() != bw.w.size()) throw ValueError("blend: p and w differ in length");
    double denom = 0.0;
    for (std::size_t i = 0; i < bw.p.size(); ++i) {
        if (!(bw.p[i] >= 0.0) || !(bw.w[i] >= 0.0) || !std::isfinite(bw.p[i] * bw.w[i])) {
            throw ValueError("blend: p and w must be finite and non-negative");
        }
        denom += bw.p[i] * bw.w[i];
    }
    if (!(denom > 0.0)) throw ValueError("blend: sum of p*w is zero, no modality available");
    std::vector<double> f(bw.p.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = bw.p[i] * bw.w[i] / denom;
    return f;
}

// Flat Dirichlet draw shifted onto {p : p_m >= floor}; for two modalities
// p_0 is uniform on [floor, 1 - floor].
inline std::vector<double> sample_blend_coefficients(std::size_t modalities, nc::Rng& rng) {
    if (modalities < 1) throw ValueError("sample_blend_coefficients: need at least one modality");
    if (modalities == 1) return {1.0};
    std::vector<double> p(modalities);
    if (modalities == 2) {
        p[0] = rng.uniform();
    } else {
        double total = 0.0;
        for (auto& v : p) total += (v = rng.exponential());
        for (auto& v : p) v /= total;
    }
    if (modalities == 2) p[1] = 1.0 - p[0];
    const double scale = 1.0 - static_cast<double>(modalities) * kBlendFloor;
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < modalities; ++i) sum += (p[i] = kBlendFloor + scale * p[i]);
    p.back() = 1.0 - sum;
    return p;
}

struct Observation {
    float t = 0.0f;
    nc::Tensor<float> state;
};

// Observations per model modality (same order as ModelSpec::modalities).
struct ObservationSet {
    std::vector<std::vector<Observation>> per_modality;
};

template <typename T>
struct GaussianPrediction {
    nc::Tensor<T> mean;    // (Q, modality shape...)
    nc::Tensor<T> stddev;  // same shape; all ones for fixed-unit modalities
};

template <typename T>
class Dmbn {
   public:
    struct Decoded {
        nc::Var mean;
        std::optional<nc::Var> stddev;
    };

    explicit Dmbn(ModelSpec spec) : spec_(std::move(spec)) {
        spec_.validate();
        nc::Rng rng = nc::Rng::stream(spec_.seed, "init");
        for (const auto& m : spec_.modalities) {
            encoders_.emplace_back(params_, m.name + ".enc", m.encoder_input(), m.encoder, rng);
            decoders_.emplace_back(params_, m.name + ".dec", nc::Shape{spec_.latent_dim + 1}, m.decoder, rng);
        }
    }

    Dmbn(const Dmbn&) = delete;
    Dmbn& operator=(const Dmbn&) = delete;
    Dmbn(Dmbn&&) = default;
    Dmbn& operator=(Dmbn&&) = default;

    const ModelSpec& spec() const { return spec_; }
    nc::ParameterSet<T>& params() { return params_; }
    const nc::ParameterSet<T>& params() const { return params_; }
    int modality_count() const { return static_cast<int>(spec_.modalities.size()); }
    int latent_dim() const { return spec_.latent_dim; }

    // Latents (n, d_R) for n observations of modality m. `states` is
    // (n, raw shape...).
    template <typename S>
    nc::Var encode(nc::Tape<T>& tp, int m, std::span<const float> times, const nc::Tensor<S>& states) const {
        const ModalitySpec& ms = spec_.modalities.at(static_cast<std::size_t>(m));
        const std::size_t per = nc::shape_size(ms.shape);
        if (states.rank() != static_cast<int>(ms.shape.size()) + 1 ||
            !std::equal(ms.shape.begin(), ms.shape.end(), states.shape().begin() + 1)) {
            throw ShapeError("encode '" + ms.name + "': state batch " + nc::shape_str(states.shape()) +
                             " does not match modality shape " + nc::shape_str(ms.shape));
        }
        const int n = states.dim(0);
        if (n < 1 || static_cast<std::size_t>(n) != times.size()) {
            throw ShapeError("encode '" + ms.name + "': need one time per observation");
        }
        nc::Shape in_shape = ms.encoder_input();
        const std::size_t plane = ms.shape.size() == 1 ? 1 : static_cast<std::size_t>(ms.shape[1]) * ms.shape[2];
        const std::size_t in_per = nc::shape_size(in_shape);
        in_shape.insert(in_shape.begin(), n);
        nc::Tensor<T> input(in_shape);
        for (int i = 0; i < n; ++i) {
            T* dst = input.data() + i * in_per;
            const S* src = states.data() + i * per;
            std::fill(dst, dst + plane, static_cast<T>(times[i]));
            for (std::size_t k = 0; k < per; ++k) dst[plane + k] = static_cast<T>(src[k]);
        }
        return encoders_[m].forward(tp, tp.constant(std::move(input)));
    }

    // Decodes latent R (1, d_R) at each query time in one batch.
    Decoded decode(nc::Tape<T>& tp, int m, nc::Var latent, std::span<const float> times) const {
        const ModalitySpec& ms = spec_.modalities.at(static_cast<std::size_t>(m));
        const auto& ls = tp.value(latent).shape();
        if (ls != nc::Shape{1, spec_.latent_dim}) {
            throw ShapeError("decode '" + ms.name + "': latent must be (1, " + std::to_string(spec_.latent_dim) +
                             "), got " + nc::shape_str(ls));
        }
        const int q = static_cast<int>(times.size());
        if (q < 1) throw ValueError("decode: no query times");
        nc::Tensor<T> tcol(nc::Shape{q, 1});
        for (int i = 0; i < q; ++i) {
            if (!(times[i] >= 0.0f && times[i] <= 1.0f)) {
                throw ValueError("decode: query time " + std::to_string(times[i]) + " outside [0, 1]");
            }
            tcol[i] = static_cast<T>(times[i]);
        }
        nc::Var rep = q == 1 ? latent : nc::repeat_rows(tp, latent, q);
        nc::Var in = nc::concat(tp, {rep, tp.constant(std::move(tcol))}, 1);
        nc::Var raw = decoders_[m].forward(tp, in);
        const int ch = ms.shape[0];
        Decoded out;
        if (ms.variance == VarianceMode::learned) {
            out.mean = nc::slice(tp, raw, 1, 0, ch);
            nc::Var s = nc::softplus(tp, nc::slice(tp, raw, 1, ch, 2 * ch));
            out.stddev = nc::add_scalar(tp, s, static_cast<T>(spec_.std_floor));
        } else {
            out.mean = raw;
        }
        if (ms.mean_activation == MeanActivation::sigmoid) out.mean = nc::sigmoid(tp, out.mean);
        return out;
    }

   private:
    ModelSpec spec_;
    nc::ParameterSet<T> params_;
    std::vector<Sequential<T>> encoders_;
    std::vector<Sequential<T>> decoders_;
};

// Mean of a latent set along its leading axis.
template <typename T>
nc::Var aggregate_observations(nc::Tape<T>& tp, nc::Var latents) {
    return nc::mean_over_set(tp, latents);
}

template <typename T>
nc::Tensor<T> aggregate_observations(std::span<const nc::Tensor<T>> latents) {
    if (latents.empty()) throw ValueError("aggregate_observations: empty observation set");
    std::vector<double> acc(latents.front().size(), 0.0);
    for (const auto& l : latents) {
        if (!l.same_shape(latents.front())) throw ShapeError("aggregate_observations: latent lengths differ");
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += l[i];
    }
    nc::Tensor<T> out(latents.front().shape());
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<T>(acc[i] / static_cast<double>(latents.size()));
    return out;
}

// R = sum_m p^m w^m R^m / sum_m p^m w^m. Entries of `means` whose factor is
// zero may be absent.
template <typename T>
nc::Var blend(nc::Tape<T>& tp, const std::vector<std::optional<nc::Var>>& means, const BlendWeights& bw) {
    const auto f = blend_factors(bw);
    if (f.size() != means.size()) throw ValueError("blend: weight count does not match modality count");
    std::optional<nc::Var> acc;
    for (std::size_t m = 0; m < f.size(); ++m) {
        if (f[m] == 0.0) continue;
        if (!means[m]) throw ValueError("blend: modality " + std::to_string(m) + " is weighted but has no latent");
        nc::Var term = f[m] == 1.0 ? *means[m] : nc::scale(tp, *means[m], static_cast<T>(f[m]));
        acc = acc ? nc::add(tp, *acc, term) : term;
    }
    return *acc;
}

template <typename T>
nc::Tensor<T> blend(std::span<const nc::Tensor<T>> means, const BlendWeights& bw) {
    const auto f = blend_factors(bw);
    if (f.size() != means.size()) throw ValueError("blend: weight count does not match modality count");
    std::optional<nc::Shape> shape;
    for (std::size_t m = 0; m < f.size(); ++m) {
        if (f[m] == 0.0) continue;
        if (shape && means[m].shape() != *shape) throw ShapeError("blend: latent shapes differ");
        shape = means[m].shape();
    }
    nc::Tensor<T> out(*shape);
    for (std::size_t i = 0; i < out.size(); ++i) {
        double acc = 0.0;
        for (std::size_t m = 0; m < f.size(); ++m) {
            if (f[m] != 0.0) acc += f[m] * static_cast<double>(means[m][i]);
        }
        out[i] = static_cast<T>(acc);
    }
    return out;
}

// Rows `steps` of a (T, ...) stream, cast to S.
template <typename S>
nc::Tensor<S> gather_rows(const nc::Tensor<float>& stream, std::span<const int> steps) {
    const std::size_t per = stream.size() / static_cast<std::size_t>(stream.dim(0));
    nc::Shape s = stream.shape();
    s[0] = static_cast<int>(steps.size());
    nc::Tensor<S> out(s);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const float* src = stream.data() + static_cast<std::size_t>(steps[i]) * per;
        std::transform(src, src + per, out.data() + i * per, [](float v) { return static_cast<S>(v); });
    }
    return out;
}

// Sum over modalities of the Gaussian NLL of the targets (Q, shape...).
template <typename T>
nc::Var loss(nc::Tape<T>& tp, const std::vector<typename Dmbn<T>::Decoded>& predictions,
             const std::vector<nc::Tensor<T>>& targets) {
    if (predictions.size() != targets.size() || predictions.empty()) {
        throw ValueError("loss: need one target per predicted modality");
    }
    std::optional<nc::Var> total;
    for (std::size_t m = 0; m < predictions.size(); ++m) {
        const auto& p = predictions[m];
        nc::Var term = p.stddev ? nc::gaussian_nll(tp, targets[m], p.mean, *p.stddev)
                                : nc::gaussian_nll_unit(tp, targets[m], p.mean);
        total = total ? nc::add(tp, *total, term) : term;
    }
    return *total;
}

struct TrainingSample {
    std::size_t interaction = 0;
    std::vector<int> observations;
    std::vector<int> targets;
    BlendWeights weights;
};

// One training draw: interaction uniform over `pool`, n ~ U{1..obs_max}
// observation steps and `targets` target steps uniform with replacement,
// p from sample_blend_coefficients, w all ones.
inline TrainingSample sample_training_batch(std::span<const sim::Interaction> pool, std::size_t modalities, int obs_max,
                                            nc::Rng& rng, int targets = 1) {
    if (pool.empty()) throw ValueError("sample_training_batch: empty dataset");
    if (obs_max < 1) throw ValueError("sample_training_batch: obs_max must be >= 1");
    TrainingSample s;
    s.interaction = static_cast<std::size_t>(rng.below(pool.size()));
    const int steps = pool[s.interaction].steps();
    const int n = rng.range(1, obs_max);
    for (int i = 0; i < n; ++i) s.observations.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(steps))));
    for (int i = 0; i < targets; ++i) s.targets.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(steps))));
    s.weights.p = sample_blend_coefficients(modalities, rng);
    s.weights.w.assign(modalities, 1.0);
    return s;
}

// Maps each model modality onto its dataset stream by name.
inline std::vector<int> stream_indices(const ModelSpec& spec, const sim::Dataset& ds) {
    std::vector<int> idx;
    for (const auto& m : spec.modalities) {
        const int k = ds.modality_index(m.name);
        if (ds.modalities[k].shape != m.shape) {
            throw ShapeError("dataset modality '" + m.name + "' has shape " + nc::shape_str(ds.modalities[k].shape) +
                             ", model expects " + nc::shape_str(m.shape));
        }
        idx.push_back(k);
    }
    return idx;
}

// Forward pass for one sample; returns the loss node.
template <typename T>
nc::Var sample_loss(nc::Tape<T>& tp, const Dmbn<T>& model, const sim::Interaction& it, const std::vector<int>& streams,
                    const TrainingSample& s) {
    const int mcount = model.modality_count();
    std::vector<float> obs_t, tgt_t;
    for (int k : s.observations) obs_t.push_back(it.times[k]);
    for (int k : s.targets) tgt_t.push_back(it.times[k]);
    std::vector<std::optional<nc::Var>> means(mcount);
    for (int m = 0; m < mcount; ++m) {
        const auto states = gather_rows<float>(it.streams[streams[m]], s.observations);
        means[m] = aggregate_observations(tp, model.encode(tp, m, obs_t, states));
    }
    const nc::Var r = blend(tp, means, s.weights);
    std::vector<typename Dmbn<T>::Decoded> preds;
    std::vector<nc::Tensor<T>> targets;
    for (int m = 0; m < mcount; ++m) {
        preds.push_back(model.decode(tp, m, r, tgt_t));
        targets.push_back(gather_rows<T>(it.streams[streams[m]], s.targets));
    }
    return loss(tp, preds, targets);
}

struct TrainConfig {
    std::uint64_t iterations = 100000;
    double learning_rate = 1e-4;
    int obs_max = 5;
    int targets_per_iteration = 1;
    std::uint64_t seed = 0;
    int log_every = 100;
    std::uint64_t checkpoint_every = 0;  // 0 disables the checkpoint hook
    double final_lr_scale = 1.0;         // cosine anneal to learning_rate * scale; 1 keeps it constant

    double learning_rate_at(std::uint64_t step) const {
        if (final_lr_scale == 1.0 || iterations < 2) return learning_rate;
        const double progress = static_cast<double>(step) / static_cast<double>(iterations - 1);
        const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
        return learning_rate * (final_lr_scale + (1.0 - final_lr_scale) * cosine);
    }
};

struct LossPoint {
    std::uint64_t iteration = 0;  // steps completed
    double mean_loss = 0.0;       // mean over the preceding log window
    friend bool operator==(const LossPoint&, const LossPoint&) = default;
};

template <typename T>
struct TrainHooks {
    std::function<void(std::uint64_t step, const Dmbn<T>&)> on_checkpoint;
    std::function<void(const LossPoint&)> on_log;
};

// Runs config.iterations optimisation steps on the training split. The
// optimiser state may be passed in to resume; otherwise a fresh one is used.
template <typename T>
std::vector<LossPoint> train(Dmbn<T>& model, const sim::Dataset& ds, const TrainConfig& cfg,
                             std::type_identity_t<nc::AdamState<T>>* state = nullptr,
                             const std::type_identity_t<TrainHooks<T>>& hooks = {}) {
    const auto pool = ds.train();
    if (pool.empty()) throw ValueError("train: dataset has no training interactions");
    if (cfg.obs_max < 1) throw ValueError("train: obs_max must be >= 1");
    if (cfg.log_every < 1) throw ValueError("train: log_every must be >= 1");
    const auto streams = stream_indices(model.spec(), ds);
    nc::AdamState<T> local(nc::AdamConfig{cfg.learning_rate});
    nc::AdamState<T>& opt = state ? *state : local;
    opt.config.learning_rate = cfg.learning_rate;
    nc::Rng rng = nc::Rng::stream(cfg.seed, "training");

    std::vector<LossPoint> curve;
    double window = 0.0;
    int in_window = 0;
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0) hooks.on_checkpoint(0, model);
    nc::Tape<T> tp;
    for (std::uint64_t step = 0; step < cfg.iterations; ++step) {
        const TrainingSample s =
            sample_training_batch(pool, static_cast<std::size_t>(model.modality_count()), cfg.obs_max, rng,
                                  cfg.targets_per_iteration);
        opt.config.learning_rate = cfg.learning_rate_at(step);
        tp.clear();
        const nc::Var l = sample_loss(tp, model, pool[s.interaction], streams, s);
        const double lv = tp.value(l).item();
        if (!std::isfinite(lv)) {
            throw NumericalError("train: non-finite loss at iteration " + std::to_string(step) + " (learning rate " +
                                 std::to_string(opt.config.learning_rate) + ")");
        }
        model.params().zero_grad();
        tp.backward(l);
        nc::adam_step(opt, model.params());
        window += lv;
        if (++in_window == cfg.log_every) {
            curve.push_back({step + 1, window / in_window});
            if (hooks.on_log) hooks.on_log(curve.back());
            window = 0.0;
            in_window = 0;
        }
        if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
            hooks.on_checkpoint(step + 1, model);
        }
    }
    return curve;
}

// Latent of a single (t, state) observation.
template <typename T>
nc::Tensor<T> encode_modality(const Dmbn<T>& model, int m, float t, const nc::Tensor<float>& state) {
    nc::Shape s = state.shape();
    s.insert(s.begin(), 1);
    nc::Tape<T> tp(false);
    const float times[1] = {t};
    const nc::Var z = model.encode(tp, m, times, state.reshaped(s));
    return tp.value(z).reshaped({model.latent_dim()});
}

// One-shot conditional prediction. p is fixed to 1/|M|; modalities with
// zero availability need no observations. Each query time is decoded on its
// own, so an output never depends on which other times were requested.
template <typename T>
std::vector<GaussianPrediction<T>> predict_trajectory(const Dmbn<T>& model, const ObservationSet& obs,
                                                      const std::vector<double>& availability,
                                                      std::span<const float> queries) {
    const int mcount = model.modality_count();
    if (static_cast<int>(availability.size()) != mcount || static_cast<int>(obs.per_modality.size()) != mcount) {
        throw ValueError("predict_trajectory: availability/observations must have one entry per modality");
    }
    BlendWeights bw;
    bw.p.assign(static_cast<std::size_t>(mcount), 1.0 / mcount);
    bw.w = availability;
    bool any = false;
    for (int m = 0; m < mcount; ++m) {
        if (!(availability[m] >= 0.0 && availability[m] <= 1.0)) {
            throw ValueError("predict_trajectory: availability outside [0, 1]");
        }
        if (availability[m] > 0.0 && obs.per_modality[m].empty()) {
            throw ValueError("predict_trajectory: modality '" + model.spec().modalities[m].name +
                             "' has availability > 0 but no observations");
        }
        any = any || availability[m] > 0.0;
    }
    if (!any) throw ValueError("predict_trajectory: all availabilities are zero");
    for (float q : queries) {
        if (!(q >= 0.0f && q <= 1.0f)) throw ValueError("predict_trajectory: query time outside [0, 1]");
    }

    nc::Tape<T> tp(false);
    std::vector<std::optional<nc::Var>> means(mcount);
    for (int m = 0; m < mcount; ++m) {
        if (availability[m] == 0.0) continue;
        std::vector<float> times;
        std::vector<nc::Tensor<float>> states;
        for (const auto& o : obs.per_modality[m]) {
            times.push_back(o.t);
            states.push_back(o.state);
        }
        means[m] = aggregate_observations(tp, model.encode(tp, m, times, nc::stack(states)));
    }
    const nc::Tensor<T> latent = tp.value(blend(tp, means, bw));

    std::vector<GaussianPrediction<T>> out(static_cast<std::size_t>(mcount));
    const int q = static_cast<int>(queries.size());
    for (int m = 0; m < mcount; ++m) {
        nc::Shape s = model.spec().modalities[m].shape;
        s.insert(s.begin(), q);
        out[m].mean = nc::Tensor<T>(s);
        out[m].stddev = nc::Tensor<T>(s, T(1));
    }
    for (int i = 0; i < q; ++i) {
        nc::Tape<T> qt(false);
        const nc::Var r = qt.constant(latent);
        for (int m = 0; m < mcount; ++m) {
            const auto d = model.decode(qt, m, r, queries.subspan(static_cast<std::size_t>(i), 1));
            const auto& mv = qt.value(d.mean);
            std::copy(mv.begin(), mv.end(), out[m].mean.data() + i * mv.size());
            if (d.stddev) {
                const auto& sv = qt.value(*d.stddev);
                std::copy(sv.begin(), sv.end(), out[m].stddev.data() + i * sv.size());
            }
        }
    }
    return out;
}

}  // namespace dmbn::model
