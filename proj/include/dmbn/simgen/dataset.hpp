#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "dmbn/error.hpp"
#include "dmbn/numcore/binio.hpp"
#include "dmbn/numcore/rng.hpp"
#include "dmbn/numcore/tensor.hpp"
#include "dmbn/simgen/planner.hpp"
#include "dmbn/simgen/render.hpp"

namespace dmbn::sim {

struct ModalityInfo {
    std::string name;
    nc::Shape shape;
    friend bool operator==(const ModalityInfo&, const ModalityInfo&) = default;
};

// One recorded trajectory. streams[m] has shape (T, modality shape...).
struct Interaction {
    Action label = Action::push;
    double approach = 0.0;
    std::vector<float> times;
    std::vector<nc::Tensor<float>> streams;

    int steps() const { return static_cast<int>(times.size()); }
    friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct Dataset {
    std::vector<ModalityInfo> modalities;
    std::vector<Interaction> interactions;
    std::size_t split = 0;  // interactions [0, split) train, [split, n) test

    int modality_index(const std::string& name) const {
        for (std::size_t i = 0; i < modalities.size(); ++i) {
            if (modalities[i].name == name) return static_cast<int>(i);
        }
        throw ValueError("dataset has no modality '" + name + "'");
    }
    std::span<const Interaction> train() const { return {interactions.data(), split}; }
    std::span<const Interaction> test() const {
        return {interactions.data() + split, interactions.size() - split};
    }
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

inline const std::vector<ModalityInfo>& standard_modalities() {
    static const std::vector<ModalityInfo> m = {
        {"image", {3, world::kImageSize, world::kImageSize}},
        {"joint", {3}},
    };
    return m;
}

inline nc::Tensor<float> joint_vector(const SceneState& s) {
    return nc::Tensor<float>(nc::Shape{3}, {static_cast<float>(s.theta1), static_cast<float>(s.theta2),
                                            static_cast<float>(s.aperture)});
}

// Records a planned scene sequence as an Interaction with the standard
// (image, joint) modalities.
inline Interaction record_interaction(Action action, double approach, const std::vector<SceneState>& scenes,
                                      Viewpoint view = Viewpoint::own, Occlusion occlusion = Occlusion::none) {
    Interaction it;
    it.label = action;
    it.approach = approach;
    std::vector<nc::Tensor<float>> images, joints;
    for (std::size_t k = 0; k < scenes.size(); ++k) {
        it.times.push_back(static_cast<float>(static_cast<double>(k) / static_cast<double>(scenes.size() - 1)));
        images.push_back(render_frame(scenes[k], view, occlusion));
        joints.push_back(joint_vector(scenes[k]));
    }
    it.streams.push_back(nc::stack(images));
    it.streams.push_back(nc::stack(joints));
    return it;
}

inline Interaction simulate(Action action, double approach, Viewpoint view = Viewpoint::own,
                            Occlusion occlusion = Occlusion::none) {
    return record_interaction(action, approach, plan_action(action, approach), view, occlusion);
}

inline constexpr int kMaxResamples = 100;

// Generates n_push + n_grasp interactions in a seeded random order and
// records an 80/20 train/test boundary.
inline Dataset generate_dataset(int n_push, int n_grasp, std::uint64_t seed) {
    if (n_push < 0 || n_grasp < 0 || n_push + n_grasp < 1) {
        throw ValueError("generate_dataset: need at least one interaction");
    }
    const int total = n_push + n_grasp;
    std::vector<Action> labels(static_cast<std::size_t>(n_push), Action::push);
    labels.insert(labels.end(), static_cast<std::size_t>(n_grasp), Action::grasp);
    nc::Rng order = nc::Rng::stream(seed, "dataset.order");
    for (int i = total - 1; i > 0; --i) std::swap(labels[i], labels[order.below(static_cast<std::uint64_t>(i) + 1)]);

    Dataset ds;
    ds.modalities = standard_modalities();
    for (int i = 0; i < total; ++i) {
        nc::Rng rng = nc::Rng::stream(seed, "dataset.interaction", static_cast<std::uint64_t>(i));
        bool done = false;
        for (int attempt = 0; attempt <= kMaxResamples && !done; ++attempt) {
            const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
            try {
                ds.interactions.push_back(simulate(labels[i], phi));
                done = true;
            } catch (const IkError&) {
            }
        }
        if (!done) {
            throw ValueError("generate_dataset: interaction " + std::to_string(i) + " unreachable after " +
                             std::to_string(kMaxResamples) + " resamples");
        }
    }
    ds.split = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.8 * total)));
    ds.split = std::min<std::size_t>(ds.split, static_cast<std::size_t>(total));
    return ds;
}

// First `n` training interactions plus the full test split.
inline Dataset with_train_size(const Dataset& ds, std::size_t n) {
    if (n < 1 || n > ds.split) throw ValueError("training size " + std::to_string(n) + " outside [1, " + std::to_string(ds.split) + "]");
    Dataset out;
    out.modalities = ds.modalities;
    out.interactions.assign(ds.interactions.begin(), ds.interactions.begin() + static_cast<std::ptrdiff_t>(n));
    out.interactions.insert(out.interactions.end(), ds.interactions.begin() + static_cast<std::ptrdiff_t>(ds.split),
                            ds.interactions.end());
    out.split = n;
    return out;
}

inline void save_dataset(const Dataset& ds, std::ostream& os) {
    io::Writer w(os);
    w.magic("MMDS");
    w.u32(kDatasetVersion);
    w.u32(static_cast<std::uint32_t>(ds.modalities.size()));
    for (const auto& m : ds.modalities) {
        w.str(m.name);
        w.u32(static_cast<std::uint32_t>(m.shape.size()));
        for (int e : m.shape) w.u32(static_cast<std::uint32_t>(e));
    }
    w.u32(static_cast<std::uint32_t>(ds.interactions.size()));
    w.u32(static_cast<std::uint32_t>(ds.split));
    std::vector<float> row;
    for (const auto& it : ds.interactions) {
        if (it.streams.size() != ds.modalities.size()) throw ValueError("save_dataset: stream count mismatch");
        w.u8(static_cast<std::uint8_t>(it.label));
        w.f64(it.approach);
        w.u32(static_cast<std::uint32_t>(it.steps()));
        for (int k = 0; k < it.steps(); ++k) {
            row.clear();
            row.push_back(it.times[k]);
            for (std::size_t m = 0; m < it.streams.size(); ++m) {
                const std::size_t n = nc::shape_size(ds.modalities[m].shape);
                const float* p = it.streams[m].data() + static_cast<std::size_t>(k) * n;
                row.insert(row.end(), p, p + n);
            }
            w.f32s(row.data(), row.size());
        }
    }
    w.check();
}

inline Dataset load_dataset(std::istream& is) {
    io::Reader r(is);
    r.expect_magic("MMDS");
    const std::uint32_t version = r.u32();
    if (version != kDatasetVersion) throw FormatError("unsupported MMDS version " + std::to_string(version));
    Dataset ds;
    const std::uint32_t n_mod = r.u32();
    if (n_mod == 0 || n_mod > 64) throw FormatError("implausible modality count " + std::to_string(n_mod));
    for (std::uint32_t i = 0; i < n_mod; ++i) {
        ModalityInfo m;
        m.name = r.str(4096);
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > 8) throw FormatError("implausible modality rank " + std::to_string(rank));
        for (std::uint32_t k = 0; k < rank; ++k) m.shape.push_back(static_cast<int>(r.u32()));
        ds.modalities.push_back(std::move(m));
    }
    const std::uint32_t count = r.u32();
    ds.split = r.u32();
    if (ds.split > count) throw FormatError("split boundary beyond interaction count");
    std::size_t row_len = 1;
    for (const auto& m : ds.modalities) row_len += nc::shape_size(m.shape);
    std::vector<float> row(row_len);
    for (std::uint32_t i = 0; i < count; ++i) {
        Interaction it;
        const std::uint8_t label = r.u8();
        if (label > 1) throw FormatError("bad action label " + std::to_string(label));
        it.label = static_cast<Action>(label);
        it.approach = r.f64();
        const std::uint32_t steps = r.u32();
        if (steps == 0 || steps > 100000) throw FormatError("implausible step count " + std::to_string(steps));
        for (const auto& m : ds.modalities) {
            nc::Shape s = m.shape;
            s.insert(s.begin(), static_cast<int>(steps));
            it.streams.emplace_back(s);
        }
        for (std::uint32_t k = 0; k < steps; ++k) {
            r.f32s(row.data(), row_len);
            it.times.push_back(row[0]);
            std::size_t off = 1;
            for (std::size_t m = 0; m < ds.modalities.size(); ++m) {
                const std::size_t n = nc::shape_size(ds.modalities[m].shape);
                std::copy(row.begin() + off, row.begin() + off + n, it.streams[m].data() + k * n);
                off += n;
            }
        }
        ds.interactions.push_back(std::move(it));
    }
    return ds;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    save_dataset(ds, os);
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open dataset " + path.string());
    return load_dataset(is);
}

}  // namespace dmbn::sim
