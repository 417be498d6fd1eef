#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dmbn/error.hpp"
#include "dmbn/model/layers.hpp"
#include "dmbn/numcore/binio.hpp"

namespace dmbn::model {

enum class VarianceMode : std::uint8_t { learned = 0, fixed_unit = 1 };
enum class MeanActivation : std::uint8_t { identity = 0, sigmoid = 1 };

struct ModalitySpec {
    std::string name;
    nc::Shape shape;  // raw state shape: (L) for vectors, (C, H, W) for images
    Topology encoder;
    Topology decoder;
    VarianceMode variance = VarianceMode::learned;
    MeanActivation mean_activation = MeanActivation::identity;

    // The query/observation time is prepended to vectors and added as a
    // leading constant channel to images.
    nc::Shape encoder_input() const {
        nc::Shape s = shape;
        s[0] += 1;
        return s;
    }
    int outputs_per_element() const { return variance == VarianceMode::learned ? 2 : 1; }

    friend bool operator==(const ModalitySpec&, const ModalitySpec&) = default;
};

struct ModelSpec {
    std::vector<ModalitySpec> modalities;
    int latent_dim = 64;
    std::uint64_t seed = 0;
    double std_floor = 0.01;

    int index_of(const std::string& name) const {
        for (std::size_t i = 0; i < modalities.size(); ++i) {
            if (modalities[i].name == name) return static_cast<int>(i);
        }
        throw ValueError("model has no modality '" + name + "'");
    }

    // Checks every encoder ends at latent_dim and every decoder produces the
    // raw shape (times two for learned variance).
    void validate() const {
        if (modalities.empty()) throw ValueError("model spec needs at least one modality");
        if (latent_dim < 1) throw ValueError("latent dimension must be positive");
        if (!(std_floor > 0.0)) throw ValueError("std floor must be positive");
        for (const auto& m : modalities) {
            if (m.shape.size() != 1 && m.shape.size() != 3) {
                throw ShapeError("modality '" + m.name + "' must be a vector or (C, H, W) image, got " +
                                 nc::shape_str(m.shape));
            }
            const nc::Shape enc = infer_shape(m.encoder_input(), m.encoder);
            if (enc != nc::Shape{latent_dim}) {
                throw ShapeError("encoder of '" + m.name + "' ends at " + nc::shape_str(enc) + ", expected (" +
                                 std::to_string(latent_dim) + ")");
            }
            nc::Shape want = m.shape;
            want[0] *= m.outputs_per_element();
            const nc::Shape dec = infer_shape({latent_dim + 1}, m.decoder);
            if (dec != want) {
                throw ShapeError("decoder of '" + m.name + "' ends at " + nc::shape_str(dec) + ", expected " +
                                 nc::shape_str(want));
            }
        }
    }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Desk-scale topologies: the appendix layer kinds and order, with four
// conv blocks for 32x32 images and halved channel counts.
inline ModalitySpec desk_image_modality(int latent_dim = 64, VarianceMode variance = VarianceMode::fixed_unit) {
    const int out_ch = 3 * (variance == VarianceMode::learned ? 2 : 1);
    return ModalitySpec{
        "image",
        {3, 32, 32},
        parse_topology("conv:16 relu pool conv:32 relu pool conv:32 relu pool conv:64 relu pool flatten dense:" +
                       std::to_string(latent_dim)),
        parse_topology("dense:256 relu reshape:64x2x2 conv:64 relu up conv:32 relu up conv:32 relu up "
                       "conv:16 relu up conv:8 relu conv:8 relu conv:" +
                       std::to_string(out_ch)),
        variance,
        MeanActivation::sigmoid,
    };
}

inline ModalitySpec desk_joint_modality(int latent_dim = 64, int joints = 3) {
    return ModalitySpec{
        "joint",
        {joints},
        parse_topology("dense:32 relu dense:64 relu dense:64 relu dense:128 relu dense:128 relu dense:256 relu dense:" +
                       std::to_string(latent_dim) + " relu"),
        parse_topology("dense:1024 relu dense:512 relu dense:216 relu dense:128 relu dense:32 relu dense:" +
                       std::to_string(2 * joints)),
        VarianceMode::learned,
        MeanActivation::identity,
    };
}

inline ModelSpec desk_spec(std::uint64_t seed = 0, int latent_dim = 64, bool with_joints = true,
                           VarianceMode image_variance = VarianceMode::fixed_unit) {
    ModelSpec s;
    s.latent_dim = latent_dim;
    s.seed = seed;
    s.modalities.push_back(desk_image_modality(latent_dim, image_variance));
    if (with_joints) s.modalities.push_back(desk_joint_modality(latent_dim));
    s.validate();
    return s;
}

// Appendix-scale network (128x128 images, 7 joints, 128-d latent).
inline ModelSpec paper_spec(std::uint64_t seed = 0) {
    ModelSpec s;
    s.latent_dim = 128;
    s.seed = seed;
    s.modalities.push_back(ModalitySpec{
        "image",
        {3, 128, 128},
        parse_topology("conv:32 relu pool conv:64 relu pool conv:64 relu pool conv:128 relu pool conv:128 relu pool "
                       "conv:256 relu pool flatten dense:128"),
        parse_topology("dense:1024 relu reshape:256x2x2 conv:256 relu up conv:128 relu up conv:128 relu up conv:64 "
                       "relu up conv:64 relu up conv:32 relu up conv:16 relu conv:8 relu conv:3"),
        VarianceMode::fixed_unit,
        MeanActivation::sigmoid,
    });
    s.modalities.push_back(ModalitySpec{
        "joint",
        {7},
        parse_topology("dense:32 relu dense:64 relu dense:64 relu dense:128 relu dense:128 relu dense:256 relu "
                       "dense:128 relu"),
        parse_topology("dense:1024 relu dense:512 relu dense:216 relu dense:128 relu dense:32 relu dense:14"),
        VarianceMode::learned,
        MeanActivation::identity,
    });
    s.validate();
    return s;
}

inline void write_spec(io::Writer& w, const ModelSpec& s) {
    w.u32(static_cast<std::uint32_t>(s.modalities.size()));
    for (const auto& m : s.modalities) {
        w.str(m.name);
        w.u32(static_cast<std::uint32_t>(m.shape.size()));
        for (int e : m.shape) w.u32(static_cast<std::uint32_t>(e));
        w.str(to_string(m.encoder));
        w.str(to_string(m.decoder));
        w.u8(static_cast<std::uint8_t>(m.variance));
        w.u8(static_cast<std::uint8_t>(m.mean_activation));
    }
    w.u32(static_cast<std::uint32_t>(s.latent_dim));
    w.u64(s.seed);
    w.f64(s.std_floor);
}

inline ModelSpec read_spec(io::Reader& r) {
    ModelSpec s;
    const std::uint32_t n = r.u32();
    if (n == 0 || n > 64) throw FormatError("implausible modality count " + std::to_string(n));
    for (std::uint32_t i = 0; i < n; ++i) {
        ModalitySpec m;
        m.name = r.str(4096);
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > 8) throw FormatError("implausible modality rank");
        for (std::uint32_t k = 0; k < rank; ++k) m.shape.push_back(static_cast<int>(r.u32()));
        m.encoder = parse_topology(r.str());
        m.decoder = parse_topology(r.str());
        const std::uint8_t var = r.u8(), act = r.u8();
        if (var > 1 || act > 1) throw FormatError("bad modality mode byte");
        m.variance = static_cast<VarianceMode>(var);
        m.mean_activation = static_cast<MeanActivation>(act);
        s.modalities.push_back(std::move(m));
    }
    s.latent_dim = static_cast<int>(r.u32());
    s.seed = r.u64();
    s.std_floor = r.f64();
    s.validate();
    return s;
}

}  // namespace dmbn::model
