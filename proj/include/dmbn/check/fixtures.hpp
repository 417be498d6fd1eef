#pragma once

#include "dmbn/model/spec.hpp"
#include "dmbn/simgen/dataset.hpp"

namespace dmbn::check {

// d_R = 4 with 4x4 images; small enough for exhaustive finite differences.
inline model::ModelSpec tiny_spec(std::uint64_t seed = 1,
                                  model::VarianceMode image_variance = model::VarianceMode::fixed_unit) {
    model::ModelSpec s;
    s.latent_dim = 4;
    s.seed = seed;
    const int out_ch = image_variance == model::VarianceMode::learned ? 6 : 3;
    s.modalities.push_back({"image",
                            {3, 4, 4},
                            model::parse_topology("conv:2 tanh pool flatten dense:4"),
                            model::parse_topology("dense:8 tanh reshape:2x2x2 up conv:" + std::to_string(out_ch)),
                            image_variance,
                            model::MeanActivation::sigmoid});
    s.modalities.push_back({"joint",
                            {3},
                            model::parse_topology("dense:5 tanh dense:4"),
                            model::parse_topology("dense:5 tanh dense:6"),
                            model::VarianceMode::learned,
                            model::MeanActivation::identity});
    s.validate();
    return s;
}

// Cheap network over the standard 32x32 / 3-joint modalities.
inline model::ModelSpec small_spec(std::uint64_t seed = 1, bool with_joints = true) {
    model::ModelSpec s;
    s.latent_dim = 16;
    s.seed = seed;
    s.modalities.push_back({"image",
                            {3, 32, 32},
                            model::parse_topology("pool pool conv:4 relu pool flatten dense:16"),
                            model::parse_topology("dense:64 relu reshape:4x4x4 up up up conv:3"),
                            model::VarianceMode::fixed_unit,
                            model::MeanActivation::sigmoid});
    if (with_joints) {
        s.modalities.push_back({"joint",
                                {3},
                                model::parse_topology("dense:32 relu dense:16"),
                                model::parse_topology("dense:32 relu dense:6"),
                                model::VarianceMode::learned,
                                model::MeanActivation::identity});
    }
    s.validate();
    return s;
}

// Interaction with 4x4 images and smooth joint signals for tiny_spec.
inline sim::Interaction tiny_interaction(std::uint64_t seed, int steps = 6) {
    nc::Rng rng = nc::Rng::stream(seed, "tiny");
    sim::Interaction it;
    nc::Tensor<float> img(nc::Shape{steps, 3, 4, 4});
    nc::Tensor<float> joint(nc::Shape{steps, 3});
    for (int k = 0; k < steps; ++k) {
        it.times.push_back(static_cast<float>(k) / static_cast<float>(steps - 1));
        for (int i = 0; i < 48; ++i) img[k * 48 + i] = static_cast<float>(rng.uniform());
        for (int j = 0; j < 3; ++j) joint[k * 3 + j] = static_cast<float>(std::sin(0.7 * k + j) + rng.uniform(-0.1, 0.1));
    }
    it.streams = {img, joint};
    return it;
}

}  // namespace dmbn::check
