#include <chrono>
#include <cmath>
#include <cstdio>

#include "dmbn/model/checkpoint.hpp"
#include "dmbn/model/dmbn.hpp"
#include "dmbn/simgen/dataset.hpp"

int main(int argc, char** argv) {
    using namespace dmbn;
    const int iters = argc > 1 ? std::atoi(argv[1]) : 200;
    auto t0 = std::chrono::steady_clock::now();
    auto ds = sim::generate_dataset(50, 50, 1);
    auto t1 = std::chrono::steady_clock::now();
    std::printf("gen %.3fs\n", std::chrono::duration<double>(t1 - t0).count());
    const bool learned = argc > 6 && std::atoi(argv[6]) != 0;
    model::Dmbn<float> m(model::desk_spec(1, 64, true, learned ? model::VarianceMode::learned : model::VarianceMode::fixed_unit));
    std::printf("params %zu\n", m.params().element_count());
    model::TrainConfig cfg;
    cfg.iterations = iters;
    cfg.log_every = 50;
    if (argc > 2) cfg.learning_rate = std::atof(argv[2]);
    if (argc > 3) cfg.targets_per_iteration = std::atoi(argv[3]);
    if (argc > 4) cfg.obs_max = std::atoi(argv[4]);
    if (argc > 5) cfg.final_lr_scale = std::atof(argv[5]);
    auto evaluate = [&](std::uint64_t step, const model::Dmbn<float>& m) {
    const int T = 50;
    std::vector<double> mean_img(3 * 32 * 32 * T, 0.0);
    for (auto& it : ds.train()) for (std::size_t k = 0; k < mean_img.size(); ++k) mean_img[k] += it.streams[0][k] / ds.train().size();
    double mse = 0, base = 0, jse = 0; std::size_t nimg = 0, nj = 0;
    std::vector<float> q(T); for (int k = 0; k < T; ++k) q[k] = k / 49.0f;
    for (auto& it : ds.test()) {
        model::ObservationSet obs; obs.per_modality.resize(2);
        obs.per_modality[0].push_back({it.times[25], nc::take_row(it.streams[0], 25)});
        auto pred = model::predict_trajectory(m, obs, {1.0, 0.0}, q);
        for (std::size_t k = 0; k < pred[0].mean.size(); ++k) { double d = pred[0].mean[k] - it.streams[0][k]; mse += d*d; double b = mean_img[k] - it.streams[0][k]; base += b*b; ++nimg; }
        for (std::size_t k = 0; k < pred[1].mean.size(); ++k) { double d = pred[1].mean[k] - it.streams[1][k]; jse += d*d; ++nj; }
    }
    std::printf("step %llu img mse %.5f base %.5f ratio %.3f joint rmse %.4f\n", (unsigned long long)step, mse/nimg, base/nimg, mse/base, std::sqrt(jse/nj));
        std::fflush(stdout);
    };
    cfg.checkpoint_every = iters / 10;
    model::TrainHooks<float> hooks;
    hooks.on_checkpoint = evaluate;
    auto curve = model::train(m, ds, cfg, nullptr, hooks);
    auto t2 = std::chrono::steady_clock::now();
    std::printf("train %.3f ms/iter\n", 1000 * std::chrono::duration<double>(t2 - t1).count() / iters);
    for (std::size_t i = 0; i < curve.size(); i += curve.size() / 10 + 1) std::printf("%llu %.4f\n", (unsigned long long)curve[i].iteration, curve[i].mean_loss);
}
