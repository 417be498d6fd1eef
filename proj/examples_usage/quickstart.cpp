// Generate a small dataset, train a desk-scale DMBN for a few hundred steps
// and predict the joint trajectory of a test interaction from one image.
#include <cmath>
#include <iostream>

#include "dmbn/model/dmbn.hpp"
#include "dmbn/model/spec.hpp"
#include "dmbn/simgen/dataset.hpp"
#include "dmbn/simgen/planner.hpp"

int main(int argc, char** argv) {
    using namespace dmbn;
    const std::uint64_t iters = argc > 1 ? std::stoull(argv[1]) : 300;

    const sim::Dataset ds = sim::generate_dataset(10, 10, 1);
    model::Dmbn<float> net(model::desk_spec(0));
    model::TrainConfig cfg;
    cfg.iterations = iters;
    cfg.learning_rate = 3e-4;
    cfg.log_every = 50;
    for (const auto& p : model::train(net, ds, cfg)) std::cout << "step " << p.iteration << " loss " << p.mean_loss << "\n";

    const sim::Interaction& it = ds.test().front();
    const int img = net.spec().index_of("image"), joint = net.spec().index_of("joint");
    const int c = sim::timeline::kPreContact;
    model::ObservationSet obs;
    obs.per_modality.resize(2);
    obs.per_modality[img].push_back({it.times[c], nc::take_row(it.streams[ds.modality_index("image")], c)});
    std::vector<double> w(2, 0.0);
    w[img] = 1.0;
    const auto pred = model::predict_trajectory(net, obs, w, it.times);

    const auto& truth = it.streams[ds.modality_index("joint")];
    double se = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = pred[joint].mean.data()[i] - truth.data()[i];
        se += d * d;
    }
    std::cout << "joint rmse from one image: " << std::sqrt(se / truth.size()) << "\n";
}
