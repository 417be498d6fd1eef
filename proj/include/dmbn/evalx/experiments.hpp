#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dmbn/error.hpp"
#include "dmbn/evalx/behavior.hpp"
#include "dmbn/evalx/metrics.hpp"
#include "dmbn/model/dmbn.hpp"
#include "dmbn/mvae/mvae.hpp"
#include "dmbn/simgen/dataset.hpp"

namespace dmbn::evalx {

inline double mean_squared_error(const nc::Tensor<float>& a, const nc::Tensor<float>& b) {
    if (a.size() != b.size() || a.empty()) throw ShapeError("mse: sizes differ or are empty");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

inline double mean_absolute_error(const nc::Tensor<float>& a, const nc::Tensor<float>& b) {
    if (a.size() != b.size() || a.empty()) throw ShapeError("mae: sizes differ or are empty");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(static_cast<double>(a[i]) - b[i]);
    return acc / static_cast<double>(a.size());
}

// DMBN means for every step of `it`, conditioned on step `c` of the
// modalities flagged in `available` (indexed like the dataset streams).
template <typename T>
std::vector<nc::Tensor<float>> dmbn_trajectory(const model::Dmbn<T>& net, const sim::Dataset& ds,
                                               const sim::Interaction& it, const std::vector<bool>& available, int c) {
    const auto streams = model::stream_indices(net.spec(), ds);
    model::ObservationSet obs;
    obs.per_modality.resize(streams.size());
    std::vector<double> w(streams.size(), 0.0);
    for (std::size_t m = 0; m < streams.size(); ++m) {
        if (!available.at(static_cast<std::size_t>(streams[m]))) continue;
        obs.per_modality[m].push_back({it.times[c], nc::take_row(it.streams[streams[m]], c)});
        w[m] = 1.0;
    }
    const auto pred = model::predict_trajectory(net, obs, w, it.times);
    std::vector<nc::Tensor<float>> out(ds.modalities.size());
    for (std::size_t m = 0; m < streams.size(); ++m) out[streams[m]] = nc::Tensor<float>::cast(pred[m].mean);
    return out;
}

template <typename T>
std::vector<nc::Tensor<float>> mvae_trajectory(const mvae::Mvae<T>& net, const sim::Dataset& ds,
                                               const sim::Interaction& it, const std::vector<bool>& available, int c) {
    const auto streams = mvae::branch_streams(net.spec(), ds);
    std::vector<std::optional<nc::Tensor<float>>> obs(streams.size());
    for (std::size_t m = 0; m < streams.size(); ++m) {
        if (available.at(static_cast<std::size_t>(streams[m]))) obs[m] = nc::take_row(it.streams[streams[m]], c);
    }
    const auto pred = mvae::full_trajectory(net, obs, c, it.steps());
    std::vector<nc::Tensor<float>> out(ds.modalities.size());
    for (std::size_t m = 0; m < streams.size(); ++m) out[streams[m]] = pred[m];
    return out;
}

struct SingleImageReport {
    double image_mse = 0.0;
    double baseline_mse = 0.0;  // per-step mean of the training images
    double joint_rmse = 0.0;
    double ratio() const { return image_mse / baseline_mse; }
};

// Conditions on the image at step `c` alone and scores the full predicted
// image and joint trajectories over the test split.
template <typename T>
SingleImageReport eval_single_image(const model::Dmbn<T>& net, const sim::Dataset& ds,
                                    int c = sim::timeline::kPreContact) {
    const int img = ds.modality_index("image");
    const int jnt = ds.modality_index("joint");
    const auto train = ds.train();
    const auto test = ds.test();
    if (test.empty()) throw ValueError("single-image evaluation: dataset has no test interactions");
    nc::Tensor<double> mean(train[0].streams[img].shape());
    for (const auto& it : train) {
        if (it.streams[img].shape() != mean.shape()) throw ShapeError("single-image evaluation: ragged trajectories");
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += it.streams[img][k];
    }
    for (auto& v : mean) v /= static_cast<double>(train.size());
    std::vector<bool> available(ds.modalities.size(), false);
    available[img] = true;
    SingleImageReport r;
    double joint_se = 0.0;
    std::size_t joint_n = 0;
    for (const auto& it : test) {
        if (it.streams[img].shape() != mean.shape()) throw ShapeError("single-image evaluation: ragged trajectories");
        const auto pred = dmbn_trajectory(net, ds, it, available, c);
        r.image_mse += mean_squared_error(pred[img], it.streams[img]);
        double base = 0.0;
        for (std::size_t k = 0; k < mean.size(); ++k) base += (mean[k] - it.streams[img][k]) * (mean[k] - it.streams[img][k]);
        r.baseline_mse += base / static_cast<double>(mean.size());
        joint_se += mean_squared_error(pred[jnt], it.streams[jnt]) * static_cast<double>(pred[jnt].size());
        joint_n += pred[jnt].size();
    }
    r.image_mse /= static_cast<double>(test.size());
    r.baseline_mse /= static_cast<double>(test.size());
    r.joint_rmse = std::sqrt(joint_se / static_cast<double>(joint_n));
    return r;
}

// Four (target, available) combinations over image and joint, each
// conditioned on the single pre-contact observation; per-element MSE over
// the whole trajectory (and MAE for images), averaged over the test split.
template <typename TD, typename TM>
std::vector<MetricRow> missing_modality_rows(const model::Dmbn<TD>& dm, const mvae::Mvae<TM>& mv, const sim::Dataset& ds,
                                             std::uint64_t seed, int c = sim::timeline::kPreContact) {
    const int img = ds.modality_index("image");
    const int jnt = ds.modality_index("joint");
    const auto test = ds.test();
    if (test.empty()) throw ValueError("eval missing: dataset has no test interactions");
    std::vector<MetricRow> rows;
    for (int available : {img, jnt}) {
        std::vector<bool> av(ds.modalities.size(), false);
        av[available] = true;
        const std::size_t nm = ds.modalities.size();
        const double n = static_cast<double>(test.size());
        std::vector<double> dm_err(nm, 0.0), mv_err(nm, 0.0), dm_abs(nm, 0.0), mv_abs(nm, 0.0);
        for (const auto& it : test) {
            const auto a = dmbn_trajectory(dm, ds, it, av, c);
            const auto b = mvae_trajectory(mv, ds, it, av, c);
            for (int target : {img, jnt}) {
                dm_err[target] += mean_squared_error(a[target], it.streams[target]) / n;
                mv_err[target] += mean_squared_error(b[target], it.streams[target]) / n;
                dm_abs[target] += mean_absolute_error(a[target], it.streams[target]) / n;
                mv_abs[target] += mean_absolute_error(b[target], it.streams[target]) / n;
            }
        }
        for (int target : {img, jnt}) {
            for (int model = 0; model < 2; ++model) {
                const std::vector<std::pair<std::string, std::string>> cond = {
                    {"model", model == 0 ? "dmbn" : "mvae"},
                    {"target", ds.modalities[target].name},
                    {"available", ds.modalities[available].name},
                    {"train_size", std::to_string(ds.split)}};
                rows.push_back({"missing", cond, "mse", (model == 0 ? dm_err : mv_err)[target], seed});
                if (target == img) rows.push_back({"missing", cond, "mae", (model == 0 ? dm_abs : mv_abs)[target], seed});
            }
        }
    }
    return rows;
}

struct SweepConfig {
    std::vector<std::size_t> sizes{10, 20, 40, 60, 80};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    model::TrainConfig dmbn;
    mvae::TrainConfig mvae;
    int latent_dim = 64;
};

// Trains both models per (size, seed) and evaluates every combination.
// `on_cell` sees the trained models, e.g. for further experiments.
inline std::vector<MetricRow> eval_missing_modality(
    const sim::Dataset& ds, const SweepConfig& cfg,
    const std::function<void(std::size_t, std::uint64_t, const model::Dmbn<float>&, const mvae::Mvae<float>&)>& on_cell = {}) {
    std::vector<MetricRow> rows;
    for (std::size_t size : cfg.sizes) {
        const sim::Dataset sub = sim::with_train_size(ds, size);
        for (std::uint64_t seed : cfg.seeds) {
            model::Dmbn<float> dm(model::desk_spec(seed, cfg.latent_dim));
            model::TrainConfig tc = cfg.dmbn;
            tc.seed = seed;
            model::train(dm, sub, tc);
            mvae::Mvae<float> mv(mvae::desk_spec(seed, cfg.latent_dim));
            mvae::TrainConfig mc = cfg.mvae;
            mc.seed = seed;
            mvae::train(mv, sub, mc);
            const auto r = missing_modality_rows(dm, mv, sub, seed);
            rows.insert(rows.end(), r.begin(), r.end());
            if (on_cell) on_cell(size, seed, dm, mv);
        }
    }
    return rows;
}

// Error against prediction distance k from the conditioning step c (both
// modalities observed). DMBN queries each step directly; the baseline rolls
// k steps forward and backward. Per k, errors of both directions that fit in
// the trajectory are averaged over the test split.
template <typename TD, typename TM>
std::vector<MetricRow> eval_multistep(const model::Dmbn<TD>& dm, const mvae::Mvae<TM>& mv, const sim::Dataset& ds,
                                      std::uint64_t seed, int c = sim::timeline::kPreContact) {
    const auto test = ds.test();
    if (test.empty()) throw ValueError("eval horizon: dataset has no test interactions");
    const int steps = test[0].steps();
    const int horizon = std::max(c, steps - 1 - c);
    const std::vector<bool> all(ds.modalities.size(), true);
    // err[model][modality][k]
    std::vector<std::vector<std::vector<double>>> err(
        2, std::vector<std::vector<double>>(ds.modalities.size(), std::vector<double>(horizon + 1, 0.0)));
    std::vector<int> count(horizon + 1, 0);
    for (const auto& it : test) {
        const auto a = dmbn_trajectory(dm, ds, it, all, c);
        const auto b = mvae_trajectory(mv, ds, it, all, c);
        for (int step = 0; step < steps; ++step) {
            const int k = std::abs(step - c);
            if (k == 0) continue;
            ++count[k];
            for (std::size_t m = 0; m < ds.modalities.size(); ++m) {
                const nc::Tensor<float> truth = nc::take_row(it.streams[m], step);
                err[0][m][k] += mean_squared_error(nc::take_row(a[m], step), truth);
                err[1][m][k] += mean_squared_error(nc::take_row(b[m], step), truth);
            }
        }
    }
    std::vector<MetricRow> rows;
    const char* names[2] = {"dmbn", "mvae"};
    for (int model = 0; model < 2; ++model) {
        for (int k = 1; k <= horizon; ++k) {
            double total = 0.0;
            for (std::size_t m = 0; m < ds.modalities.size(); ++m) {
                const double e = err[model][m][k] / count[k];
                total += e;
                rows.push_back({"horizon", {{"model", names[model]}, {"step", std::to_string(k)}},
                                ds.modalities[m].name + "_mse", e, seed});
            }
            rows.push_back({"horizon", {{"model", names[model]}, {"step", std::to_string(k)}}, "mse", total, seed});
        }
    }
    return rows;
}

// Spearman correlation of the summed error against k for one model.
inline double horizon_spearman(const std::vector<MetricRow>& rows, const std::string& model) {
    std::vector<double> k, e;
    for (const auto& r : rows) {
        if (r.experiment != "horizon" || r.metric != "mse" || r.condition("model") != model) continue;
        k.push_back(std::stod(r.condition("step")));
        e.push_back(r.value);
    }
    return spearman(k, e);
}

struct LatentRow {
    std::string modality;
    sim::Action action = sim::Action::push;
    std::size_t interaction = 0;
    float t = 0.0f;
    std::vector<float> z;
};

struct LatentExport {
    std::vector<LatentRow> rows;
    Pca2 pca;
    double paired_distance = 0.0;
    double mismatched_distance = 0.0;
    double ratio() const { return paired_distance / mismatched_distance; }
};

// Latents of every (t, state) of the training split through every encoder.
// Rows are ordered modality-major, then interaction, then time.
template <typename T>
std::vector<LatentRow> encode_training_latents(const model::Dmbn<T>& net, const sim::Dataset& ds) {
    const auto streams = model::stream_indices(net.spec(), ds);
    const auto pool = ds.train();
    std::vector<LatentRow> rows;
    for (int m = 0; m < net.modality_count(); ++m) {
        for (std::size_t i = 0; i < pool.size(); ++i) {
            const auto& it = pool[i];
            nc::Tape<T> tp(false);
            const nc::Var z = net.encode(tp, m, it.times, it.streams[streams[m]]);
            const nc::Tensor<T>& zv = tp.value(z);
            const int d = net.latent_dim();
            for (int k = 0; k < it.steps(); ++k) {
                LatentRow r{net.spec().modalities[m].name, it.label, i, it.times[k], {}};
                r.z.assign(zv.data() + static_cast<std::size_t>(k) * d, zv.data() + static_cast<std::size_t>(k + 1) * d);
                rows.push_back(std::move(r));
            }
        }
    }
    return rows;
}

// Mean distance between latents of the same state seen through two
// modalities, against the mean over all cross-modal pairs of different
// states.
inline std::pair<double, double> pairing_distances(const std::vector<LatentRow>& a, const std::vector<LatentRow>& b) {
    if (a.size() != b.size() || a.empty()) throw ValueError("latent pairing needs two equally sized row sets");
    const Eigen::Index n = static_cast<Eigen::Index>(a.size());
    const Eigen::Index d = static_cast<Eigen::Index>(a[0].z.size());
    Eigen::MatrixXd A(n, d), B(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            A(i, j) = a[i].z[j];
            B(i, j) = b[i].z[j];
        }
    }
    double paired = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) paired += (A.row(i) - B.row(i)).norm();
    paired /= static_cast<double>(n);
    // Squared distances through the Gram matrix, clamped at zero.
    const Eigen::VectorXd an = A.rowwise().squaredNorm(), bn = B.rowwise().squaredNorm();
    const Eigen::MatrixXd g = A * B.transpose();
    double mism = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (i != j) mism += std::sqrt(std::max(0.0, an(i) + bn(j) - 2.0 * g(i, j)));
        }
    }
    mism /= static_cast<double>(n) * static_cast<double>(n - 1);
    return {paired, mism};
}

template <typename T>
LatentExport export_latents(const model::Dmbn<T>& net, const sim::Dataset& ds) {
    LatentExport out;
    out.rows = encode_training_latents(net, ds);
    const Eigen::Index n = static_cast<Eigen::Index>(out.rows.size());
    const Eigen::Index d = net.latent_dim();
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = out.rows[i].z[j];
    }
    out.pca = pca2(x);
    if (net.modality_count() >= 2) {
        const std::size_t half = out.rows.size() / static_cast<std::size_t>(net.modality_count());
        const std::vector<LatentRow> a(out.rows.begin(), out.rows.begin() + static_cast<std::ptrdiff_t>(half));
        const std::vector<LatentRow> b(out.rows.begin() + static_cast<std::ptrdiff_t>(half),
                                       out.rows.begin() + static_cast<std::ptrdiff_t>(2 * half));
        std::tie(out.paired_distance, out.mismatched_distance) = pairing_distances(a, b);
    }
    return out;
}

inline void write_latents_csv(std::ostream& os, const LatentExport& ex) {
    const std::size_t d = ex.rows.empty() ? 0 : ex.rows[0].z.size();
    os << "modality,action,interaction,t";
    for (std::size_t j = 0; j < d; ++j) os << ",component_" << j;
    os << '\n';
    for (const auto& r : ex.rows) {
        os << r.modality << ',' << sim::to_string(r.action) << ',' << r.interaction << ',' << format_value(r.t);
        for (float v : r.z) os << ',' << format_value(v);
        os << '\n';
    }
}

inline void write_pca_csv(std::ostream& os, const LatentExport& ex) {
    os << "modality,action,interaction,t,pc_0,pc_1\n";
    for (std::size_t i = 0; i < ex.rows.size(); ++i) {
        const auto& r = ex.rows[i];
        os << r.modality << ',' << sim::to_string(r.action) << ',' << r.interaction << ',' << format_value(r.t) << ','
           << format_value(ex.pca.projection(static_cast<Eigen::Index>(i), 0)) << ','
           << format_value(ex.pca.projection(static_cast<Eigen::Index>(i), 1)) << '\n';
    }
}

struct Match {
    std::size_t interaction = 0;
    int frame = 0;
    double distance = std::numeric_limits<double>::infinity();
};

// Training frame with the lowest mean per-pixel squared error. Ties keep
// the lowest interaction, then frame, index.
inline Match nearest_pixel(const nc::Tensor<float>& query, const sim::Dataset& ds) {
    const int img = ds.modality_index("image");
    const auto pool = ds.train();
    const std::size_t per = query.size();
    Match best;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& frames = pool[i].streams[img];
        if (frames.size() != per * static_cast<std::size_t>(frames.dim(0))) throw ShapeError("nearest_pixel: query shape mismatch");
        for (int k = 0; k < frames.dim(0); ++k) {
            const float* f = frames.data() + static_cast<std::size_t>(k) * per;
            double acc = 0.0;
            for (std::size_t e = 0; e < per; ++e) {
                const double d = static_cast<double>(f[e]) - query[e];
                acc += d * d;
            }
            acc /= static_cast<double>(per);
            if (acc < best.distance) best = {i, k, acc};
        }
    }
    return best;
}

// Image-encoder latents of every training frame.
template <typename T>
struct LatentIndex {
    std::vector<std::size_t> interaction;
    std::vector<int> frame;
    std::vector<std::vector<T>> z;
};

// Frames are encoded one at a time, exactly as a query is, so a stored
// frame queried again matches at distance zero.
template <typename T>
LatentIndex<T> build_latent_index(const model::Dmbn<T>& net, const sim::Dataset& ds) {
    const int m = net.spec().index_of("image");
    const int s = ds.modality_index("image");
    const auto pool = ds.train();
    LatentIndex<T> idx;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        for (int k = 0; k < pool[i].steps(); ++k) {
            const nc::Tensor<T> z = model::encode_modality(net, m, pool[i].times[k], nc::take_row(pool[i].streams[s], k));
            idx.interaction.push_back(i);
            idx.frame.push_back(k);
            idx.z.emplace_back(z.begin(), z.end());
        }
    }
    return idx;
}

// Training frame whose image latent is closest (squared L2) to the latent
// of `query` observed at time t.
template <typename T>
Match nearest_latent(const model::Dmbn<T>& net, const LatentIndex<T>& idx, const nc::Tensor<float>& query, float t) {
    const nc::Tensor<T> q = model::encode_modality(net, net.spec().index_of("image"), t, query);
    Match best;
    for (std::size_t r = 0; r < idx.z.size(); ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < idx.z[r].size(); ++j) {
            const double d = static_cast<double>(idx.z[r][j]) - q[j];
            acc += d * d;
        }
        if (acc < best.distance) best = {idx.interaction[r], idx.frame[r], acc};
    }
    return best;
}

struct RetrievalResult {
    Scenario scenario;
    Match pixel;
    Match latent;
    sim::Action pixel_action = sim::Action::push;
    sim::Action latent_action = sim::Action::push;
};

template <typename T>
std::vector<RetrievalResult> eval_retrieval(const model::Dmbn<T>& net, const sim::Dataset& ds,
                                            const std::vector<Scenario>& scenarios,
                                            int c = sim::timeline::kPreContact) {
    const LatentIndex<T> idx = build_latent_index(net, ds);
    const auto pool = ds.train();
    std::vector<RetrievalResult> out;
    for (const auto& s : scenarios) {
        const sim::Interaction demo = render_demo(s);
        const nc::Tensor<float> q = nc::take_row(demo.streams[0], c);
        RetrievalResult r;
        r.scenario = s;
        r.pixel = nearest_pixel(q, ds);
        r.latent = nearest_latent(net, idx, q, demo.times[c]);
        r.pixel_action = pool[r.pixel.interaction].label;
        r.latent_action = pool[r.latent.interaction].label;
        out.push_back(r);
    }
    return out;
}

struct AblationRecord {
    std::string model;  // "blended" or "image-only"
    std::string scenario;
    std::uint64_t seed = 0;
    BehaviorLabel behavior;
    bool success() const { return behavior.label == Behavior::egocentric || behavior.label == Behavior::effect; }
};

struct AblationTable {
    std::vector<AblationRecord> records;

    // Count of successes (or failures) of `model` on `scenario`.
    int count(const std::string& model, const std::string& scenario, bool success) const {
        int n = 0;
        for (const auto& r : records) n += r.model == model && r.scenario == scenario && r.success() == success;
        return n;
    }
    int successes(const std::string& model) const {
        int n = 0;
        for (const auto& r : records) n += r.model == model && r.success();
        return n;
    }
};

// Trains a blended and an image-only model per seed and runs the mirror
// test on each scenario. `on_model` sees every trained blended model.
inline AblationTable ablate_image_only(const sim::Dataset& ds, const std::vector<Scenario>& scenarios,
                                       const std::vector<std::uint64_t>& seeds, const model::TrainConfig& train_cfg,
                                       const BehaviorRule& rule = {}, int latent_dim = 64,
                                       const std::function<void(std::uint64_t, const model::Dmbn<float>&)>& on_model = {}) {
    const double ref = mean_arm_pixels(ds.train(), ds.modality_index("image"), rule.color_tolerance);
    AblationTable table;
    for (std::uint64_t seed : seeds) {
        for (bool joints : {true, false}) {
            model::Dmbn<float> net(model::desk_spec(seed, latent_dim, joints));
            model::TrainConfig tc = train_cfg;
            tc.seed = seed;
            model::train(net, ds, tc);
            for (const auto& s : scenarios) {
                const MirrorResult r = mirror_test(net, s, ref, rule);
                table.records.push_back({joints ? "blended" : "image-only", s.name(), seed, r.behavior});
            }
            if (joints && on_model) on_model(seed, net);
        }
    }
    return table;
}

struct Variant {
    std::string name = "none";
    std::optional<sim::Rgb> color;
    std::optional<double> radius;
};

// Direction the predicted tip travels between the reach and contact
// waypoints, from forward kinematics of predicted joints (T, 3).
inline double approach_from_joints(const nc::Tensor<float>& joints) {
    using namespace sim::timeline;
    const auto tip = [&](int k) {
        return sim::forward_kinematics(joints.at(k, 0), joints.at(k, 1), sim::world::kArmGeometry, sim::world::kOwnBase).tip;
    };
    const sim::Vec2 d = tip(kContact) - tip(kReach);
    return std::atan2(d.y, d.x);
}

inline double angle_difference(double a, double b) {
    double d = std::fmod(std::abs(a - b), 2.0 * std::numbers::pi);
    return d > std::numbers::pi ? 2.0 * std::numbers::pi - d : d;
}

// Re-renders every test interaction with the variant object, conditions on
// its pre-contact frame (image only) and scores the predicted approach angle
// and the colour of the predicted object.
template <typename T>
std::vector<MetricRow> eval_generalization(const model::Dmbn<T>& net, const sim::Dataset& ds,
                                           const std::vector<Variant>& variants, std::uint64_t seed,
                                           float color_tolerance = 0.15f, int c = sim::timeline::kPreContact) {
    const int img = net.spec().index_of("image");
    const int jnt = net.spec().index_of("joint");
    std::vector<MetricRow> rows;
    for (const auto& v : variants) {
        double err = 0.0, train_color = 0.0, variant_color = 0.0;
        const auto test = ds.test();
        for (const auto& orig : test) {
            auto scenes = sim::plan_action(orig.label, orig.approach);
            for (auto& s : scenes) s = sim::variant_scene(s, v.color, v.radius);
            const sim::Interaction it = sim::record_interaction(orig.label, orig.approach, scenes);
            model::ObservationSet obs;
            obs.per_modality.resize(static_cast<std::size_t>(net.modality_count()));
            obs.per_modality[img].push_back({it.times[c], nc::take_row(it.streams[0], c)});
            std::vector<double> w(static_cast<std::size_t>(net.modality_count()), 0.0);
            w[img] = 1.0;
            const auto pred = model::predict_trajectory(net, obs, w, it.times);
            const nc::Tensor<float> joints = nc::Tensor<float>::cast(pred[jnt].mean);
            err += angle_difference(approach_from_joints(joints), orig.approach) * 180.0 / std::numbers::pi;
            const nc::Tensor<float> frames = nc::Tensor<float>::cast(pred[img].mean);
            for (int k = 0; k < frames.dim(0); ++k) {
                const nc::Tensor<float> f = nc::take_row(frames, k);
                train_color += sim::count_color(f, sim::world::kObject, color_tolerance);
                if (v.color) variant_color += sim::count_color(f, *v.color, color_tolerance);
            }
        }
        const double n = static_cast<double>(test.size());
        rows.push_back({"generalize", {{"variant", v.name}}, "approach_error_deg", err / n, seed});
        rows.push_back({"generalize", {{"variant", v.name}}, "training_color_pixels", train_color / n, seed});
        rows.push_back({"generalize", {{"variant", v.name}}, "variant_color_pixels", variant_color / n, seed});
    }
    return rows;
}

}  // namespace dmbn::evalx
