#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dmbn/error.hpp"
#include "dmbn/evalx/experiments.hpp"
#include "dmbn/model/checkpoint.hpp"
#include "dmbn/mvae/mvae.hpp"
#include "dmbn/simgen/dataset.hpp"

namespace dmbn::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

inline constexpr const char* kOutRootEnv = "DMBN_OUT_ROOT";

inline fs::path output_root() {
    const char* e = std::getenv(kOutRootEnv);
    return e && *e ? fs::path(e) : fs::path(".");
}

inline std::ofstream open_output(const fs::path& path, bool binary = false) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    return os;
}

inline sim::Dataset read_dataset(const std::string& path) {
    if (path.empty()) throw UsageError("a dataset path (--data) is required");
    return sim::load_dataset(fs::path(path));
}

// Magic of a checkpoint file ("DMBN" or "MVAE").
inline std::string checkpoint_kind(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint " + path.string());
    std::string magic(4, '\0');
    is.read(magic.data(), 4);
    if (!is || (magic != "DMBN" && magic != "MVAE")) {
        throw FormatError("checkpoint " + path.string() + ": expected magic \"DMBN\" or \"MVAE\"");
    }
    return magic;
}

// Parses "image=1,joint=0" against the given modality names. Modalities not
// mentioned get 0.
inline std::vector<double> parse_availability(const std::string& text, const std::vector<std::string>& names) {
    std::vector<double> w(names.size(), 0.0);
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw UsageError("availability entry '" + item + "' is not name=value");
        const std::string name = item.substr(0, eq);
        const auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw UsageError("availability names unknown modality '" + name + "'");
        double v = 0.0;
        try {
            v = std::stod(item.substr(eq + 1));
        } catch (const std::exception&) {
            throw UsageError("availability value in '" + item + "' is not a number");
        }
        if (!(v >= 0.0 && v <= 1.0)) throw UsageError("availability of '" + name + "' must lie in [0, 1]");
        w[static_cast<std::size_t>(it - names.begin())] = v;
    }
    if (std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; })) {
        throw UsageError("at least one modality must have availability > 0");
    }
    return w;
}

inline std::vector<evalx::Scenario> parse_scenarios(const std::vector<std::string>& names) {
    if (names.empty()) return evalx::canonical_scenarios();
    std::vector<evalx::Scenario> out;
    for (const auto& n : names) {
        try {
            out.push_back(evalx::parse_scenario(n));
        } catch (const ValueError& e) {
            throw UsageError(e.what());
        }
    }
    return out;
}

// Named object variants for the generalization experiment.
inline evalx::Variant named_variant(const std::string& name) {
    const double r = sim::world::kObjectRadius;
    if (name == "none") return {name, std::nullopt, std::nullopt};
    if (name == "blue") return {name, sim::world::kBlue, std::nullopt};
    if (name == "large") return {name, std::nullopt, 1.5 * r};
    if (name == "small") return {name, std::nullopt, 0.6 * r};
    if (name == "blue-large") return {name, sim::world::kBlue, 1.5 * r};
    throw UsageError("unknown variant '" + name + "' (none, blue, large, small, blue-large)");
}

// (t, flattened state) rows.
inline void write_sequence_csv(const fs::path& path, std::span<const float> times, const nc::Tensor<float>& seq) {
    auto os = open_output(path);
    const std::size_t per = seq.dim(0) ? seq.size() / static_cast<std::size_t>(seq.dim(0)) : 0;
    os << 't';
    for (std::size_t j = 0; j < per; ++j) os << ",v" << j;
    os << '\n';
    for (int k = 0; k < seq.dim(0); ++k) {
        os << evalx::format_value(times[static_cast<std::size_t>(k)]);
        for (std::size_t j = 0; j < per; ++j) os << ',' << evalx::format_value(seq[static_cast<std::size_t>(k) * per + j]);
        os << '\n';
    }
}

inline void write_json(const fs::path& path, const json& j) { open_output(path) << j.dump(2) << '\n'; }

inline void write_metrics(const fs::path& path, const std::vector<evalx::MetricRow>& rows) {
    auto os = open_output(path);
    evalx::write_metrics_csv(os, rows);
}

struct TrainOptions {
    std::uint64_t iters = 100000;
    std::optional<double> lr;
    int obs_max = 5;
    int targets = 1;
    int latent = 64;
    int epochs = 200;
    int batch = 128;
    std::size_t train_size = 0;  // 0 keeps the whole training split
    std::uint64_t seed = 0;
    bool image_only = false;
    int log_every = 100;

    model::TrainConfig dmbn() const {
        model::TrainConfig c;
        c.iterations = iters;
        c.learning_rate = lr.value_or(1e-4);
        c.obs_max = obs_max;
        c.targets_per_iteration = targets;
        c.seed = seed;
        c.log_every = log_every;
        return c;
    }
    mvae::TrainConfig mvae() const {
        mvae::TrainConfig c;
        c.epochs = epochs;
        c.batch_size = batch;
        c.learning_rate = lr.value_or(1e-3);
        c.seed = seed;
        return c;
    }
};

inline void add_train_options(CLI::App* sub, TrainOptions& o, bool with_seed = true) {
    sub->add_option("--iters", o.iters, "DMBN training iterations")->capture_default_str();
    sub->add_option("--lr", o.lr, "learning rate (default 1e-4 DMBN, 1e-3 MVAE)");
    sub->add_option("--obs-max", o.obs_max, "max observations per DMBN iteration")->capture_default_str();
    sub->add_option("--targets", o.targets, "target queries per DMBN iteration")->capture_default_str();
    sub->add_option("--latent", o.latent, "latent dimension")->capture_default_str();
    sub->add_option("--epochs", o.epochs, "MVAE epochs")->capture_default_str();
    sub->add_option("--batch", o.batch, "MVAE batch size")->capture_default_str();
    sub->add_option("--log-every", o.log_every, "DMBN loss-curve window")->capture_default_str();
    if (with_seed) sub->add_option("--seed", o.seed, "seed")->capture_default_str();
}

inline model::Dmbn<float> train_dmbn(const sim::Dataset& ds, const TrainOptions& o, std::ostream& log,
                                     std::vector<model::LossPoint>* curve = nullptr) {
    model::Dmbn<float> net(model::desk_spec(o.seed, o.latent, !o.image_only));
    model::TrainHooks<float> hooks;
    const std::uint64_t report = std::max<std::uint64_t>(1, o.iters / 10);
    hooks.on_log = [&](const model::LossPoint& p) {
        if (p.iteration % report < static_cast<std::uint64_t>(o.log_every)) {
            log << "dmbn iter " << p.iteration << " loss " << evalx::format_value(p.mean_loss) << '\n';
        }
    };
    auto c = model::train(net, ds, o.dmbn(), nullptr, hooks);
    if (curve) *curve = std::move(c);
    return net;
}

inline mvae::Mvae<float> train_mvae(const sim::Dataset& ds, const TrainOptions& o, std::ostream& log,
                                    std::vector<mvae::EpochPoint>* curve = nullptr) {
    mvae::Mvae<float> net(mvae::desk_spec(o.seed, o.latent));
    auto c = mvae::train(net, ds, o.mvae(), nullptr, [&](const mvae::EpochPoint& p) {
        log << "mvae epoch " << p.epoch << " loss " << evalx::format_value(p.mean_loss) << '\n';
    });
    if (curve) *curve = std::move(c);
    return net;
}

// Everything bound to CLI11 options. One instance per run.
struct Options {
    std::string config;
    // gen
    int push = 50;
    int grasp = 50;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    // train
    std::string model = "dmbn";
    std::string data;
    std::string out;
    std::string curve;
    TrainOptions train;
    // predict
    std::string checkpoint;
    std::optional<std::size_t> interaction;
    std::optional<std::string> scenario;
    int step = sim::timeline::kPreContact;
    std::string availability = "image=1";
    std::string out_dir;
    // eval
    std::string dmbn_ckpt;
    std::string mvae_ckpt;
    bool train_inline = false;
    std::vector<std::size_t> sizes{10, 20, 40, 60, 80};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::uint64_t eval_seed = 0;
    std::vector<std::string> scenarios;
    std::vector<std::string> variants{"none", "blue", "large", "small"};
    int runs = 10;
    float color_tolerance = 0.15f;
};

inline void write_snapshot(const fs::path& path, const CLI::App& leaf, const std::string& section) {
    auto os = open_output(path);
    os << "[" << section << "]\n" << leaf.config_to_str(true, false);
}

inline std::string section_name(const CLI::App* leaf) {
    std::string name = leaf->get_name();
    for (const CLI::App* p = leaf->get_parent(); p && p->get_parent(); p = p->get_parent()) name = p->get_name() + "." + name;
    return name;
}

inline fs::path resolve_dir(const std::string& given, const std::string& fallback) {
    return given.empty() ? output_root() / fallback : fs::path(given);
}

// Loads the DMBN for an evaluation: from --checkpoint, or trained inline.
inline model::Dmbn<float> eval_dmbn(const Options& o, const sim::Dataset& ds, std::ostream& log) {
    if (!o.checkpoint.empty()) return model::load_checkpoint<float>(fs::path(o.checkpoint));
    if (!o.train_inline) throw UsageError("pass --checkpoint or --train-inline");
    return train_dmbn(ds, o.train, log);
}

inline int cmd_gen(const Options& o, const CLI::App& leaf, std::ostream& out) {
    if (o.gen_out.empty()) throw UsageError("gen: --out is required");
    const sim::Dataset ds = sim::generate_dataset(o.push, o.grasp, o.gen_seed);
    const fs::path path(o.gen_out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    sim::save_dataset(ds, path);
    write_snapshot(fs::path(path.string() + ".config.ini"), leaf, "gen");
    out << "wrote " << path.string() << ": " << ds.interactions.size() << " interactions, " << ds.split << " train\n";
    return kOk;
}

inline int cmd_train(const Options& o, const CLI::App& leaf, std::ostream& out) {
    sim::Dataset ds = read_dataset(o.data);
    if (o.train.train_size > 0) ds = sim::with_train_size(ds, o.train.train_size);
    const fs::path ckpt = o.out.empty() ? output_root() / (o.model + ".ckpt") : fs::path(o.out);
    const fs::path curve = o.curve.empty() ? fs::path(ckpt.string() + ".loss.csv") : fs::path(o.curve);
    if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
    if (o.model == "dmbn") {
        std::vector<model::LossPoint> pts;
        const auto net = train_dmbn(ds, o.train, out, &pts);
        model::save_checkpoint(net, ckpt);
        auto os = open_output(curve);
        os << "iteration,mean_loss\n";
        for (const auto& p : pts) os << p.iteration << ',' << evalx::format_value(p.mean_loss) << '\n';
    } else if (o.model == "mvae") {
        std::vector<mvae::EpochPoint> pts;
        const auto net = train_mvae(ds, o.train, out, &pts);
        mvae::save_checkpoint(net, ckpt);
        auto os = open_output(curve);
        os << "epoch,mean_loss\n";
        for (const auto& p : pts) os << p.epoch << ',' << evalx::format_value(p.mean_loss) << '\n';
    } else {
        throw UsageError("train: --model must be dmbn or mvae");
    }
    write_snapshot(fs::path(ckpt.string() + ".config.ini"), leaf, "train");
    out << "wrote " << ckpt.string() << " and " << curve.string() << '\n';
    return kOk;
}

inline int cmd_predict(const Options& o, const CLI::App& leaf, std::ostream& out) {
    if (o.checkpoint.empty()) throw UsageError("predict: --checkpoint is required");
    sim::Interaction source;
    if (o.scenario) {
        source = evalx::render_demo(parse_scenarios({*o.scenario}).front());
    } else {
        const sim::Dataset ds = read_dataset(o.data);
        const std::size_t i = o.interaction.value_or(ds.split < ds.interactions.size() ? ds.split : 0);
        if (i >= ds.interactions.size()) throw UsageError("predict: --interaction out of range");
        source = ds.interactions[i];
    }
    if (o.step < 0 || o.step >= source.steps()) throw UsageError("predict: --step outside the trajectory");
    const fs::path dir = resolve_dir(o.out_dir, "predict");
    fs::create_directories(dir);
    const auto& mods = sim::standard_modalities();

    if (checkpoint_kind(o.checkpoint) == "DMBN") {
        const auto net = model::load_checkpoint<float>(fs::path(o.checkpoint));
        std::vector<std::string> names;
        for (const auto& m : net.spec().modalities) names.push_back(m.name);
        const auto w = parse_availability(o.availability, names);
        model::ObservationSet obs;
        obs.per_modality.resize(names.size());
        for (std::size_t m = 0; m < names.size(); ++m) {
            if (w[m] == 0.0) continue;
            std::size_t s = 0;
            while (s < mods.size() && mods[s].name != names[m]) ++s;
            if (s == mods.size()) throw FormatError("predict: no stream for modality '" + names[m] + "'");
            obs.per_modality[m].push_back({source.times[o.step], nc::take_row(source.streams[s], o.step)});
        }
        const auto pred = model::predict_trajectory(net, obs, w, source.times);
        for (std::size_t m = 0; m < names.size(); ++m) {
            write_sequence_csv(dir / (names[m] + "_mean.csv"), source.times, pred[m].mean);
            write_sequence_csv(dir / (names[m] + "_std.csv"), source.times, pred[m].stddev);
        }
    } else {
        const auto net = mvae::load_checkpoint<float>(fs::path(o.checkpoint));
        std::vector<std::string> names;
        for (const auto& b : net.spec().branches) names.push_back(b.name);
        const auto w = parse_availability(o.availability, names);
        std::vector<std::optional<nc::Tensor<float>>> obs(names.size());
        for (std::size_t m = 0; m < names.size(); ++m) {
            if (w[m] == 0.0) continue;
            std::size_t s = 0;
            while (s < mods.size() && mods[s].name != names[m]) ++s;
            if (s == mods.size()) throw FormatError("predict: no stream for modality '" + names[m] + "'");
            obs[m] = nc::take_row(source.streams[s], o.step);
        }
        const auto pred = mvae::full_trajectory(net, obs, o.step, source.steps());
        for (std::size_t m = 0; m < names.size(); ++m) write_sequence_csv(dir / (names[m] + "_mean.csv"), source.times, pred[m]);
    }
    write_snapshot(dir / "config.ini", leaf, "predict");
    out << "wrote predictions to " << dir.string() << '\n';
    return kOk;
}

inline int eval_missing(const Options& o, const sim::Dataset& ds, const fs::path& dir, std::ostream& out) {
    std::vector<evalx::MetricRow> rows;
    if (!o.dmbn_ckpt.empty() || !o.mvae_ckpt.empty()) {
        if (o.dmbn_ckpt.empty() || o.mvae_ckpt.empty()) throw UsageError("eval missing: pass both --dmbn and --mvae");
        const auto dm = model::load_checkpoint<float>(fs::path(o.dmbn_ckpt));
        const auto mv = mvae::load_checkpoint<float>(fs::path(o.mvae_ckpt));
        rows = evalx::missing_modality_rows(dm, mv, ds, o.eval_seed);
    } else {
        if (!o.train_inline) throw UsageError("eval missing: pass --dmbn/--mvae or --train-inline");
        evalx::SweepConfig cfg;
        cfg.sizes = o.sizes;
        cfg.seeds = o.seeds;
        cfg.dmbn = o.train.dmbn();
        cfg.mvae = o.train.mvae();
        cfg.latent_dim = o.train.latent;
        rows = evalx::eval_missing_modality(ds, cfg, [&](std::size_t size, std::uint64_t seed, const auto&, const auto&) {
            out << "trained size " << size << " seed " << seed << '\n';
        });
    }
    write_metrics(dir / "missing.csv", rows);
    return kOk;
}

inline int eval_horizon(const Options& o, const sim::Dataset& ds, const fs::path& dir, std::ostream& out) {
    std::vector<evalx::MetricRow> rows;
    if (!o.dmbn_ckpt.empty() || !o.mvae_ckpt.empty()) {
        if (o.dmbn_ckpt.empty() || o.mvae_ckpt.empty()) throw UsageError("eval horizon: pass both --dmbn and --mvae");
        rows = evalx::eval_multistep(model::load_checkpoint<float>(fs::path(o.dmbn_ckpt)),
                                     mvae::load_checkpoint<float>(fs::path(o.mvae_ckpt)), ds, o.eval_seed);
    } else {
        if (!o.train_inline) throw UsageError("eval horizon: pass --dmbn/--mvae or --train-inline");
        for (std::uint64_t seed : o.seeds) {
            TrainOptions t = o.train;
            t.seed = seed;
            const auto r = evalx::eval_multistep(train_dmbn(ds, t, out), train_mvae(ds, t, out), ds, seed);
            rows.insert(rows.end(), r.begin(), r.end());
        }
    }
    write_metrics(dir / "horizon.csv", rows);
    json j;
    j["dmbn_spearman"] = evalx::horizon_spearman(rows, "dmbn");
    j["mvae_spearman"] = evalx::horizon_spearman(rows, "mvae");
    write_json(dir / "horizon.json", j);
    return kOk;
}

inline int eval_latents(const Options& o, const sim::Dataset& ds, const fs::path& dir, std::ostream& out) {
    const auto ex = evalx::export_latents(eval_dmbn(o, ds, out), ds);
    {
        auto os = open_output(dir / "latents.csv");
        evalx::write_latents_csv(os, ex);
    }
    {
        auto os = open_output(dir / "pca.csv");
        evalx::write_pca_csv(os, ex);
    }
    json j;
    j["paired_distance"] = ex.paired_distance;
    j["mismatched_distance"] = ex.mismatched_distance;
    j["ratio"] = ex.ratio();
    j["explained_variance"] = {ex.pca.variance(0), ex.pca.variance(1)};
    write_json(dir / "latents.json", j);
    return kOk;
}

inline json behavior_json(const evalx::BehaviorLabel& b) {
    return {{"label", evalx::to_string(b.label)}, {"dx", b.dx}, {"dy", b.dy}, {"arm_pixels", b.arm_pixels},
            {"frames_without_object", b.frames_without_object}, {"reason", b.reason}};
}

inline int eval_mirror(const Options& o, const sim::Dataset& ds, const fs::path& dir, std::ostream& out) {
    const auto net = eval_dmbn(o, ds, out);
    evalx::BehaviorRule rule;
    rule.color_tolerance = o.color_tolerance;
    const double ref = evalx::mean_arm_pixels(ds.train(), ds.modality_index("image"), rule.color_tolerance);
    json arr = json::array();
    for (const auto& s : parse_scenarios(o.scenarios)) {
        const auto r = evalx::mirror_test(net, s, ref, rule);
        json e = behavior_json(r.behavior);
        e["scenario"] = s.name();
        arr.push_back(e);
        const sim::Interaction demo = evalx::render_demo(s);
        std::string stem = s.name();
        std::replace(stem.begin(), stem.end(), '/', '_');
        write_sequence_csv(dir / (stem + "_image_mean.csv"), demo.times, r.images);
        if (r.joints) write_sequence_csv(dir / (stem + "_joint_mean.csv"), demo.times, *r.joints);
        out << s.name() << ": " << evalx::to_string(r.behavior.label) << '\n';
    }
    write_json(dir / "mirror.json", {{"reference_arm_pixels", ref}, {"results", arr}});
    return kOk;
}

inline int eval_retrieve(const Options& o, const sim::Dataset& ds, const fs::path& dir, std::ostream& out) {
    const auto res = evalx::eval_retrieval(eval_dmbn(o, ds, out), ds, parse_scenarios(o.scenarios));
    json arr = json::array();
    for (const auto& r : res) {
        arr.push_back({{"scenario", r.scenario.name()},
                       {"pixel", {{"interaction", r.pixel.interaction}, {"frame", r.pixel.frame},
                                  {"distance", r.pixel.distance}, {"action", sim::to_string(r.pixel_action)}}},
                       {"latent", {{"interaction", r.latent.interaction}, {"frame", r.latent.frame},
                                   {"distance", r.latent.distance}, {"action", sim::to_string(r.latent_action)}}}});
    }
    write_json(dir / "retrieval.json", arr);
    return kOk;
}

inline int eval_ablate(const Options& o, const sim::Dataset& ds, const fs::path& dir, std::ostream& out) {
    if (o.runs < 1) throw UsageError("eval ablate: --runs must be >= 1");
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < o.runs; ++i) seeds.push_back(o.train.seed + static_cast<std::uint64_t>(i));
    evalx::BehaviorRule rule;
    rule.color_tolerance = o.color_tolerance;
    const auto scenarios = parse_scenarios(o.scenarios);
    const auto table = evalx::ablate_image_only(ds, scenarios, seeds, o.train.dmbn(), rule, o.train.latent,
                                                [&](std::uint64_t seed, const auto&) { out << "ablate seed " << seed << '\n'; });
    json cells;
    for (const std::string m : {"blended", "image-only"}) {
        for (const auto& s : scenarios) {
            cells[m][s.name()] = {{"success", table.count(m, s.name(), true)}, {"failure", table.count(m, s.name(), false)}};
        }
    }
    json recs = json::array();
    for (const auto& r : table.records) {
        json e = behavior_json(r.behavior);
        e["model"] = r.model;
        e["scenario"] = r.scenario;
        e["seed"] = r.seed;
        recs.push_back(e);
    }
    write_json(dir / "ablation.json", {{"cells", cells}, {"records", recs}});
    return kOk;
}

inline int eval_generalize(const Options& o, const sim::Dataset& ds, const fs::path& dir, std::ostream& out) {
    std::vector<evalx::Variant> variants;
    for (const auto& v : o.variants) variants.push_back(named_variant(v));
    write_metrics(dir / "generalize.csv",
                  evalx::eval_generalization(eval_dmbn(o, ds, out), ds, variants, o.eval_seed, o.color_tolerance));
    return kOk;
}

// Runs one command line. Output goes to `out`, diagnostics to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app("Deep Modality Blending Networks: data generation, training and evaluation", "dmbn");
    app.set_config("--config", "", "key = value file with one [section] per command");
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.require_subcommand(1);
    // A config file may hold sections for several commands and CLI11 applies
    // all of them, so every subcommand binds its own Options.
    Options og, otr, opr;
    std::array<Options, 7> oev;

    auto* gen = app.add_subcommand("gen", "generate a push/grasp dataset");
    gen->add_option("--push", og.push, "push interactions")->capture_default_str();
    gen->add_option("--grasp", og.grasp, "grasp interactions")->capture_default_str();
    gen->add_option("--seed", og.gen_seed, "seed")->capture_default_str();
    gen->add_option("--out", og.gen_out, "dataset file");

    auto* train = app.add_subcommand("train", "train a DMBN or MVAE model");
    train->add_option("--model", otr.model, "dmbn or mvae")->capture_default_str();
    train->add_option("--data", otr.data, "dataset file");
    train->add_option("--out", otr.out, "checkpoint path (default $DMBN_OUT_ROOT/<model>.ckpt)");
    train->add_option("--curve", otr.curve, "loss-curve CSV (default <checkpoint>.loss.csv)");
    train->add_option("--train-size", otr.train.train_size, "use only the first N training interactions");
    train->add_flag("--image-only", otr.train.image_only, "DMBN without the joint modality");
    add_train_options(train, otr.train);

    auto* predict = app.add_subcommand("predict", "predict full trajectories from one observation");
    predict->add_option("--checkpoint", opr.checkpoint, "DMBN or MVAE checkpoint");
    predict->add_option("--data", opr.data, "dataset holding the observed interaction");
    predict->add_option("--interaction", opr.interaction, "interaction index (default first test interaction)");
    predict->add_option("--scenario", opr.scenario, "observe a rendered demonstration, e.g. opposite/none/pull");
    predict->add_option("--step", opr.step, "observed time step")->capture_default_str();
    predict->add_option("--availability", opr.availability, "e.g. image=1,joint=0")->capture_default_str();
    predict->add_option("--out-dir", opr.out_dir, "output directory (default $DMBN_OUT_ROOT/predict)");

    auto* eval = app.add_subcommand("eval", "run an experiment");
    eval->require_subcommand(1);
    std::vector<CLI::App*> evals;
    const std::vector<std::pair<std::string, std::string>> eval_names = {
        {"missing", "missing-modality comparison against MVAE"},
        {"horizon", "error against prediction distance"},
        {"latents", "latent export and pairing distances"},
        {"mirror", "mirror test on demonstrations"},
        {"retrieve", "pixel versus latent nearest neighbour"},
        {"ablate", "blended versus image-only models"},
        {"generalize", "novel object colour and size"}};
    for (std::size_t i = 0; i < eval_names.size(); ++i) {
        const std::string& n = eval_names[i].first;
        Options& o = oev[i];
        auto* sub = eval->add_subcommand(n, eval_names[i].second);
        sub->add_option("--data", o.data, "dataset file");
        sub->add_option("--out-dir", o.out_dir, "output directory (default $DMBN_OUT_ROOT/eval-<name>)");
        add_train_options(sub, o.train);
        sub->add_flag("--train-inline", o.train_inline, "train the required models instead of loading them");
        sub->add_option("--eval-seed", o.eval_seed, "seed recorded in metric rows")->capture_default_str();
        if (n == "missing" || n == "horizon") {
            sub->add_option("--dmbn", o.dmbn_ckpt, "DMBN checkpoint");
            sub->add_option("--mvae", o.mvae_ckpt, "MVAE checkpoint");
            sub->add_option("--seeds", o.seeds, "seeds for inline training")->capture_default_str();
        } else if (n != "ablate") {
            sub->add_option("--checkpoint", o.checkpoint, "DMBN checkpoint");
        }
        if (n == "missing") sub->add_option("--sizes", o.sizes, "training-set sizes")->capture_default_str();
        if (n == "mirror" || n == "retrieve" || n == "ablate") {
            sub->add_option("--scenarios", o.scenarios, "view/occlusion/action list (default canonical pair)");
        }
        if (n == "mirror" || n == "ablate" || n == "generalize") {
            sub->add_option("--color-tolerance", o.color_tolerance, "per-channel colour tolerance")->capture_default_str();
        }
        if (n == "ablate") sub->add_option("--runs", o.runs, "seeds per model")->capture_default_str();
        if (n == "generalize") {
            sub->add_option("--variants", o.variants, "none, blue, large, small, blue-large")->capture_default_str();
        }
        evals.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen(og, *gen, out);
        if (train->parsed()) return cmd_train(otr, *train, out);
        if (predict->parsed()) return cmd_predict(opr, *predict, out);
        for (std::size_t i = 0; i < evals.size(); ++i) {
            CLI::App* sub = evals[i];
            const Options& o = oev[i];
            if (!sub->parsed()) continue;
            const sim::Dataset ds = read_dataset(o.data);
            const fs::path dir = resolve_dir(o.out_dir, "eval-" + sub->get_name());
            fs::create_directories(dir);
            const std::string& n = sub->get_name();
            int rc = kOk;
            if (n == "missing") rc = eval_missing(o, ds, dir, out);
            if (n == "horizon") rc = eval_horizon(o, ds, dir, out);
            if (n == "latents") rc = eval_latents(o, ds, dir, out);
            if (n == "mirror") rc = eval_mirror(o, ds, dir, out);
            if (n == "retrieve") rc = eval_retrieve(o, ds, dir, out);
            if (n == "ablate") rc = eval_ablate(o, ds, dir, out);
            if (n == "generalize") rc = eval_generalize(o, ds, dir, out);
            write_snapshot(dir / "config.ini", *sub, section_name(sub));
            out << "wrote " << dir.string() << '\n';
            return rc;
        }
        throw UsageError("no command given");
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kData;
    }
}

}  // namespace dmbn::cli
