#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dmbn/error.hpp"
#include "dmbn/model/dmbn.hpp"
#include "dmbn/model/spec.hpp"
#include "dmbn/numcore.hpp"

namespace dmbn::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Named parameter table: count, then {name, rank, extents, f32 payload}.
template <typename T>
void write_param_table(io::Writer& w, const nc::ParameterSet<T>& params) {
    w.u32(static_cast<std::uint32_t>(params.size()));
    std::vector<float> buf;
    for (const auto& p : params) {
        w.str(p.name);
        w.u32(static_cast<std::uint32_t>(p.value.rank()));
        for (int e : p.value.shape()) w.u32(static_cast<std::uint32_t>(e));
        buf.assign(p.value.begin(), p.value.end());
        w.f32s(buf.data(), buf.size());
    }
}

// Reads a table written by write_param_table into an already-built set with
// the same names and shapes.
template <typename T>
void read_param_table(io::Reader& r, nc::ParameterSet<T>& params) {
    const std::uint32_t n = r.u32();
    if (n != params.size()) {
        throw FormatError("checkpoint has " + std::to_string(n) + " parameters, model has " +
                          std::to_string(params.size()));
    }
    std::vector<float> buf;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::string name = r.str(4096);
        nc::Parameter<T>* p = params.find(name);
        if (!p) throw FormatError("checkpoint parameter '" + name + "' not in model");
        const std::uint32_t rank = r.u32();
        if (rank > 8) throw FormatError("implausible rank for parameter '" + name + "'");
        nc::Shape s;
        for (std::uint32_t k = 0; k < rank; ++k) s.push_back(static_cast<int>(r.u32()));
        if (s != p->value.shape()) {
            throw FormatError("parameter '" + name + "' has shape " + nc::shape_str(s) + " in checkpoint, " +
                              nc::shape_str(p->value.shape()) + " in model");
        }
        buf.resize(p->value.size());
        r.f32s(buf.data(), buf.size());
        std::transform(buf.begin(), buf.end(), p->value.begin(), [](float v) { return static_cast<T>(v); });
    }
}

template <typename T>
void write_optimizer(io::Writer& w, const nc::AdamState<T>* opt) {
    w.u8(opt ? 1 : 0);
    if (!opt) return;
    w.f64(opt->config.learning_rate);
    w.f64(opt->config.beta1);
    w.f64(opt->config.beta2);
    w.f64(opt->config.epsilon);
    w.u64(opt->step);
    w.u32(static_cast<std::uint32_t>(opt->first_moment.size()));
    std::vector<float> buf;
    for (std::size_t i = 0; i < opt->first_moment.size(); ++i) {
        for (const auto* t : {&opt->first_moment[i], &opt->second_moment[i]}) {
            w.u32(static_cast<std::uint32_t>(t->size()));
            buf.assign(t->begin(), t->end());
            w.f32s(buf.data(), buf.size());
        }
    }
}

// Returns false when the section is absent. Moment shapes follow `params`.
template <typename T>
bool read_optimizer(io::Reader& r, const nc::ParameterSet<T>& params, nc::AdamState<T>& opt) {
    const std::uint8_t present = r.u8();
    if (present > 1) throw FormatError("bad optimizer section flag");
    if (!present) return false;
    opt.config.learning_rate = r.f64();
    opt.config.beta1 = r.f64();
    opt.config.beta2 = r.f64();
    opt.config.epsilon = r.f64();
    opt.step = r.u64();
    const std::uint32_t n = r.u32();
    if (n != 0 && n != params.size()) throw FormatError("optimizer state does not match parameter count");
    opt.first_moment.clear();
    opt.second_moment.clear();
    std::vector<float> buf;
    auto it = params.begin();
    for (std::uint32_t i = 0; i < n; ++i, ++it) {
        for (auto* dst : {&opt.first_moment, &opt.second_moment}) {
            const std::uint32_t len = r.u32();
            if (len != it->value.size()) throw FormatError("optimizer moment size mismatch for '" + it->name + "'");
            buf.resize(len);
            r.f32s(buf.data(), len);
            nc::Tensor<T> t(it->value.shape());
            std::transform(buf.begin(), buf.end(), t.begin(), [](float v) { return static_cast<T>(v); });
            dst->push_back(std::move(t));
        }
    }
    return true;
}

template <typename T>
void save_checkpoint(const Dmbn<T>& model, std::ostream& os, const nc::AdamState<T>* opt = nullptr) {
    io::Writer w(os);
    w.magic("DMBN");
    w.u32(kCheckpointVersion);
    write_spec(w, model.spec());
    write_param_table(w, model.params());
    write_optimizer(w, opt);
    w.check();
}

template <typename T>
Dmbn<T> load_checkpoint(std::istream& is, nc::AdamState<T>* opt = nullptr) {
    io::Reader r(is);
    r.expect_magic("DMBN");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) throw FormatError("unsupported DMBN checkpoint version " + std::to_string(version));
    Dmbn<T> model(read_spec(r));
    read_param_table(r, model.params());
    nc::AdamState<T> scratch;
    read_optimizer(r, model.params(), opt ? *opt : scratch);
    return model;
}

template <typename T>
void save_checkpoint(const Dmbn<T>& model, const std::filesystem::path& path, const nc::AdamState<T>* opt = nullptr) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    save_checkpoint(model, os, opt);
}

template <typename T = float>
Dmbn<T> load_checkpoint(const std::filesystem::path& path, nc::AdamState<T>* opt = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint " + path.string());
    return load_checkpoint<T>(is, opt);
}

}  // namespace dmbn::model
