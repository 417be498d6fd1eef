#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dmbn/error.hpp"

namespace dmbn::evalx {

inline constexpr int kMetricSchemaVersion = 1;

struct MetricRow {
    std::string experiment;
    std::vector<std::pair<std::string, std::string>> conditions;
    std::string metric;
    double value = 0.0;
    std::uint64_t seed = 0;

    std::string condition(const std::string& key) const {
        for (const auto& [k, v] : conditions) {
            if (k == key) return v;
        }
        return {};
    }
    friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

// Shortest text that parses back to the same double.
inline std::string format_value(double v) {
    char buf[32];
    for (int prec = 6; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v || std::isnan(v)) break;
    }
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

// Header `experiment,<condition keys...>,metric,value,seed`. Condition
// columns are the union of keys in first-seen order; absent keys stay empty.
inline void write_metrics_csv(std::ostream& os, std::span<const MetricRow> rows) {
    std::vector<std::string> keys;
    for (const auto& r : rows) {
        for (const auto& kv : r.conditions) {
            if (std::find(keys.begin(), keys.end(), kv.first) == keys.end()) keys.push_back(kv.first);
        }
    }
    os << "experiment";
    for (const auto& k : keys) os << ',' << csv_field(k);
    os << ",metric,value,seed\n";
    for (const auto& r : rows) {
        os << csv_field(r.experiment);
        for (const auto& k : keys) os << ',' << csv_field(r.condition(k));
        os << ',' << csv_field(r.metric) << ',' << format_value(r.value) << ',' << r.seed << '\n';
    }
}

inline void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricRow> rows) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    write_metrics_csv(os, rows);
}

// Average ranks (1-based); ties share the mean of their positions.
inline std::vector<double> ranks(std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw ValueError("correlation needs two equal-length series of >= 2 values");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

// Spearman rank correlation; 0 when either series is constant.
inline double spearman(std::span<const double> x, std::span<const double> y) {
    const auto rx = ranks(x), ry = ranks(y);
    return pearson(rx, ry);
}

struct Pca2 {
    Eigen::MatrixXd projection;  // (n, 2)
    Eigen::Vector2d variance;    // per component, descending
    Eigen::MatrixXd components;  // (d, 2)
};

// Two leading principal components of the rows of `x`. Each component is
// signed so that its largest-magnitude entry is positive.
inline Pca2 pca2(const Eigen::MatrixXd& x) {
    if (x.rows() < 2 || x.cols() < 2) throw ValueError("pca needs at least two rows and two columns");
    const Eigen::RowVectorXd mean = x.colwise().mean();
    const Eigen::MatrixXd c = x.rowwise() - mean;
    const Eigen::MatrixXd cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw NumericalError("pca: eigen decomposition failed");
    const Eigen::Index d = x.cols();
    Pca2 out;
    out.components.resize(d, 2);
    for (int k = 0; k < 2; ++k) {
        Eigen::VectorXd v = es.eigenvectors().col(d - 1 - k);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        out.components.col(k) = v;
        out.variance(k) = std::max(0.0, es.eigenvalues()(d - 1 - k));
    }
    out.projection = c * out.components;
    return out;
}

}  // namespace dmbn::evalx
