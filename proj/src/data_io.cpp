#include "wvad/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "wvad/rng.hpp"

namespace wvad {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& token, std::size_t line_no, const std::string& what) {
    const std::string t = trim(token);
    double value = 0.0;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || t.empty()) {
        throw ParseError(what + ": non-numeric cell '" + token + "' at line " +
                         std::to_string(line_no));
    }
    return value;
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string format_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void fisher_yates(std::vector<std::size_t>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(bounded_rand(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace

RawData load_csv(const std::string& path, int label_col, bool header) {
    std::ifstream in(path);
    if (!in) throw ValidationError("load_csv: cannot open " + path);

    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (header && line_no == 1) continue;
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto tokens = split_commas(stripped);
        if (width == 0) {
            width = tokens.size();
            if (width < 2) {
                throw ParseError("load_csv: need at least one feature and a label at line " +
                                 std::to_string(line_no));
            }
        } else if (tokens.size() != width) {
            throw ParseError("load_csv: ragged row at line " + std::to_string(line_no) +
                             " (got " + std::to_string(tokens.size()) + " cells, expected " +
                             std::to_string(width) + ")");
        }
        std::vector<double> values;
        values.reserve(width);
        for (const auto& tok : tokens) values.push_back(parse_double(tok, line_no, "load_csv"));
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw ParseError("load_csv: no data rows in " + path);

    const std::size_t lc =
        label_col < 0 ? width - 1 : static_cast<std::size_t>(label_col);
    if (lc >= width) {
        throw ValidationError("load_csv: label column " + std::to_string(label_col) +
                              " out of range for " + std::to_string(width) + " columns");
    }

    RawData raw;
    raw.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width - 1));
    raw.labels.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const double lbl = rows[r][lc];
        if (lbl != 0.0 && lbl != 1.0) {
            throw ParseError("load_csv: label must be 0 or 1, got " + format_g17(lbl) +
                             " in data row " + std::to_string(r + 1));
        }
        raw.labels.push_back(static_cast<int>(lbl));
        Eigen::Index c = 0;
        for (std::size_t j = 0; j < width; ++j) {
            if (j == lc) continue;
            raw.x(static_cast<Eigen::Index>(r), c++) = rows[r][j];
        }
    }
    return raw;
}

Matrix standardize(const Matrix& raw, StandardizeStats& stats,
                   std::vector<std::string>* warnings) {
    if (raw.rows() < 2) throw ValidationError("standardize: need at least 2 rows");
    const Eigen::Index d = raw.cols();
    stats.mean = raw.colwise().mean();
    stats.std.resize(d);
    stats.constant_columns.clear();
    Matrix out = raw.rowwise() - stats.mean.transpose();
    for (Eigen::Index j = 0; j < d; ++j) {
        // Population (n) standard deviation over the full dataset.
        const double var = out.col(j).squaredNorm() / static_cast<double>(raw.rows());
        double sd = std::sqrt(var);
        if (sd < 1e-12) {
            sd = 1.0;
            stats.constant_columns.push_back(static_cast<int>(j));
            if (warnings) {
                warnings->push_back("column " + std::to_string(j) +
                                    " is constant; centered only");
            }
        }
        stats.std[j] = sd;
        out.col(j) /= sd;
    }
    return out;
}

std::size_t LabeledDataset::weak_count() const {
    return static_cast<std::size_t>(std::accumulate(weak.begin(), weak.end(), 0));
}

std::size_t LabeledDataset::anomaly_count() const {
    return static_cast<std::size_t>(std::accumulate(truth.begin(), truth.end(), 0));
}

std::size_t weak_label_count(std::size_t anomalies, double label_ratio) {
    // round-half-up of ratio * count
    return static_cast<std::size_t>(
        std::floor(label_ratio * static_cast<double>(anomalies) + 0.5));
}

LabeledDataset split_weak_labels(Matrix x_std, std::vector<int> truth, StandardizeStats stats,
                                 double label_ratio, std::uint64_t seed) {
    if (!(label_ratio > 0.0 && label_ratio < 1.0)) {
        throw ValidationError("split_weak_labels: label ratio must lie in (0, 1)");
    }
    if (static_cast<Eigen::Index>(truth.size()) != x_std.rows()) {
        throw DimensionError("split_weak_labels: truth length must match rows");
    }
    std::vector<std::size_t> anomaly_idx;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] == 1) {
            anomaly_idx.push_back(i);
        } else if (truth[i] != 0) {
            throw ValidationError("split_weak_labels: truth labels must be 0 or 1");
        }
    }
    const std::size_t m = weak_label_count(anomaly_idx.size(), label_ratio);
    if (m == 0) {
        throw ValidationError(
            "split_weak_labels: label ratio rounds to zero labeled anomalies");
    }

    auto rng = make_rng(seed);
    fisher_yates(anomaly_idx, rng);

    LabeledDataset ds;
    ds.x = std::move(x_std);
    ds.truth = std::move(truth);
    ds.weak.assign(ds.truth.size(), 0);
    for (std::size_t i = 0; i < m; ++i) ds.weak[anomaly_idx[i]] = 1;
    ds.stats = std::move(stats);
    ds.label_ratio = label_ratio;
    ds.split_seed = seed;
    return ds;
}

SyntheticSpec two_cluster_spec(int dim, double offset, double scale, int cluster_size,
                               int anomaly_count, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.dim = dim;
    spec.anomaly_count = anomaly_count;
    spec.seed = seed;
    for (int s : {1, -1}) {
        SyntheticCluster c;
        c.mean = Vector::Zero(dim);
        c.mean[0] = s * offset;
        c.scale = scale;
        c.size = cluster_size;
        spec.clusters.push_back(std::move(c));
    }
    return spec;
}

LabeledDataset make_synthetic(const SyntheticSpec& spec) {
    if (spec.dim < 1) throw ValidationError("make_synthetic: dim must be >= 1");
    if (spec.clusters.empty()) throw ValidationError("make_synthetic: need clusters");
    if (spec.anomaly_count < 1) throw ValidationError("make_synthetic: anomaly count must be >= 1");
    if (spec.placement == AnomalyPlacement::BetweenClusters && spec.clusters.size() < 2) {
        throw ValidationError("make_synthetic: between-cluster anomalies need >= 2 clusters");
    }
    Eigen::Index total = spec.anomaly_count;
    double scale_sum = 0.0;
    for (const auto& c : spec.clusters) {
        if (c.size < 2) throw ValidationError("make_synthetic: cluster sizes must be >= 2");
        if (!(c.scale > 0.0)) throw ValidationError("make_synthetic: cluster scale must be > 0");
        if (c.mean.size() != spec.dim) {
            throw ValidationError("make_synthetic: cluster mean length must equal dim");
        }
        total += c.size;
        scale_sum += c.scale;
    }
    const double avg_scale = scale_sum / static_cast<double>(spec.clusters.size());

    auto rng = make_rng(derive_seed(spec.seed, streams::kSynthetic));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Matrix x(total, spec.dim);
    std::vector<int> truth(static_cast<std::size_t>(total), 0);
    Eigen::Index row = 0;
    for (const auto& c : spec.clusters) {
        for (int i = 0; i < c.size; ++i, ++row) {
            for (Eigen::Index j = 0; j < spec.dim; ++j) {
                x(row, j) = c.mean[j] + c.scale * gauss(rng);
            }
        }
    }
    for (int i = 0; i < spec.anomaly_count; ++i, ++row) {
        truth[static_cast<std::size_t>(row)] = 1;
        if (spec.placement == AnomalyPlacement::BetweenClusters) {
            // Near the midpoint of a random cluster pair: local anomalies in
            // a low-density corridor, not global outliers.
            const auto n_c = spec.clusters.size();
            const auto a = static_cast<std::size_t>(bounded_rand(rng, n_c));
            auto b = static_cast<std::size_t>(bounded_rand(rng, n_c - 1));
            if (b >= a) ++b;
            const double t = 0.4 + 0.2 * unit(rng);
            for (Eigen::Index j = 0; j < spec.dim; ++j) {
                const double base = spec.clusters[a].mean[j] +
                                    t * (spec.clusters[b].mean[j] - spec.clusters[a].mean[j]);
                x(row, j) = base + spec.anomaly_jitter * avg_scale * gauss(rng);
            }
        } else {
            // Far outside every cluster, along a random direction.
            double reach = 0.0;
            for (const auto& c : spec.clusters) reach = std::max(reach, c.mean.norm() + 3.0 * c.scale);
            Vector dir(spec.dim);
            for (Eigen::Index j = 0; j < spec.dim; ++j) dir[j] = gauss(rng);
            const double norm = dir.norm();
            if (norm > 0.0) dir /= norm;
            const double radius = reach * (1.5 + unit(rng));
            x.row(row) = (radius * dir).transpose();
        }
    }

    StandardizeStats stats;
    const Matrix xs = standardize(x, stats);
    LabeledDataset ds = split_weak_labels(xs, std::move(truth), std::move(stats),
                                          spec.label_ratio,
                                          derive_seed(spec.seed, streams::kLabelSplit));
    ds.source = "synthetic";
    return ds;
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("load_synthetic_spec: cannot open " + path);
    SyntheticSpec spec;
    spec.clusters.clear();
    std::string line;
    std::size_t line_no = 0;
    std::vector<SyntheticCluster> clusters;
    auto cluster_at = [&](std::size_t i) -> SyntheticCluster& {
        if (clusters.size() <= i) clusters.resize(i + 1);
        return clusters[i];
    };
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ParseError("load_synthetic_spec: expected 'key = value' at line " +
                             std::to_string(line_no));
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key == "dim") {
            spec.dim = static_cast<int>(parse_double(value, line_no, "spec"));
        } else if (key == "anomalies") {
            spec.anomaly_count = static_cast<int>(parse_double(value, line_no, "spec"));
        } else if (key == "jitter") {
            spec.anomaly_jitter = parse_double(value, line_no, "spec");
        } else if (key == "label_ratio") {
            spec.label_ratio = parse_double(value, line_no, "spec");
        } else if (key == "seed") {
            spec.seed = static_cast<std::uint64_t>(parse_double(value, line_no, "spec"));
        } else if (key == "placement") {
            if (value == "between-clusters") {
                spec.placement = AnomalyPlacement::BetweenClusters;
            } else if (value == "global-outskirts") {
                spec.placement = AnomalyPlacement::GlobalOutskirts;
            } else {
                throw ParseError("load_synthetic_spec: unknown placement '" + value +
                                 "' at line " + std::to_string(line_no));
            }
        } else if (key.rfind("cluster", 0) == 0) {
            const auto dot = key.find('.');
            if (dot == std::string::npos) {
                throw ParseError("load_synthetic_spec: bad cluster key at line " +
                                 std::to_string(line_no));
            }
            const std::size_t idx =
                static_cast<std::size_t>(std::stoul(key.substr(7, dot - 7)));
            const std::string field = key.substr(dot + 1);
            auto& cluster = cluster_at(idx);
            if (field == "scale") {
                cluster.scale = parse_double(value, line_no, "spec");
            } else if (field == "size") {
                cluster.size = static_cast<int>(parse_double(value, line_no, "spec"));
            } else if (field == "mean") {
                std::istringstream vs(value);
                std::vector<double> mean;
                std::string tok;
                while (vs >> tok) mean.push_back(parse_double(tok, line_no, "spec"));
                cluster.mean = Eigen::Map<Vector>(mean.data(),
                                                  static_cast<Eigen::Index>(mean.size()));
            } else {
                throw ParseError("load_synthetic_spec: unknown cluster field '" + field +
                                 "' at line " + std::to_string(line_no));
            }
        } else {
            throw ParseError("load_synthetic_spec: unknown key '" + key + "' at line " +
                             std::to_string(line_no));
        }
    }
    spec.clusters = std::move(clusters);
    return spec;
}

void save_synthetic_spec(const SyntheticSpec& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("save_synthetic_spec: cannot write " + path);
    out << "# synthetic dataset spec\n";
    out << "dim = " << spec.dim << "\n";
    out << "placement = "
        << (spec.placement == AnomalyPlacement::BetweenClusters ? "between-clusters"
                                                                : "global-outskirts")
        << "\n";
    out << "anomalies = " << spec.anomaly_count << "\n";
    out << "jitter = " << format_g17(spec.anomaly_jitter) << "\n";
    out << "label_ratio = " << format_g17(spec.label_ratio) << "\n";
    out << "seed = " << spec.seed << "\n";
    for (std::size_t i = 0; i < spec.clusters.size(); ++i) {
        const auto& c = spec.clusters[i];
        out << "cluster" << i << ".mean =";
        for (Eigen::Index j = 0; j < c.mean.size(); ++j) out << " " << format_g17(c.mean[j]);
        out << "\n";
        out << "cluster" << i << ".scale = " << format_g17(c.scale) << "\n";
        out << "cluster" << i << ".size = " << c.size << "\n";
    }
}

void save_dataset_cache(const LabeledDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("save_dataset_cache: cannot write " + path);
    for (Eigen::Index r = 0; r < ds.x.rows(); ++r) {
        for (Eigen::Index c = 0; c < ds.x.cols(); ++c) {
            out << format_g17(ds.x(r, c)) << ",";
        }
        out << ds.weak[static_cast<std::size_t>(r)] << ","
            << ds.truth[static_cast<std::size_t>(r)] << "\n";
    }
    out.close();

    json meta;
    meta["source"] = ds.source;
    meta["label_ratio"] = ds.label_ratio;
    meta["split_seed"] = ds.split_seed;
    meta["rows"] = ds.x.rows();
    meta["dims"] = ds.x.cols();
    meta["mean"] = std::vector<double>(ds.stats.mean.data(), ds.stats.mean.data() + ds.stats.mean.size());
    meta["std"] = std::vector<double>(ds.stats.std.data(), ds.stats.std.data() + ds.stats.std.size());
    meta["constant_columns"] = ds.stats.constant_columns;
    std::ofstream mout(path + ".meta");
    if (!mout) throw ValidationError("save_dataset_cache: cannot write " + path + ".meta");
    mout << meta.dump(2) << "\n";
}

LabeledDataset load_dataset_cache(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("load_dataset_cache: cannot open " + path);
    std::ifstream min(path + ".meta");
    if (!min) throw ValidationError("load_dataset_cache: missing sidecar " + path + ".meta");
    json meta;
    try {
        min >> meta;
    } catch (const json::exception& e) {
        throw ParseError("load_dataset_cache: bad sidecar: " + std::string(e.what()));
    }

    const auto rows = meta.at("rows").get<Eigen::Index>();
    const auto dims = meta.at("dims").get<Eigen::Index>();
    LabeledDataset ds;
    ds.x.resize(rows, dims);
    ds.weak.reserve(static_cast<std::size_t>(rows));
    ds.truth.reserve(static_cast<std::size_t>(rows));
    std::string line;
    std::size_t line_no = 0;
    Eigen::Index r = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        if (r >= rows) throw ParseError("load_dataset_cache: more rows than sidecar declares");
        const auto tokens = split_commas(stripped);
        if (static_cast<Eigen::Index>(tokens.size()) != dims + 2) {
            throw ParseError("load_dataset_cache: ragged row at line " +
                             std::to_string(line_no));
        }
        for (Eigen::Index c = 0; c < dims; ++c) {
            ds.x(r, c) = parse_double(tokens[static_cast<std::size_t>(c)], line_no, "cache");
        }
        const double w = parse_double(tokens[static_cast<std::size_t>(dims)], line_no, "cache");
        const double t =
            parse_double(tokens[static_cast<std::size_t>(dims) + 1], line_no, "cache");
        if ((w != 0.0 && w != 1.0) || (t != 0.0 && t != 1.0)) {
            throw ParseError("load_dataset_cache: labels must be 0/1 at line " +
                             std::to_string(line_no));
        }
        if (w == 1.0 && t != 1.0) {
            throw ValidationError("load_dataset_cache: weak label on a non-anomaly at line " +
                                  std::to_string(line_no));
        }
        ds.weak.push_back(static_cast<int>(w));
        ds.truth.push_back(static_cast<int>(t));
        ++r;
    }
    if (r != rows) throw ParseError("load_dataset_cache: fewer rows than sidecar declares");

    ds.source = meta.at("source").get<std::string>();
    ds.label_ratio = meta.at("label_ratio").get<double>();
    ds.split_seed = meta.at("split_seed").get<std::uint64_t>();
    const auto mean = meta.at("mean").get<std::vector<double>>();
    const auto sd = meta.at("std").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(mean.size()) != dims ||
        static_cast<Eigen::Index>(sd.size()) != dims) {
        throw ParseError("load_dataset_cache: stats length mismatch in sidecar");
    }
    ds.stats.mean = Eigen::Map<const Vector>(mean.data(), dims);
    ds.stats.std = Eigen::Map<const Vector>(sd.data(), dims);
    ds.stats.constant_columns = meta.at("constant_columns").get<std::vector<int>>();
    return ds;
}

}  // namespace wvad
