#include "wvad/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace wvad {

namespace {

using nlohmann::json;

json layers_to_json(const nn::DenseNet& net) {
    json out = json::array();
    for (const auto& layer : net.layers()) {
        json l;
        l["rows"] = layer.w.rows();
        l["cols"] = layer.w.cols();
        l["act"] = nn::activation_name(layer.act);
        std::vector<double> w(static_cast<std::size_t>(layer.w.size()));
        // row-major dump so the file is human-scannable per output unit
        std::size_t i = 0;
        for (Eigen::Index r = 0; r < layer.w.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.w.cols(); ++c) w[i++] = layer.w(r, c);
        }
        l["w"] = std::move(w);
        l["b"] = std::vector<double>(layer.b.data(), layer.b.data() + layer.b.size());
        out.push_back(std::move(l));
    }
    return out;
}

nn::Activation activation_from_name(const std::string& name) {
    if (name == "linear") return nn::Activation::Linear;
    if (name == "softplus") return nn::Activation::Softplus;
    if (name == "sigmoid") return nn::Activation::Sigmoid;
    if (name == "softmax") return nn::Activation::Softmax;
    throw ParseError("checkpoint: unknown activation '" + name + "'");
}

void layers_from_json(const json& src, nn::DenseNet& net) {
    if (src.size() != net.layer_count()) {
        throw ParseError("checkpoint: layer count mismatch");
    }
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        auto& layer = net.layers()[i];
        const auto& l = src[i];
        const auto rows = l.at("rows").get<Eigen::Index>();
        const auto cols = l.at("cols").get<Eigen::Index>();
        if (rows != layer.w.rows() || cols != layer.w.cols()) {
            throw ParseError("checkpoint: layer " + std::to_string(i) + " shape mismatch");
        }
        if (activation_from_name(l.at("act").get<std::string>()) != layer.act) {
            throw ParseError("checkpoint: layer " + std::to_string(i) + " activation mismatch");
        }
        const auto w = l.at("w").get<std::vector<double>>();
        const auto b = l.at("b").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(w.size()) != layer.w.size() ||
            static_cast<Eigen::Index>(b.size()) != layer.b.size()) {
            throw ParseError("checkpoint: layer " + std::to_string(i) + " size mismatch");
        }
        std::size_t k = 0;
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) layer.w(r, c) = w[k++];
        }
        layer.b = Eigen::Map<const Vector>(b.data(), layer.b.size());
    }
}

std::vector<double> flatten(const Matrix& m) {
    std::vector<double> out(static_cast<std::size_t>(m.size()));
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out[i++] = m(r, c);
    }
    return out;
}

Matrix unflatten(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
    if (static_cast<Eigen::Index>(v.size()) != rows * cols) {
        throw ParseError("checkpoint: matrix size mismatch");
    }
    Matrix m(rows, cols);
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[i++];
    }
    return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const MixtureVae& model,
                     const ScoreEstimator& estimator, const StandardizeStats& stats,
                     const TrainConfig& config) {
    json doc;
    doc["format"] = "wvad-checkpoint";
    doc["version"] = 1;
    doc["k"] = model.cluster_count();
    doc["d"] = model.data_dim();
    doc["l"] = model.latent_dim();
    doc["encoder_widths"] = model.encoder_widths();
    doc["encoder"] = layers_to_json(model.encoder());
    doc["decoder"] = layers_to_json(model.decoder());
    doc["prior"]["logits"] = std::vector<double>(
        model.prior().logits.data(), model.prior().logits.data() + model.prior().logits.size());
    doc["prior"]["means"] = flatten(model.prior().means);
    doc["prior"]["logvars"] = flatten(model.prior().logvars);
    doc["estimator"]["feature_dim"] = estimator.feature_dim();
    doc["estimator"]["layers"] = layers_to_json(estimator.net());
    doc["stats"]["mean"] =
        std::vector<double>(stats.mean.data(), stats.mean.data() + stats.mean.size());
    doc["stats"]["std"] =
        std::vector<double>(stats.std.data(), stats.std.data() + stats.std.size());
    doc["stats"]["constant_columns"] = stats.constant_columns;
    doc["config"] = config_to_text(config);

    std::ofstream out(path);
    if (!out) throw ValidationError("checkpoint: cannot write " + path);
    out << doc.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("checkpoint: cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError("checkpoint: invalid JSON: " + std::string(e.what()));
    }
    try {
        if (doc.at("format").get<std::string>() != "wvad-checkpoint") {
            throw ParseError("checkpoint: unrecognized format tag");
        }
        Checkpoint cp;
        const int k = doc.at("k").get<int>();
        const auto widths = doc.at("encoder_widths").get<std::vector<int>>();
        cp.model = MixtureVae(k, widths);
        layers_from_json(doc.at("encoder"), cp.model.encoder());
        layers_from_json(doc.at("decoder"), cp.model.decoder());
        const auto logits = doc.at("prior").at("logits").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(logits.size()) != cp.model.prior().k()) {
            throw ParseError("checkpoint: prior logits size mismatch");
        }
        cp.model.prior().logits =
            Eigen::Map<const Vector>(logits.data(), static_cast<Eigen::Index>(logits.size()));
        cp.model.prior().means = unflatten(doc.at("prior").at("means").get<std::vector<double>>(),
                                           k, cp.model.latent_dim());
        cp.model.prior().logvars = unflatten(
            doc.at("prior").at("logvars").get<std::vector<double>>(), k, cp.model.latent_dim());

        cp.estimator = ScoreEstimator(doc.at("estimator").at("feature_dim").get<int>());
        layers_from_json(doc.at("estimator").at("layers"), cp.estimator.net());

        const auto mean = doc.at("stats").at("mean").get<std::vector<double>>();
        const auto sd = doc.at("stats").at("std").get<std::vector<double>>();
        cp.stats.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        cp.stats.std = Eigen::Map<const Vector>(sd.data(), static_cast<Eigen::Index>(sd.size()));
        cp.stats.constant_columns = doc.at("stats").at("constant_columns").get<std::vector<int>>();
        cp.config = parse_config_text(doc.at("config").get<std::string>());
        return cp;
    } catch (const json::exception& e) {
        throw ParseError("checkpoint: missing or mistyped field: " + std::string(e.what()));
    }
}

}  // namespace wvad
