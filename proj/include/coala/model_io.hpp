#pragma once

// Network and head files: a JSON document {m, d, theta2, origin, theta1, ...}
// whose "theta1" entry names an m x d matrix in the binary feature format.

#include "coala/feature_store.hpp"
#include "coala/finetune.hpp"

#include <nlohmann/json.hpp>

#include <optional>

namespace coala {

struct StoredModel {
    CoalaHead head;
    std::optional<Standardizer> standardizer;
    bool is_head = false;  // carries beta_reward / gamma
};

inline fs::path theta1_path_for(const fs::path& model_path) {
    fs::path p = model_path;
    p.replace_extension(".theta1.json");
    return p;
}

inline nlohmann::json model_json(const StoredModel& model, const fs::path& theta1_manifest) {
    const auto& net = model.head.net;
    nlohmann::json j;
    j["m"] = net.width();
    j["d"] = net.input_dim();
    j["theta2"] = std::vector<double>(net.theta2.data(), net.theta2.data() + net.theta2.size());
    auto& origin = j["origin"] = nlohmann::json::array();
    for (const auto& o : net.origin) origin.push_back({{"pattern", o.pattern}, {"sign", o.sign}});
    j["theta1"] = theta1_manifest.filename().string();
    if (model.is_head) {
        j["beta_reward"] = model.head.beta_reward;
        j["gamma"] = model.head.gamma;
    }
    if (model.standardizer) j["standardizer"] = to_json(*model.standardizer);
    return j;
}

/// Writes the model JSON plus its theta1 matrix; returns every file written.
inline std::vector<fs::path> save_model(const fs::path& path, const StoredModel& model) {
    const fs::path theta1_manifest = theta1_path_for(path);
    FeatureMatrix theta1{model.head.net.theta1, std::nullopt};
    save_features(theta1_manifest, theta1);
    write_file(path, model_json(model, theta1_manifest).dump(2) + "\n");
    fs::path theta1_bin = theta1_manifest;
    theta1_bin.replace_extension(".bin");
    return {path, theta1_manifest, theta1_bin};
}

inline StoredModel load_model(const fs::path& path) {
    StoredModel model;
    try {
        const auto j = nlohmann::json::parse(read_file(path));
        const auto m = j.at("m").get<Eigen::Index>();
        const auto d = j.at("d").get<Eigen::Index>();
        const auto theta2 = j.at("theta2").get<std::vector<double>>();
        require(static_cast<Eigen::Index>(theta2.size()) == m, "model: theta2 length must equal m");
        const FeatureMatrix theta1 = load_features(path.parent_path() / j.at("theta1").get<std::string>());
        require(theta1.n() == m && (m == 0 || theta1.d() == d), "model: theta1 shape must be m x d");
        auto& net = model.head.net;
        net.theta1 = m == 0 ? Matrix(0, d) : Matrix(theta1.values);
        net.theta2 = Eigen::Map<const Vector>(theta2.data(), m);
        for (const auto& o : j.value("origin", nlohmann::json::array()))
            net.origin.push_back({o.at("pattern").get<Eigen::Index>(), o.at("sign").get<int>()});
        if (j.contains("beta_reward")) {
            model.is_head = true;
            model.head.beta_reward = j.at("beta_reward").get<double>();
            model.head.gamma = j.at("gamma").get<double>();
        }
        if (j.contains("standardizer")) {
            model.standardizer = standardizer_from_json(j["standardizer"]);
            require(model.standardizer->mean.size() == d, "model: standardizer dimension must equal d");
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError("model '" + path.string() + "': " + e.what());
    }
    return model;
}

/// Raw features -> model input space.
inline RowMatrix model_inputs(const StoredModel& model, const RowMatrix& raw) {
    return model.standardizer ? model.standardizer->apply(raw) : raw;
}

}  // namespace coala
