#pragma once

// Dense feature matrices on disk: little-endian float32, row-major, no padding,
// next to a JSON manifest {"n", "d", "dtype": "f32le", "sha256", "ids", "data"}.

#include "coala/core.hpp"
#include "coala/preference_extraction.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <vector>

namespace coala {

namespace fs = std::filesystem;

struct FeatureMatrix {
    RowMatrix values;
    std::optional<std::vector<std::string>> ids;

    Eigen::Index n() const { return values.rows(); }
    Eigen::Index d() const { return values.cols(); }
};

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

inline std::string encode_f32le(const RowMatrix& values) {
    std::string bytes(static_cast<std::size_t>(values.size()) * 4, '\0');
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values.data()[i]));
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        std::memcpy(bytes.data() + 4 * i, &bits, 4);
    }
    return bytes;
}

inline RowMatrix decode_f32le(std::string_view bytes, Eigen::Index n, Eigen::Index d) {
    RowMatrix values(n, d);
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, bytes.data() + 4 * i, 4);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        values.data()[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    return values;
}

/// Writes `<stem>.bin` and its manifest `<stem>.json`; returns the manifest path.
inline fs::path save_features(const fs::path& manifest_path, const FeatureMatrix& fm) {
    require(fm.values.allFinite(), "save_features: non-finite values");
    require(!fm.ids || static_cast<Eigen::Index>(fm.ids->size()) == fm.n(), "save_features: ids length must equal n");
    fs::path data_path = manifest_path;
    data_path.replace_extension(".bin");
    const std::string bytes = encode_f32le(fm.values);
    write_file(data_path, bytes);

    nlohmann::json manifest;
    manifest["n"] = fm.n();
    manifest["d"] = fm.d();
    manifest["dtype"] = "f32le";
    manifest["sha256"] = sha256_hex(bytes);
    manifest["ids"] = fm.ids ? nlohmann::json(*fm.ids) : nlohmann::json::array();
    manifest["data"] = data_path.filename().string();
    write_file(manifest_path, manifest.dump(2) + "\n");
    return manifest_path;
}

inline FeatureMatrix load_features(const fs::path& manifest_path) {
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw InputError("manifest '" + manifest_path.string() + "': " + e.what());
    }
    FeatureMatrix fm;
    try {
        const auto n = manifest.at("n").get<Eigen::Index>();
        const auto d = manifest.at("d").get<Eigen::Index>();
        require(n >= 0 && d >= 0, "manifest shape must be nonnegative");
        require(manifest.value("dtype", "f32le") == "f32le", "unsupported dtype (expected f32le)");
        fs::path data_path = manifest_path;
        data_path.replace_extension(".bin");
        if (manifest.contains("data")) data_path = manifest_path.parent_path() / manifest["data"].get<std::string>();
        const std::string bytes = read_file(data_path);
        require(bytes.size() == static_cast<std::size_t>(n * d) * 4,
                "'" + data_path.string() + "' holds " + std::to_string(bytes.size()) + " bytes, manifest expects n*d*4 = " +
                    std::to_string(n * d * 4));
        if (manifest.contains("sha256"))
            require(sha256_hex(bytes) == manifest["sha256"].get<std::string>(),
                    "checksum mismatch for '" + data_path.string() + "'");
        fm.values = decode_f32le(bytes, n, d);
        require(fm.values.allFinite(), "'" + data_path.string() + "' contains non-finite values");
        const auto ids = manifest.value("ids", std::vector<std::string>{});
        if (!ids.empty()) {
            require(static_cast<Eigen::Index>(ids.size()) == n, "manifest ids length must equal n");
            fm.ids = ids;
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError("manifest '" + manifest_path.string() + "': " + e.what());
    }
    return fm;
}

struct ClassifierDataset {
    FeatureMatrix x;
    Vector y;
};

/// Interleaves chosen (+1) and rejected (-1) rows, one pair per triplet in order.
inline ClassifierDataset build_classifier_dataset(const std::vector<PreferenceTriplet>& triplets,
                                                  const FeatureMatrix& chosen, const FeatureMatrix& rejected) {
    const auto count = static_cast<Eigen::Index>(triplets.size());
    require(chosen.n() == count && rejected.n() == count,
            "classifier dataset: feature rows must match the triplet count");
    require(count == 0 || chosen.d() == rejected.d(), "classifier dataset: chosen/rejected dimension mismatch");
    const Eigen::Index d = count == 0 ? std::max(chosen.d(), rejected.d()) : chosen.d();

    ClassifierDataset ds;
    ds.x.values.resize(2 * count, d);
    ds.y.resize(2 * count);
    std::vector<std::string> ids;
    ids.reserve(static_cast<std::size_t>(2 * count));
    for (Eigen::Index i = 0; i < count; ++i) {
        ds.x.values.row(2 * i) = chosen.values.row(i);
        ds.x.values.row(2 * i + 1) = rejected.values.row(i);
        ds.y[2 * i] = 1.0;
        ds.y[2 * i + 1] = -1.0;
        const auto& t = triplets[static_cast<std::size_t>(i)];
        const std::string base = t.source_id + "#" + std::to_string(t.pair_index);
        ids.push_back(base + ":chosen");
        ids.push_back(base + ":rejected");
    }
    ds.x.ids = std::move(ids);
    return ds;
}

/// Column-wise affine map x -> (x - mean) / scale.
struct Standardizer {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;

    RowMatrix apply(const RowMatrix& x) const {
        require(x.cols() == mean.size(), "standardizer: dimension mismatch");
        return (x.rowwise() - mean).array().rowwise() / scale.array();
    }
    Vector apply(const Vector& x) const { return apply(RowMatrix(x.transpose())).row(0).transpose(); }

    static Standardizer identity(Eigen::Index d) {
        return {Eigen::RowVectorXd::Zero(d), Eigen::RowVectorXd::Ones(d)};
    }
};

/// Fits zero-mean unit-variance columns. Columns with variance below 1e-12 get scale 1.
inline Standardizer fit_standardizer(const RowMatrix& x) {
    require(x.rows() >= 2, "standardize: need at least 2 rows");
    Standardizer st;
    st.mean = x.colwise().mean();
    const Eigen::RowVectorXd var = (x.rowwise() - st.mean).array().square().colwise().mean();
    st.scale = var.unaryExpr([](double v) { return v < 1e-12 ? 1.0 : std::sqrt(v); });
    return st;
}

inline std::pair<FeatureMatrix, Standardizer> standardize(const FeatureMatrix& fm) {
    const Standardizer st = fit_standardizer(fm.values);
    return {{st.apply(fm.values), fm.ids}, st};
}

inline nlohmann::json to_json(const Standardizer& st) {
    return {{"mean", std::vector<double>(st.mean.data(), st.mean.data() + st.mean.size())},
            {"scale", std::vector<double>(st.scale.data(), st.scale.data() + st.scale.size())}};
}

inline Standardizer standardizer_from_json(const nlohmann::json& j) {
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto scale = j.at("scale").get<std::vector<double>>();
    require(mean.size() == scale.size(), "standardizer: mean/scale length mismatch");
    Standardizer st;
    st.mean = Eigen::Map<const Eigen::RowVectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    st.scale = Eigen::Map<const Eigen::RowVectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
    return st;
}

}  // namespace coala
