#pragma once

// ReLU activation patterns of a fixed data matrix: sampling, exact enumeration
// for d <= 3, and cone membership.

#include "coala/core.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace coala {

using Mask = std::vector<std::uint8_t>;

struct ActivationPattern {
    Mask mask;
    Vector witness;
};

struct PatternSource {
    enum class Kind { sampled, enumerated } kind = Kind::enumerated;
    std::uint64_t seed = 0;
    std::size_t draws = 0;
};

struct PatternSet {
    Eigen::Index n = 0;
    Eigen::Index d = 0;
    std::vector<ActivationPattern> patterns;
    PatternSource source;

    std::size_t size() const { return patterns.size(); }
};

inline void check_data_matrix(const RowMatrix& x) {
    require(x.rows() >= 1 && x.cols() >= 1, "data matrix must have n >= 1 and d >= 1");
    require(x.allFinite(), "data matrix contains non-finite entries");
}

/// 1(Xv >= 0), the inclusive activation convention.
inline Mask activation_mask(const RowMatrix& x, const Vector& v) {
    const Vector xv = x * v;
    Mask mask(static_cast<std::size_t>(xv.size()));
    for (Eigen::Index j = 0; j < xv.size(); ++j) mask[j] = xv[j] >= 0.0 ? 1 : 0;
    return mask;
}

/// Entries of (2D - I) X v.
inline Vector signed_response(const Mask& mask, const RowMatrix& x, const Vector& v) {
    Vector r = x * v;
    for (Eigen::Index j = 0; j < r.size(); ++j)
        if (!mask[j]) r[j] = -r[j];
    return r;
}

inline bool cone_contains(const ActivationPattern& pattern, const RowMatrix& x, const Vector& v) {
    require(v.size() == x.cols(), "cone_contains: vector length must equal d");
    require(pattern.mask.size() == static_cast<std::size_t>(x.rows()), "cone_contains: mask length must equal n");
    const Vector r = signed_response(pattern.mask, x, v);
    return r.size() == 0 || r.minCoeff() >= -kConeTolerance;
}

/// Draws `draws` standard-normal witnesses and keeps the first witness of each distinct mask.
inline PatternSet sample_patterns(const RowMatrix& x, std::size_t draws, std::uint64_t seed) {
    require(draws >= 1, "sample_patterns: P must be >= 1");
    check_data_matrix(x);

    PatternSet out;
    out.n = x.rows();
    out.d = x.cols();
    out.source = {PatternSource::Kind::sampled, seed, draws};

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::set<Mask> seen;
    for (std::size_t k = 0; k < draws; ++k) {
        Vector w(x.cols());
        for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = normal(rng);
        Mask mask = activation_mask(x, w);
        if (seen.insert(mask).second) out.patterns.push_back({std::move(mask), std::move(w)});
    }
    return out;
}

namespace detail {

// Unit directions strictly inside each angular sector cut out of the plane by the
// lines {q : <a_l, q> = 0}. With no lines the whole plane is one sector.
inline std::vector<Eigen::Vector2d> sector_midpoints(const std::vector<Eigen::Vector2d>& normals) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    std::vector<double> angles;
    for (const auto& a : normals) {
        const double base = std::atan2(a.x(), -a.y());  // direction (-a_y, a_x)
        for (double t : {base, base + std::numbers::pi}) {
            double w = std::fmod(t, two_pi);
            if (w < 0) w += two_pi;
            angles.push_back(w);
        }
    }
    std::vector<Eigen::Vector2d> mids;
    if (angles.empty()) {
        mids.emplace_back(1.0, 0.0);
        return mids;
    }
    std::sort(angles.begin(), angles.end());
    std::vector<double> uniq;
    for (double t : angles)
        if (uniq.empty() || t - uniq.back() > 1e-12) uniq.push_back(t);
    if (uniq.size() > 1 && uniq.front() + two_pi - uniq.back() <= 1e-12) uniq.pop_back();
    for (std::size_t i = 0; i < uniq.size(); ++i) {
        const double lo = uniq[i];
        const double hi = i + 1 < uniq.size() ? uniq[i + 1] : uniq.front() + two_pi;
        const double mid = 0.5 * (lo + hi);
        mids.emplace_back(std::cos(mid), std::sin(mid));
    }
    return mids;
}

inline bool strictly_interior(const RowMatrix& x, const Vector& v, double tol) {
    const Vector xv = x * v;
    for (Eigen::Index j = 0; j < xv.size(); ++j)
        if (std::abs(xv[j]) <= tol * x.row(j).norm() * v.norm()) return false;
    return true;
}

// Candidates around the ray r: every sector of the planes through r, pushed off r
// by less than the distance to any other plane.
inline void candidates_around_ray(const RowMatrix& x, const Eigen::Vector3d& ray, std::vector<Vector>& out) {
    const Eigen::Vector3d r = ray.normalized();
    Eigen::Vector3d e1 = r.unitOrthogonal();
    Eigen::Vector3d e2 = r.cross(e1);
    std::vector<Eigen::Vector2d> through;
    double margin = kInfinity;
    for (Eigen::Index l = 0; l < x.rows(); ++l) {
        const Eigen::Vector3d a = x.row(l).transpose();
        const double rel = std::abs(a.dot(r)) / a.norm();
        if (rel <= 1e-10)
            through.emplace_back(a.dot(e1), a.dot(e2));
        else
            margin = std::min(margin, rel);
    }
    const double eps = std::isfinite(margin) ? 0.25 * margin : 1.0;
    for (const auto& q : sector_midpoints(through)) {
        Vector c = r + eps * (q.x() * e1 + q.y() * e2);
        out.push_back(std::move(c));
    }
}

}  // namespace detail

/// All masks of full-dimensional cells of the arrangement {x_j . v = 0}. Requires n <= 14, d <= 3.
inline PatternSet enumerate_patterns(const RowMatrix& x) {
    check_data_matrix(x);
    require(x.rows() <= 14 && x.cols() <= 3, "enumerate_patterns: exhaustive method requires n <= 14 and d <= 3");
    for (Eigen::Index j = 0; j < x.rows(); ++j)
        require(x.row(j).squaredNorm() > 0.0, "enumerate_patterns: all-zero row " + std::to_string(j));

    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    std::vector<Vector> candidates;

    if (d == 1) {
        candidates.push_back(Vector::Constant(1, 1.0));
        candidates.push_back(Vector::Constant(1, -1.0));
    } else if (d == 2) {
        std::vector<Eigen::Vector2d> normals;
        for (Eigen::Index j = 0; j < n; ++j) normals.emplace_back(x(j, 0), x(j, 1));
        for (const auto& q : detail::sector_midpoints(normals)) candidates.push_back(q);
    } else {
        bool any_vertex = false;
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index k = j + 1; k < n; ++k) {
                const Eigen::Vector3d a = x.row(j).transpose();
                const Eigen::Vector3d b = x.row(k).transpose();
                const Eigen::Vector3d c = a.cross(b);
                if (c.norm() <= 1e-12 * a.norm() * b.norm()) continue;
                any_vertex = true;
                detail::candidates_around_ray(x, c, candidates);
                detail::candidates_around_ray(x, -c, candidates);
            }
        }
        if (!any_vertex) {
            // Rank one: the arrangement is a single plane.
            const Vector a = x.row(0).transpose().normalized();
            candidates.push_back(a);
            candidates.push_back(-a);
        }
    }

    PatternSet out;
    out.n = n;
    out.d = d;
    out.source = {PatternSource::Kind::enumerated, 0, 0};
    std::set<Mask> seen;
    for (auto& c : candidates) {
        if (!detail::strictly_interior(x, c, 1e-13)) continue;
        Mask mask = activation_mask(x, c);
        if (seen.insert(mask).second) out.patterns.push_back({std::move(mask), std::move(c)});
    }
    return out;
}

inline std::string mask_to_bits(const Mask& mask) {
    std::string s(mask.size(), '0');
    for (std::size_t j = 0; j < mask.size(); ++j)
        if (mask[j]) s[j] = '1';
    return s;
}

inline Mask bits_to_mask(const std::string& bits) {
    Mask mask(bits.size());
    for (std::size_t j = 0; j < bits.size(); ++j) {
        require(bits[j] == '0' || bits[j] == '1', "mask bitstring must contain only '0'/'1'");
        mask[j] = bits[j] == '1' ? 1 : 0;
    }
    return mask;
}

inline nlohmann::json to_json(const PatternSet& set) {
    nlohmann::json j;
    j["n"] = set.n;
    j["d"] = set.d;
    if (set.source.kind == PatternSource::Kind::sampled) {
        j["source"] = "sampled";
        j["seed"] = set.source.seed;
        j["draws"] = set.source.draws;
    } else {
        j["source"] = "enumerated";
    }
    auto& masks = j["masks"] = nlohmann::json::array();
    auto& witnesses = j["witnesses"] = nlohmann::json::array();
    for (const auto& p : set.patterns) {
        masks.push_back(mask_to_bits(p.mask));
        witnesses.push_back(std::vector<double>(p.witness.data(), p.witness.data() + p.witness.size()));
    }
    return j;
}

inline PatternSet pattern_set_from_json(const nlohmann::json& j) {
    PatternSet set;
    try {
        set.n = j.at("n").get<Eigen::Index>();
        set.d = j.at("d").get<Eigen::Index>();
        const auto source = j.at("source").get<std::string>();
        if (source == "sampled") {
            set.source = {PatternSource::Kind::sampled, j.value("seed", std::uint64_t{0}),
                          j.value("draws", std::size_t{0})};
        } else {
            require(source == "enumerated", "unknown pattern source '" + source + "'");
        }
        const auto& masks = j.at("masks");
        const auto& witnesses = j.at("witnesses");
        require(masks.size() == witnesses.size(), "masks and witnesses differ in length");
        for (std::size_t i = 0; i < masks.size(); ++i) {
            ActivationPattern p;
            p.mask = bits_to_mask(masks[i].get<std::string>());
            const auto w = witnesses[i].get<std::vector<double>>();
            require(static_cast<Eigen::Index>(p.mask.size()) == set.n, "mask length differs from n");
            require(static_cast<Eigen::Index>(w.size()) == set.d, "witness length differs from d");
            p.witness = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
            set.patterns.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed pattern set: ") + e.what());
    }
    return set;
}

}  // namespace coala
