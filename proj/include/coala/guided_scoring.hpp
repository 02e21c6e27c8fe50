#pragma once

// Guided reweighting of a candidate pool: the fixed head scores each candidate's
// extended-prefix features, scores are min-max normalized, and the base
// probabilities are tilted as p'_c ~ p_c * exp(lambda * score_c) every N steps.

#include "coala/finetune.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace coala {

struct GuidanceConfig {
    double lambda = 1.0;
    int every_n = 5;
    double top_p = 0.9;
    int top_k = 50;
    int num_candidates = 5;

    void validate() const {
        require(lambda >= 0.0 && std::isfinite(lambda), "guidance: lambda must be finite and >= 0");
        require(every_n >= 1, "guidance: every_n must be >= 1");
        require(top_p > 0.0 && top_p <= 1.0, "guidance: top_p must lie in (0, 1]");
        require(top_k >= 1, "guidance: top_k must be >= 1");
        require(num_candidates >= 1, "guidance: num_candidates must be >= 1");
    }
};

struct CandidateBatch {
    std::vector<std::size_t> indices;  // positions in the full distribution
    Vector base_probs;
    RowMatrix features;  // one row per candidate
    std::size_t step_index = 0;
};

/// Sorts descending (ties by index), keeps the shortest prefix with mass >= top_p,
/// then at most top_k and at most num_candidates entries.
inline CandidateBatch nucleus_filter(const Vector& probs, double top_p, int top_k, int num_candidates) {
    require(probs.size() >= 1, "nucleus_filter: empty distribution");
    require(probs.allFinite() && probs.minCoeff() >= 0.0, "nucleus_filter: probabilities must be finite and >= 0");
    require(top_p > 0.0 && top_p <= 1.0 && top_k >= 1 && num_candidates >= 1, "nucleus_filter: invalid limits");

    std::vector<std::size_t> order(static_cast<std::size_t>(probs.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return probs[static_cast<Eigen::Index>(a)] > probs[static_cast<Eigen::Index>(b)];
    });

    std::size_t keep = 0;
    double mass = 0.0;
    while (keep < order.size()) {
        mass += probs[static_cast<Eigen::Index>(order[keep++])];
        if (mass >= top_p - 1e-12) break;
    }
    keep = std::min({keep, static_cast<std::size_t>(top_k), static_cast<std::size_t>(num_candidates)});

    CandidateBatch batch;
    batch.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
    batch.base_probs.resize(static_cast<Eigen::Index>(keep));
    for (std::size_t i = 0; i < keep; ++i)
        batch.base_probs[static_cast<Eigen::Index>(i)] = probs[static_cast<Eigen::Index>(batch.indices[i])];
    return batch;
}

inline Vector score_candidates(const CoalaHead& head, const RowMatrix& features) {
    require(features.cols() == head.net.input_dim(), "score_candidates: feature dimension must equal head input dim");
    if (head.net.width() == 0) return Vector::Zero(features.rows());
    return (features * head.net.theta1.transpose()).cwiseMax(0.0) * head.net.theta2;
}

/// (s - min) / (max - min); a constant input maps to 0.5 everywhere.
inline Vector minmax_normalize(const Vector& scores) {
    require(scores.size() >= 1, "minmax_normalize: need at least one score");
    const double lo = scores.minCoeff();
    const double hi = scores.maxCoeff();
    if (!(hi > lo)) return Vector::Constant(scores.size(), 0.5);
    return (scores.array() - lo) / (hi - lo);
}

inline Vector reweight(const CandidateBatch& batch, const Vector& normalized, const GuidanceConfig& cfg) {
    cfg.validate();
    const Vector& base = batch.base_probs;
    require(normalized.size() == base.size(), "reweight: score count must equal candidate count");
    require(base.size() >= 1 && base.minCoeff() >= 0.0, "reweight: base probabilities must be >= 0");
    const double total = base.sum();
    require(total > 0.0, "reweight: base probabilities are all zero");
    if (batch.step_index % static_cast<std::size_t>(cfg.every_n) != 0) return base / total;

    // Shift by the max exponent so large lambda cannot overflow.
    const double top = (cfg.lambda * normalized).maxCoeff();
    Vector w(base.size());
    for (Eigen::Index c = 0; c < base.size(); ++c) w[c] = base[c] * std::exp(cfg.lambda * normalized[c] - top);
    const double z = w.sum();
    require(z > 0.0, "reweight: tilted weights underflowed");
    return w / z;
}

struct GuidedChoice {
    Vector scores;
    Vector normalized;
    Vector distribution;
    std::size_t selected = 0;  // position within the batch
};

inline GuidedChoice guide(const CoalaHead& head, const CandidateBatch& batch, const GuidanceConfig& cfg) {
    GuidedChoice out;
    out.scores = score_candidates(head, batch.features);
    out.normalized = minmax_normalize(out.scores);
    out.distribution = reweight(batch, out.normalized, cfg);
    Eigen::Index best = 0;
    out.distribution.maxCoeff(&best);
    out.selected = static_cast<std::size_t>(best);
    return out;
}

}  // namespace coala
