#pragma once

// Seeded synthetic instances: Gaussian data matrices and datasets labelled by a
// planted two-layer ReLU network.

#include "coala/finetune.hpp"
#include "coala/patterns.hpp"

#include <random>

namespace coala::synthetic {

inline RowMatrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    RowMatrix x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    return x;
}

inline Vector random_signs(Eigen::Index n, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(0.5);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = coin(rng) ? 1.0 : -1.0;
    return y;
}

struct PlantedData {
    RowMatrix x;
    Vector labels;  // sign of the planted network, 0 mapped to +1
    TwoLayerNet planted;
};

/// Planted network with `hidden` Gaussian neurons and alternating-sign output weights.
inline PlantedData planted(Eigen::Index n, Eigen::Index d, Eigen::Index hidden, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    PlantedData out;
    out.planted.theta1 = gaussian_matrix(hidden, d, rng);
    out.planted.theta2.resize(hidden);
    for (Eigen::Index j = 0; j < hidden; ++j) out.planted.theta2[j] = j % 2 == 0 ? 1.0 : -1.0;
    out.x = gaussian_matrix(n, d, rng);
    out.labels.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
        out.labels[i] = forward(out.planted, out.x.row(i).transpose()) >= 0.0 ? 1.0 : -1.0;
    return out;
}

struct RegressionInstance {
    RowMatrix x;
    Vector y;
    PatternSet patterns;
};

/// Gaussian X, random +-1 targets, every full-dimensional activation pattern.
inline RegressionInstance enumerated_instance(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    RegressionInstance out;
    out.x = gaussian_matrix(n, d, rng);
    out.y = random_signs(n, rng);
    out.patterns = enumerate_patterns(out.x);
    return out;
}

/// Gaussian X, random +-1 targets, patterns from `draws` Gaussian directions.
inline RegressionInstance sampled_instance(Eigen::Index n, Eigen::Index d, std::size_t draws, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    RegressionInstance out;
    out.x = gaussian_matrix(n, d, rng);
    out.y = random_signs(n, rng);
    out.patterns = sample_patterns(out.x, draws, seed);
    return out;
}

/// Nonnegative (half-normal) second-layer features with random +-1 labels.
inline Phase2Dataset random_phase2(Eigen::Index rows, Eigen::Index width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Phase2Dataset ds;
    ds.features = gaussian_matrix(rows, width, rng).cwiseAbs();
    ds.labels = random_signs(rows, rng);
    return ds;
}

}  // namespace coala::synthetic
