#pragma once

#include "coala/convex_program.hpp"

#include <vector>

namespace coala {

struct NeuronOrigin {
    Eigen::Index pattern = 0;
    int sign = 1;  // +1 for a v-group, -1 for a w-group
};

/// f(x) = sum_j (theta1_j . x)_+ theta2_j
struct TwoLayerNet {
    Matrix theta1;  // m x d
    Vector theta2;  // m
    std::vector<NeuronOrigin> origin;

    Eigen::Index width() const { return theta2.size(); }
    Eigen::Index input_dim() const { return theta1.cols(); }

    static TwoLayerNet empty(Eigen::Index d) { return {Matrix(0, d), Vector(0), {}}; }
};

/// Splits every retained group g into a neuron with theta1 = g / sqrt(|g|) and
/// theta2 = +-sqrt(|g|), the minimum weight-decay factorization of g.
inline TwoLayerNet recover_network(const Vector& u, Eigen::Index d, Eigen::Index num_patterns, double prune_tol = 1e-8) {
    require(u.allFinite(), "recover_network: non-finite group vector");
    require(d >= 1 && u.size() == 2 * d * num_patterns, "recover_network: group vector length must equal 2dP");
    const Eigen::Map<const Matrix> groups(u.data(), d, 2 * num_patterns);

    std::vector<Eigen::Index> kept;
    for (Eigen::Index g = 0; g < groups.cols(); ++g)
        if (groups.col(g).norm() > prune_tol) kept.push_back(g);

    TwoLayerNet net;
    net.theta1.resize(static_cast<Eigen::Index>(kept.size()), d);
    net.theta2.resize(static_cast<Eigen::Index>(kept.size()));
    for (std::size_t j = 0; j < kept.size(); ++j) {
        const Eigen::Index g = kept[j];
        const double root = std::sqrt(groups.col(g).norm());
        const int sign = g < num_patterns ? 1 : -1;
        net.theta1.row(static_cast<Eigen::Index>(j)) = groups.col(g).transpose() / root;
        net.theta2[static_cast<Eigen::Index>(j)] = sign * root;
        net.origin.push_back({g % num_patterns, sign});
    }
    return net;
}

inline TwoLayerNet recover_network(const Vector& u, const ConvexProgram& prog, double prune_tol = 1e-8) {
    return recover_network(u, prog.d(), prog.num_patterns(), prune_tol);
}

inline Vector hidden_activations(const TwoLayerNet& net, const Vector& x) {
    require(x.size() == net.input_dim(), "forward: input length must equal d");
    return (net.theta1 * x).cwiseMax(0.0);
}

inline double forward(const TwoLayerNet& net, const Vector& x) {
    return hidden_activations(net, x).dot(net.theta2);
}

/// sigma(label * f(x)), the classifier's probability of `label` in {+1, -1}.
inline double policy_prob(const TwoLayerNet& net, const Vector& x, int label) {
    require(label == 1 || label == -1, "policy_prob: label must be +1 or -1");
    return sigmoid(label * forward(net, x));
}

/// Rows of X where the retained neurons violate their own cone, i.e. where forward()
/// and apply_F() may disagree.
inline std::size_t count_cone_violations(const TwoLayerNet& net, const ConvexProgram& prog) {
    std::size_t violations = 0;
    for (Eigen::Index j = 0; j < net.width(); ++j) {
        const auto& o = net.origin[static_cast<std::size_t>(j)];
        const Vector resp = prog.data() * net.theta1.row(j).transpose();
        for (Eigen::Index r = 0; r < prog.n(); ++r) {
            const double signed_resp = prog.masks()(r, o.pattern) > 0.5 ? resp[r] : -resp[r];
            if (signed_resp < -kConeTolerance) ++violations;
        }
    }
    return violations;
}

}  // namespace coala
