#pragma once

// Phase I (convex training + recovery) and Phase II (second-layer fine-tuning)
// as single calls over in-memory data.

#include "coala/admm.hpp"
#include "coala/feature_store.hpp"
#include "coala/finetune.hpp"
#include "coala/patterns.hpp"
#include "coala/recovery.hpp"

#include <optional>
#include <string>

namespace coala {

enum class RecoverFrom { final_iterate, ergodic };

struct Phase1Options {
    std::size_t patterns = 32;
    bool enumerate = false;  // all cells instead of sampled directions (small d only)
    std::uint64_t seed = 0;
    double beta_reg = 0.01;
    bool standardize = true;
    RecoverFrom recover_from = RecoverFrom::final_iterate;
    double prune_tol = 1e-8;
    AdmmConfig admm = [] {
        AdmmConfig c;
        c.max_iters = 300;
        return c;
    }();
};

struct Phase1Result {
    PatternSet patterns;
    std::optional<Standardizer> standardizer;
    AdmmSolution solution;
    TwoLayerNet net;
    double accuracy = 0.0;
    std::size_t cone_violations = 0;
};

/// Fraction of rows with sign(f(x_i)) == sign(y_i), zero counted as positive.
inline double sign_accuracy(const TwoLayerNet& net, const RowMatrix& x, const Vector& y) {
    if (x.rows() == 0) return 0.0;
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const bool pred = forward(net, x.row(i).transpose()) >= 0.0;
        if (pred == (y[i] >= 0.0)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(x.rows());
}

inline Phase1Result run_phase1(const RowMatrix& raw, const Vector& y, const Phase1Options& opt,
                               const AdmmObserver& observer = {}) {
    require(raw.rows() == y.size(), "phase1: label count must equal feature rows");
    Phase1Result out;
    RowMatrix x = raw;
    if (opt.standardize) {
        out.standardizer = fit_standardizer(raw);
        x = out.standardizer->apply(raw);
    }
    out.patterns = opt.enumerate ? enumerate_patterns(x) : sample_patterns(x, opt.patterns, derive_seed(opt.seed, "patterns"));
    const ConvexProgram prog(x, out.patterns, y, opt.beta_reg);
    out.solution = solve(prog, opt.admm, observer);
    const Vector& u = opt.recover_from == RecoverFrom::ergodic ? out.solution.v_ergodic : out.solution.v_final;
    out.net = recover_network(u, prog, opt.prune_tol);
    out.accuracy = sign_accuracy(out.net, x, y);
    out.cone_violations = count_cone_violations(out.net, prog);
    return out;
}

enum class Optimizer { agd, adam };

struct Phase2Options {
    double beta_reward = 1.0;
    double gamma = 0.5;
    int iters = 1000;
    bool cold_start = false;  // theta2 = 0 instead of the Phase I weights
    Optimizer optimizer = Optimizer::agd;
    AdamConfig adam;
};

struct Phase2Result {
    CoalaHead head;
    AgdTrace trace;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

/// `x` is already in the network's input space.
inline Phase2Result run_phase2(const TwoLayerNet& net, const RowMatrix& x, const Vector& labels,
                               const Phase2Options& opt) {
    const Phase2Dataset ds = make_phase2_dataset(net, x, labels);
    const Vector theta0 = opt.cold_start ? Vector::Zero(net.width()) : net.theta2;
    FinetuneResult fit = opt.optimizer == Optimizer::agd
                             ? agd_minimize(ds, opt.beta_reward, opt.gamma, theta0, opt.iters)
                             : adam_minimize(ds, opt.beta_reward, opt.gamma, theta0, opt.iters, opt.adam);
    Phase2Result out;
    out.head.net = net;
    out.head.net.theta2 = fit.theta2;
    out.head.beta_reward = opt.beta_reward;
    out.head.gamma = opt.gamma;
    out.trace = std::move(fit.trace);
    out.initial_loss = out.trace.loss.front();
    out.final_loss = out.trace.loss.back();
    return out;
}

}  // namespace coala
