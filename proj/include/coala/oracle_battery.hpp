#pragma once

// The standard oracle battery: each check runs a fast path and an independent
// reference on a small seeded instance and reports the comparison.

#include "coala/admm.hpp"
#include "coala/oracle.hpp"
#include "coala/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace coala::oracle {

using GroupProx = std::function<Vector(const Vector&, double, Eigen::Index)>;

struct BatteryOptions {
    std::uint64_t seed = 0;
    /// Replaces group_soft_threshold everywhere the battery calls it.
    GroupProx prox = group_soft_threshold;
};

struct BatteryResult {
    std::string suite;
    std::vector<OracleReport> checks;

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const OracleReport& r) { return r.passed(); });
    }
};

inline nlohmann::json to_json(const BatteryResult& b) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& r : b.checks) checks.push_back(to_json(r));
    return {{"suite", b.suite}, {"passed", b.passed()}, {"checks", checks}};
}

/// Worst subgradient violation of x = prox(z) for tau * sum_g |x_g|: zero groups need
/// |z_g| <= tau, nonzero groups need z_g - x_g = tau x_g / |x_g|.
inline double prox_kkt_violation(const Vector& z, const Vector& x, double tau, Eigen::Index d) {
    double worst = 0.0;
    for (Eigen::Index g = 0; g < z.size() / d; ++g) {
        const Vector zg = z.segment(g * d, d);
        const Vector xg = x.segment(g * d, d);
        const double nx = xg.norm();
        const double v = nx == 0.0 ? std::max(0.0, zg.norm() - tau) : (zg - xg - tau * xg / nx).norm();
        worst = std::max(worst, v);
    }
    return worst;
}

/// Largest relative error between coala_grad and central differences with step h.
inline double fd_gradient_error(const Vector& theta, const Phase2Dataset& ds, double beta, double gamma,
                                double h = 1e-6) {
    const Vector g = coala_grad(theta, ds, beta, gamma);
    Vector fd(theta.size());
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        Vector plus = theta, minus = theta;
        plus[j] += h;
        minus[j] -= h;
        fd[j] = (coala_loss(plus, ds, beta, gamma) - coala_loss(minus, ds, beta, gamma)) / (2.0 * h);
    }
    return (fd - g).norm() / std::max(g.norm(), 1e-12);
}

inline nlohmann::json describe(const ConvexProgram& prog, std::uint64_t seed) {
    return {{"seed", seed}, {"n", prog.n()}, {"d", prog.d()}, {"P", prog.num_patterns()}, {"beta_reg", prog.beta_reg()}};
}

inline std::size_t region_count_bound(std::size_t n, std::size_t d) {
    std::size_t total = 0;
    std::size_t binom = 1;  // C(n-1, k)
    for (std::size_t k = 0; k < d && k <= n - 1; ++k) {
        total += binom;
        binom = binom * (n - 1 - k) / (k + 1);
    }
    return 2 * total;
}

inline BatteryResult run_standard_battery(const BatteryOptions& opt = {}) {
    BatteryResult out{"standard", {}};
    const std::uint64_t root = opt.seed;

    {  // ADMM against accelerated projected gradient on the unsplit program
        const auto seed = derive_seed(root, "admm_vs_pg");
        const auto inst = synthetic::enumerated_instance(6, 2, seed);
        const ConvexProgram prog(inst.x, inst.patterns, inst.y, 0.1);
        AdmmConfig cfg;
        cfg.max_iters = 200000;
        cfg.stop_tol = 1e-9;
        cfg.group_prox = opt.prox;
        const auto sol = solve(prog, cfg);
        const Vector ref = projected_gradient_reference(prog, 20000);
        out.checks.push_back({"admm_vs_pg", describe(prog, seed), eq3_objective(dense_F(prog), inst.y, 0.1, ref, 2),
                              sol.final_objective(), 1e-4, Relation::agree});
    }
    {  // one inexact u-step against a dense Cholesky solve
        const auto seed = derive_seed(root, "pcg_vs_dense");
        const auto inst = synthetic::sampled_instance(10, 3, 8, seed);
        const ConvexProgram prog(inst.x, inst.patterns, inst.y, 0.1);
        std::mt19937_64 rng(seed);
        const Vector v = synthetic::gaussian_matrix(prog.var_dim(), 1, rng);
        const Vector lambda = synthetic::gaussian_matrix(prog.var_dim(), 1, rng);
        const Vector s = synthetic::gaussian_matrix(prog.slack_dim(), 1, rng).cwiseAbs();
        const Vector nu = synthetic::gaussian_matrix(prog.slack_dim(), 1, rng);
        const double rho = 0.01;
        const auto op = [&](const Vector& x) -> Vector {
            return 2.0 * prog.apply_F_transpose(prog.apply_F(x)) + rho * x + rho * prog.apply_G_transpose(prog.apply_G(x));
        };
        const Vector rhs = 2.0 * prog.apply_F_transpose(inst.y) + rho * (v - lambda) + rho * prog.apply_G_transpose(s - nu);
        const auto pcg = pcg_solve(op, rhs, JacobiPreconditioner(prog.normal_diagonal(rho)), 1e-12, 5000);
        const Vector dense = dense_quadratic_solve(prog, v, s, lambda, nu, rho);
        out.checks.push_back({"pcg_vs_dense", describe(prog, seed), 0.0, (pcg.x - dense).norm() / dense.norm(), 1e-6,
                              Relation::agree});
    }
    {  // group prox against its optimality conditions
        const auto seed = derive_seed(root, "prox_optimality");
        std::mt19937_64 rng(seed);
        const Eigen::Index d = 4;
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const Vector z = synthetic::gaussian_matrix(6 * d, 1, rng);
            const double tau = 0.25 * (trial % 8);
            worst = std::max(worst, prox_kkt_violation(z, opt.prox(z, tau, d), tau, d));
        }
        out.checks.push_back({"prox_optimality", {{"seed", seed}, {"d", d}, {"trials", 20}}, 0.0, worst, 1e-10,
                              Relation::agree});
    }
    {  // accelerated fine-tuning against long plain gradient descent
        const auto seed = derive_seed(root, "agd_vs_gd");
        const auto ds = synthetic::random_phase2(50, 8, seed);
        const auto agd = agd_minimize(ds, 1.0, 0.5, Vector::Zero(8), 2000);
        const auto ref = gd_logistic_reference(ds, 1.0, 0.5);
        out.checks.push_back({"agd_vs_gd", {{"seed", seed}, {"N", 50}, {"m", 8}}, ref.loss, agd.trace.loss.back(), 1e-6,
                              Relation::agree});
    }
    {  // analytic gradient against central differences
        const auto seed = derive_seed(root, "grad_fd");
        std::mt19937_64 rng(seed);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const auto ds = synthetic::random_phase2(30, 5, rng());
            const Vector theta = synthetic::gaussian_matrix(5, 1, rng);
            worst = std::max(worst, fd_gradient_error(theta, ds, 1.0 + 0.1 * trial, 0.5));
        }
        out.checks.push_back({"grad_fd", {{"seed", seed}, {"trials", 20}}, 0.0, worst, 1e-5, Relation::agree});
    }
    {  // the convex optimum lower-bounds gradient descent on the original network
        const auto seed = derive_seed(root, "nonconvex_lower_bound");
        const auto inst = synthetic::enumerated_instance(6, 2, seed);
        const ConvexProgram prog(inst.x, inst.patterns, inst.y, 0.1);
        AdmmConfig cfg;
        cfg.max_iters = 200000;
        cfg.stop_tol = 1e-9;
        cfg.group_prox = opt.prox;
        const double convex = solve(prog, cfg).final_objective();
        NonconvexConfig nc;
        nc.neurons = 16;
        nc.restarts = 5;
        nc.step = 2e-3;
        nc.seed = seed;
        out.checks.push_back({"nonconvex_lower_bound", describe(prog, seed), convex,
                              nonconvex_multistart(inst.x, inst.y, 0.1, nc), 1e-3, Relation::at_least});
    }
    {  // enumerated cells against the general-position region count
        const auto seed = derive_seed(root, "pattern_count");
        std::mt19937_64 rng(seed);
        const RowMatrix x = synthetic::gaussian_matrix(8, 3, rng);
        out.checks.push_back({"pattern_count", {{"seed", seed}, {"n", 8}, {"d", 3}},
                              static_cast<double>(region_count_bound(8, 3)),
                              static_cast<double>(enumerate_patterns(x).size()), 0.0, Relation::agree});
    }
    return out;
}

}  // namespace coala::oracle
