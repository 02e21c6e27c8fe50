#pragma once

// ADMM for the slack-form convex program, with the u-subproblem solved inexactly
// by Jacobi-preconditioned CG. The quadratic term is ||F u - y||^2 without a 1/2,
// so the u-step solves
//
//   (2 F^T F + rho I + rho G^T G) u = 2 F^T y + rho (v - lambda) + rho G^T (s - nu).

#include "coala/convex_program.hpp"
#include "coala/pcg.hpp"

#include <functional>
#include <optional>
#include <ostream>
#include <vector>

namespace coala {

enum class Preconditioner { jacobi, block_jacobi };

struct AdmmConfig {
    double rho = 0.01;
    Preconditioner preconditioner = Preconditioner::jacobi;
    /// Dual step is gamma_alpha / rho; unset means gamma_alpha = rho.
    std::optional<double> gamma_alpha;
    int max_iters = 1000;
    /// PCG tolerance at iteration k is pcg_delta0 / k^pcg_decay (summable for decay > 1).
    double pcg_delta0 = 1e-3;
    double pcg_decay = 1.5;
    int pcg_max_iters = 500;
    double stop_tol = 1e-6;
    /// Group prox used in the v-step; empty means group_soft_threshold.
    std::function<Vector(const Vector&, double, Eigen::Index)> group_prox;

    double dual_step() const { return gamma_alpha.value_or(rho) / rho; }
    double pcg_tolerance(int k) const { return pcg_delta0 / std::pow(static_cast<double>(k), pcg_decay); }

    void validate() const {
        require(rho > 0.0 && std::isfinite(rho), "admm: rho must be > 0");
        require(!gamma_alpha || (*gamma_alpha > 0.0 && std::isfinite(*gamma_alpha)), "admm: gamma_alpha must be > 0");
        require(max_iters >= 0, "admm: max_iters must be >= 0");
        require(pcg_delta0 > 0.0, "admm: pcg_delta0 must be > 0");
        require(pcg_decay > 1.0, "admm: pcg_decay must exceed 1 so the tolerances are summable");
        require(pcg_max_iters >= 1, "admm: pcg_max_iters must be >= 1");
        require(stop_tol >= 0.0, "admm: stop_tol must be >= 0");
    }
};

struct AdmmState {
    Vector u, v, s, lambda, nu;
    Vector gu;  // G u at the current iterate
    int k = 0;
    // Running means over iterations 1..k.
    Vector u_mean, v_mean, s_mean, gu_mean;

    static AdmmState zeros(const ConvexProgram& prog) {
        AdmmState st;
        st.u = st.v = st.lambda = st.u_mean = st.v_mean = Vector::Zero(prog.var_dim());
        st.s = st.nu = st.gu = st.s_mean = st.gu_mean = Vector::Zero(prog.slack_dim());
        return st;
    }
};

struct Residuals {
    double r_uv = 0.0;
    double r_gs = 0.0;
    double ergodic_r_uv = 0.0;
    double ergodic_r_gs = 0.0;

    double combined() const { return std::hypot(r_uv, r_gs); }
    /// ||[I; G] u_bar - [v_bar; s_bar]||.
    double ergodic_combined() const { return std::hypot(ergodic_r_uv, ergodic_r_gs); }
};

inline Residuals residuals(const AdmmState& st) {
    Residuals r;
    r.r_uv = (st.u - st.v).norm();
    r.r_gs = (st.gu - st.s).norm();
    r.ergodic_r_uv = (st.u_mean - st.v_mean).norm();
    r.ergodic_r_gs = (st.gu_mean - st.s_mean).norm();
    return r;
}

inline Residuals residuals(const ConvexProgram& prog, const AdmmState& st) {
    Residuals r;
    r.r_uv = (st.u - st.v).norm();
    r.r_gs = (prog.apply_G(st.u) - st.s).norm();
    r.ergodic_r_uv = (st.u_mean - st.v_mean).norm();
    r.ergodic_r_gs = (prog.apply_G(st.u_mean) - st.s_mean).norm();
    return r;
}

struct AdmmTraceRow {
    int iter = 0;
    double objective = 0.0;
    double r_uv = 0.0;
    double r_gs = 0.0;
    int pcg_iters = 0;
    double ergodic_residual = 0.0;
    double r_dual = 0.0;
};

struct AdmmSolution {
    Vector u_final, v_final, s_final;
    Vector u_ergodic, v_ergodic, s_ergodic;
    std::vector<AdmmTraceRow> trace;
    int iterations = 0;
    bool converged = false;

    double final_objective() const { return trace.empty() ? 0.0 : trace.back().objective; }
};

/// Objective at the feasibility-corrected ergodic point (v_bar, v_bar, max(G v_bar, 0)),
/// with the cone indicator evaluated on G v_bar itself.
inline double certificate_objective(const ConvexProgram& prog, const Vector& v_bar) {
    const Vector gv = prog.apply_G(v_bar);
    return prog.objective(v_bar, v_bar, gv);
}

inline void write_trace_csv(std::ostream& os, const std::vector<AdmmTraceRow>& trace) {
    os << "iter,objective,r_uv,r_gs,pcg_iters\n";
    os.precision(17);
    for (const auto& row : trace)
        os << row.iter << ',' << row.objective << ',' << row.r_uv << ',' << row.r_gs << ',' << row.pcg_iters << '\n';
}

inline std::function<Vector(const Vector&)> make_preconditioner(const ConvexProgram& prog, const AdmmConfig& cfg) {
    if (cfg.preconditioner == Preconditioner::jacobi) return JacobiPreconditioner(prog.normal_diagonal(cfg.rho));
    BlockJacobiPreconditioner bj;
    bj.block_size = prog.d();
    for (auto& b : prog.normal_blocks(cfg.rho)) bj.factors.emplace_back(b);
    for (Eigen::Index g = 0; g < prog.num_groups(); ++g)
        bj.block_of.push_back(static_cast<std::size_t>(g % prog.num_patterns()));
    return bj;
}

using AdmmObserver = std::function<void(const AdmmState&)>;

inline AdmmSolution solve(const ConvexProgram& prog, const AdmmConfig& cfg, const AdmmObserver& observer = {}) {
    cfg.validate();
    const double rho = cfg.rho;
    const double step = cfg.dual_step();
    const double tau = prog.beta_reg() / rho;

    const auto normal_op = [&](const Vector& x) -> Vector {
        return 2.0 * prog.apply_F_transpose(prog.apply_F(x)) + rho * x + rho * prog.apply_G_transpose(prog.apply_G(x));
    };
    const std::function<Vector(const Vector&)> precond = make_preconditioner(prog, cfg);
    const Vector fty2 = 2.0 * prog.apply_F_transpose(prog.targets());

    AdmmState st = AdmmState::zeros(prog);
    AdmmSolution sol;
    sol.trace.reserve(static_cast<std::size_t>(cfg.max_iters));

    for (int k = 1; k <= cfg.max_iters; ++k) {
        const Vector v_prev = st.v;
        const Vector s_prev = st.s;
        const Vector rhs = fty2 + rho * (st.v - st.lambda) + rho * prog.apply_G_transpose(st.s - st.nu);
        PcgResult pcg = pcg_solve(normal_op, rhs, precond, cfg.pcg_tolerance(k), cfg.pcg_max_iters, &st.u);
        st.u = std::move(pcg.x);
        st.gu = prog.apply_G(st.u);

        st.v = cfg.group_prox ? cfg.group_prox(st.u + st.lambda, tau, prog.d())
                              : group_soft_threshold(st.u + st.lambda, tau, prog.d());
        st.s = (st.gu + st.nu).cwiseMax(0.0);

        st.lambda += step * (st.u - st.v);
        st.nu += step * (st.gu - st.s);

        st.k = k;
        const double w = 1.0 / k;
        st.u_mean += w * (st.u - st.u_mean);
        st.v_mean += w * (st.v - st.v_mean);
        st.s_mean += w * (st.s - st.s_mean);
        st.gu_mean += w * (st.gu - st.gu_mean);

        if (!st.u.allFinite() || !st.lambda.allFinite() || !st.nu.allFinite())
            throw SolverError("admm: non-finite iterate at iteration " + std::to_string(k));

        const Residuals res = residuals(st);
        const double r_dual = rho * std::hypot((st.v - v_prev).norm(), (st.s - s_prev).norm());
        sol.trace.push_back({k, prog.objective(st.u, st.v, st.s), res.r_uv, res.r_gs, pcg.iterations,
                             res.ergodic_combined(), r_dual});
        if (observer) observer(st);
        // The u-step residual guards against a warm start that already meets a loose PCG tolerance.
        if (std::max({res.r_uv, res.r_gs, r_dual, pcg.residual_norm}) <= cfg.stop_tol) {
            sol.converged = true;
            break;
        }
    }

    sol.iterations = st.k;
    sol.u_final = st.u;
    sol.v_final = st.v;
    sol.s_final = st.s;
    sol.u_ergodic = st.u_mean;
    sol.v_ergodic = st.v_mean;
    sol.s_ergodic = st.s_mean;
    return sol;
}

}  // namespace coala
