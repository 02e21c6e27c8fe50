#pragma once

// Slow reference solvers. Everything here works on explicitly materialized
// matrices and shares no solver code with the fast paths it is used to check.

#include "coala/convex_program.hpp"
#include "coala/finetune.hpp"

#include <nlohmann/json.hpp>

#include <random>
#include <string>

namespace coala::oracle {

/// How a check compares the fast-path value with the oracle value.
enum class Relation {
    agree,     // relative gap <= tolerance
    at_least,  // target >= oracle - tolerance
};

inline const char* relation_name(Relation r) { return r == Relation::agree ? "agree" : "at_least"; }

struct OracleReport {
    std::string name;
    nlohmann::json instance;  // seed, n, d, P, ...
    double oracle_value = 0.0;
    double target_value = 0.0;
    double tolerance = 0.0;
    Relation relation = Relation::agree;

    double gap() const { return relative_gap(target_value, oracle_value); }
    bool passed() const {
        if (!std::isfinite(target_value) || !std::isfinite(oracle_value)) return false;
        if (relation == Relation::at_least) return target_value >= oracle_value - tolerance;
        return gap() <= tolerance;
    }
};

inline nlohmann::json to_json(const OracleReport& r) {
    return {{"name", r.name},
            {"instance", r.instance},
            {"relation", relation_name(r.relation)},
            {"oracle_value", r.oracle_value},
            {"target_value", r.target_value},
            {"relative_gap", r.gap()},
            {"tolerance", r.tolerance},
            {"passed", r.passed()}};
}

/// Dense n x 2dP matrix of F, column blocks ordered like the group vector.
inline Matrix dense_F(const RowMatrix& x, const Matrix& masks) {
    const Eigen::Index n = x.rows(), d = x.cols(), p = masks.cols();
    Matrix f = Matrix::Zero(n, 2 * d * p);
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index r = 0; r < n; ++r)
            for (Eigen::Index k = 0; k < d; ++k) {
                f(r, i * d + k) = masks(r, i) * x(r, k);
                f(r, (p + i) * d + k) = -masks(r, i) * x(r, k);
            }
    return f;
}

/// Dense 2nP x 2dP block-diagonal matrix of G.
inline Matrix dense_G(const RowMatrix& x, const Matrix& masks) {
    const Eigen::Index n = x.rows(), d = x.cols(), p = masks.cols();
    Matrix g = Matrix::Zero(2 * n * p, 2 * d * p);
    for (Eigen::Index b = 0; b < 2 * p; ++b) {
        const Eigen::Index i = b % p;
        for (Eigen::Index r = 0; r < n; ++r) {
            const double sign = masks(r, i) > 0.5 ? 1.0 : -1.0;
            for (Eigen::Index k = 0; k < d; ++k) g(b * n + r, b * d + k) = sign * x(r, k);
        }
    }
    return g;
}

inline Matrix dense_F(const ConvexProgram& prog) { return dense_F(prog.data(), prog.masks()); }
inline Matrix dense_G(const ConvexProgram& prog) { return dense_G(prog.data(), prog.masks()); }

/// Projection of x onto the halfspace {v : a . v >= 0}.
inline Vector project_halfspace(const Vector& x, const Vector& a) {
    const double t = a.dot(x);
    if (t >= 0.0) return x;
    return x - (t / a.squaredNorm()) * a;
}

/// Dykstra's alternating projection onto the polyhedral cone {v : A v >= 0}.
inline Vector project_cone(const Vector& x0, const Matrix& a, int sweeps = 200, double tol = 1e-10) {
    if (a.rows() == 0 || (a * x0).minCoeff() >= 0.0) return x0;
    Vector x = x0;
    Matrix increments = Matrix::Zero(a.rows(), x.size());
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        const Vector before = x;
        for (Eigen::Index j = 0; j < a.rows(); ++j) {
            const Vector shifted = x + increments.row(j).transpose();
            const Vector y = project_halfspace(shifted, a.row(j).transpose());
            increments.row(j) = (shifted - y).transpose();
            x = y;
        }
        if ((x - before).norm() <= tol * std::max(1.0, x.norm())) break;
    }
    return x;
}

inline double eq3_objective(const Matrix& f, const Vector& y, double beta, const Vector& u, Eigen::Index d) {
    const Eigen::Map<const Matrix> groups(u.data(), d, u.size() / d);
    return (f * u - y).squaredNorm() + beta * groups.colwise().norm().sum();
}

/// Accelerated proximal gradient on the unsplit program, where the prox of
/// beta*|g| + I_K(g) is a projection onto K followed by block shrinkage.
/// Returns the best feasible iterate by objective.
inline Vector projected_gradient_reference(const ConvexProgram& prog, int iters, double step = 0.0) {
    require(prog.var_dim() <= 200, "projected_gradient_reference: instance too large (2dP > 200)");
    const Matrix f = dense_F(prog);
    const Vector& y = prog.targets();
    const Eigen::Index d = prog.d(), p = prog.num_patterns();
    std::vector<Matrix> cones(static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < p; ++i) {
        Matrix a(prog.n(), d);
        for (Eigen::Index r = 0; r < prog.n(); ++r)
            a.row(r) = (prog.masks()(r, i) > 0.5 ? 1.0 : -1.0) * prog.data().row(r);
        cones[static_cast<std::size_t>(i)] = std::move(a);
    }
    if (step <= 0.0) {
        const double sigma = Eigen::JacobiSVD<Matrix>(f).singularValues()(0);
        step = 1.0 / std::max(2.0 * sigma * sigma, 1e-12);
    }

    const auto prox = [&](const Vector& z, double tau) {
        Vector out(z.size());
        for (Eigen::Index g = 0; g < 2 * p; ++g) {
            const Vector proj = project_cone(z.segment(g * d, d), cones[static_cast<std::size_t>(g % p)]);
            const double norm = proj.norm();
            out.segment(g * d, d) = norm <= tau ? Vector::Zero(d) : Vector((1.0 - tau / norm) * proj);
        }
        return out;
    };

    for (int attempt = 0; attempt <= 10; ++attempt) {
        Vector x = Vector::Zero(prog.var_dim());
        Vector x_prev = x, z = x;
        Vector best = x;
        double best_obj = eq3_objective(f, y, prog.beta_reg(), x, d);
        const double start_obj = best_obj;
        double t = 1.0;
        bool diverged = false;
        for (int it = 0; it < iters; ++it) {
            const Vector grad = 2.0 * f.transpose() * (f * z - y);
            x = prox(z - step * grad, step * prog.beta_reg());
            const double obj = eq3_objective(f, y, prog.beta_reg(), x, d);
            if (!std::isfinite(obj) || obj > 1e6 * std::max(1.0, start_obj)) {
                diverged = true;
                break;
            }
            if (obj < best_obj) {
                best_obj = obj;
                best = x;
            }
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            z = x + ((t - 1.0) / t_next) * (x - x_prev);
            x_prev = x;
            t = t_next;
        }
        if (!diverged) return best;
        step *= 0.5;
    }
    throw SolverError("projected_gradient_reference: diverged after 10 step halvings");
}

inline Matrix dense_normal_matrix(const ConvexProgram& prog, double rho) {
    require(prog.var_dim() <= 500, "dense_normal_matrix: instance too large (2dP > 500)");
    const Matrix f = dense_F(prog);
    const Matrix g = dense_G(prog);
    return 2.0 * f.transpose() * f + rho * Matrix::Identity(prog.var_dim(), prog.var_dim()) + rho * g.transpose() * g;
}

/// Exact u-step: argmin ||F u - y||^2 + rho/2 ||u - v + lambda||^2 + rho/2 ||G u - s + nu||^2.
inline Vector dense_quadratic_solve(const ConvexProgram& prog, const Vector& v, const Vector& s, const Vector& lambda,
                                   const Vector& nu, double rho) {
    require(rho > 0.0, "dense_quadratic_solve: rho must be > 0");
    const Matrix f = dense_F(prog);
    const Matrix g = dense_G(prog);
    const Matrix a = dense_normal_matrix(prog, rho);
    const Vector rhs = 2.0 * f.transpose() * prog.targets() + rho * (v - lambda) + rho * g.transpose() * (s - nu);
    const Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) throw SolverError("dense_quadratic_solve: normal matrix not positive definite");
    return llt.solve(rhs);
}

struct LogisticReference {
    Vector theta;
    double loss = 0.0;
    double grad_norm = 0.0;
};

/// Plain gradient descent from 0 with step 1/L, L from a dense SVD.
inline LogisticReference gd_logistic_reference(const Phase2Dataset& ds, double beta_reward, double gamma,
                                               long iters = 1'000'000) {
    require(ds.size() > 0, "gd_logistic_reference: empty dataset");
    const double sigma = ds.width() == 0 ? 0.0 : Eigen::JacobiSVD<Matrix>(ds.features).singularValues()(0);
    const double lipschitz = beta_reward * beta_reward * sigma * sigma / (4.0 * static_cast<double>(ds.size()));
    const double step = lipschitz > 0.0 ? 1.0 / lipschitz : 0.0;
    const Matrix& h = ds.features;
    const Vector yb = beta_reward * ds.labels;
    const double inv_n = 1.0 / static_cast<double>(ds.size());

    // Direct formulas, independent of coala_loss / coala_grad.
    auto gradient = [&](const Vector& theta) {
        const Vector m = h * theta;
        Vector w(ds.size());
        for (Eigen::Index i = 0; i < ds.size(); ++i) w[i] = -yb[i] / (1.0 + std::exp(yb[i] * m[i] - gamma));
        return Vector(h.transpose() * w * inv_n);
    };
    auto loss = [&](const Vector& theta) {
        const Vector m = h * theta;
        double total = 0.0;
        for (Eigen::Index i = 0; i < ds.size(); ++i) {
            const double z = -yb[i] * m[i] + gamma;
            total += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
        }
        return total * inv_n;
    };

    LogisticReference out;
    out.theta = Vector::Zero(ds.width());
    for (long it = 0; it < iters && step > 0.0; ++it) out.theta -= step * gradient(out.theta);
    out.loss = loss(out.theta);
    out.grad_norm = gradient(out.theta).norm();
    return out;
}

struct NonconvexConfig {
    int neurons = 8;
    int restarts = 10;
    int iters = 20000;
    double step = 1e-3;
    double init_scale = 0.5;
    std::uint64_t seed = 0;
};

/// ||sum_j (X theta1_j)_+ theta2_j - y||^2 + beta/2 * sum_j (|theta1_j|^2 + theta2_j^2).
inline double nonconvex_objective(const RowMatrix& x, const Vector& y, double beta, const Matrix& theta1,
                                  const Vector& theta2) {
    const Vector pred = (x * theta1.transpose()).cwiseMax(0.0) * theta2;
    return (pred - y).squaredNorm() + 0.5 * beta * (theta1.squaredNorm() + theta2.squaredNorm());
}

/// Best objective of plain gradient descent over random restarts (ReLU'(0) taken as 0).
inline double nonconvex_multistart(const RowMatrix& x, const Vector& y, double beta, const NonconvexConfig& cfg) {
    require(y.size() == x.rows(), "nonconvex_multistart: target length must equal n");
    if (cfg.neurons == 0) return y.squaredNorm();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, cfg.init_scale);
    double best = kInfinity;
    for (int restart = 0; restart < cfg.restarts; ++restart) {
        Matrix theta1(cfg.neurons, x.cols());
        Vector theta2(cfg.neurons);
        for (Eigen::Index i = 0; i < theta1.size(); ++i) theta1.data()[i] = normal(rng);
        for (Eigen::Index i = 0; i < theta2.size(); ++i) theta2[i] = normal(rng);
        double step = cfg.step;
        for (int it = 0; it < cfg.iters; ++it) {
            const Matrix pre = x * theta1.transpose();  // n x m
            const Matrix act = pre.cwiseMax(0.0);
            const Vector resid = act * theta2 - y;
            const double obj = resid.squaredNorm() + 0.5 * beta * (theta1.squaredNorm() + theta2.squaredNorm());
            if (!std::isfinite(obj)) break;
            best = std::min(best, obj);
            const Vector g2 = 2.0 * act.transpose() * resid + beta * theta2;
            const Matrix gate = (pre.array() > 0.0).cast<double>();
            const Matrix back = gate.array().colwise() * resid.array();  // n x m
            Matrix g1 = 2.0 * (back.transpose() * x);
            g1.array().colwise() *= theta2.array();
            g1 += beta * theta1;
            theta1 -= step * g1;
            theta2 -= step * g2;
        }
        best = std::min(best, nonconvex_objective(x, y, beta, theta1, theta2));
    }
    return best;
}

}  // namespace coala::oracle
