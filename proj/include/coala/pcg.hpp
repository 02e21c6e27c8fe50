#pragma once

#include "coala/core.hpp"

#include <concepts>
#include <sstream>
#include <vector>

namespace coala {

template <typename Op>
concept LinearOperator = requires(const Op& op, const Vector& x) {
    { op(x) } -> std::convertible_to<Vector>;
};

/// Applies the inverse of a positive diagonal.
struct JacobiPreconditioner {
    Vector inv_diag;

    explicit JacobiPreconditioner(const Vector& diag) : inv_diag(diag.cwiseInverse()) {
        require(diag.size() == 0 || diag.minCoeff() > 0.0, "Jacobi preconditioner needs a positive diagonal");
    }
    Vector operator()(const Vector& r) const { return inv_diag.cwiseProduct(r); }
};

/// Exact inverse of a block-diagonal approximation with equal-size blocks; block g of
/// the vector uses factor `block_of[g]`.
struct BlockJacobiPreconditioner {
    std::vector<Eigen::LLT<Matrix>> factors;
    std::vector<std::size_t> block_of;
    Eigen::Index block_size = 1;

    Vector operator()(const Vector& r) const {
        Vector z(r.size());
        for (std::size_t g = 0; g < block_of.size(); ++g) {
            const auto off = static_cast<Eigen::Index>(g) * block_size;
            z.segment(off, block_size) = factors[block_of[g]].solve(r.segment(off, block_size));
        }
        return z;
    }
};

struct PcgResult {
    Vector x;
    int iterations = 0;
    double residual_norm = 0.0;
    bool converged = false;
};

/// Preconditioned conjugate gradient. `precond` applies an SPD approximation of op^{-1}.
///
/// Stops once ||op(x) - rhs|| <= tol * max(1, ||rhs||). Returns the last iterate with
/// `converged = false` when `max_iters` runs out. Throws SolverError on a direction of
/// non-positive curvature, since op is then not SPD.
template <LinearOperator Op, LinearOperator Precond>
PcgResult pcg_solve(const Op& op, const Vector& rhs, const Precond& precond, double tol, int max_iters,
                    const Vector* x0 = nullptr) {
    require(tol > 0.0, "pcg_solve: tol must be > 0");

    PcgResult out;
    out.x = x0 ? *x0 : Vector::Zero(rhs.size());
    Vector r = rhs - (x0 ? Vector(op(out.x)) : Vector::Zero(rhs.size()));
    const double target = tol * std::max(1.0, rhs.norm());
    out.residual_norm = r.norm();
    if (out.residual_norm <= target) {
        out.converged = true;
        return out;
    }

    Vector z = precond(r);
    Vector p = z;
    double rz = r.dot(z);
    for (int it = 1; it <= max_iters; ++it) {
        const Vector q = op(p);
        const double curvature = p.dot(q);
        if (!(curvature > 0.0)) {
            std::ostringstream msg;
            msg << "pcg_solve: non-positive curvature " << curvature << " at iteration " << it;
            throw SolverError(msg.str());
        }
        const double alpha = rz / curvature;
        out.x += alpha * p;
        r -= alpha * q;
        out.iterations = it;
        out.residual_norm = r.norm();
        if (!std::isfinite(out.residual_norm)) throw SolverError("pcg_solve: non-finite residual");
        if (out.residual_norm <= target) {
            out.converged = true;
            return out;
        }
        z = precond(r);
        const double rz_next = r.dot(z);
        p = z + (rz_next / rz) * p;
        rz = rz_next;
    }
    return out;
}

}  // namespace coala
