#pragma once

// Slack-form convex program of a two-layer ReLU network:
//
//   min  ||F u - y||^2 + beta * ||v||_{2,1} + I_{>=0}(s)   s.t.  u = v,  G u = s
//
// u stacks 2P groups of length d: groups [0, P) are the v_i, groups [P, 2P) the w_i.
// F u = sum_i D_i X (v_i - w_i); G applies (2 D_i - I) X to both v_i and w_i.
// Neither operator is ever materialized.

#include "coala/core.hpp"
#include "coala/patterns.hpp"

#include <vector>

namespace coala {

class ConvexProgram {
public:
    ConvexProgram(RowMatrix x, const PatternSet& patterns, Vector y, double beta_reg)
        : x_(std::move(x)), y_(std::move(y)), beta_reg_(beta_reg) {
        check_data_matrix(x_);
        require(patterns.size() >= 1, "convex program needs at least one pattern");
        require(y_.size() == x_.rows(), "target length must equal n");
        require(y_.allFinite(), "targets must be finite");
        require(beta_reg_ >= 0.0 && std::isfinite(beta_reg_), "beta_reg must be finite and >= 0");
        const auto p = static_cast<Eigen::Index>(patterns.size());
        masks_.resize(x_.rows(), p);
        for (Eigen::Index i = 0; i < p; ++i) {
            const auto& m = patterns.patterns[i].mask;
            require(static_cast<Eigen::Index>(m.size()) == x_.rows(), "pattern mask length must equal n");
            for (Eigen::Index j = 0; j < x_.rows(); ++j) masks_(j, i) = m[j] ? 1.0 : 0.0;
        }
        signs_ = 2.0 * masks_.array() - 1.0;
    }

    Eigen::Index n() const { return x_.rows(); }
    Eigen::Index d() const { return x_.cols(); }
    Eigen::Index num_patterns() const { return masks_.cols(); }
    Eigen::Index var_dim() const { return 2 * d() * num_patterns(); }
    Eigen::Index slack_dim() const { return 2 * n() * num_patterns(); }
    Eigen::Index num_groups() const { return 2 * num_patterns(); }

    const RowMatrix& data() const { return x_; }
    const Vector& targets() const { return y_; }
    double beta_reg() const { return beta_reg_; }
    /// n x P matrix of 0/1 activation indicators.
    const Matrix& masks() const { return masks_; }

    Vector apply_F(const Vector& u) const {
        check_u(u);
        const Eigen::Map<const Matrix> groups(u.data(), d(), num_groups());
        const Matrix diff = groups.leftCols(num_patterns()) - groups.rightCols(num_patterns());
        return (masks_.array() * (x_ * diff).array()).rowwise().sum();
    }

    Vector apply_F_transpose(const Vector& r) const {
        require(r.size() == n(), "apply_F_transpose: residual length must equal n");
        const Matrix block = x_.transpose() * (masks_.array().colwise() * r.array()).matrix();
        Vector out(var_dim());
        Eigen::Map<Matrix> groups(out.data(), d(), num_groups());
        groups.leftCols(num_patterns()) = block;
        groups.rightCols(num_patterns()) = -block;
        return out;
    }

    Vector apply_G(const Vector& u) const {
        check_u(u);
        const Eigen::Map<const Matrix> groups(u.data(), d(), num_groups());
        Vector out(slack_dim());
        Eigen::Map<Matrix> blocks(out.data(), n(), num_groups());
        const Matrix xu = x_ * groups;
        blocks.leftCols(num_patterns()) = signs_.array() * xu.leftCols(num_patterns()).array();
        blocks.rightCols(num_patterns()) = signs_.array() * xu.rightCols(num_patterns()).array();
        return out;
    }

    Vector apply_G_transpose(const Vector& s) const {
        require(s.size() == slack_dim(), "apply_G_transpose: slack length must equal 2nP");
        const Eigen::Map<const Matrix> blocks(s.data(), n(), num_groups());
        Matrix weighted(n(), num_groups());
        weighted.leftCols(num_patterns()) = signs_.array() * blocks.leftCols(num_patterns()).array();
        weighted.rightCols(num_patterns()) = signs_.array() * blocks.rightCols(num_patterns()).array();
        Vector out(var_dim());
        Eigen::Map<Matrix>(out.data(), d(), num_groups()) = x_.transpose() * weighted;
        return out;
    }

    /// Diagonal of 2 F^T F + rho I + rho G^T G.
    Vector normal_diagonal(double rho) const {
        const Matrix xsq = x_.array().square();
        const Matrix f_part = 2.0 * (xsq.transpose() * masks_);  // d x P
        const Vector g_part = xsq.colwise().sum().transpose();  // rows of G^T G share sum_j x_jk^2
        Vector out(var_dim());
        Eigen::Map<Matrix> groups(out.data(), d(), num_groups());
        groups.leftCols(num_patterns()) = f_part;
        groups.rightCols(num_patterns()) = f_part;
        groups.colwise() += rho * g_part;
        groups.array() += rho;
        return out;
    }

    /// Per-pattern d x d diagonal blocks 2 X^T D_i X + rho I + rho X^T X of the normal matrix.
    /// The v_i and w_i groups share block i.
    std::vector<Matrix> normal_blocks(double rho) const {
        const Matrix gram = x_.transpose() * x_;
        std::vector<Matrix> blocks;
        blocks.reserve(static_cast<std::size_t>(num_patterns()));
        for (Eigen::Index i = 0; i < num_patterns(); ++i) {
            Matrix b = 2.0 * (x_.transpose() * (x_.array().colwise() * masks_.col(i).array()).matrix());
            b += rho * gram;
            b.diagonal().array() += rho;
            blocks.push_back(std::move(b));
        }
        return blocks;
    }

    /// Sum of Euclidean norms over the 2P groups.
    double group_norm(const Vector& v) const {
        check_u(v);
        return Eigen::Map<const Matrix>(v.data(), d(), num_groups()).colwise().norm().sum();
    }

    double objective(const Vector& u, const Vector& v, const Vector& s) const {
        require(s.size() == slack_dim(), "objective: slack length must equal 2nP");
        if (s.size() > 0 && s.minCoeff() < -kConeTolerance) return kInfinity;
        return (apply_F(u) - y_).squaredNorm() + beta_reg_ * group_norm(v);
    }

private:
    void check_u(const Vector& u) const {
        require(u.size() == var_dim(), "group vector length must equal 2dP");
    }

    RowMatrix x_;
    Vector y_;
    double beta_reg_;
    Matrix masks_;
    Matrix signs_;
};

/// Block soft-thresholding: the proximal map of tau * ||.||_{2,1} over groups of length `group_size`.
inline Vector group_soft_threshold(const Vector& z, double tau, Eigen::Index group_size) {
    require(tau >= 0.0, "group_soft_threshold: tau must be >= 0");
    require(group_size >= 1 && z.size() % group_size == 0, "group vector length must be divisible by d");
    Vector out = z;
    Eigen::Map<Matrix> groups(out.data(), group_size, z.size() / group_size);
    for (Eigen::Index g = 0; g < groups.cols(); ++g) {
        const double norm = groups.col(g).norm();
        if (norm <= tau)
            groups.col(g).setZero();
        else
            groups.col(g) *= 1.0 - tau / norm;
    }
    return out;
}

}  // namespace coala
