#pragma once

// Second-layer fine-tuning on the convex preference loss
//
//   L(theta2) = mean_i log(1 + exp(-beta * y_i * <theta2, h_i> + gamma)),
//
// where h_i = (Theta1 x_i)_+ are the frozen hidden activations and y_i = +1 for
// chosen responses, -1 for rejected ones.

#include "coala/recovery.hpp"

#include <ostream>
#include <vector>

namespace coala {

struct CoalaHead {
    TwoLayerNet net;
    double beta_reward = 1.0;
    double gamma = 0.5;
};

struct Phase2Dataset {
    Matrix features;  // N x m, nonnegative
    Vector labels;    // +-1

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index width() const { return features.cols(); }
};

inline Matrix build_phase2_features(const TwoLayerNet& net, const RowMatrix& raw) {
    require(raw.cols() == net.input_dim(), "build_phase2_features: feature dimension must equal network input dim");
    return (raw * net.theta1.transpose()).cwiseMax(0.0);
}

inline Phase2Dataset make_phase2_dataset(const TwoLayerNet& net, const RowMatrix& raw, const Vector& labels) {
    require(labels.size() == raw.rows(), "phase-2 dataset: one label per row required");
    for (Eigen::Index i = 0; i < labels.size(); ++i)
        require(labels[i] == 1.0 || labels[i] == -1.0, "phase-2 dataset: labels must be +1 or -1");
    return {build_phase2_features(net, raw), labels};
}

namespace detail {
inline void check_phase2(const Vector& theta2, const Phase2Dataset& ds) {
    require(theta2.size() == ds.width(), "theta2 length must equal the feature width");
    require(ds.labels.size() == ds.size(), "label count must equal the sample count");
}
}  // namespace detail

inline double coala_loss(const Vector& theta2, const Phase2Dataset& ds, double beta_reward, double gamma) {
    detail::check_phase2(theta2, ds);
    if (ds.size() == 0) return 0.0;
    const Vector margins = ds.features * theta2;
    double total = 0.0;
    for (Eigen::Index i = 0; i < ds.size(); ++i) total += log1p_exp(-beta_reward * ds.labels[i] * margins[i] + gamma);
    return total / static_cast<double>(ds.size());
}

inline Vector coala_grad(const Vector& theta2, const Phase2Dataset& ds, double beta_reward, double gamma) {
    detail::check_phase2(theta2, ds);
    if (ds.size() == 0) return Vector::Zero(theta2.size());
    const Vector margins = ds.features * theta2;
    Vector weights(ds.size());
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        const double yb = beta_reward * ds.labels[i];
        weights[i] = -yb * sigmoid(-yb * margins[i] + gamma);
    }
    return ds.features.transpose() * weights / static_cast<double>(ds.size());
}

/// Largest singular value of `a` by power iteration on a^T a.
inline double spectral_norm(const Matrix& a, double tol = 1e-6, int max_iters = 500) {
    if (a.size() == 0) return 0.0;
    Vector v = Vector::Ones(a.cols()).normalized();
    double sigma_sq = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        Vector w = a.transpose() * (a * v);
        const double next = w.norm();
        if (next == 0.0) return 0.0;
        v = w / next;
        const bool done = std::abs(next - sigma_sq) <= tol * std::max(1.0, next);
        sigma_sq = next;
        if (done) break;
    }
    return std::sqrt(sigma_sq);
}

/// Gradient Lipschitz constant beta^2 * sigma_max(H)^2 / (4N).
inline double estimate_lipschitz(const Phase2Dataset& ds, double beta_reward) {
    require(ds.size() > 0, "estimate_lipschitz: empty dataset");
    const double sigma = spectral_norm(ds.features);
    return beta_reward * beta_reward * sigma * sigma / (4.0 * static_cast<double>(ds.size()));
}

struct AgdTrace {
    std::vector<double> loss;       // loss[k] after k iterations, loss[0] at the start
    std::vector<double> grad_norm;  // gradient norm at the same points
    double step = 0.0;
};

inline void write_trace_csv(std::ostream& os, const AgdTrace& trace) {
    os << "iter,loss,grad_norm\n";
    os.precision(17);
    for (std::size_t k = 0; k < trace.loss.size(); ++k) os << k << ',' << trace.loss[k] << ',' << trace.grad_norm[k] << '\n';
}

struct FinetuneResult {
    Vector theta2;
    AgdTrace trace;
};

/// Nesterov accelerated gradient with step 1/L and t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2.
inline FinetuneResult agd_minimize(const Phase2Dataset& ds, double beta_reward, double gamma, const Vector& theta0,
                                   int iters) {
    require(iters >= 0, "agd_minimize: iters must be >= 0");
    require(beta_reward > 0.0, "agd_minimize: beta_reward must be > 0");
    detail::check_phase2(theta0, ds);

    FinetuneResult out{theta0, {}};
    auto record = [&](const Vector& theta) {
        const double loss = coala_loss(theta, ds, beta_reward, gamma);
        const double gnorm = coala_grad(theta, ds, beta_reward, gamma).norm();
        if (!std::isfinite(loss) || !std::isfinite(gnorm)) throw SolverError("agd: non-finite loss or gradient");
        out.trace.loss.push_back(loss);
        out.trace.grad_norm.push_back(gnorm);
    };
    record(theta0);
    const double lipschitz = ds.size() == 0 ? 0.0 : estimate_lipschitz(ds, beta_reward);
    if (lipschitz == 0.0) {
        // Zero features: the loss is constant.
        for (int k = 0; k < iters; ++k) record(theta0);
        return out;
    }
    const double step = 1.0 / lipschitz;
    out.trace.step = step;

    Vector x_prev = theta0;
    Vector y = theta0;
    double t = 1.0;
    for (int k = 1; k <= iters; ++k) {
        Vector x = y - step * coala_grad(y, ds, beta_reward, gamma);
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = x + ((t - 1.0) / t_next) * (x - x_prev);
        x_prev = std::move(x);
        t = t_next;
        record(x_prev);
    }
    out.theta2 = x_prev;
    return out;
}

struct AdamConfig {
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

/// Full-batch adaptive-moment optimizer with decoupled weight decay, for comparison with AGD.
inline FinetuneResult adam_minimize(const Phase2Dataset& ds, double beta_reward, double gamma, const Vector& theta0,
                                    int iters, const AdamConfig& cfg = {}) {
    require(iters >= 0, "adam_minimize: iters must be >= 0");
    detail::check_phase2(theta0, ds);
    FinetuneResult out{theta0, {}};
    Vector m = Vector::Zero(theta0.size());
    Vector v = Vector::Zero(theta0.size());
    auto record = [&](const Vector& theta, const Vector& grad) {
        const double loss = coala_loss(theta, ds, beta_reward, gamma);
        if (!std::isfinite(loss)) throw SolverError("adam: non-finite loss");
        out.trace.loss.push_back(loss);
        out.trace.grad_norm.push_back(grad.norm());
    };
    Vector grad = coala_grad(out.theta2, ds, beta_reward, gamma);
    record(out.theta2, grad);
    out.trace.step = cfg.learning_rate;
    for (int k = 1; k <= iters; ++k) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(cfg.beta1, k);
        const double c2 = 1.0 - std::pow(cfg.beta2, k);
        out.theta2 *= 1.0 - cfg.learning_rate * cfg.weight_decay;
        out.theta2.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
        grad = coala_grad(out.theta2, ds, beta_reward, gamma);
        record(out.theta2, grad);
    }
    return out;
}

/// Head score of a single raw feature vector under the fine-tuned second layer.
inline double head_score(const CoalaHead& head, const Vector& x) { return forward(head.net, x); }

}  // namespace coala
