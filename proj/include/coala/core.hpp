#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace coala {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// Dense data matrix, one feature vector per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Absolute slack used for every cone-membership and nonnegativity check.
inline constexpr double kConeTolerance = 1e-9;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind { input = 2, solver = 3, verification = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct InputError : Error {
    explicit InputError(const std::string& what) : Error(ErrorKind::input, what) {}
};

struct SolverError : Error {
    explicit SolverError(const std::string& what) : Error(ErrorKind::solver, what) {}
};

struct VerificationError : Error {
    explicit VerificationError(const std::string& what) : Error(ErrorKind::verification, what) {}
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw InputError(what);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

/// Derives an independent, reproducible seed for a named stream from one root seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (const char c : stream) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
    std::seed_seq seq{static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// Numerically stable log(1 + exp(z)).
inline double log1p_exp(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double relative_gap(double a, double b) {
    return std::abs(a - b) / std::max(1.0, std::abs(b));
}

}  // namespace coala
