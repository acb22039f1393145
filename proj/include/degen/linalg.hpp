#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <utility>
#include <vector>

namespace degen {

/// Tridiagonal matrix stored by diagonals; row i couples i-1, i, i+1.
template <typename Scalar>
struct Tridiagonal {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Vector lower;
    Vector diag;
    Vector upper;

    Tridiagonal() = default;
    explicit Tridiagonal(Eigen::Index size)
        : lower(Vector::Zero(size)), diag(Vector::Zero(size)), upper(Vector::Zero(size))
    {
    }

    Eigen::Index size() const { return diag.size(); }

    template <typename Derived>
    Vector apply(const Eigen::MatrixBase<Derived>& v) const
    {
        const Eigen::Index n = size();
        Vector out(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Scalar acc = diag[i] * v[i];
            if (i > 0) acc += lower[i] * v[i - 1];
            if (i + 1 < n) acc += upper[i] * v[i + 1];
            out[i] = acc;
        }
        return out;
    }

    template <typename Derived>
    Vector apply_transpose(const Eigen::MatrixBase<Derived>& v) const
    {
        const Eigen::Index n = size();
        Vector out(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Scalar acc = diag[i] * v[i];
            if (i > 0) acc += upper[i - 1] * v[i - 1];
            if (i + 1 < n) acc += lower[i + 1] * v[i + 1];
            out[i] = acc;
        }
        return out;
    }

    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> dense() const
    {
        const Eigen::Index n = size();
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out =
            Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            out(i, i) = diag[i];
            if (i > 0) out(i, i - 1) = lower[i];
            if (i + 1 < n) out(i, i + 1) = upper[i];
        }
        return out;
    }
};

/// Factored form of (I + c T) for repeated Thomas solves.
template <typename Scalar>
class ShiftedSolver {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    ShiftedSolver() = default;
    ShiftedSolver(const Tridiagonal<Scalar>& op, Scalar c)
    {
        const Eigen::Index n = op.size();
        sub_ = c * op.lower;
        sup_ = c * op.upper;
        pivot_.resize(n);
        factor_.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Scalar d = Scalar(1) + c * op.diag[i];
            if (i > 0) d -= sub_[i] * factor_[i - 1];
            if (d == Scalar(0)) throw std::runtime_error("singular tridiagonal system");
            pivot_[i] = d;
            factor_[i] = (i + 1 < n) ? sup_[i] / d : Scalar(0);
        }
    }

    template <typename Derived>
    Vector solve(const Eigen::MatrixBase<Derived>& rhs) const
    {
        const Eigen::Index n = pivot_.size();
        Vector y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            Scalar r = rhs[i];
            if (i > 0) r -= sub_[i] * y[i - 1];
            y[i] = r / pivot_[i];
        }
        for (Eigen::Index i = n - 2; i >= 0; --i) y[i] -= factor_[i] * y[i + 1];
        return y;
    }

private:
    Vector sub_;
    Vector sup_;
    Vector pivot_;
    Vector factor_;
};

/// Gauss–Legendre nodes and weights on [-1, 1].
std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int points);

}  // namespace degen
