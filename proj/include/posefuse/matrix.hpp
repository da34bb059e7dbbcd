// Minimal dense row-major matrix with the few operations the meta-learners
// need (products, transpose, SPD solve). Not a general linear-algebra layer.
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "posefuse/error.hpp"

namespace posefuse {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    bool finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw Error(Errc::dimension_mismatch, "matmul " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                                  " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    Matrix out(a.rows(), b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double av = a(r, k);
            if (av == 0.0) continue;
            for (std::size_t c = 0; c < b.cols(); ++c) out(r, c) += av * b(k, c);
        }
    return out;
}

// Solves A X = B for symmetric positive-definite A by Cholesky
// factorization A = L L^T.
inline Matrix cholesky_solve(const Matrix& a, const Matrix& b) {
    const std::size_t n = a.rows();
    if (a.cols() != n || b.rows() != n)
        throw Error(Errc::dimension_mismatch, "cholesky_solve shape mismatch");

    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (!(diag > 0.0) || !std::isfinite(diag))
            throw Error(Errc::singular_system, "matrix not positive definite at pivot " + std::to_string(j));
        l(j, j) = std::sqrt(diag);
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = a(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
            l(i, j) = v / l(j, j);
        }
    }

    Matrix x(n, b.cols());
    for (std::size_t c = 0; c < b.cols(); ++c) {
        // forward: L y = b
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            double v = b(i, c);
            for (std::size_t k = 0; k < i; ++k) v -= l(i, k) * y[k];
            y[i] = v / l(i, i);
        }
        // backward: L^T x = y
        for (std::size_t ii = n; ii-- > 0;) {
            double v = y[ii];
            for (std::size_t k = ii + 1; k < n; ++k) v -= l(k, ii) * x(k, c);
            x(ii, c) = v / l(ii, ii);
        }
    }
    return x;
}

}  // namespace posefuse
