// Small fixed-size linear algebra for 3D rigid poses: Vec3, Mat3, a
// cyclic-Jacobi symmetric eigensolver and axis-angle construction.
#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include "posefuse/rng.hpp"

namespace posefuse {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        const double n = norm();
        return n > 0.0 ? *this / n : Vec3{};
    }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> a{};

    double& operator()(int r, int c) { return a[static_cast<std::size_t>(3 * r + c)]; }
    double operator()(int r, int c) const { return a[static_cast<std::size_t>(3 * r + c)]; }

    static Mat3 identity() {
        Mat3 m;
        m(0, 0) = m(1, 1) = m(2, 2) = 1.0;
        return m;
    }
    static Mat3 zero() { return {}; }

    Mat3 transpose() const {
        Mat3 t;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 p;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += (*this)(r, k) * o(k, c);
                p(r, c) = s;
            }
        return p;
    }

    Vec3 operator*(const Vec3& v) const {
        return {(*this)(0, 0) * v.x + (*this)(0, 1) * v.y + (*this)(0, 2) * v.z,
                (*this)(1, 0) * v.x + (*this)(1, 1) * v.y + (*this)(1, 2) * v.z,
                (*this)(2, 0) * v.x + (*this)(2, 1) * v.y + (*this)(2, 2) * v.z};
    }

    Mat3 operator+(const Mat3& o) const {
        Mat3 s;
        for (std::size_t i = 0; i < 9; ++i) s.a[i] = a[i] + o.a[i];
        return s;
    }
    Mat3 operator-(const Mat3& o) const {
        Mat3 s;
        for (std::size_t i = 0; i < 9; ++i) s.a[i] = a[i] - o.a[i];
        return s;
    }
    Mat3 operator*(double s) const {
        Mat3 m;
        for (std::size_t i = 0; i < 9; ++i) m.a[i] = a[i] * s;
        return m;
    }
    Mat3& operator+=(const Mat3& o) {
        for (std::size_t i = 0; i < 9; ++i) a[i] += o.a[i];
        return *this;
    }

    double det() const {
        return (*this)(0, 0) * ((*this)(1, 1) * (*this)(2, 2) - (*this)(1, 2) * (*this)(2, 1)) -
               (*this)(0, 1) * ((*this)(1, 0) * (*this)(2, 2) - (*this)(1, 2) * (*this)(2, 0)) +
               (*this)(0, 2) * ((*this)(1, 0) * (*this)(2, 1) - (*this)(1, 1) * (*this)(2, 0));
    }

    double trace() const { return a[0] + a[4] + a[8]; }

    double frobenius_norm() const {
        double s = 0.0;
        for (double v : a) s += v * v;
        return std::sqrt(s);
    }

    Vec3 column(int c) const { return {(*this)(0, c), (*this)(1, c), (*this)(2, c)}; }
    void set_column(int c, const Vec3& v) {
        (*this)(0, c) = v.x;
        (*this)(1, c) = v.y;
        (*this)(2, c) = v.z;
    }

    bool finite() const {
        for (double v : a)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline double orthonormality_defect(const Mat3& r) { return (r.transpose() * r - Mat3::identity()).frobenius_norm(); }

inline bool is_rotation(const Mat3& r, double tol) {
    return r.finite() && orthonormality_defect(r) <= tol && std::abs(r.det() - 1.0) <= tol;
}

// Rodrigues formula; axis must be unit length.
inline Mat3 axis_angle_rotation(const Vec3& axis, double angle) {
    const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
    const double x = axis.x, y = axis.y, z = axis.z;
    Mat3 r;
    r(0, 0) = t * x * x + c;
    r(0, 1) = t * x * y - s * z;
    r(0, 2) = t * x * z + s * y;
    r(1, 0) = t * x * y + s * z;
    r(1, 1) = t * y * y + c;
    r(1, 2) = t * y * z - s * x;
    r(2, 0) = t * x * z - s * y;
    r(2, 1) = t * y * z + s * x;
    r(2, 2) = t * z * z + c;
    return r;
}

inline Mat3 rotation_x(double angle) { return axis_angle_rotation({1, 0, 0}, angle); }
inline Mat3 rotation_y(double angle) { return axis_angle_rotation({0, 1, 0}, angle); }
inline Mat3 rotation_z(double angle) { return axis_angle_rotation({0, 0, 1}, angle); }

// Uniform random rotation from a normalized 4-gaussian quaternion.
inline Mat3 random_rotation(Rng& rng) {
    double q[4];
    double n = 0.0;
    do {
        n = 0.0;
        for (double& qi : q) {
            qi = rng.gaussian();
            n += qi * qi;
        }
    } while (n == 0.0);
    n = std::sqrt(n);
    const double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
    Mat3 r;
    r(0, 0) = 1 - 2 * (y * y + z * z);
    r(0, 1) = 2 * (x * y - w * z);
    r(0, 2) = 2 * (x * z + w * y);
    r(1, 0) = 2 * (x * y + w * z);
    r(1, 1) = 1 - 2 * (x * x + z * z);
    r(1, 2) = 2 * (y * z - w * x);
    r(2, 0) = 2 * (x * z - w * y);
    r(2, 1) = 2 * (y * z + w * x);
    r(2, 2) = 1 - 2 * (x * x + y * y);
    return r;
}

struct SymmetricEigen3 {
    std::array<double, 3> values{};  // descending
    Mat3 vectors;                    // matching eigenvectors as columns
};

// Cyclic Jacobi sweeps on a symmetric 3x3. Converges to machine precision
// in a handful of sweeps; eigenpairs are returned sorted descending.
inline SymmetricEigen3 eigen_symmetric3(const Mat3& sym) {
    Mat3 a = sym;
    Mat3 v = Mat3::identity();
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < 3; ++p)
            for (int q = p + 1; q < 3; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-300) break;
        for (int p = 0; p < 3; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                Mat3 g = Mat3::identity();
                g(p, p) = c;
                g(q, q) = c;
                g(p, q) = s;
                g(q, p) = -s;
                a = g.transpose() * a * g;
                a(p, q) = a(q, p) = 0.0;
                v = v * g;
            }
        }
    }

    SymmetricEigen3 out;
    std::array<int, 3> order = {0, 1, 2};
    const std::array<double, 3> diag = {a(0, 0), a(1, 1), a(2, 2)};
    // insertion sort, descending
    for (int i = 1; i < 3; ++i)
        for (int j = i; j > 0 && diag[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] >
                                     diag[static_cast<std::size_t>(order[static_cast<std::size_t>(j - 1)])];
             --j)
            std::swap(order[static_cast<std::size_t>(j)], order[static_cast<std::size_t>(j - 1)]);
    for (int i = 0; i < 3; ++i) {
        out.values[static_cast<std::size_t>(i)] = diag[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        out.vectors.set_column(i, v.column(order[static_cast<std::size_t>(i)]));
    }
    return out;
}

}  // namespace posefuse
