// Chordal-L2 rotation averaging on SO(3).
//
// The (weighted) chordal mean minimizes sum_i w_i * ||R_i - R||_F^2 over
// SO(3). Since ||R_i - R||_F^2 = 6 - 2 tr(R^T R_i) for rotations, the
// minimizer is the special-orthogonal projection of the weighted matrix
// sum, computed in closed form from a dedicated 3x3 SVD. A grid-search
// oracle over axis-angle space is included for verification.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "posefuse/error.hpp"
#include "posefuse/geometry.hpp"

namespace posefuse {

struct RotationSample {
    Mat3 ro;
    double weight = 1.0;
};

// sum_i w_i * ||R_i - R||_F^2, evaluated term by term.
inline double chordal_objective(std::span<const RotationSample> samples, const Mat3& r) {
    double obj = 0.0;
    for (const RotationSample& s : samples) {
        const double d = (s.ro - r).frobenius_norm();
        obj += s.weight * d * d;
    }
    return obj;
}

inline double chordal_objective(std::span<const Mat3> rotations, const Mat3& r) {
    double obj = 0.0;
    for (const Mat3& m : rotations) {
        const double d = (m - r).frobenius_norm();
        obj += d * d;
    }
    return obj;
}

// Nearest rotation to an arbitrary 3x3 matrix: R = U diag(1,1,det(UV^T)) V^T
// from the SVD m = U S V^T, which maximizes tr(R^T m) over SO(3).
//
// The SVD comes from the eigen-decomposition of m^T m: eigenvectors give V,
// singular values are the eigenvalue roots, and U follows by mapping the
// first two right singular vectors through m and closing the frame with a
// cross product. Both frames are built right-handed, so the determinant
// correction is already folded in and R = U V^T.
inline Mat3 project_to_so3(const Mat3& m) {
    if (!m.finite()) throw Error(Errc::non_finite_input, "projection input has non-finite entries");

    const SymmetricEigen3 eig = eigen_symmetric3(m.transpose() * m);
    const double s0 = std::sqrt(std::max(eig.values[0], 0.0));
    const double s1 = std::sqrt(std::max(eig.values[1], 0.0));
    if (s1 < 1e-12)
        throw Error(Errc::degenerate_input,
                    "second singular value " + std::to_string(s1) + " below 1e-12; mean direction undefined");

    Mat3 v = eig.vectors;
    if (v.det() < 0.0) v.set_column(2, v.column(2) * -1.0);

    const Vec3 u0 = (m * v.column(0)) / s0;
    Vec3 u1 = m * v.column(1);
    u1 = (u1 - u0 * u1.dot(u0)).normalized();  // guard round-off in near-tie spectra
    const Vec3 u2 = u0.cross(u1);

    Mat3 u;
    u.set_column(0, u0);
    u.set_column(1, u1);
    u.set_column(2, u2);
    return u * v.transpose();
}

namespace detail {

inline void require_rotations(std::span<const Mat3> rotations) {
    for (std::size_t i = 0; i < rotations.size(); ++i)
        if (!is_rotation(rotations[i], 1e-6))
            throw Error(Errc::not_a_rotation, "input rotation [" + std::to_string(i) + "] is not in SO(3)");
}

}  // namespace detail

// Unweighted chordal mean: project the index-ordered sum.
inline Mat3 chordal_mean(std::span<const Mat3> rotations) {
    if (rotations.empty()) throw Error(Errc::empty_input, "chordal mean of zero rotations");
    detail::require_rotations(rotations);
    Mat3 sum = Mat3::zero();
    for (const Mat3& r : rotations) sum += r;
    return project_to_so3(sum);
}

inline Mat3 chordal_mean(const std::vector<Mat3>& rotations) {
    return chordal_mean(std::span<const Mat3>(rotations));
}

// Weighted chordal mean: project the weighted sum. The minimizer is
// invariant to positive rescaling of the weights, so they are normalized
// by the maximum first; all-equal weights then scale by exactly 1.0 and the
// result reduces bitwise to chordal_mean.
inline Mat3 chordal_mean_weighted(std::span<const RotationSample> samples) {
    if (samples.empty()) throw Error(Errc::empty_input, "chordal mean of zero rotations");
    double weight_max = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!is_rotation(samples[i].ro, 1e-6))
            throw Error(Errc::not_a_rotation, "input rotation [" + std::to_string(i) + "] is not in SO(3)");
        if (samples[i].weight < 0.0)
            throw Error(Errc::negative_weight, "weight[" + std::to_string(i) + "]=" + std::to_string(samples[i].weight));
        weight_max = std::max(weight_max, samples[i].weight);
    }
    if (weight_max <= 0.0) throw Error(Errc::all_weights_zero, "all rotation weights are zero");
    Mat3 sum = Mat3::zero();
    for (const RotationSample& s : samples) sum += s.ro * (s.weight / weight_max);
    return project_to_so3(sum);
}

inline Mat3 chordal_mean_weighted(const std::vector<RotationSample>& samples) {
    return chordal_mean_weighted(std::span<const RotationSample>(samples));
}

// Evenly distributed unit directions (spherical Fibonacci lattice).
inline std::vector<Vec3> fibonacci_sphere(std::size_t count) {
    std::vector<Vec3> pts;
    pts.reserve(count);
    const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(count);
        const double rad = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = 2.0 * M_PI * static_cast<double>(i) / golden;
        pts.push_back({rad * std::cos(phi), rad * std::sin(phi), z});
    }
    return pts;
}

// Grid-search oracle: minimize the weighted chordal objective over an
// axis-angle grid (Fibonacci-sphere axes at the resolution matching
// grid_step, angles in [0, pi] at grid_step). Exhaustive and independent
// of the SVD path; intended for tests.
//
// The scan exploits tr(R^T S) for S = sum_i w_i R_i, which for a fixed
// axis is linear in (cos t, sin t): objective(R) = 6 W - 2 tr(R^T S).
// The reported minimum is identical to evaluating every grid point.
inline Mat3 brute_force_rotation_mean(std::span<const RotationSample> samples, double grid_step) {
    if (samples.empty()) throw Error(Errc::empty_input, "grid search over zero rotations");
    if (!(grid_step > 0.0 && grid_step <= 0.5))
        throw Error(Errc::invalid_argument, "grid_step=" + std::to_string(grid_step) + " outside (0, 0.5]");

    Mat3 s = Mat3::zero();
    for (const RotationSample& sample : samples) s += sample.ro * sample.weight;

    const std::size_t axis_count =
        static_cast<std::size_t>(std::ceil(4.0 * M_PI / (grid_step * grid_step)));
    const std::vector<Vec3> axes = fibonacci_sphere(axis_count);

    const std::size_t angle_count = static_cast<std::size_t>(std::floor(M_PI / grid_step)) + 1;
    std::vector<double> cos_t(angle_count), sin_t(angle_count);
    for (std::size_t k = 0; k < angle_count; ++k) {
        const double t = std::min(static_cast<double>(k) * grid_step, M_PI);
        cos_t[k] = std::cos(t);
        sin_t[k] = std::sin(t);
    }

    // tr(R^T S) with R = cos t I + sin t [u]x + (1-cos t) u u^T decomposes as
    //   cos t * tr(S) + sin t * <u, vee(S - S^T)> + (1-cos t) * u^T S u.
    const double tr_s = s.trace();
    double best_value = -std::numeric_limits<double>::infinity();
    Vec3 best_axis{0, 0, 1};
    double best_angle = 0.0;
    for (const Vec3& u : axes) {
        const Vec3 su = s * u;
        const double quad = u.dot(su);
        const double skew = u.x * (s(2, 1) - s(1, 2)) + u.y * (s(0, 2) - s(2, 0)) + u.z * (s(1, 0) - s(0, 1));
        for (std::size_t k = 0; k < angle_count; ++k) {
            const double value = cos_t[k] * (tr_s - quad) + sin_t[k] * skew + quad;
            if (value > best_value) {
                best_value = value;
                best_axis = u;
                best_angle = std::min(static_cast<double>(k) * grid_step, M_PI);
            }
        }
    }
    return axis_angle_rotation(best_axis, best_angle);
}

inline Mat3 brute_force_rotation_mean(const std::vector<RotationSample>& samples, double grid_step) {
    return brute_force_rotation_mean(std::span<const RotationSample>(samples), grid_step);
}

}  // namespace posefuse
