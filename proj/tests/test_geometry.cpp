#include <gtest/gtest.h>

#include <cmath>

#include "posefuse/geometry.hpp"
#include "posefuse/rng.hpp"
#include "test_util.hpp"

using namespace posefuse;

TEST(Geometry, AxisRotationsAreRotations) {
    for (double angle : {-2.5, -0.3, 0.0, 0.7, 3.1}) {
        EXPECT_TRUE(is_rotation(rotation_x(angle), 1e-12));
        EXPECT_TRUE(is_rotation(rotation_y(angle), 1e-12));
        EXPECT_TRUE(is_rotation(rotation_z(angle), 1e-12));
    }
}

TEST(Geometry, RotationZMatchesHandValues) {
    const double a = 0.3;
    const Mat3 r = rotation_z(a);
    EXPECT_NEAR(r(0, 0), std::cos(a), 1e-15);
    EXPECT_NEAR(r(0, 1), -std::sin(a), 1e-15);
    EXPECT_NEAR(r(1, 0), std::sin(a), 1e-15);
    EXPECT_NEAR(r(2, 2), 1.0, 1e-15);
    // Rotating the x axis by 90 degrees about z gives the y axis.
    const Vec3 y = rotation_z(M_PI / 2.0) * Vec3{1, 0, 0};
    EXPECT_NEAR(y.x, 0.0, 1e-15);
    EXPECT_NEAR(y.y, 1.0, 1e-15);
}

TEST(Geometry, AxisAngleFixesItsAxis) {
    const Vec3 axis = Vec3{1.0, 2.0, -0.5}.normalized();
    const Mat3 r = axis_angle_rotation(axis, 1.234);
    const Vec3 mapped = r * axis;
    EXPECT_NEAR((mapped - axis).norm(), 0.0, 1e-14);
    EXPECT_TRUE(is_rotation(r, 1e-12));
}

TEST(Geometry, ComposedAnglesAdd) {
    const Mat3 ab = rotation_z(0.2) * rotation_z(0.4);
    EXPECT_NEAR(testutil::frobenius_distance(ab, rotation_z(0.6)), 0.0, 1e-14);
}

TEST(Geometry, RandomRotationsAreUniformishAndValid) {
    Rng rng(17);
    Vec3 mean{};
    for (int i = 0; i < 200; ++i) {
        const Mat3 r = random_rotation(rng);
        ASSERT_TRUE(is_rotation(r, 1e-10));
        mean += r * Vec3{1, 0, 0};
    }
    mean = mean / 200.0;
    EXPECT_LT(mean.norm(), 0.2);  // directions average out
}

TEST(Geometry, OrthonormalityDefect) {
    EXPECT_NEAR(orthonormality_defect(Mat3::identity()), 0.0, 1e-15);
    EXPECT_GT(orthonormality_defect(Mat3::identity() * 2.0), 1.0);
    EXPECT_FALSE(is_rotation(Mat3::identity() * 2.0, 1e-6));
}

TEST(Geometry, SymmetricEigenDiagonal) {
    Mat3 d;
    d(0, 0) = 3.0;
    d(1, 1) = -1.0;
    d(2, 2) = 2.0;
    const SymmetricEigen3 e = eigen_symmetric3(d);
    EXPECT_NEAR(e.values[0], 3.0, 1e-12);
    EXPECT_NEAR(e.values[1], 2.0, 1e-12);
    EXPECT_NEAR(e.values[2], -1.0, 1e-12);
}

TEST(Geometry, SymmetricEigenReconstructs) {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        Mat3 m;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) m(r, c) = rng.uniform(-2.0, 2.0);
        const Mat3 sym = (m + m.transpose()) * 0.5;
        const SymmetricEigen3 e = eigen_symmetric3(sym);
        ASSERT_GE(e.values[0], e.values[1]);
        ASSERT_GE(e.values[1], e.values[2]);
        // V diag(w) V^T == sym
        Mat3 diag;
        diag(0, 0) = e.values[0];
        diag(1, 1) = e.values[1];
        diag(2, 2) = e.values[2];
        const Mat3 rebuilt = e.vectors * diag * e.vectors.transpose();
        EXPECT_NEAR(testutil::frobenius_distance(rebuilt, sym), 0.0, 1e-10);
        EXPECT_NEAR(orthonormality_defect(e.vectors), 0.0, 1e-10);
    }
}
