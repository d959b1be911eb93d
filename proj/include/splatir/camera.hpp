// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "splatir/common.hpp"

namespace splatir {

/// Pinhole camera. Camera frame is x right, y down, z forward; pixel (x, y)
/// addresses column x, row y with the origin at the top-left corner. Integer
/// pixel (i, j) is sampled at continuous coordinates (i + 0.5, j + 0.5).
struct Camera {
    Mat3 intrinsics = Mat3::Identity();   // fx, fy on the diagonal, principal point in col 2
    Mat4 world_to_cam = Mat4::Identity();  // rigid transform W
    int width = 0, height = 0;

    double fx() const { return intrinsics(0, 0); }
    double fy() const { return intrinsics(1, 1); }
    double cx() const { return intrinsics(0, 2); }
    double cy() const { return intrinsics(1, 2); }

    Mat3 rotation() const { return world_to_cam.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return world_to_cam.topRightCorner<3, 1>(); }
    Vec3 position() const { return -rotation().transpose() * translation(); }

    Vec3 to_camera(const Vec3& p_world) const { return rotation() * p_world + translation(); }
    Vec3 to_world(const Vec3& p_cam) const {
        return rotation().transpose() * (p_cam - translation());
    }

    /// World-space ray direction through continuous pixel coordinates, scaled so
    /// that advancing by t along it increases camera-space depth by exactly t.
    Vec3 ray_direction(double px, double py) const {
        Vec3 d_cam((px - cx()) / fx(), (py - cy()) / fy(), 1.0);
        return rotation().transpose() * d_cam;
    }

    /// Projects a world point; returns false if it lies at or behind the camera.
    bool project(const Vec3& p_world, Vec2& pixel_out, double* depth_out = nullptr) const;

    /// Inverts the projection at continuous pixel coordinates and camera-space
    /// depth. Throws ContractError for depth <= 0.
    Vec3 unproject(double px, double py, double depth) const;

    /// Checks orthonormal rotation (1e-6) and positive focal lengths.
    void validate() const;
};

/// Camera with rotation/position transformed by a rigid world motion (R, t):
/// world points x map to R x + t.
Camera transform_camera(const Camera& cam, const Mat3& R, const Vec3& t);

}  // namespace splatir
