// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include "splatir/camera.hpp"

namespace splatir {

bool Camera::project(const Vec3& p_world, Vec2& pixel_out, double* depth_out) const {
    Vec3 pc = to_camera(p_world);
    if (pc.z() <= 0.0) return false;
    pixel_out = Vec2(fx() * pc.x() / pc.z() + cx(), fy() * pc.y() / pc.z() + cy());
    if (depth_out) *depth_out = pc.z();
    return true;
}

Vec3 Camera::unproject(double px, double py, double depth) const {
    if (depth <= 0.0) throw ContractError("Camera::unproject: depth must be positive");
    Vec3 pc((px - cx()) / fx() * depth, (py - cy()) / fy() * depth, depth);
    return to_world(pc);
}

void Camera::validate() const {
    if (fx() <= 0.0 || fy() <= 0.0) throw InputError("Camera: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw InputError("Camera: resolution must be positive");
    Mat3 R = rotation();
    if ((R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
        throw InputError("Camera: world_to_cam rotation block is not orthonormal");
    Vec4 bottom = world_to_cam.row(3);
    if ((bottom - Vec4(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9)
        throw InputError("Camera: world_to_cam must be a rigid transform");
}

Camera transform_camera(const Camera& cam, const Mat3& R, const Vec3& t) {
    // x_cam = Rc x + tc with x = R^T (x' - t) gives Rc' = Rc R^T, tc' = tc - Rc R^T t
    Camera out = cam;
    Mat3 Rc = cam.rotation();
    Vec3 tc = cam.translation();
    out.world_to_cam.topLeftCorner<3, 3>() = Rc * R.transpose();
    out.world_to_cam.topRightCorner<3, 1>() = tc - Rc * R.transpose() * t;
    return out;
}

}  // namespace splatir
