#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <filesystem>
#include <string>

namespace dass {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Hamilton quaternion, scalar first.
struct Quaternion {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double norm() const;
    Quaternion normalized() const;
    Quaternion conjugate() const { return {w, -x, -y, -z}; }
    Vec4 as_vec() const { return {w, x, y, z}; }
    static Quaternion from_vec(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }

    bool operator==(const Quaternion&) const = default;
};

// Normalizes internally. Throws on a zero-norm quaternion.
Mat3 quat_to_rotmat(const Quaternion& q);

Quaternion quat_mul(const Quaternion& a, const Quaternion& b);

// Symmetric 3x3 matrix stored as its upper triangle.
struct Covariance3D {
    double xx = 0, xy = 0, xz = 0, yy = 0, yz = 0, zz = 0;

    Mat3 matrix() const;
    static Covariance3D from_matrix(const Mat3& m);
};

// R S S^T R^T. Scale components must be positive.
Covariance3D build_covariance(const Vec3& scale, const Quaternion& q);

// Pinhole camera. Camera frame is right-handed with +z forward, +x right and
// +y down; extrinsics map world to camera. full_projection maps homogeneous
// world points (column vectors) to clip space whose w component is the
// camera-frame depth and whose x/y, after the perspective divide, satisfy
// pixel = 0.5 * ((ndc + 1) * size - 1).
struct Camera {
    int width = 0;
    int height = 0;
    double fx = 0, fy = 0, cx = 0, cy = 0;
    Mat4 world_to_camera = Mat4::Identity();
    Mat4 full_projection = Mat4::Identity();
    double near = 0.01;
    double far = 100.0;

    Mat3 rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return world_to_camera.topRightCorner<3, 1>(); }
    Vec3 center() const { return -rotation().transpose() * translation(); }
    Vec3 to_camera(const Vec3& p) const { return rotation() * p + translation(); }

    // Recomputes full_projection from intrinsics and extrinsics.
    void update_projection();
    // Throws DataError when an invariant does not hold.
    void validate() const;

    static Camera make(int width, int height, double fx, double fy, double cx, double cy,
                       const Mat4& world_to_camera, double near = 0.01, double far = 100.0);
    // Camera at `eye` looking at `target`; `up` is the approximate world up vector.
    static Camera look_at(int width, int height, double fx, double fy, const Vec3& eye,
                          const Vec3& target, const Vec3& up);
};

struct PixelProjection {
    int px = 0;
    int py = 0;
    double depth = 0.0;
    bool behind = false;
};

// Homogeneous projection through full_projection followed by rounding
// (half away from zero) to the pixel grid.
PixelProjection project_position(const Camera& cam, const Vec3& p);

// Continuous pixel coordinates of a camera-frame point.
inline Vec2 pinhole(const Camera& cam, const Vec3& pc) {
    return {cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy};
}

// Jacobian of the perspective projection at camera-frame point pc.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Vec3& pc);

inline constexpr double kCovarianceFloor = 0.3;

// J W Sigma W^T J^T plus the low-pass floor on the diagonal. Throws when p is
// behind the camera.
Mat2 project_covariance(const Camera& cam, const Vec3& p, const Covariance3D& cov);

Camera load_camera(const std::filesystem::path& path);
void save_camera(const Camera& cam, const std::filesystem::path& path);
std::string camera_to_json(const Camera& cam);
Camera camera_from_json(const std::string& text);

}  // namespace dass
