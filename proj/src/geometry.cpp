#include "dass/geometry.hpp"

#include "dass/error.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace dass {

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
}

Mat3 quat_to_rotmat(const Quaternion& q) {
    const double n = q.norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw Error("degenerate rotation");
    const double w = q.w / n, x = q.x / n, y = q.y / n, z = q.z / n;
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Quaternion quat_mul(const Quaternion& a, const Quaternion& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Mat3 Covariance3D::matrix() const {
    Mat3 m;
    m << xx, xy, xz, xy, yy, yz, xz, yz, zz;
    return m;
}

Covariance3D Covariance3D::from_matrix(const Mat3& m) {
    return {m(0, 0), 0.5 * (m(0, 1) + m(1, 0)), 0.5 * (m(0, 2) + m(2, 0)),
            m(1, 1), 0.5 * (m(1, 2) + m(2, 1)), m(2, 2)};
}

Covariance3D build_covariance(const Vec3& scale, const Quaternion& q) {
    if (!(scale.minCoeff() > 0.0)) throw Error("build_covariance: scale must be positive");
    const Mat3 m = quat_to_rotmat(q) * scale.asDiagonal();
    return Covariance3D::from_matrix(m * m.transpose());
}

void Camera::update_projection() {
    Mat4 clip = Mat4::Zero();
    clip(0, 0) = 2.0 * fx / width;
    clip(0, 2) = (2.0 * cx + 1.0) / width - 1.0;
    clip(1, 1) = 2.0 * fy / height;
    clip(1, 2) = (2.0 * cy + 1.0) / height - 1.0;
    clip(2, 2) = far / (far - near);
    clip(2, 3) = -far * near / (far - near);
    clip(3, 2) = 1.0;
    full_projection = clip * world_to_camera;
}

void Camera::validate() const {
    if (width <= 0 || height <= 0) throw DataError("camera: non-positive image size");
    if (!(fx > 0.0 && fy > 0.0)) throw DataError("camera: focal lengths must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
        throw DataError("camera: principal point outside the image");
    if (!(near > 0.0 && far > near)) throw DataError("camera: invalid clip depths");
    const Mat3 r = rotation();
    if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() >= 1e-6)
        throw DataError("camera: extrinsic rotation is not orthonormal");
    // Round-trip a known point through both mappings.
    const Vec3 pc(0.1, -0.2, 0.5 * (near + far));
    const Vec3 pw = r.transpose() * (pc - translation());
    const Vec4 clip = full_projection * pw.homogeneous();
    const Vec2 expected = pinhole(*this, pc);
    const double u = 0.5 * ((clip.x() / clip.w() + 1.0) * width - 1.0);
    const double v = 0.5 * ((clip.y() / clip.w() + 1.0) * height - 1.0);
    if (std::abs(u - expected.x()) > 1e-6 || std::abs(v - expected.y()) > 1e-6 ||
        std::abs(clip.w() - pc.z()) > 1e-6)
        throw DataError("camera: full projection inconsistent with intrinsics/extrinsics");
}

Camera Camera::make(int width, int height, double fx, double fy, double cx, double cy,
                    const Mat4& world_to_camera, double near, double far) {
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = cx;
    cam.cy = cy;
    cam.world_to_camera = world_to_camera;
    cam.near = near;
    cam.far = far;
    cam.update_projection();
    return cam;
}

Camera Camera::look_at(int width, int height, double fx, double fy, const Vec3& eye,
                       const Vec3& target, const Vec3& up) {
    const Vec3 forward = (target - eye).normalized();
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    Mat4 w2c = Mat4::Identity();
    w2c.block<1, 3>(0, 0) = right.transpose();
    w2c.block<1, 3>(1, 0) = down.transpose();
    w2c.block<1, 3>(2, 0) = forward.transpose();
    w2c.topRightCorner<3, 1>() = -w2c.topLeftCorner<3, 3>() * eye;
    return make(width, height, fx, fy, 0.5 * (width - 1), 0.5 * (height - 1), w2c);
}

PixelProjection project_position(const Camera& cam, const Vec3& p) {
    const Vec4 hom = cam.full_projection * p.homogeneous();
    PixelProjection out;
    out.depth = cam.to_camera(p).z();
    if (hom.w() <= cam.near) {
        out.behind = true;
        return out;
    }
    const double x_norm = hom.x() / hom.w();
    const double y_norm = hom.y() / hom.w();
    out.px = static_cast<int>(std::round(0.5 * ((x_norm + 1.0) * cam.width - 1.0)));
    out.py = static_cast<int>(std::round(0.5 * ((y_norm + 1.0) * cam.height - 1.0)));
    return out;
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Vec3& pc) {
    const double iz = 1.0 / pc.z();
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx * iz, 0.0, -cam.fx * pc.x() * iz * iz,
         0.0, cam.fy * iz, -cam.fy * pc.y() * iz * iz;
    return j;
}

Mat2 project_covariance(const Camera& cam, const Vec3& p, const Covariance3D& cov) {
    const Vec3 pc = cam.to_camera(p);
    if (pc.z() <= cam.near) throw Error("project_covariance: point behind camera");
    const Eigen::Matrix<double, 2, 3> t = projection_jacobian(cam, pc) * cam.rotation();
    Mat2 out = t * cov.matrix() * t.transpose();
    out(0, 1) = out(1, 0) = 0.5 * (out(0, 1) + out(1, 0));
    out(0, 0) += kCovarianceFloor;
    out(1, 1) += kCovarianceFloor;
    return out;
}

std::string camera_to_json(const Camera& cam) {
    nlohmann::json j;
    j["width"] = cam.width;
    j["height"] = cam.height;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    std::vector<double> w2c;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) w2c.push_back(cam.world_to_camera(r, c));
    j["world_to_camera"] = w2c;
    j["near"] = cam.near;
    j["far"] = cam.far;
    return j.dump(2);
}

Camera camera_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        const auto w2c = j.at("world_to_camera").get<std::vector<double>>();
        if (w2c.size() != 16) throw DataError("camera json: world_to_camera needs 16 values");
        Mat4 m;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) m(r, c) = w2c[r * 4 + c];
        Camera cam = Camera::make(j.at("width").get<int>(), j.at("height").get<int>(),
                                  j.at("fx").get<double>(), j.at("fy").get<double>(),
                                  j.at("cx").get<double>(), j.at("cy").get<double>(), m,
                                  j.at("near").get<double>(), j.at("far").get<double>());
        cam.validate();
        return cam;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("camera json: ") + e.what());
    }
}

Camera load_camera(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open camera file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return camera_from_json(ss.str());
}

void save_camera(const Camera& cam, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write camera file " + path.string());
    out << camera_to_json(cam) << '\n';
}

}  // namespace dass
