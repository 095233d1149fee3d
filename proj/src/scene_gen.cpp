#include "dass/scene_gen.hpp"

#include "dass/error.hpp"
#include "dass/renderer.hpp"
#include "dass/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace dass {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 3) throw DataError("script: expected a 3-vector");
    return {v[0], v[1], v[2]};
}

Quaternion yaw_quaternion(double angle) { return {std::cos(0.5 * angle), 0.0, 0.0, std::sin(0.5 * angle)}; }

Vec3 move(const SceneObject& obj, const Vec3& p, int t) {
    switch (obj.motion.kind) {
        case MotionKind::Static:
            return p;
        case MotionKind::Linear:
            return p + obj.motion.velocity * t;
        case MotionKind::Orbit: {
            const double a = obj.motion.angular_velocity * t;
            const Vec3 d = p - obj.motion.center;
            return obj.motion.center + Vec3(std::cos(a) * d.x() - std::sin(a) * d.y(),
                                            std::sin(a) * d.x() + std::cos(a) * d.y(), d.z());
        }
    }
    return p;
}

const char* motion_name(MotionKind k) {
    switch (k) {
        case MotionKind::Static: return "static";
        case MotionKind::Linear: return "linear";
        case MotionKind::Orbit: return "orbit";
    }
    return "static";
}

}  // namespace

void SceneScript::validate() const {
    if (timesteps < 1) throw DataError("script: timesteps must be >= 1");
    if (width < 8 || height < 8) throw DataError("script: image too small");
    if (rig.count < 2) throw DataError("script: need at least two cameras");
    if (id_dim < 2 || id_dim > 255) throw DataError("script: id_dim out of range");
    std::set<int> labels;
    bool has_static = false, has_moving = false;
    for (const auto& o : objects) {
        if (o.label < 1 || o.label >= id_dim) throw DataError("script: labels must lie in [1, id_dim)");
        if (!labels.insert(o.label).second) throw DataError("script: duplicate label");
        if (o.appear_at < 0 || o.appear_at >= timesteps) throw DataError("script: appear_at out of range");
        if (o.gaussian_count < 1) throw DataError("script: object without gaussians");
        if (!(o.aabb_hi.array() > o.aabb_lo.array()).all()) throw DataError("script: empty object AABB");
        (o.motion.kind == MotionKind::Static ? has_static : has_moving) = true;
    }
    if (!has_static || !has_moving) throw DataError("script: need at least one static and one moving object");
}

std::vector<Camera> SceneScript::cameras() const {
    std::vector<Camera> cams;
    const double f = 0.5 * width / std::tan(0.5 * rig.fov_deg * std::numbers::pi / 180.0);
    for (int v = 0; v < rig.count; ++v) {
        const double a = 2.0 * std::numbers::pi * v / rig.count;
        const Vec3 eye(rig.radius * std::cos(a), rig.radius * std::sin(a), rig.height);
        cams.push_back(Camera::look_at(width, height, f, f, eye, rig.target, Vec3::UnitZ()));
    }
    return cams;
}

SceneScript default_script() {
    SceneScript s;
    s.seed = 42;
    s.timesteps = 20;
    s.width = s.height = 128;
    s.rig = RingRig{};

    SceneObject floor;
    floor.label = 1;
    floor.gaussian_count = 1400;
    floor.aabb_lo = Vec3(-1.0, -1.0, -0.02);
    floor.aabb_hi = Vec3(1.0, 1.0, 0.0);
    floor.color = Vec3(0.55, 0.5, 0.4);

    SceneObject mover;
    mover.label = 2;
    mover.gaussian_count = 400;
    mover.aabb_lo = Vec3(-0.65, -0.45, 0.0);
    mover.aabb_hi = Vec3(-0.35, -0.15, 0.3);
    mover.color = Vec3(0.8, 0.25, 0.2);
    mover.motion.kind = MotionKind::Linear;
    mover.motion.velocity = Vec3(0.05, 0.02, 0.0);

    SceneObject emerging;
    emerging.label = 3;
    emerging.gaussian_count = 200;
    emerging.aabb_lo = Vec3(0.2, 0.3, 0.0);
    emerging.aabb_hi = Vec3(0.55, 0.65, 0.1);
    emerging.color = Vec3(0.2, 0.45, 0.85);
    emerging.appear_at = 8;

    s.objects = {floor, mover, emerging};
    return s;
}

std::string script_to_json(const SceneScript& s) {
    json j;
    j["seed"] = s.seed;
    j["timesteps"] = s.timesteps;
    j["width"] = s.width;
    j["height"] = s.height;
    j["id_dim"] = s.id_dim;
    j["rig"] = {{"count", s.rig.count},
                {"radius", s.rig.radius},
                {"height", s.rig.height},
                {"fov_deg", s.rig.fov_deg},
                {"target", vec_json(s.rig.target)}};
    j["objects"] = json::array();
    for (const auto& o : s.objects) {
        json m = {{"type", motion_name(o.motion.kind)}};
        if (o.motion.kind == MotionKind::Linear) m["velocity"] = vec_json(o.motion.velocity);
        if (o.motion.kind == MotionKind::Orbit) {
            m["center"] = vec_json(o.motion.center);
            m["angular_velocity"] = o.motion.angular_velocity;
        }
        j["objects"].push_back({{"label", o.label},
                                {"gaussian_count", o.gaussian_count},
                                {"aabb_lo", vec_json(o.aabb_lo)},
                                {"aabb_hi", vec_json(o.aabb_hi)},
                                {"color", vec_json(o.color)},
                                {"motion", m},
                                {"appear_at", o.appear_at}});
    }
    return j.dump(2);
}

SceneScript script_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        SceneScript s;
        s.seed = j.value("seed", s.seed);
        s.timesteps = j.value("timesteps", s.timesteps);
        s.width = j.value("width", s.width);
        s.height = j.value("height", s.height);
        s.id_dim = j.value("id_dim", s.id_dim);
        if (j.contains("rig")) {
            const auto& r = j["rig"];
            s.rig.count = r.value("count", s.rig.count);
            s.rig.radius = r.value("radius", s.rig.radius);
            s.rig.height = r.value("height", s.rig.height);
            s.rig.fov_deg = r.value("fov_deg", s.rig.fov_deg);
            if (r.contains("target")) s.rig.target = json_vec(r["target"]);
        }
        for (const auto& jo : j.at("objects")) {
            SceneObject o;
            o.label = jo.at("label").get<int>();
            o.gaussian_count = jo.at("gaussian_count").get<int>();
            o.aabb_lo = json_vec(jo.at("aabb_lo"));
            o.aabb_hi = json_vec(jo.at("aabb_hi"));
            if (jo.contains("color")) o.color = json_vec(jo["color"]);
            o.appear_at = jo.value("appear_at", 0);
            const auto& m = jo.at("motion");
            const std::string type = m.at("type").get<std::string>();
            if (type == "static") {
                o.motion.kind = MotionKind::Static;
            } else if (type == "linear") {
                o.motion.kind = MotionKind::Linear;
                o.motion.velocity = json_vec(m.at("velocity"));
            } else if (type == "orbit") {
                o.motion.kind = MotionKind::Orbit;
                o.motion.center = json_vec(m.at("center"));
                o.motion.angular_velocity = m.at("angular_velocity").get<double>();
            } else {
                throw DataError("script: unknown motion type '" + type + "'");
            }
            s.objects.push_back(o);
        }
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw DataError(std::string("script json: ") + e.what());
    }
}

SceneScript load_script(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open script " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return script_from_json(ss.str());
}

OracleScene sample_oracle(const SceneScript& script) {
    OracleScene scene;
    GaussianSet& set = scene.rest;
    set.id_dim = script.id_dim;
    set.sh_degree = 0;
    auto rng = make_rng(script.seed, 0, kStageScene);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (size_t oi = 0; oi < script.objects.size(); ++oi) {
        const auto& obj = script.objects[oi];
        const Vec3 extent = obj.aabb_hi - obj.aabb_lo;
        const bool flat = extent.minCoeff() < 0.25 * extent.maxCoeff();
        double base_scale;
        if (flat) {
            const double area = extent.prod() / extent.minCoeff();
            base_scale = 0.7 * std::sqrt(area / obj.gaussian_count);
        } else {
            base_scale = 0.8 * std::cbrt(extent.prod() / obj.gaussian_count);
        }
        const Vec3 center = 0.5 * (obj.aabb_lo + obj.aabb_hi);
        for (int k = 0; k < obj.gaussian_count; ++k) {
            GaussianPrimitive g = set.make_primitive();
            if (flat) {
                for (int a = 0; a < 3; ++a) g.position[a] = obj.aabb_lo[a] + u01(rng) * extent[a];
            } else {
                // Rejection-sample the inscribed ellipsoid.
                Vec3 d;
                do {
                    d = Vec3(2 * u01(rng) - 1, 2 * u01(rng) - 1, 2 * u01(rng) - 1);
                } while (d.squaredNorm() > 1.0);
                g.position = center + 0.5 * d.cwiseProduct(extent);
            }
            Vec3 s;
            for (int a = 0; a < 3; ++a)
                s[a] = std::min(base_scale * (0.8 + 0.4 * u01(rng)), std::max(0.5 * extent[a], 1e-3));
            g.log_scale = s.array().log();
            if (flat) {
                g.rotation = yaw_quaternion(2.0 * std::numbers::pi * u01(rng));
            } else {
                g.rotation = Quaternion{u01(rng) - 0.5, u01(rng) - 0.5, u01(rng) - 0.5, u01(rng) - 0.5}.normalized();
            }
            g.logit_opacity = logit(0.6 + 0.35 * u01(rng));
            for (int c = 0; c < 3; ++c)
                g.color[c] = rgb_to_sh(std::clamp(obj.color[c] + 0.3 * (u01(rng) - 0.5), 0.05, 0.95));
            g.identity[obj.label] = 1.0;
            g.dynamic = obj.motion.kind != MotionKind::Static;
            set.base.push_back(g);
            scene.object_of.push_back(static_cast<int>(oi));
        }
    }
    return scene;
}

GaussianSet oracle_at(const SceneScript& script, const OracleScene& scene, int t, std::vector<size_t>* ids) {
    GaussianSet out;
    out.id_dim = scene.rest.id_dim;
    out.sh_degree = scene.rest.sh_degree;
    out.timestep = t;
    if (ids) ids->clear();
    for (size_t i = 0; i < scene.rest.base.size(); ++i) {
        const auto& obj = script.objects[scene.object_of[i]];
        if (obj.appear_at > t) continue;
        GaussianPrimitive g = scene.rest.base[i];
        g.position = move(obj, g.position, t);
        if (obj.motion.kind == MotionKind::Orbit)
            g.rotation = quat_mul(yaw_quaternion(obj.motion.angular_velocity * t), g.rotation);
        out.base.push_back(g);
        if (ids) ids->push_back(i);
    }
    round_to_f32(out);
    return out;
}

LabelMap render_labels(const Camera& cam, const GaussianSet& set) {
    const RenderOutput out = render(cam, set);
    const auto book = one_hot_codebook(set.id_dim);
    LabelMap labels(cam.height, cam.width);
    const int K = set.id_dim;
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            if (out.alpha.at(y, x) <= 0.5) continue;
            const std::span<const double> f(out.id_feature.data.data() + (static_cast<size_t>(y) * cam.width + x) * K,
                                            static_cast<size_t>(K));
            labels.at(y, x) = static_cast<uint8_t>(id_to_label(f, book));
        }
    return labels;
}

void generate(const SceneScript& script, const fs::path& out_dir) {
    script.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
    {
        std::ofstream out(out_dir / "script.json");
        if (!out) throw DataError("cannot write script.json");
        out << script_to_json(script) << '\n';
    }
    const auto cams = script.cameras();
    for (size_t v = 0; v < cams.size(); ++v) save_camera(cams[v], StreamDataset::camera_path(out_dir, static_cast<int>(v)));

    const OracleScene scene = sample_oracle(script);
    std::vector<size_t> prev_ids;
    GaussianSet prev;
    for (int t = 0; t < script.timesteps; ++t) {
        std::vector<size_t> ids;
        const GaussianSet cur = oracle_at(script, scene, t, &ids);
        save_checkpoint(Checkpoint{cur, {}}, StreamDataset::oracle_path(out_dir, t));
        std::vector<long> index_of(scene.rest.base.size(), -1);
        for (size_t k = 0; k < ids.size(); ++k) index_of[ids[k]] = static_cast<long>(k);

        const long nviews = static_cast<long>(cams.size());
#pragma omp parallel for schedule(dynamic)
        for (long lv = 0; lv < nviews; ++lv) {
            const int v = static_cast<int>(lv);
            const Camera& cam = cams[v];
            const RenderOutput img = render(cam, cur);
            write_ppm(img.rgb, StreamDataset::rgb_path(out_dir, v, t));
            write_pgm(render_labels(cam, cur), StreamDataset::label_path(out_dir, v, t));

            Image flow(cam.height, cam.width, 2);
            if (t > 0) {
                const RenderOutput before = render(cam, prev);
                for (int y = 0; y < cam.height; ++y)
                    for (int x = 0; x < cam.width; ++x) {
                        const int d = dominant_gaussian(before, y, x);
                        if (d < 0) continue;
                        const long now = index_of[prev_ids[static_cast<size_t>(d)]];
                        if (now < 0) continue;
                        const Vec2 a = pinhole(cam, cam.to_camera(prev.base[static_cast<size_t>(d)].position));
                        const Vec2 b = pinhole(cam, cam.to_camera(cur.base[static_cast<size_t>(now)].position));
                        flow.at(y, x, 0) = b.x() - a.x();
                        flow.at(y, x, 1) = b.y() - a.y();
                    }
            }
            write_flow(flow, StreamDataset::flow_path(out_dir, v, t));
        }
        prev = cur;
        prev_ids = ids;
    }
}

StreamDataset::StreamDataset(fs::path dir) : dir_(std::move(dir)) {
    if (!fs::is_directory(dir_)) throw DataError("dataset directory not found: " + dir_.string());
    script_ = load_script(dir_ / "script.json");
    for (int v = 0; v < script_.rig.count; ++v) cameras_.push_back(load_camera(camera_path(dir_, v)));
}

std::vector<int> StreamDataset::training_views() const {
    std::vector<int> views;
    for (int v = 0; v < static_cast<int>(cameras_.size()); ++v)
        if (v != held_out_view()) views.push_back(v);
    return views;
}

Image StreamDataset::rgb(int view, int t) const { return read_ppm(rgb_path(dir_, view, t)); }
Image StreamDataset::flow(int view, int t) const { return read_flow(flow_path(dir_, view, t)); }
LabelMap StreamDataset::labels(int view, int t) const { return read_pgm(label_path(dir_, view, t)); }
GaussianSet StreamDataset::oracle(int t) const { return load_checkpoint(oracle_path(dir_, t)).set; }

fs::path StreamDataset::rgb_path(const fs::path& dir, int view, int t) {
    return dir / ("rgb_" + std::to_string(view) + "_" + std::to_string(t) + ".ppm");
}
fs::path StreamDataset::flow_path(const fs::path& dir, int view, int t) {
    return dir / ("flow_" + std::to_string(view) + "_" + std::to_string(t) + ".bin");
}
fs::path StreamDataset::label_path(const fs::path& dir, int view, int t) {
    return dir / ("label_" + std::to_string(view) + "_" + std::to_string(t) + ".pgm");
}
fs::path StreamDataset::camera_path(const fs::path& dir, int view) {
    return dir / ("cam_" + std::to_string(view) + ".json");
}
fs::path StreamDataset::oracle_path(const fs::path& dir, int t) {
    return dir / ("oracle_" + std::to_string(t) + ".bin");
}

}  // namespace dass
