#pragma once

#include "dass/gaussian_model.hpp"
#include "dass/geometry.hpp"
#include "dass/image.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dass {

enum class MotionKind { Static, Linear, Orbit };

struct Motion {
    MotionKind kind = MotionKind::Static;
    Vec3 velocity = Vec3::Zero();  // scene units per timestep (linear)
    Vec3 center = Vec3::Zero();    // orbit center, rotation about world z
    double angular_velocity = 0.0; // radians per timestep (orbit)
};

struct SceneObject {
    int label = 1;
    int gaussian_count = 100;
    Vec3 aabb_lo = Vec3::Zero();
    Vec3 aabb_hi = Vec3::Ones();
    Vec3 color = Vec3::Constant(0.5);
    Motion motion;
    int appear_at = 0;
};

// Cameras sit on a horizontal ring around the world z axis looking at
// `target`; camera 0 is the held-out evaluation view.
struct RingRig {
    int count = 9;
    double radius = 3.0;
    double height = 2.0;
    double fov_deg = 50.0;
    Vec3 target = Vec3::Zero();
};

struct SceneScript {
    uint64_t seed = 42;
    int timesteps = 20;
    int width = 128;
    int height = 128;
    int id_dim = 8;
    RingRig rig;
    std::vector<SceneObject> objects;

    // Throws DataError on invalid scripts.
    void validate() const;
    std::vector<Camera> cameras() const;
};

SceneScript default_script();
std::string script_to_json(const SceneScript& script);
SceneScript script_from_json(const std::string& text);
SceneScript load_script(const std::filesystem::path& path);

// Oracle gaussians with their object labels, before motion is applied.
struct OracleScene {
    GaussianSet rest;             // every object's gaussians at t = 0 placement
    std::vector<int> object_of;   // object index per gaussian
};

OracleScene sample_oracle(const SceneScript& script);
// Oracle set at timestep t: moved gaussians of objects present at t. When
// `ids` is given it receives each output gaussian's index into `rest`.
GaussianSet oracle_at(const SceneScript& script, const OracleScene& scene, int t, std::vector<size_t>* ids = nullptr);

// Label of each pixel: the object with the largest compositing weight where
// alpha > 0.5, otherwise 0. Requires one-hot identities.
LabelMap render_labels(const Camera& cam, const GaussianSet& set);

// Writes the full dataset layout into out_dir.
void generate(const SceneScript& script, const std::filesystem::path& out_dir);

// Read side of a generated dataset.
class StreamDataset {
public:
    explicit StreamDataset(std::filesystem::path dir);

    const std::filesystem::path& dir() const { return dir_; }
    const SceneScript& script() const { return script_; }
    const std::vector<Camera>& cameras() const { return cameras_; }
    int timesteps() const { return script_.timesteps; }
    int held_out_view() const { return 0; }
    std::vector<int> training_views() const;

    Image rgb(int view, int t) const;
    Image flow(int view, int t) const;
    LabelMap labels(int view, int t) const;
    GaussianSet oracle(int t) const;

    static std::filesystem::path rgb_path(const std::filesystem::path& dir, int view, int t);
    static std::filesystem::path flow_path(const std::filesystem::path& dir, int view, int t);
    static std::filesystem::path label_path(const std::filesystem::path& dir, int view, int t);
    static std::filesystem::path camera_path(const std::filesystem::path& dir, int view);
    static std::filesystem::path oracle_path(const std::filesystem::path& dir, int t);

private:
    std::filesystem::path dir_;
    SceneScript script_;
    std::vector<Camera> cameras_;
};

}  // namespace dass
