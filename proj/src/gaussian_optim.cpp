#include "dass/gaussian_optim.hpp"

#include "dass/error.hpp"

namespace dass {

namespace {

template <typename F>
std::vector<double> gather(const std::vector<GaussianPrimitive>& prims, int stride, F&& get) {
    std::vector<double> out;
    out.reserve(prims.size() * stride);
    for (const auto& g : prims) get(g, out);
    return out;
}

void push_position(const GaussianPrimitive& g, std::vector<double>& o) { o.insert(o.end(), g.position.data(), g.position.data() + 3); }
void push_rotation(const GaussianPrimitive& g, std::vector<double>& o) {
    o.insert(o.end(), {g.rotation.w, g.rotation.x, g.rotation.y, g.rotation.z});
}
void push_scale(const GaussianPrimitive& g, std::vector<double>& o) { o.insert(o.end(), g.log_scale.data(), g.log_scale.data() + 3); }
void push_opacity(const GaussianPrimitive& g, std::vector<double>& o) { o.push_back(g.logit_opacity); }
void push_color(const GaussianPrimitive& g, std::vector<double>& o) { o.insert(o.end(), g.color.begin(), g.color.end()); }
void push_identity(const GaussianPrimitive& g, std::vector<double>& o) { o.insert(o.end(), g.identity.begin(), g.identity.end()); }

}  // namespace

void GaussianLr::validate() const {
    for (double v : {position, rotation, log_scale, logit_opacity, color, identity})
        if (!(v > 0.0)) throw UsageError("learning rates must be positive");
}

GaussianOptimizer::GaussianOptimizer(const std::vector<GaussianPrimitive>& prims, const GaussianLr& lr,
                                     double scene_extent, bool train_identity)
    : position_("position", gather(prims, 3, push_position), lr.position * scene_extent),
      rotation_("rotation", gather(prims, 4, push_rotation), lr.rotation),
      log_scale_("log_scale", gather(prims, 3, push_scale), lr.log_scale),
      opacity_("logit_opacity", gather(prims, 1, push_opacity), lr.logit_opacity),
      color_("color", gather(prims, 0, push_color), lr.color),
      identity_("identity", gather(prims, 0, push_identity), lr.identity),
      position_lr_(lr.position * scene_extent),
      train_identity_(train_identity) {
    lr.validate();
    if (!prims.empty()) {
        color_size_ = static_cast<int>(prims.front().color.size());
        id_dim_ = static_cast<int>(prims.front().identity.size());
    }
}

void GaussianOptimizer::step(std::vector<GaussianPrimitive>& prims, const GaussianGrads& grads, size_t offset,
                             const std::vector<double>* extra_logit) {
    const size_t n = prims.size();
    if (n != size()) throw Error("GaussianOptimizer: primitive count changed");
    if (offset + n > grads.position.size()) throw Error("GaussianOptimizer: gradients do not cover the run");
    if (n == 0) return;
    std::vector<double> gp(n * 3), gr(n * 4), gs(n * 3), go(n), gc(n * color_size_), gi(n * id_dim_);
    for (size_t k = 0; k < n; ++k) {
        const size_t i = offset + k;
        for (int a = 0; a < 3; ++a) {
            gp[k * 3 + a] = grads.position[i][a];
            gs[k * 3 + a] = grads.log_scale[i][a];
        }
        for (int a = 0; a < 4; ++a) gr[k * 4 + a] = grads.rotation[i][a];
        go[k] = grads.logit_opacity[i] + (extra_logit ? (*extra_logit)[k] : 0.0);
        for (int c = 0; c < color_size_; ++c) gc[k * color_size_ + c] = grads.color[i * color_size_ + c];
        for (int c = 0; c < id_dim_; ++c) gi[k * id_dim_ + c] = grads.identity[i * id_dim_ + c];
    }
    adam_step(position_, gp);
    adam_step(rotation_, gr);
    adam_step(log_scale_, gs);
    adam_step(opacity_, go);
    adam_step(color_, gc);
    if (train_identity_) adam_step(identity_, gi);
    for (size_t k = 0; k < n; ++k) {
        GaussianPrimitive& g = prims[k];
        for (int a = 0; a < 3; ++a) {
            g.position[a] = position_.params[k * 3 + a];
            g.log_scale[a] = log_scale_.params[k * 3 + a];
        }
        g.rotation = Quaternion{rotation_.params[k * 4], rotation_.params[k * 4 + 1], rotation_.params[k * 4 + 2],
                                rotation_.params[k * 4 + 3]};
        g.logit_opacity = opacity_.params[k];
        for (int c = 0; c < color_size_; ++c) g.color[c] = color_.params[k * color_size_ + c];
        if (train_identity_)
            for (int c = 0; c < id_dim_; ++c) g.identity[c] = identity_.params[k * id_dim_ + c];
    }
}

void GaussianOptimizer::keep(const std::vector<bool>& keep) {
    position_.keep_rows(keep, 3);
    rotation_.keep_rows(keep, 4);
    log_scale_.keep_rows(keep, 3);
    opacity_.keep_rows(keep, 1);
    color_.keep_rows(keep, color_size_);
    identity_.keep_rows(keep, id_dim_);
}

void GaussianOptimizer::append(const GaussianPrimitive& g) {
    if (size() == 0) {
        color_size_ = static_cast<int>(g.color.size());
        id_dim_ = static_cast<int>(g.identity.size());
    }
    std::vector<double> tmp;
    push_position(g, tmp);
    position_.append(tmp);
    tmp.clear();
    push_rotation(g, tmp);
    rotation_.append(tmp);
    tmp.clear();
    push_scale(g, tmp);
    log_scale_.append(tmp);
    opacity_.append(std::vector<double>{g.logit_opacity});
    color_.append(g.color);
    identity_.append(g.identity);
}

}  // namespace dass
