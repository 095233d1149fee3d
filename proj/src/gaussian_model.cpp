#include "dass/gaussian_model.hpp"

#include "dass/binary_io.hpp"
#include "dass/error.hpp"

#include <cmath>

namespace dass {

namespace {

constexpr uint32_t kCheckpointVersion = 1;  // f32 records
constexpr uint32_t kSnapshotVersion = 2;    // f64 records

template <typename Put>
void put_primitive(const GaussianPrimitive& g, Put&& put, io::Writer& w) {
    for (int k = 0; k < 3; ++k) put(g.position[k]);
    put(g.rotation.w);
    put(g.rotation.x);
    put(g.rotation.y);
    put(g.rotation.z);
    for (int k = 0; k < 3; ++k) put(g.log_scale[k]);
    put(g.logit_opacity);
    for (double c : g.color) put(c);
    for (double e : g.identity) put(e);
    w.u8(g.dynamic ? 1 : 0);
}

template <typename Get>
GaussianPrimitive get_primitive(const GaussianSet& shape, Get&& get, io::Reader& r) {
    GaussianPrimitive g = shape.make_primitive();
    for (int k = 0; k < 3; ++k) g.position[k] = get();
    g.rotation.w = get();
    g.rotation.x = get();
    g.rotation.y = get();
    g.rotation.z = get();
    for (int k = 0; k < 3; ++k) g.log_scale[k] = get();
    g.logit_opacity = get();
    for (double& c : g.color) c = get();
    for (double& e : g.identity) e = get();
    const uint8_t flag = r.u8();
    if (flag > 1) throw DataError("corrupt dynamic flag");
    g.dynamic = flag == 1;
    return g;
}

void write_header(const GaussianSet& set, uint32_t version, io::Writer& w) {
    w.magic("DASS");
    w.u32(version);
    w.u32(static_cast<uint32_t>(set.base.size()));
    w.u32(static_cast<uint32_t>(set.var.size()));
    w.u32(static_cast<uint32_t>(set.id_dim));
    w.u32(static_cast<uint32_t>(set.sh_degree));
}

struct Header {
    uint32_t version, n_base, n_var, id_dim, sh_degree;
};

Header read_header(io::Reader& r) {
    r.expect_magic("DASS");
    Header h{r.u32(), r.u32(), r.u32(), r.u32(), r.u32()};
    if (h.sh_degree > 1) throw DataError("unsupported SH degree");
    if (h.id_dim == 0 || h.id_dim > 255) throw DataError("bad identity dimension");
    // Reject counts that cannot possibly fit before allocating.
    const size_t min_record = 4 * 14 + 1;
    if ((static_cast<size_t>(h.n_base) + h.n_var) * min_record > r.remaining())
        throw DataError("truncated gaussian records");
    return h;
}

}  // namespace

GaussianPrimitive GaussianSet::make_primitive() const {
    GaussianPrimitive g;
    g.color.assign(static_cast<size_t>(color_size()), 0.0);
    g.identity.assign(static_cast<size_t>(id_dim), 0.0);
    return g;
}

void GaussianSet::validate() const {
    const auto check = [&](const GaussianPrimitive& g) {
        if (!g.position.allFinite()) throw DataError("non-finite position");
        const Vec3 s = g.scale();
        if (!s.allFinite() || !(s.minCoeff() > 0.0)) throw DataError("invalid scale");
        const double o = g.opacity();
        if (!(o > 0.0 && o < 1.0)) throw DataError("opacity outside (0,1)");
        if (static_cast<int>(g.identity.size()) != id_dim) throw DataError("identity length mismatch");
        if (static_cast<int>(g.color.size()) != color_size()) throw DataError("color length mismatch");
    };
    for (const auto& g : base) check(g);
    for (const auto& g : var) check(g);
}

MaskedView apply_mask(const GaussianSet& set, const InheritanceMask& mask) {
    if (mask.logits.size() != set.var.size())
        throw Error("apply_mask: mask length " + std::to_string(mask.logits.size()) +
                    " does not match var count " + std::to_string(set.var.size()));
    MaskedView view;
    view.opacity.reserve(set.size());
    view.scale.reserve(set.size());
    view.gate.reserve(set.size());
    for (const auto& g : set.base) {
        view.opacity.push_back(g.opacity());
        view.scale.push_back(g.scale());
        view.gate.push_back(1.0);
    }
    for (size_t i = 0; i < set.var.size(); ++i) {
        const double q = mask_gate(mask.logits[i]);
        view.opacity.push_back(q * set.var[i].opacity());
        view.scale.push_back(q * set.var[i].scale());
        view.gate.push_back(q);
    }
    return view;
}

GaussianSet finalize_mask(const GaussianSet& set, const InheritanceMask& mask) {
    if (mask.logits.size() != set.var.size()) throw Error("finalize_mask: mask length mismatch");
    GaussianSet out = set;
    out.var.clear();
    for (size_t i = 0; i < set.var.size(); ++i)
        if (mask_gate(mask.logits[i]) > 0.0) out.var.push_back(set.var[i]);
    return out;
}

std::vector<uint8_t> snapshot(const GaussianSet& set) {
    io::Writer w;
    write_header(set, kSnapshotVersion, w);
    w.i64(set.timestep);
    const auto put = [&](double v) { w.f64(v); };
    for (const auto& g : set.base) put_primitive(g, put, w);
    for (const auto& g : set.var) put_primitive(g, put, w);
    return w.take();
}

GaussianSet restore(const std::vector<uint8_t>& state) {
    io::Reader r(state);
    const Header h = read_header(r);
    if (h.version != kSnapshotVersion) throw DataError("restore: not a snapshot blob");
    GaussianSet set;
    set.id_dim = static_cast<int>(h.id_dim);
    set.sh_degree = static_cast<int>(h.sh_degree);
    set.timestep = static_cast<int>(r.i64());
    const auto get = [&] { return r.f64(); };
    for (uint32_t i = 0; i < h.n_base; ++i) set.base.push_back(get_primitive(set, get, r));
    for (uint32_t i = 0; i < h.n_var; ++i) set.var.push_back(get_primitive(set, get, r));
    if (!r.done()) throw DataError("restore: trailing bytes");
    return set;
}

void round_to_f32(GaussianSet& set) {
    const auto rnd = [](double& v) {
        volatile float f = static_cast<float>(v);
        v = f;
    };
    for (size_t i = 0; i < set.size(); ++i) {
        auto& g = set[i];
        for (int k = 0; k < 3; ++k) {
            rnd(g.position[k]);
            rnd(g.log_scale[k]);
        }
        rnd(g.rotation.w);
        rnd(g.rotation.x);
        rnd(g.rotation.y);
        rnd(g.rotation.z);
        rnd(g.logit_opacity);
        for (double& c : g.color) rnd(c);
        for (double& e : g.identity) rnd(e);
    }
}

std::vector<uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    const GaussianSet& set = ckpt.set;
    io::Writer w;
    write_header(set, kCheckpointVersion, w);
    const auto put = [&](double v) { w.f32(static_cast<float>(v)); };
    for (const auto& g : set.base) put_primitive(g, put, w);
    for (const auto& g : set.var) put_primitive(g, put, w);
    // Timestep travels as a section so the primitive layout stays fixed.
    io::Writer step;
    step.i64(set.timestep);
    auto sections = ckpt.sections;
    sections["STEP"] = step.take();
    for (const auto& [tag, payload] : sections) {
        if (tag.size() != 4) throw Error("checkpoint section tags must be 4 bytes");
        w.magic(tag);
        w.u32(static_cast<uint32_t>(payload.size()));
        w.bytes(payload.data(), payload.size());
    }
    return w.take();
}

Checkpoint decode_checkpoint(const std::vector<uint8_t>& bytes) {
    io::Reader r(bytes);
    const Header h = read_header(r);
    if (h.version != kCheckpointVersion) throw DataError("unsupported checkpoint version");
    Checkpoint ckpt;
    GaussianSet& set = ckpt.set;
    set.id_dim = static_cast<int>(h.id_dim);
    set.sh_degree = static_cast<int>(h.sh_degree);
    const auto get = [&] { return static_cast<double>(r.f32()); };
    for (uint32_t i = 0; i < h.n_base; ++i) set.base.push_back(get_primitive(set, get, r));
    for (uint32_t i = 0; i < h.n_var; ++i) set.var.push_back(get_primitive(set, get, r));
    while (!r.done()) {
        std::string tag = r.tag(4);
        const uint32_t len = r.u32();
        if (len > r.remaining()) throw DataError("truncated checkpoint section " + tag);
        std::vector<uint8_t> payload(len);
        r.bytes(payload.data(), len);
        ckpt.sections[std::move(tag)] = std::move(payload);
    }
    if (auto it = ckpt.sections.find("STEP"); it != ckpt.sections.end()) {
        io::Reader sr(it->second);
        set.timestep = static_cast<int>(sr.i64());
        ckpt.sections.erase(it);
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    io::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(io::read_file(path));
}

int identity_label(const GaussianPrimitive& g) {
    int best = 0;
    for (int k = 1; k < static_cast<int>(g.identity.size()); ++k)
        if (g.identity[k] > g.identity[best]) best = k;
    return best;
}

}  // namespace dass
