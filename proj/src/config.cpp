#include "dass/config.hpp"

#include "dass/error.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <variant>

namespace dass {

namespace {

using Slot = std::variant<int*, double*, bool*, std::string*, uint64_t*>;

struct Entry {
    std::string key;
    Slot slot;
};

void add_lr(std::vector<Entry>& e, const std::string& prefix, GaussianLr& lr) {
    e.push_back({prefix + "position", &lr.position});
    e.push_back({prefix + "rotation", &lr.rotation});
    e.push_back({prefix + "log_scale", &lr.log_scale});
    e.push_back({prefix + "logit_opacity", &lr.logit_opacity});
    e.push_back({prefix + "color", &lr.color});
    e.push_back({prefix + "identity", &lr.identity});
}

// Every tunable, in dump order. `uniform_shift` is a bool view of the mode.
std::vector<Entry> entries(PipelineConfig& c, bool& uniform_shift) {
    std::vector<Entry> e = {
        {"seed", &c.seed},
        {"data", &c.data},
        {"out", &c.out},
        {"loss.lambda_dssim", &c.loss.lambda_dssim},
        {"loss.lambda_inher", &c.loss.lambda_inher},
        {"loss.lambda_opacity_reg", &c.loss.lambda_opacity_reg},
        {"init.iterations", &c.init.iterations},
        {"init.from_oracle", &c.init.from_oracle},
        {"init.points", &c.init.points},
        {"init.identity_weight", &c.init.identity_weight},
        {"init.densify_interval", &c.init.densify_interval},
        {"init.densify_until", &c.init.densify_until},
        {"init.tau_pos", &c.init.tau_pos},
        {"init.prune_opacity", &c.init.prune_opacity},
    };
    add_lr(e, "init.lr.", c.init.lr);
    std::vector<Entry> rest = {
        {"inherit.enabled", &c.inherit_enabled},
        {"inherit.steps", &c.inherit.steps},
        {"inherit.m_init", &c.inherit.m_init},
        {"inherit.reset_period", &c.inherit.reset_period},
        {"inherit.lr", &c.inherit.lr},
        {"shift.steps", &c.shift.steps},
        {"shift.lr_tables", &c.shift.lr_tables},
        {"shift.lr_mlp", &c.shift.lr_mlp},
        {"shift.uniform", &uniform_shift},
        {"deform.profile", &c.profile},
        {"deform.warm_start", &c.warm_start},
        {"deform.levels", &c.grid.levels},
        {"deform.base_resolution", &c.grid.base_resolution},
        {"deform.finest_resolution", &c.grid.finest_resolution},
        {"deform.mlp_hidden", &c.grid.mlp_hidden},
        {"deform.mlp_layers", &c.grid.mlp_layers},
        {"mask.enabled", &c.dynamics_enabled},
        {"mask.gamma_op", &c.mask.gamma_op},
        {"mask.rho", &c.mask.rho},
        {"mask.refresh", &c.mask_refresh},
        {"mask.flow", &c.flow},
        {"densify.tau_pos", &c.densify.tau_pos},
        {"densify.tau_err", &c.densify.tau_err},
        {"densify.gamma_err", &c.densify.gamma_err},
        {"densify.steps", &c.densify.steps},
        {"densify.spawn_count", &c.densify.spawn_count},
        {"densify.scale_shrink", &c.densify.scale_shrink},
        {"densify.prune_opacity", &c.densify.prune_opacity},
        {"densify.prune_interval", &c.densify.prune_interval},
        {"densify.spawn_opacity", &c.densify.spawn_opacity},
        {"densify.var_cap_fraction", &c.densify.var_cap_fraction},
        {"densify.position_lr_final", &c.densify.position_lr_final},
        {"densify.error_guidance", &c.densify.error_guidance},
    };
    e.insert(e.end(), rest.begin(), rest.end());
    add_lr(e, "densify.lr.", c.densify.lr);
    return e;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw UsageError("config: bad value '" + v + "' for " + key);
    return out;
}

// Runs `fn` against the entry for `key` on a config whose uniform-shift
// bool is kept in sync with the mode.
template <typename C, typename F>
void with_entry(C& cfg, const std::string& key, F&& fn) {
    PipelineConfig& c = const_cast<PipelineConfig&>(cfg);
    bool uniform = c.shift.mode == ShiftMode::Uniform;
    for (auto& e : entries(c, uniform)) {
        if (e.key != key) continue;
        fn(e.slot);
        c.shift.mode = uniform ? ShiftMode::Uniform : ShiftMode::Dual;
        return;
    }
    throw UsageError("config: unknown key '" + key + "'");
}

}  // namespace

void PipelineConfig::set(const std::string& key, const std::string& value) {
    with_entry(*this, key, [&](Slot& s) {
        std::visit(
            [&](auto* p) {
                using T = std::remove_pointer_t<decltype(p)>;
                if constexpr (std::is_same_v<T, bool>) {
                    if (value == "true" || value == "1")
                        *p = true;
                    else if (value == "false" || value == "0")
                        *p = false;
                    else
                        throw UsageError("config: bad boolean '" + value + "' for " + key);
                } else if constexpr (std::is_same_v<T, std::string>) {
                    *p = value;
                } else {
                    *p = parse_number<T>(key, value);
                }
            },
            s);
    });
}

std::string PipelineConfig::get(const std::string& key) const {
    std::string out;
    with_entry(*this, key, [&](Slot& s) {
        std::visit(
            [&](auto* p) {
                using T = std::remove_pointer_t<decltype(p)>;
                if constexpr (std::is_same_v<T, bool>) {
                    out = *p ? "true" : "false";
                } else if constexpr (std::is_same_v<T, std::string>) {
                    out = *p;
                } else if constexpr (std::is_same_v<T, double>) {
                    std::ostringstream ss;
                    ss.precision(17);
                    ss << *p;
                    out = ss.str();
                } else {
                    out = std::to_string(*p);
                }
            },
            s);
    });
    return out;
}

std::vector<std::string> PipelineConfig::keys() const {
    PipelineConfig copy = *this;
    bool uniform = false;
    std::vector<std::string> out;
    for (const auto& e : entries(copy, uniform)) out.push_back(e.key);
    return out;
}

void PipelineConfig::validate() const {
    loss.validate();
    inherit.validate();
    shift.validate();
    densify.validate();
    grid.validate();
    init.lr.validate();
    dataset_profile();
    if (init.iterations < 0) throw UsageError("init.iterations must be >= 0");
    if (init.points < 1) throw UsageError("init.points must be >= 1");
    if (init.densify_interval < 1) throw UsageError("init.densify_interval must be >= 1");
    if (!(init.identity_weight >= 0.0)) throw UsageError("init.identity_weight must be >= 0");
    if (mask_refresh < 1) throw UsageError("mask.refresh must be >= 1");
    if (!(mask.gamma_op >= 0.0) || !(mask.rho > 0.0 && mask.rho <= 1.0)) throw UsageError("mask thresholds out of range");
    if (flow != "gt" && flow != "blockmatch") throw UsageError("mask.flow must be 'gt' or 'blockmatch'");
}

DatasetProfile PipelineConfig::dataset_profile() const {
    if (profile == "n3dv") return DatasetProfile::N3DV;
    if (profile == "meetroom") return DatasetProfile::MeetRoom;
    throw UsageError("deform.profile must be 'n3dv' or 'meetroom'");
}

PipelineConfig parse_config(const std::string& text, PipelineConfig base) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    base.validate();
    return base;
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

std::string dump_config(const PipelineConfig& cfg) {
    std::string out;
    for (const auto& k : cfg.keys()) out += k + " = " + cfg.get(k) + "\n";
    return out;
}

}  // namespace dass
