#include "tdiff/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tdiff/errors.hpp"
#include "tdiff/rng.hpp"

namespace tdiff {

namespace {

const char* kKnownKeys[] = {
    "dataset.dir", "dataset.count", "dataset.extent",
    "scene.blob_count", "scene.blob_temp_min", "scene.blob_temp_max",
    "scene.background_gradient", "scene.edge_sharpness",
    "operator.kind", "operator.factor", "operator.blur_taps", "operator.blur_sigma",
    "noise.gaussian_sigma", "noise.fpn_column_sigma", "noise.fpn_row_sigma",
    "noise.fpn_seed",
    "schedule.steps", "schedule.beta_start", "schedule.beta_end",
    "denoiser.preset", "denoiser.patch_size", "denoiser.base_channels",
    "denoiser.channel_multipliers", "denoiser.time_embed_dim",
    "train.learning_rate", "train.batch_size", "train.epochs", "train.steps",
    "train.variance_threshold", "train.checkpoint_every", "train.checkpoint",
    "train.loss_log", "train.resume",
    "grid.patch_size", "grid.stride", "grid.window",
    "guidance.eta_reg", "guidance.scale_ls", "guidance.gamma", "guidance.eta_ddim",
    "guidance.zeta", "guidance.order", "guidance.noise_sigma",
    "sampler.steps", "sampler.dump_dir", "sampler.shift_grid", "sampler.clip_denoised",
    "degrade.input_dir", "degrade.output_dir",
    "restore.input_dir", "restore.output_dir", "restore.checkpoint",
    "evaluate.reference_dir", "evaluate.candidate_dir", "evaluate.records",
    "evaluate.task",
    "ablate.patch_sizes", "ablate.clean", "ablate.degraded", "ablate.sample_steps",
    "ablate.records",
    "seeds.master", "seeds.data", "seeds.noise", "seeds.train", "seeds.restore",
};

bool key_is_known(const std::string& key) {
    for (const char* k : kKnownKeys)
        if (key == k) return true;
    // per-patch-size checkpoints for the ablation harness
    if (key.rfind("ablate.checkpoint.", 0) == 0) {
        const std::string tail = key.substr(18);
        return !tail.empty() &&
               std::all_of(tail.begin(), tail.end(), [](char c) { return std::isdigit(c); });
    }
    return false;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_string(const std::string& text,
                                               const std::string& base_dir) {
    ExperimentConfig cfg;
    cfg.base_dir_ = base_dir;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(lineno) +
                             ": expected 'key = value', got '" + stripped + "'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty key");
        if (cfg.values_.count(key))
            throw UsageError("config key '" + key + "' given twice");
        cfg.values_[key] = value;
    }
    cfg.check_known_keys();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    const auto dir = std::filesystem::path(path).parent_path();
    return from_string(text.str(), dir.empty() ? "." : dir.string());
}

void ExperimentConfig::check_known_keys() const {
    for (const auto& [key, value] : values_)
        if (!key_is_known(key))
            throw UsageError("unknown config key '" + key + "'");
}

bool ExperimentConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string ExperimentConfig::get_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("missing required config key '" + key + "'");
    return it->second;
}

std::string ExperimentConfig::get_string(const std::string& key,
                                         const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

int ExperimentConfig::get_int(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        size_t pos = 0;
        const int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "' is not an integer: '" + v + "'");
    }
}

int ExperimentConfig::get_int(const std::string& key, int fallback) const {
    return has(key) ? get_int(key) : fallback;
}

std::int64_t ExperimentConfig::get_int64(const std::string& key, std::int64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    try {
        size_t pos = 0;
        const std::int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "' is not an integer: '" + v + "'");
    }
}

double ExperimentConfig::get_double(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "' is not a number: '" + v + "'");
    }
}

double ExperimentConfig::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

bool ExperimentConfig::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw UsageError("config key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<std::string> ExperimentConfig::get_string_list(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream in(get_string(key));
    std::string item;
    while (std::getline(in, item, ',')) {
        const std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    if (out.empty()) throw UsageError("config key '" + key + "' is an empty list");
    return out;
}

std::vector<int> ExperimentConfig::get_int_list(const std::string& key) const {
    std::vector<int> out;
    for (const auto& item : get_string_list(key)) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw UsageError("config key '" + key + "' has a non-integer item '" + item + "'");
        }
    }
    return out;
}

std::string ExperimentConfig::resolve_path(const std::string& value) const {
    const std::filesystem::path p(value);
    if (p.is_absolute()) {
        std::cerr << "warning: absolute path '" << value << "' in config\n";
        return value;
    }
    return (std::filesystem::path(base_dir_) / p).string();
}

std::string ExperimentConfig::get_path(const std::string& key) const {
    return resolve_path(get_string(key));
}

std::string ExperimentConfig::get_path(const std::string& key,
                                       const std::string& fallback) const {
    return resolve_path(get_string(key, fallback));
}

std::uint64_t ExperimentConfig::seed_for(const std::string& role) const {
    const std::string key = "seeds." + role;
    if (!master_override_ && has(key))
        return static_cast<std::uint64_t>(get_int64(key, 0));
    const std::uint64_t master = master_override_
                                     ? *master_override_
                                     : static_cast<std::uint64_t>(get_int64("seeds.master", 0));
    return SeededRng(master).fork(role).seed();
}

void ExperimentConfig::override_master_seed(std::uint64_t seed) { master_override_ = seed; }

}  // namespace tdiff
