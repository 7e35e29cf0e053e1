#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tdiff {

// Flat "section.key = value" experiment configuration. One file fully
// determines a run; unknown keys are rejected so typos never pass silently.
class ExperimentConfig {
public:
    static ExperimentConfig load(const std::string& path);
    static ExperimentConfig from_string(const std::string& text,
                                        const std::string& base_dir = ".");

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key) const;
    int get_int(const std::string& key, int fallback) const;
    std::int64_t get_int64(const std::string& key, std::int64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<int> get_int_list(const std::string& key) const;
    std::vector<std::string> get_string_list(const std::string& key) const;

    // Paths are resolved against the config file's directory; absolute paths
    // are allowed but warned about.
    std::string resolve_path(const std::string& value) const;
    std::string get_path(const std::string& key) const;
    std::string get_path(const std::string& key, const std::string& fallback) const;

    // Named seed, derived from seeds.master when no explicit override exists.
    std::uint64_t seed_for(const std::string& role) const;
    void override_master_seed(std::uint64_t seed);

    const std::string& base_dir() const { return base_dir_; }
    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    void check_known_keys() const;

    std::map<std::string, std::string> values_;
    std::string base_dir_ = ".";
    std::optional<std::uint64_t> master_override_;
};

}  // namespace tdiff
