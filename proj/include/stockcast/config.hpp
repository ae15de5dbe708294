#pragma once

#include "stockcast/evaluation.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stockcast::config {

/// Flat `key=value` configuration with dotted section prefixes. Every key
/// has a default; unknown keys are rejected. `tune.space.<key>` entries
/// declare search candidates for an existing numeric key, in file order.
class RunConfig {
public:
    RunConfig();

    /// Defaults overlaid with the assignments in `text`. Lines may be blank
    /// or start with `#`. Throws ConfigError with the line number.
    static RunConfig parse(std::string_view text);

    /// Throws ConfigError for unknown keys or values of the wrong type.
    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;

    std::size_t get_size(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<std::string> get_list(const std::string& key) const;
    std::uint64_t seed() const;

    /// Every key with its effective value, one per line in key order,
    /// followed by the tune.space entries in declaration order.
    std::string resolved() const;

    const std::vector<std::pair<std::string, std::string>>& tune_space() const noexcept { return tune_space_; }

    std::vector<eval::ModelFamily> models() const;
    eval::ModelSpec model_spec(eval::ModelFamily family) const;

    /// All known keys with their defaults, in key order.
    static const std::map<std::string, std::string>& defaults();

private:
    std::map<std::string, std::string> values_;
    std::vector<std::pair<std::string, std::string>> tune_space_;
};

/// Splits on commas, trimming blanks; empty input gives an empty list.
std::vector<std::string> split_list(std::string_view text);

}  // namespace stockcast::config
