#pragma once

// Line-based experiment configuration:
//
//   # comment
//   [problem]
//   generator = heat
//   modes = 16
//   [study]
//   sweep = 2, 4, 8
//
// Unknown sections or keys, duplicate keys and keys outside a section are
// errors. The raw text is kept so reports can echo it verbatim.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mvlab/errors.hpp"

namespace mvlab {

namespace detail {

inline std::string trim(std::string_view s)
{
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return std::string(s.substr(b, e - b));
}

inline const std::map<std::string, std::set<std::string>>& config_schema()
{
    static const std::map<std::string, std::set<std::string>> schema = {
        {"problem",
         {"generator", "a", "diag", "modes", "diffusivity", "grid", "q_const", "q_sin", "r_const", "r_sin",
          "drift_linear", "drift_mean_field", "drift_shift", "diffusion_sigma", "diffusion_mean_field",
          "noise_kappas", "noise_dim", "noise_decay", "x0", "x0_std", "noise_scale", "T", "steps", "particles",
          "seed", "record_every"}},
        {"study",
         {"kind", "family", "sweep", "rho_points", "slope_target", "slope_tol", "final_ratio", "epsilon_generator",
          "mode", "lambda_limit", "bump_amplitude", "bump_mode", "perturb_amplitude", "y0", "y0_std", "replicates",
          "orders", "x0_grid", "calibration_seed", "check_seeds", "iterations", "floor_seeds"}},
    };
    return schema;
}

} // namespace detail

class config_file {
public:
    static config_file parse(const std::string& text)
    {
        config_file cfg;
        std::istringstream in(text);
        std::string line;
        std::string section;
        int lineno = 0;
        const auto& schema = detail::config_schema();
        while (std::getline(in, line)) {
            ++lineno;
            cfg.raw_.push_back(line);
            std::string body = line;
            if (const auto hash = body.find('#'); hash != std::string::npos)
                body.erase(hash);
            body = detail::trim(body);
            if (body.empty())
                continue;
            const std::string where = "line " + std::to_string(lineno) + ": ";
            if (body.front() == '[') {
                if (body.back() != ']')
                    throw config_error(where + "malformed section header");
                section = detail::trim(std::string_view(body).substr(1, body.size() - 2));
                if (!schema.contains(section))
                    throw config_error(where + "unknown section [" + section + "]");
                continue;
            }
            const auto eq = body.find('=');
            if (eq == std::string::npos)
                throw config_error(where + "expected 'key = value'");
            const std::string key = detail::trim(std::string_view(body).substr(0, eq));
            const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
            if (section.empty())
                throw config_error(where + "key '" + key + "' outside of a section");
            if (!schema.at(section).contains(key))
                throw config_error(where + "unknown key '" + key + "' in [" + section + "]");
            if (value.empty())
                throw config_error(where + "empty value for '" + key + "'");
            const std::string full = section + "." + key;
            if (cfg.values_.contains(full))
                throw config_error(where + "duplicate key '" + full + "'");
            cfg.values_[full] = value;
        }
        return cfg;
    }

    static config_file load(const std::string& path)
    {
        std::ifstream in(path);
        if (!in)
            throw config_error("cannot open config '" + path + "'");
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    bool has(const std::string& key) const { return values_.contains(key); }

    /// Overrides keep the raw text unchanged and are listed separately.
    void set(const std::string& key, const std::string& value)
    {
        const auto dot = key.find('.');
        const auto& schema = detail::config_schema();
        if (dot == std::string::npos || !schema.contains(key.substr(0, dot)) ||
            !schema.at(key.substr(0, dot)).contains(key.substr(dot + 1)))
            throw config_error("unknown override key '" + key + "'");
        values_[key] = value;
        overrides_.push_back(key + " = " + value);
    }

    std::string get_string(const std::string& key, const std::string& fallback) const
    {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const
    {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : to_double(key, it->second);
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const
    {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : to_u64(key, it->second);
    }

    std::vector<double> get_list(const std::string& key, std::vector<double> fallback = {}) const
    {
        const auto it = values_.find(key);
        if (it == values_.end())
            return fallback;
        std::vector<double> out;
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ','))
            out.push_back(to_double(key, detail::trim(item)));
        return out;
    }

    std::vector<std::uint64_t> get_u64_list(const std::string& key, std::vector<std::uint64_t> fallback = {}) const
    {
        const auto it = values_.find(key);
        if (it == values_.end())
            return fallback;
        std::vector<std::uint64_t> out;
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ','))
            out.push_back(to_u64(key, detail::trim(item)));
        return out;
    }

    const std::vector<std::string>& raw_lines() const noexcept { return raw_; }
    const std::vector<std::string>& overrides() const noexcept { return overrides_; }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

private:
    static double to_double(const std::string& key, const std::string& text)
    {
        double v = 0.0;
        const auto* end = text.data() + text.size();
        const auto res = std::from_chars(text.data(), end, v);
        if (res.ec != std::errc() || res.ptr != end)
            throw config_error("key '" + key + "': '" + text + "' is not a number");
        return v;
    }

    static std::uint64_t to_u64(const std::string& key, const std::string& text)
    {
        std::uint64_t v = 0;
        const auto* end = text.data() + text.size();
        const auto res = std::from_chars(text.data(), end, v);
        if (res.ec != std::errc() || res.ptr != end)
            throw config_error("key '" + key + "': '" + text + "' is not an unsigned integer");
        return v;
    }

    std::vector<std::string> raw_;
    std::vector<std::string> overrides_;
    std::map<std::string, std::string> values_;
};

} // namespace mvlab
