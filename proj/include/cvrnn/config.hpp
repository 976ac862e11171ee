#pragma once

///
/// \file config.hpp
///
/// Pipeline configuration plus its flat key-value text format
/// ("layer1.alpha = 1.5", '#' comments) and the sweep grid file format
/// ("layer1.alpha = 0.5, 1.0, 2.0").
///

#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvrnn/common.hpp"

namespace cvrnn {

/// Per-layer dynamics parameters. omega_min/omega_max are the endpoints of
/// the affine pixel-intensity → intrinsic-frequency map.
struct LayerConfig {
    double alpha = 1.0;
    double sigma = 1.0;
    double epsilon = 0.01;
    int steps = 60;
    int record_every = 1;
    double omega_min = 0.0;
    double omega_max = 1.0;
};

struct PipelineConfig {
    int side = 28;
    LayerConfig layer1;
    LayerConfig layer2;
    int background_step = 60;
    // Similarity window over layer-2 recorded steps: a trailing fraction by
    // default, or an explicit inclusive step range when window_first >= 0.
    double window_fraction = 0.5;
    int window_first = -1;
    int window_last = -1;
    int clusters = 0;  // 0 = auto (eigengap)
    std::uint64_t seed = 1;
};

inline void validate(const LayerConfig& layer, const std::string& name) {
    if (!(layer.sigma > 0.0))
        throw std::invalid_argument(name + ".sigma must be > 0");
    if (layer.steps < 1) throw std::invalid_argument(name + ".steps must be >= 1");
    if (layer.record_every < 1)
        throw std::invalid_argument(name + ".record_every must be >= 1");
    if (!(layer.omega_min <= layer.omega_max))
        throw std::invalid_argument(name + ".omega_min must be <= " + name +
                                    ".omega_max");
}

inline void validate(const PipelineConfig& cfg) {
    if (cfg.side < 2) throw std::invalid_argument("side must be >= 2");
    validate(cfg.layer1, "layer1");
    validate(cfg.layer2, "layer2");
    if (cfg.background_step < 1 || cfg.background_step > cfg.layer1.steps)
        throw std::invalid_argument("background_step must be in [1, layer1.steps]");
    if (cfg.window_first < 0) {
        if (!(cfg.window_fraction > 0.0) || cfg.window_fraction > 1.0)
            throw std::invalid_argument("similarity_window fraction must be in (0, 1]");
    } else if (cfg.window_last < cfg.window_first) {
        throw std::invalid_argument("similarity_window range must be ascending");
    }
    if (cfg.clusters < 0) throw std::invalid_argument("clusters must be 'auto' or >= 1");
}

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& v, std::size_t line) {
    try {
        std::size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return out;
    } catch (const std::exception&) {
        throw parse_error("expected a number, got '" + v + "'", line);
    }
}

inline long parse_long(const std::string& v, std::size_t line) {
    try {
        std::size_t used = 0;
        long out = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return out;
    } catch (const std::exception&) {
        throw parse_error("expected an integer, got '" + v + "'", line);
    }
}

inline std::uint64_t parse_u64(const std::string& v, std::size_t line) {
    try {
        std::size_t used = 0;
        std::uint64_t out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return out;
    } catch (const std::exception&) {
        throw parse_error("expected an unsigned integer, got '" + v + "'", line);
    }
}

inline bool apply_layer_kv(LayerConfig& layer, const std::string& field,
                           const std::string& value, std::size_t line) {
    if (field == "alpha") layer.alpha = parse_double(value, line);
    else if (field == "sigma") layer.sigma = parse_double(value, line);
    else if (field == "epsilon") layer.epsilon = parse_double(value, line);
    else if (field == "steps") layer.steps = static_cast<int>(parse_long(value, line));
    else if (field == "record_every")
        layer.record_every = static_cast<int>(parse_long(value, line));
    else if (field == "omega_min") layer.omega_min = parse_double(value, line);
    else if (field == "omega_max") layer.omega_max = parse_double(value, line);
    else return false;
    return true;
}

}  // namespace detail

/// Applies one dotted key to the config. Throws parse_error (carrying the
/// given line number) for unknown keys or malformed values.
inline void apply_config_kv(PipelineConfig& cfg, const std::string& key,
                            const std::string& value, std::size_t line = 0) {
    if (key == "side") {
        cfg.side = static_cast<int>(detail::parse_long(value, line));
        return;
    }
    if (key.rfind("layer1.", 0) == 0) {
        if (detail::apply_layer_kv(cfg.layer1, key.substr(7), value, line)) return;
    } else if (key.rfind("layer2.", 0) == 0) {
        if (detail::apply_layer_kv(cfg.layer2, key.substr(7), value, line)) return;
    } else if (key == "background_step") {
        cfg.background_step = static_cast<int>(detail::parse_long(value, line));
        return;
    } else if (key == "similarity_window") {
        std::size_t colon = value.find(':');
        if (colon == std::string::npos) {
            cfg.window_fraction = detail::parse_double(value, line);
            cfg.window_first = cfg.window_last = -1;
        } else {
            cfg.window_first = static_cast<int>(
                detail::parse_long(detail::trim(value.substr(0, colon)), line));
            cfg.window_last = static_cast<int>(
                detail::parse_long(detail::trim(value.substr(colon + 1)), line));
        }
        return;
    } else if (key == "clusters") {
        cfg.clusters = value == "auto"
                           ? 0
                           : static_cast<int>(detail::parse_long(value, line));
        return;
    } else if (key == "seed") {
        cfg.seed = detail::parse_u64(value, line);
        return;
    }
    throw parse_error("unknown config key '" + key + "'", line);
}

/// Parses the flat key-value config text.
inline PipelineConfig pipeline_config_from_text(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw parse_error("expected 'key = value'", lineno);
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw parse_error("expected 'key = value'", lineno);
        apply_config_kv(cfg, key, value, lineno);
    }
    validate(cfg);
    return cfg;
}

/// Canonical serialization (fixed key order; shortest round-trip doubles).
inline std::string pipeline_config_to_text(const PipelineConfig& cfg) {
    using detail::format_double;
    std::ostringstream out;
    out << "side = " << cfg.side << "\n";
    auto layer = [&](const char* name, const LayerConfig& l) {
        out << name << ".alpha = " << format_double(l.alpha) << "\n";
        out << name << ".sigma = " << format_double(l.sigma) << "\n";
        out << name << ".epsilon = " << format_double(l.epsilon) << "\n";
        out << name << ".steps = " << l.steps << "\n";
        out << name << ".record_every = " << l.record_every << "\n";
        out << name << ".omega_min = " << format_double(l.omega_min) << "\n";
        out << name << ".omega_max = " << format_double(l.omega_max) << "\n";
    };
    layer("layer1", cfg.layer1);
    layer("layer2", cfg.layer2);
    out << "background_step = " << cfg.background_step << "\n";
    if (cfg.window_first >= 0)
        out << "similarity_window = " << cfg.window_first << ":" << cfg.window_last
            << "\n";
    else
        out << "similarity_window = " << format_double(cfg.window_fraction) << "\n";
    if (cfg.clusters > 0)
        out << "clusters = " << cfg.clusters << "\n";
    else
        out << "clusters = auto\n";
    out << "seed = " << cfg.seed << "\n";
    return out.str();
}

/// FNV-1a 64 digest of the canonical serialization, as 16 hex chars.
inline std::string config_digest(const PipelineConfig& cfg) {
    std::string text = pipeline_config_to_text(cfg);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = hex[h & 0xF];
        h >>= 4;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sweep grid files
// ---------------------------------------------------------------------------

/// One grid axis: a config key and the values it sweeps over.
struct GridAxis {
    std::string key;
    std::vector<std::string> values;
};

/// Parses "key = v1, v2, v3" lines. Keys are validated against the config
/// schema immediately so a typo fails before any evaluation runs.
inline std::vector<GridAxis> parse_sweep_grid(const std::string& text) {
    std::vector<GridAxis> axes;
    std::istringstream in(text);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw parse_error("expected 'key = v1, v2, ...'", lineno);
        GridAxis axis;
        axis.key = detail::trim(line.substr(0, eq));
        std::istringstream vals(line.substr(eq + 1));
        std::string v;
        while (std::getline(vals, v, ',')) {
            v = detail::trim(v);
            if (!v.empty()) axis.values.push_back(v);
        }
        if (axis.key.empty() || axis.values.empty())
            throw parse_error("expected 'key = v1, v2, ...'", lineno);
        PipelineConfig probe;
        for (const auto& value : axis.values)
            apply_config_kv(probe, axis.key, value, lineno);  // validates key+values
        axes.push_back(std::move(axis));
    }
    return axes;
}

/// Cartesian product of the grid axes over a base config; the last axis
/// varies fastest. Grid points that fail validation are skipped.
inline std::vector<PipelineConfig> expand_grid(const PipelineConfig& base,
                                               const std::vector<GridAxis>& axes) {
    std::vector<PipelineConfig> points;
    std::size_t total = 1;
    for (const auto& a : axes) total *= a.values.size();
    points.reserve(total);
    for (std::size_t idx = 0; idx < total; ++idx) {
        PipelineConfig cfg = base;
        std::size_t rem = idx;
        for (std::size_t a = axes.size(); a-- > 0;) {
            const auto& axis = axes[a];
            std::size_t pick = rem % axis.values.size();
            rem /= axis.values.size();
            apply_config_kv(cfg, axis.key, axis.values[pick], 0);
        }
        try {
            validate(cfg);
        } catch (const std::exception&) {
            continue;
        }
        points.push_back(cfg);
    }
    return points;
}

}  // namespace cvrnn
