#pragma once

///
/// \file manifest.hpp
///
/// Run manifest written by every CLI command: what ran, with which inputs,
/// seeds and outputs, and how long each stage took. Flat text, written last
/// so every listed output exists on success.
///

#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cvrnn/common.hpp"
#include "cvrnn/data.hpp"

namespace cvrnn {

struct RunManifest {
    std::string command;
    std::string command_line;
    std::string config_digest;
    std::uint64_t master_seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::vector<std::pair<std::string, double>> timings_s;
    std::string version = kVersion;
};

inline std::string format_run_manifest(const RunManifest& m) {
    std::ostringstream out;
    out << "# cvrnn-run-manifest v1\n";
    out << "version = " << m.version << "\n";
    out << "command = " << m.command << "\n";
    out << "command_line = " << m.command_line << "\n";
    if (!m.config_digest.empty()) out << "config_digest = " << m.config_digest << "\n";
    out << "master_seed = " << m.master_seed << "\n";
    for (const auto& p : m.inputs) out << "input = " << p << "\n";
    for (const auto& p : m.outputs) out << "output = " << p << "\n";
    for (const auto& [name, seconds] : m.timings_s)
        out << "timing." << name << "_s = " << seconds << "\n";
    return out.str();
}

inline void write_run_manifest(const std::string& path, const RunManifest& m) {
    write_text_file_atomic(path, format_run_manifest(m));
}

}  // namespace cvrnn
