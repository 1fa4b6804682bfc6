#pragma once

#include <cstdint>
#include <ctime>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "embedkit/version.hpp"

namespace embedkit {

// Reproducibility record written next to every output artifact. Everything
// outside the "volatile" block is a pure function of (flags, inputs, seed).
struct RunManifest {
    std::string command;
    nlohmann::json resolved_config = nlohmann::json::object();
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    double duration_seconds = 0.0;
    std::string timestamp_utc;
};

inline std::string utc_timestamp() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
#if defined(_WIN32)
    gmtime_s(&tm, &now);
#else
    gmtime_r(&now, &tm);
#endif
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline nlohmann::json to_json(const RunManifest& manifest) {
    return {{"command", manifest.command},
            {"resolved_config", manifest.resolved_config},
            {"seed", manifest.seed},
            {"inputs", manifest.inputs},
            {"outputs", manifest.outputs},
            {"version", kVersion},
            {"volatile",
             {{"duration_seconds", manifest.duration_seconds},
              {"timestamp_utc", manifest.timestamp_utc}}}};
}

inline std::string manifest_path_for(const std::string& artifact_path) {
    return artifact_path + ".manifest.json";
}

inline void write_manifest(const RunManifest& manifest, const std::string& artifact_path) {
    const std::string path = manifest_path_for(artifact_path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    out << to_json(manifest).dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing file: " + path);
}

}  // namespace embedkit
