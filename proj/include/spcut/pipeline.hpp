#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spcut/hyperparams.hpp"

namespace spcut {

/// Fully validated invocation of one CLI command.
struct RunConfig {
    std::string command; // train | superpixels | segment | eval

    std::filesystem::path image_dir;
    std::filesystem::path template_dir;
    std::filesystem::path map_dir;
    std::filesystem::path seg_dir;
    std::filesystem::path gt_dir;
    std::filesystem::path checkpoint;
    std::filesystem::path out_dir;

    HyperParams hp;
    int m_target = 100;
    double compactness = 10.0;
    int slic_iters = 10;

    std::uint64_t seed = 0;
    int threads = 1;
};

/// Parses command line (and optional --config key=value file). Throws
/// UsageError on unknown flags, missing paths, or out-of-range values.
/// Returns a config with empty `command` when help was requested.
RunConfig parse_config(const std::vector<std::string>& args);

/// Executes one command; artifacts are written atomically under out_dir.
void run_command(const RunConfig& cfg);

/// Maps an exception to the process exit code contract:
/// 0 success, 2 usage error, 3 data error, 4 numeric error.
int exit_code_for(const std::exception& e);

} // namespace spcut
