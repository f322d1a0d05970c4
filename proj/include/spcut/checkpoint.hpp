#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "spcut/tensor.hpp"

namespace spcut {

/// Checkpoint container: string metadata plus named tensors. The on-disk
/// format is a text header listing (name, shape, byte offset) per tensor,
/// followed by raw little-endian 64-bit floats; round-trips are bit-exact.
struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& tensor(const std::string& name) const;
    const std::string& meta_value(const std::string& key) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace spcut
