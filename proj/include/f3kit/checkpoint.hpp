#pragma once

#include <filesystem>

#include "f3kit/model.hpp"

namespace f3kit {

// Versioned binary container: magic, format version, a JSON model-config
// block, length-prefixed named records (name, shape, little-endian f64 data)
// for every parameter and batch-norm running buffer, and a trailing CRC-32
// over everything before it.
void save_checkpoint(Model& m, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

uint32_t crc32(const void* data, size_t len, uint32_t seed = 0);

}  // namespace f3kit
