#pragma once

#include <filesystem>
#include <string>

#include "esd/model.hpp"

namespace esd::model {

/// Binary checkpoint: config, vocabulary and every named tensor, written as
/// little-endian 64-bit values so files are byte-identical across platforms.
/// Layout is documented in docs/formats.md (Checkpoint).
std::string serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace esd::model
