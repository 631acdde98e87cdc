#pragma once

#include <filesystem>
#include <variant>

#include "quadrom/quadnet.hpp"

namespace quadrom {

/// Versioned single-file model container: a text header with layer sizes and
/// activation tags, followed by normalizer constants and all parameters as
/// raw 64-bit little-endian reals. Reload reproduces evaluations bit-exactly.
void save_checkpoint(const QuadNetModel& model, const std::filesystem::path& path);
void save_checkpoint(const QuadNetMuModel& model, const std::filesystem::path& path);

std::variant<QuadNetModel, QuadNetMuModel> load_checkpoint(
    const std::filesystem::path& path);

}  // namespace quadrom
