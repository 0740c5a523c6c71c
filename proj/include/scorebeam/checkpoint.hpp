#pragma once

#include <string>

#include "scorebeam/tape.hpp"

namespace scorebeam {

/// Named-tensor container file.
/// Layout (little-endian): magic "BSWT", version u32, entry count u32,
/// then per entry: name length u16, UTF-8 name, rank u8, dims u32 each,
/// row-major f64 payload.
void save_checkpoint(const ParamStore& params, const std::string& path);

/// Reads every entry into `params`, replacing tensors that already exist.
void load_checkpoint(ParamStore& params, const std::string& path);

/// Like load_checkpoint, but requires the file's entries to match the
/// already-registered parameters exactly (names and shapes), so a
/// checkpoint cannot be silently applied to a different architecture.
void load_checkpoint_strict(ParamStore& params, const std::string& path);

}  // namespace scorebeam
