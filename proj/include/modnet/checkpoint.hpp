#pragma once

#include <string>

#include "modnet/model.hpp"

namespace modnet {

/// Binary little-endian checkpoint: magic "MODN", format version u32 = 1,
/// config digest u64, tensor count u32, then per tensor: name length u16,
/// name bytes, rank u8, dims u32 each, raw f64 data. Covers every parameter
/// and batch-norm running statistic, so a save/load round-trip reproduces the
/// model bit-exactly.
void save_checkpoint(const std::string& path, ModNetParams& params);

/// Loads into an existing parameter set; the file must carry the same format
/// version and the exact dimension table of params.config().
void load_checkpoint(const std::string& path, ModNetParams& params);

}  // namespace modnet
