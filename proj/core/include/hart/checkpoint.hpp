#pragma once

#include <string>

#include "hart/params.hpp"

namespace hart {

// Checkpoint container, little-endian:
//   bytes 0..7   magic "HARTCKPT"
//   u32          format version (currently 1)
//   u32          entry count
//   per entry:   u32 name length, name bytes,
//                u32 ndim, u64 dims[ndim],
//                f64 values (row-major)
void save_checkpoint(const std::string& path, const ParamList& entries);
ParamList load_checkpoint(const std::string& path);

}  // namespace hart
