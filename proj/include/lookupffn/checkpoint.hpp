#pragma once

#include <string>

#include "lookupffn/lookup.hpp"
#include "lookupffn/projection.hpp"

namespace lffn {

/// A lookup layer's persistent state: configuration plus parameters.
struct CheckpointModel {
  LookupConfig cfg;
  Projection proj;
  HashTables tables;
};

/// Flat little-endian binary format:
///   magic   "LFFN" (4 bytes)
///   u32     version (currently 1)
///   u32     d_in, d_out, h, tau
///   u8      variant        (LookupVariant)
///   u8      projection kind (ProjKind)
///   u32     m   (bh: stage count; acdc: depth; otherwise 0)
///   u32     b   (bh: block size, 0 = full width; otherwise 0)
/// followed by float64 parameter blobs in declared order: projection stages,
/// then the table stack T row-major. Blob lengths are implied by the header.
void save_checkpoint(const std::string& path, const CheckpointModel& model);

CheckpointModel load_checkpoint(const std::string& path);

}  // namespace lffn
