#pragma once

#include "graph.hpp"

#include <string>

namespace armor {

// single binary file: header (magic "ARMOR1", version u32, param count u32),
// then per parameter: name length u32 + UTF-8 name + rank u64 + dims (u64 each)
// + row-major f64 payload. everything little-endian; round-trips bit-exactly.
void save_checkpoint(const param_store & ps, const std::string & path);
void load_checkpoint(param_store & ps, const std::string & path);  // ps filled from file

// FNV-1a over the raw file bytes, as a reproducibility fingerprint
uint64_t file_checksum(const std::string & path);

}  // namespace armor
