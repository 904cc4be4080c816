#pragma once

#include "frontdoor/nn.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace frontdoor {

// Binary checkpoint layout (all integers u64 little-endian, data f64 LE):
//   "FDT1" { name_len, name bytes, rank, extents[rank], values[numel] }*
// Records run to end of file.

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

/// Loads matching records into existing parameters, by name. Every parameter
/// must be present with the same shape.
void assign_from(const std::vector<NamedTensor>& records, const std::vector<NamedTensor>& params);

}  // namespace frontdoor
