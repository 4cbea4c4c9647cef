#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fdi/layers.hpp"

namespace fdi::nn {

// Binary parameter container, all integers little-endian:
//   magic "FDICKPT1" (8 bytes), u32 tensor count, then per tensor:
//   u32 name length, name bytes (UTF-8), u32 rank, rank x u64 dims,
//   numel x IEEE-754 binary64 values.

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

void write_checkpoint(std::ostream& out, const std::vector<Parameter>& params);
std::vector<NamedTensor> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Model& model);
/// Copies values into `model`; names and shapes must match exactly.
void load_checkpoint(const std::filesystem::path& path, Model& model);

}  // namespace fdi::nn
