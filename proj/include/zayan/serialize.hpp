#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "zayan/params.hpp"

namespace zayan::nn {

// Named-tensor checkpoint. Layout (little-endian):
//   magic "ZNT1" | u8 version | u32 tensor count
//   per tensor: u32 name length | name bytes | u8 ndim | u64 dims... |
//               f64 values (row-major)
void save_parameters(const ParameterSet& params, std::ostream& out);
void save_parameters(const ParameterSet& params, const std::string& path);
ParameterSet load_parameters(std::istream& in);
ParameterSet load_parameters(const std::string& path);

void write_tensor_blob(const ParameterSet& params, std::string& out);

// Feature-embedding matrix file. Layout (little-endian):
//   magic "ZMT1" | u8 version | u32 d | u32 m | f64 values (column-major,
//   one unit-norm column per feature)
struct EmbeddingMatrixFile {
  std::uint32_t d = 0;
  std::uint32_t m = 0;
  std::vector<double> colmajor;
};
void save_embedding_matrix(const EmbeddingMatrixFile& z, const std::string& path);
EmbeddingMatrixFile load_embedding_matrix(const std::string& path);

std::uint64_t file_content_hash(const std::string& path);

}  // namespace zayan::nn
