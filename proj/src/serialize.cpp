#include "zayan/serialize.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace zayan::nn {

namespace {

constexpr char kTensorMagic[4] = {'Z', 'N', 'T', '1'};
constexpr char kMatrixMagic[4] = {'Z', 'M', 'T', '1'};
constexpr std::uint8_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_parameters(const ParameterSet& params, std::ostream& out) {
  out.write(kTensorMagic, 4);
  write_pod<std::uint8_t>(out, kFormatVersion);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params.items()) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(p.value.dims.size()));
    for (std::size_t d : p.value.dims)
      write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(p.value.v.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
}

void save_parameters(const ParameterSet& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  save_parameters(params, out);
  if (!out) throw DataError("write failed: " + path);
}

ParameterSet load_parameters(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kTensorMagic, 4) != 0)
    throw DataError("checkpoint: bad magic");
  const auto version = read_pod<std::uint8_t>(in);
  if (version != kFormatVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = read_pod<std::uint32_t>(in);
  ParameterSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto ndim = read_pod<std::uint8_t>(in);
    std::vector<std::size_t> dims(ndim);
    for (auto& d : dims) d = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
    Tensor t(dims);
    in.read(reinterpret_cast<char*>(t.v.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw DataError("checkpoint: truncated tensor data for " + name);
    params.add(name, std::move(t));
  }
  return params;
}

ParameterSet load_parameters(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  return load_parameters(in);
}

void write_tensor_blob(const ParameterSet& params, std::string& out) {
  std::ostringstream ss(std::ios::binary);
  save_parameters(params, ss);
  out = ss.str();
}

void save_embedding_matrix(const EmbeddingMatrixFile& z, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(kMatrixMagic, 4);
  write_pod<std::uint8_t>(out, kFormatVersion);
  write_pod<std::uint32_t>(out, z.d);
  write_pod<std::uint32_t>(out, z.m);
  out.write(reinterpret_cast<const char*>(z.colmajor.data()),
            static_cast<std::streamsize>(z.colmajor.size() * sizeof(double)));
  if (!out) throw DataError("write failed: " + path);
}

EmbeddingMatrixFile load_embedding_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMatrixMagic, 4) != 0)
    throw DataError("embedding matrix: bad magic");
  const auto version = read_pod<std::uint8_t>(in);
  if (version != kFormatVersion)
    throw DataError("embedding matrix: unsupported version");
  EmbeddingMatrixFile z;
  z.d = read_pod<std::uint32_t>(in);
  z.m = read_pod<std::uint32_t>(in);
  z.colmajor.resize(static_cast<std::size_t>(z.d) * z.m);
  in.read(reinterpret_cast<char*>(z.colmajor.data()),
          static_cast<std::streamsize>(z.colmajor.size() * sizeof(double)));
  if (!in) throw DataError("embedding matrix: truncated file");
  return z;
}

std::uint64_t file_content_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const auto got = in.gcount();
    if (got > 0) h = fnv1a64(buf, static_cast<std::size_t>(got), h);
  }
  return h;
}

}  // namespace zayan::nn
