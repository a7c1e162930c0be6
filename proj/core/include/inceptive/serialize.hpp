#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "inceptive/param_store.hpp"
#include "inceptive/tensor.hpp"

namespace inceptive {

// ITNS tensor record:
//   "ITNS" | u32 version (=1) | u32 rank | rank x u64 extents | f32 payload
// All integers and floats little-endian; payload row-major. Values are
// narrowed to f32 on write and widened on read.
inline constexpr std::uint32_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& out, const Tensor& tensor);

// `offset` is the byte offset of the record within the enclosing stream; it
// is used for error reporting and advanced past the record on success.
Tensor read_tensor(std::istream& in, std::uint64_t& offset);

void save_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor load_tensor(const std::filesystem::path& path);

// Checkpoint container: a name-index preamble followed by one ITNS record per
// entry, in index order.
//   "ITCK" | u32 version (=1) | u32 count |
//   count x (u32 name_len | name bytes | u8 kind) | count x ITNS record
// kind: 0 = parameter with weight decay, 1 = parameter without decay,
//       2 = buffer.
struct Checkpoint {
  ParamStore params;
  BufferStore buffers;
};

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const BufferStore& buffers);
Checkpoint load_checkpoint(const std::filesystem::path& path);

namespace io {

// Little-endian primitives shared by the binary formats.
void write_u8(std::ostream& out, std::uint8_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, float v);

std::uint8_t read_u8(std::istream& in, std::uint64_t& offset, const char* what);
std::uint32_t read_u32(std::istream& in, std::uint64_t& offset, const char* what);
std::uint64_t read_u64(std::istream& in, std::uint64_t& offset, const char* what);
float read_f32(std::istream& in, std::uint64_t& offset, const char* what);
void read_magic(std::istream& in, std::uint64_t& offset, const char (&magic)[5]);

}  // namespace io

}  // namespace inceptive
