#include "inceptive/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "inceptive/error.hpp"

namespace inceptive {

namespace io {

namespace {

template <typename U>
void write_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U read_le(std::istream& in, std::uint64_t& offset, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError(std::string("truncated input while reading ") + what, offset);
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  offset += sizeof(U);
  return v;
}

}  // namespace

void write_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }
void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
void write_f32(std::ostream& out, float v) { write_le(out, std::bit_cast<std::uint32_t>(v)); }

std::uint8_t read_u8(std::istream& in, std::uint64_t& offset, const char* what) {
  return read_le<std::uint8_t>(in, offset, what);
}
std::uint32_t read_u32(std::istream& in, std::uint64_t& offset, const char* what) {
  return read_le<std::uint32_t>(in, offset, what);
}
std::uint64_t read_u64(std::istream& in, std::uint64_t& offset, const char* what) {
  return read_le<std::uint64_t>(in, offset, what);
}
float read_f32(std::istream& in, std::uint64_t& offset, const char* what) {
  return std::bit_cast<float>(read_le<std::uint32_t>(in, offset, what));
}

void read_magic(std::istream& in, std::uint64_t& offset, const char (&magic)[5]) {
  char got[4] = {};
  in.read(got, 4);
  if (in.gcount() != 4) throw FormatError("truncated input while reading magic", offset);
  if (std::memcmp(got, magic, 4) != 0) {
    throw FormatError(std::string("bad magic, expected '") + magic + "'", offset);
  }
  offset += 4;
}

}  // namespace io

void write_tensor(std::ostream& out, const Tensor& tensor) {
  out.write("ITNS", 4);
  io::write_u32(out, kTensorFormatVersion);
  io::write_u32(out, static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t extent : tensor.shape()) io::write_u64(out, extent);
  for (double v : tensor.data()) io::write_f32(out, static_cast<float>(v));
}

Tensor read_tensor(std::istream& in, std::uint64_t& offset) {
  io::read_magic(in, offset, "ITNS");
  const std::uint64_t version_at = offset;
  const std::uint32_t version = io::read_u32(in, offset, "version");
  if (version != kTensorFormatVersion) {
    throw FormatError("unsupported ITNS version " + std::to_string(version), version_at);
  }
  const std::uint32_t rank = io::read_u32(in, offset, "rank");
  Shape shape(rank);
  for (auto& extent : shape) {
    const std::uint64_t at = offset;
    extent = static_cast<std::size_t>(io::read_u64(in, offset, "extent"));
    if (extent == 0) throw FormatError("zero extent", at);
  }
  std::vector<double> data(numel(shape));
  for (double& v : data) v = io::read_f32(in, offset, "tensor payload");
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_tensor(out, tensor);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::uint64_t offset = 0;
  return read_tensor(in, offset);
}

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
enum class EntryKind : std::uint8_t { decayed = 0, undecayed = 1, buffer = 2 };
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const BufferStore& buffers) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write("ITCK", 4);
  io::write_u32(out, kCheckpointVersion);
  io::write_u32(out, static_cast<std::uint32_t>(params.size() + buffers.size()));
  auto write_name = [&](const std::string& name, EntryKind kind) {
    io::write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::write_u8(out, static_cast<std::uint8_t>(kind));
  };
  for (const auto& [name, p] : params) write_name(name, p.decay ? EntryKind::decayed : EntryKind::undecayed);
  for (const auto& [name, t] : buffers) write_name(name, EntryKind::buffer);
  for (const auto& [name, p] : params) write_tensor(out, p.value);
  for (const auto& [name, t] : buffers) write_tensor(out, t);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::uint64_t offset = 0;
  io::read_magic(in, offset, "ITCK");
  const std::uint64_t version_at = offset;
  if (io::read_u32(in, offset, "version") != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version", version_at);
  }
  const std::uint32_t count = io::read_u32(in, offset, "entry count");
  std::vector<std::pair<std::string, EntryKind>> index;
  index.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = io::read_u32(in, offset, "name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (in.gcount() != static_cast<std::streamsize>(len)) throw FormatError("truncated entry name", offset);
    offset += len;
    const std::uint64_t kind_at = offset;
    const std::uint8_t kind = io::read_u8(in, offset, "entry kind");
    if (kind > 2) throw FormatError("unknown entry kind " + std::to_string(kind), kind_at);
    index.emplace_back(std::move(name), static_cast<EntryKind>(kind));
  }
  Checkpoint ckpt;
  for (auto& [name, kind] : index) {
    Tensor t = read_tensor(in, offset);
    if (kind == EntryKind::buffer) {
      ckpt.buffers.add(std::move(name), std::move(t));
    } else {
      ckpt.params.add(std::move(name), std::move(t), kind == EntryKind::decayed);
    }
  }
  return ckpt;
}

}  // namespace inceptive
