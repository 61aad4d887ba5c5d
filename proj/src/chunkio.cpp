#include "imap/chunkio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "imap/error.hpp"
#include "imap/half.hpp"

namespace imap {

namespace {

void put_u8(std::vector<std::byte>& out, std::uint8_t v) { out.push_back(std::byte{v}); }

void put_u16(std::vector<std::byte>& out, std::uint16_t v) {
  put_u8(out, static_cast<std::uint8_t>(v & 0xffu));
  put_u8(out, static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) put_u8(out, static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) put_u8(out, static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_le(std::span<const std::byte> bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(bytes[offset + i])) << (8 * i);
  }
  return v;
}

}  // namespace

std::size_t dtype_size(DType dtype) { return dtype == DType::kF16 ? 2 : 4; }

std::uint64_t ChunkHeader::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<std::byte> encode_chunks(std::string_view magic, std::span<const Chunk> chunks,
                                     DType dtype) {
  if (magic.size() != kMagicBytes) {
    throw Error(ErrorCode::kInvalidArgument, "magic must be 8 bytes");
  }
  std::vector<std::byte> out;
  for (char c : magic) put_u8(out, static_cast<std::uint8_t>(c));

  for (const auto& chunk : chunks) {
    if (chunk.name.empty() || chunk.name.size() > kChunkNameBytes) {
      throw Error(ErrorCode::kInvalidArgument, "chunk name '" + chunk.name + "' must be 1..16 bytes");
    }
    if (chunk.dims.size() > 255) {
      throw Error(ErrorCode::kInvalidArgument, "chunk '" + chunk.name + "' has too many dims");
    }
    std::uint64_t count = 1;
    for (auto d : chunk.dims) count *= d;
    if (count != chunk.values.size()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "chunk '" + chunk.name + "' dims do not match its value count");
    }

    std::string padded = chunk.name;
    padded.resize(kChunkNameBytes, ' ');
    for (char c : padded) put_u8(out, static_cast<std::uint8_t>(c));
    put_u8(out, static_cast<std::uint8_t>(dtype));
    put_u8(out, static_cast<std::uint8_t>(chunk.dims.size()));
    for (auto d : chunk.dims) put_u32(out, d);
    put_u64(out, count * dtype_size(dtype));

    out.reserve(out.size() + count * dtype_size(dtype));
    for (float v : chunk.values) {
      if (dtype == DType::kF16) {
        const std::uint16_t h = float_to_half(v);
        if (!std::isfinite(half_to_float(h))) {
          throw Error(ErrorCode::kNonFiniteData,
                      "chunk '" + chunk.name + "' has a value that is not finite in f16");
        }
        put_u16(out, h);
      } else {
        if (!std::isfinite(v)) {
          throw Error(ErrorCode::kNonFiniteData, "chunk '" + chunk.name + "' contains NaN/Inf");
        }
        put_u32(out, std::bit_cast<std::uint32_t>(v));
      }
    }
  }
  return out;
}

ChunkScan scan_chunks(std::span<const std::byte> bytes, std::string_view magic) {
  ChunkScan scan;
  if (bytes.size() < kMagicBytes ||
      std::memcmp(bytes.data(), magic.data(), kMagicBytes) != 0) {
    scan.error = "bad magic (expected " + std::string(magic) + ")";
    return scan;
  }
  std::size_t pos = kMagicBytes;
  while (pos < bytes.size()) {
    ChunkHeader header;
    if (bytes.size() - pos < kChunkNameBytes + 2) {
      scan.error = "truncated chunk header";
      return scan;
    }
    std::string name(reinterpret_cast<const char*>(bytes.data() + pos), kChunkNameBytes);
    while (!name.empty() && name.back() == ' ') name.pop_back();
    header.name = name;
    scan.failed_chunk = name;
    pos += kChunkNameBytes;

    const auto dtype = std::to_integer<std::uint8_t>(bytes[pos]);
    if (dtype > 1) {
      scan.error = "unknown dtype " + std::to_string(dtype);
      return scan;
    }
    header.dtype = static_cast<DType>(dtype);
    const std::size_t ndim = std::to_integer<std::uint8_t>(bytes[pos + 1]);
    pos += 2;
    if (bytes.size() - pos < ndim * 4 + 8) {
      scan.error = "truncated chunk header";
      return scan;
    }
    for (std::size_t i = 0; i < ndim; ++i) {
      header.dims.push_back(static_cast<std::uint32_t>(get_le(bytes, pos, 4)));
      pos += 4;
    }
    header.payload_len = get_le(bytes, pos, 8);
    pos += 8;
    if (header.payload_len > bytes.size() - pos) {
      scan.error = "payload length " + std::to_string(header.payload_len) + " exceeds remaining " +
                   std::to_string(bytes.size() - pos) + " bytes";
      return scan;
    }
    header.payload_offset = pos;
    pos += header.payload_len;
    scan.chunks.push_back(std::move(header));
  }
  scan.failed_chunk.clear();
  return scan;
}

std::vector<float> decode_payload(std::span<const std::byte> bytes, const ChunkHeader& header) {
  const std::size_t width = dtype_size(header.dtype);
  const std::uint64_t count = header.element_count();
  if (count > std::numeric_limits<std::uint64_t>::max() / width ||
      count * width != header.payload_len) {
    throw Error(ErrorCode::kCorruptPayload,
                "chunk '" + header.name + "' payload length does not match its dims");
  }
  if (header.payload_offset + header.payload_len > bytes.size()) {
    throw Error(ErrorCode::kCorruptPayload, "chunk '" + header.name + "' payload is short");
  }
  std::vector<float> values(count);
  std::size_t pos = header.payload_offset;
  for (std::uint64_t i = 0; i < count; ++i, pos += width) {
    float v;
    if (header.dtype == DType::kF16) {
      v = half_to_float(static_cast<std::uint16_t>(get_le(bytes, pos, 2)));
    } else {
      v = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, pos, 4)));
    }
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFiniteData, "chunk '" + header.name + "' contains NaN/Inf");
    }
    values[i] = v;
  }
  return values;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::kMissingFile, "no such file: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::byte> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw Error(ErrorCode::kIoError, "read failed: " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

}  // namespace imap
