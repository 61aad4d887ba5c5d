#pragma once

// Chunked little-endian tensor framing shared by dump records and map files:
//   magic (8 bytes) then repeated
//   [name: 16 ASCII, space padded][dtype: u8][ndim: u8][dims: ndim x u32][payload_len: u64][payload]

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace imap {

enum class DType : std::uint8_t { kF32 = 0, kF16 = 1 };

std::size_t dtype_size(DType dtype);

struct Chunk {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

struct ChunkHeader {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::uint32_t> dims;
  std::size_t payload_offset = 0;
  std::uint64_t payload_len = 0;

  std::uint64_t element_count() const;
};

// Result of a tolerant scan: every well-formed chunk up to the first framing
// error. `error` is empty when the whole buffer parsed.
struct ChunkScan {
  std::vector<ChunkHeader> chunks;
  std::string error;
  std::string failed_chunk;  // name of the chunk being read when it failed, if known

  bool ok() const { return error.empty(); }
};

inline constexpr std::size_t kChunkNameBytes = 16;
inline constexpr std::size_t kMagicBytes = 8;

// Throws NonFiniteData if any value is NaN/Inf (after f16 rounding when
// dtype is kF16), InvalidArgument for bad names or shape/value mismatch.
std::vector<std::byte> encode_chunks(std::string_view magic, std::span<const Chunk> chunks,
                                     DType dtype);

ChunkScan scan_chunks(std::span<const std::byte> bytes, std::string_view magic);

// Decodes one payload to f32. Throws CorruptPayload when payload_len does not
// match the declared dims, NonFiniteData on NaN/Inf.
std::vector<float> decode_payload(std::span<const std::byte> bytes, const ChunkHeader& header);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace imap
