#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "blisskit/core/types.hpp"

namespace blisskit {

// Flat binary blobs: 4-byte magic, three little-endian u32 header words, then
// float64 payload.
struct BlobHeader {
  std::array<char, 4> magic;
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  std::uint32_t c = 0;
};

void write_blob(const std::filesystem::path& path, const BlobHeader& header, const std::vector<double>& payload);

// Checks the magic and that the payload length equals expected_doubles(header).
template <typename Expect>
std::vector<double> read_blob(const std::filesystem::path& path, const char (&magic)[5], BlobHeader& header,
                              Expect expected_doubles);

std::vector<double> read_blob_raw(const std::filesystem::path& path, const char (&magic)[5], BlobHeader& header);

template <typename Expect>
std::vector<double> read_blob(const std::filesystem::path& path, const char (&magic)[5], BlobHeader& header,
                              Expect expected_doubles) {
  std::vector<double> data = read_blob_raw(path, magic, header);
  const std::size_t want = expected_doubles(header);
  if (data.size() != want)
    throw ParseError(path.string(), 0,
                     "payload holds " + std::to_string(data.size()) + " values, expected " + std::to_string(want));
  return data;
}

// FNV-1a 64 over a file's bytes, for reproducibility checks.
std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace blisskit
