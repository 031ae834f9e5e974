#include "blisskit/core/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace blisskit {

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

void write_blob(const std::filesystem::path& path, const BlobHeader& header, const std::vector<double>& payload) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(header.magic.data(), 4);
  const std::uint32_t words[3] = {header.a, header.b, header.c};
  out.write(reinterpret_cast<const char*>(words), sizeof(words));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 8));
  if (!out) throw Error("write failed: " + path.string());
}

std::vector<double> read_blob_raw(const std::filesystem::path& path, const char (&magic)[5], BlobHeader& header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw ParseError(path.string(), 0, "truncated header");
  if (std::memcmp(bytes.data(), magic, 4) != 0)
    throw ParseError(path.string(), 0, std::string("bad magic, expected ") + magic);
  std::memcpy(header.magic.data(), bytes.data(), 4);
  std::uint32_t words[3];
  std::memcpy(words, bytes.data() + 4, sizeof(words));
  header.a = words[0];
  header.b = words[1];
  header.c = words[2];
  if ((bytes.size() - 16) % 8 != 0) throw ParseError(path.string(), 0, "payload is not a whole number of float64");
  std::vector<double> data((bytes.size() - 16) / 8);
  std::memcpy(data.data(), bytes.data() + 16, data.size() * 8);
  return data;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace blisskit
