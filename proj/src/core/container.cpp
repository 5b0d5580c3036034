#include "container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "amcuq/common.hpp"

namespace amcuq::detail {
namespace {

constexpr std::uint64_t kMaxManifestBytes = std::uint64_t{1} << 34;

template <class U>
void append_le(std::vector<std::uint8_t>& out, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <class U>
U read_le(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void append_le_f32(std::vector<std::uint8_t>& out, float v) { append_le(out, std::bit_cast<std::uint32_t>(v)); }
void append_le_f64(std::vector<std::uint8_t>& out, double v) { append_le(out, std::bit_cast<std::uint64_t>(v)); }
float read_le_f32(const std::uint8_t* p) { return std::bit_cast<float>(read_le<std::uint32_t>(p)); }
double read_le_f64(const std::uint8_t* p) { return std::bit_cast<double>(read_le<std::uint64_t>(p)); }

void write_container(const std::filesystem::path& path, const Magic& magic, const std::string& manifest,
                     std::span<const std::uint8_t> payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  std::vector<std::uint8_t> header;
  append_le(header, static_cast<std::uint64_t>(manifest.size()));
  out.write(magic.data(), magic.size());
  out.write(reinterpret_cast<const char*>(header.data()), static_cast<std::streamsize>(header.size()));
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) fail(ErrorCode::io, "write failed for '" + path.string() + "'");
}

Container read_container(const std::filesystem::path& path, const Magic& magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::missing_artifact, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < magic.size() + 8) fail(ErrorCode::corrupt_header, path.string() + ": file too short for header");
  if (std::memcmp(bytes.data(), magic.data(), magic.size()) != 0) {
    fail(ErrorCode::corrupt_header, path.string() + ": bad magic");
  }
  const auto manifest_len = read_le<std::uint64_t>(bytes.data() + magic.size());
  const std::size_t manifest_start = magic.size() + 8;
  if (manifest_len > kMaxManifestBytes || manifest_len > bytes.size() - manifest_start) {
    fail(ErrorCode::corrupt_header, path.string() + ": manifest length exceeds file size");
  }
  Container c;
  c.manifest.assign(reinterpret_cast<const char*>(bytes.data() + manifest_start), manifest_len);
  c.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(manifest_start + manifest_len), bytes.end());
  return c;
}

}  // namespace amcuq::detail
