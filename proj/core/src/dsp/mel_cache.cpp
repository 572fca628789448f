#include "vcgan/dsp/mel_cache.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "vcgan/error.hpp"

namespace vcgan::dsp {
namespace {

static_assert(std::endian::native == std::endian::little, "cache I/O assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

}  // namespace

void write_mel_cache(const std::filesystem::path& path, const MelMatrix& mel) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  os.write("MELC", 4);
  put_u32(os, kMelCacheVersion);
  put_u32(os, static_cast<std::uint32_t>(mel.n_mels));
  put_u32(os, static_cast<std::uint32_t>(mel.frames));
  os.write(reinterpret_cast<const char*>(mel.values.data()),
           static_cast<std::streamsize>(mel.values.size() * sizeof(float)));
  if (!os) throw Error(ErrorCode::kIoError, "short write to " + path.string());
}

MelMatrix read_mel_cache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kFileNotFound, path.string());
  char header[16];
  if (!is.read(header, sizeof(header)) || std::memcmp(header, "MELC", 4) != 0) {
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": missing MELC header");
  }
  std::uint32_t version, n_mels, frames;
  std::memcpy(&version, header + 4, 4);
  std::memcpy(&n_mels, header + 8, 4);
  std::memcpy(&frames, header + 12, 4);
  if (version != kMelCacheVersion) {
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": unknown cache version " + std::to_string(version));
  }
  MelMatrix mel(static_cast<int>(n_mels), static_cast<int>(frames));
  const auto bytes = static_cast<std::streamsize>(mel.values.size() * sizeof(float));
  if (!is.read(reinterpret_cast<char*>(mel.values.data()), bytes)) {
    throw Error(ErrorCode::kUnsupportedFormat, path.string() + ": truncated cache");
  }
  return mel;
}

}  // namespace vcgan::dsp
