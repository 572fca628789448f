#pragma once

#include <filesystem>

#include "vcgan/dsp/mel.hpp"

namespace vcgan::dsp {

// On-disk spectrogram cache: 16-byte header ("MELC", version, n_mels, T as
// little-endian u32) followed by row-major little-endian float32 values.
inline constexpr std::uint32_t kMelCacheVersion = 1;

void write_mel_cache(const std::filesystem::path& path, const MelMatrix& mel);

// Throws FileNotFound or UnsupportedFormat (bad magic, version, or size).
MelMatrix read_mel_cache(const std::filesystem::path& path);

}  // namespace vcgan::dsp
