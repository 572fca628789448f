#include "vcgan/dsp/audio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include "vcgan/error.hpp"

namespace vcgan::dsp {

void MelConfig::validate() const {
  auto fail = [](const char* what) { throw Error(ErrorCode::kInvalidArgument, what); };
  if (sample_rate <= 0) fail("sample_rate must be positive");
  if (n_fft <= 0 || hop_length <= 0) fail("n_fft and hop_length must be positive");
  if (hop_length > n_fft) fail("hop_length must not exceed n_fft");
  if (n_mels < 1) fail("n_mels must be at least 1");
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) fail("need 0 <= fmin < fmax <= sample_rate/2");
  if (griffin_lim_iters < 0) fail("griffin_lim_iters must be non-negative");
}

namespace {

std::uint32_t le32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}
void put16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::kFileNotFound, path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto unsupported = [&](const std::string& why) {
    return Error(ErrorCode::kUnsupportedFormat, path.string() + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw unsupported("not a RIFF/WAVE file");
  }

  WavData out;
  int bits = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t len = le32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min(len, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw unsupported("truncated fmt chunk");
      const unsigned char* f = bytes.data() + body;
      std::uint16_t format = le16(f);
      out.channels = le16(f + 2);
      out.sample_rate = static_cast<int>(le32(f + 4));
      bits = le16(f + 14);
      if (format == kFormatExtensible && avail >= 26) format = le16(f + 24);
      if (format != kFormatPcm) throw unsupported("only integer PCM is supported");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt) throw unsupported("missing fmt chunk");
  if (out.channels <= 0 || out.sample_rate <= 0) throw unsupported("bad channel count or sample rate");
  if (bits != 8 && bits != 16 && bits != 24 && bits != 32) throw unsupported("unsupported bit depth");
  const std::size_t width = static_cast<std::size_t>(bits / 8);
  const std::size_t count = data ? data_len / width : 0;
  if (count < static_cast<std::size_t>(out.channels)) throw unsupported("no audio samples");

  out.samples.resize(count - count % out.channels);
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    const unsigned char* s = data + i * width;
    double v = 0.0;
    switch (bits) {
      case 8: v = (static_cast<int>(s[0]) - 128) / 128.0; break;
      case 16: v = static_cast<std::int16_t>(le16(s)) / 32768.0; break;
      case 24: {
        std::int32_t x = s[0] | (s[1] << 8) | (s[2] << 16);
        if (x & 0x800000) x |= ~0xFFFFFF;
        v = x / 8388608.0;
        break;
      }
      case 32: v = static_cast<std::int32_t>(le32(s)) / 2147483648.0; break;
    }
    out.samples[i] = static_cast<float>(v);
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const Waveform& samples, int sample_rate) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  os.write("RIFF", 4);
  put32(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  put32(os, 16);
  put16(os, kFormatPcm);
  put16(os, 1);
  put32(os, static_cast<std::uint32_t>(sample_rate));
  put32(os, static_cast<std::uint32_t>(sample_rate * 2));
  put16(os, 2);
  put16(os, 16);
  os.write("data", 4);
  put32(os, data_bytes);
  for (float s : samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    put16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0f))));
  }
  if (!os) throw Error(ErrorCode::kIoError, "short write to " + path.string());
}

Waveform resample(const Waveform& input, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw Error(ErrorCode::kInvalidArgument, "resample: rates must be positive");
  if (from_rate == to_rate || input.empty()) return input;
  const std::int64_t out_len =
      (static_cast<std::int64_t>(input.size()) * to_rate + from_rate / 2) / from_rate;
  const double ratio = static_cast<double>(to_rate) / from_rate;
  const double cutoff = std::min(1.0, ratio) * 0.95;
  constexpr int kZeroCrossings = 16;
  const double half_width = kZeroCrossings / cutoff;
  Waveform out(static_cast<std::size_t>(out_len));
  for (std::int64_t n = 0; n < out_len; ++n) {
    const double center = n / ratio;
    const auto lo = static_cast<std::int64_t>(std::ceil(center - half_width));
    const auto hi = static_cast<std::int64_t>(std::floor(center + half_width));
    double acc = 0.0;
    for (std::int64_t k = std::max<std::int64_t>(lo, 0); k <= hi && k < static_cast<std::int64_t>(input.size()); ++k) {
      const double t = k - center;
      const double x = cutoff * t;
      const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      const double win = 0.5 + 0.5 * std::cos(std::numbers::pi * t / half_width);
      acc += input[static_cast<std::size_t>(k)] * cutoff * sinc * win;
    }
    out[static_cast<std::size_t>(n)] = static_cast<float>(acc);
  }
  return out;
}

Waveform load_audio(const std::filesystem::path& path, const MelConfig& config) {
  WavData wav = read_wav(path);
  Waveform mono(wav.samples.size() / wav.channels);
  for (std::size_t i = 0; i < mono.size(); ++i) {
    double acc = 0.0;
    for (int c = 0; c < wav.channels; ++c) acc += wav.samples[i * wav.channels + c];
    mono[i] = static_cast<float>(acc / wav.channels);
  }
  Waveform out = resample(mono, wav.sample_rate, config.sample_rate);
  for (float& s : out) s = std::clamp(s, -1.0f, 1.0f);
  return out;
}

Waveform clip_silence(const Waveform& waveform, int sample_rate, const SilenceConfig& config) {
  if (waveform.empty()) throw Error(ErrorCode::kInvalidArgument, "clip_silence: empty waveform");
  const std::size_t frame = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(config.frame_seconds * sample_rate)));
  const std::size_t n_frames = (waveform.size() + frame - 1) / frame;
  std::vector<double> rms(n_frames);
  double peak = 0.0;
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::size_t begin = f * frame;
    const std::size_t end = std::min(waveform.size(), begin + frame);
    double e = 0.0;
    for (std::size_t i = begin; i < end; ++i) e += static_cast<double>(waveform[i]) * waveform[i];
    rms[f] = std::sqrt(e / static_cast<double>(end - begin));
    peak = std::max(peak, rms[f]);
  }
  if (peak <= 0.0) throw Error(ErrorCode::kAllSilent, "waveform contains no signal");
  const double floor = peak * std::pow(10.0, -config.threshold_db / 20.0);
  Waveform out;
  out.reserve(waveform.size());
  for (std::size_t f = 0; f < n_frames; ++f) {
    if (rms[f] < floor) continue;
    const std::size_t begin = f * frame;
    const std::size_t end = std::min(waveform.size(), begin + frame);
    out.insert(out.end(), waveform.begin() + begin, waveform.begin() + end);
  }
  if (out.empty()) throw Error(ErrorCode::kAllSilent, "no frame above threshold");
  return out;
}

}  // namespace vcgan::dsp
