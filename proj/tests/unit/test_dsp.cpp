#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "vcgan/dsp/audio.hpp"
#include "vcgan/dsp/mel.hpp"
#include "vcgan/dsp/mel_cache.hpp"
#include "vcgan/dsp/scaling.hpp"
#include "vcgan/error.hpp"

using namespace vcgan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "vcgan_unit_dsp";
  fs::create_directories(dir);
  return dir / name;
}

dsp::Waveform tone(double hz, int rate, int samples, double amp = 0.5) {
  dsp::Waveform w(samples);
  for (int i = 0; i < samples; ++i) w[i] = static_cast<float>(amp * std::sin(2 * std::numbers::pi * hz * i / rate));
  return w;
}

// Writes a 16-bit PCM file by hand so the reader is not tested against itself.
void write_pcm16(const fs::path& path, const std::vector<std::int16_t>& samples, int rate, int channels) {
  std::ofstream out(path, std::ios::binary);
  auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto u16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
  const std::uint32_t bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  u32(36 + bytes);
  out.write("WAVEfmt ", 8);
  u32(16);
  u16(1);
  u16(static_cast<std::uint16_t>(channels));
  u32(rate);
  u32(rate * channels * 2);
  u16(static_cast<std::uint16_t>(channels * 2));
  u16(16);
  out.write("data", 4);
  u32(bytes);
  out.write(reinterpret_cast<const char*>(samples.data()), bytes);
}

int dominant_bin(const dsp::MelMatrix& m) {
  std::vector<double> energy(m.n_mels, 0.0);
  for (int b = 0; b < m.n_mels; ++b)
    for (int t = 0; t < m.frames; ++t) energy[b] += std::exp(m.at(b, t));
  return static_cast<int>(std::max_element(energy.begin(), energy.end()) - energy.begin());
}

}  // namespace

TEST_CASE("load_audio resamples 32 kHz to 16 kHz") {
  const auto path = scratch("tone32k.wav");
  std::vector<std::int16_t> pcm(32000);
  for (int i = 0; i < 32000; ++i) pcm[i] = static_cast<std::int16_t>(8000 * std::sin(2 * std::numbers::pi * 300 * i / 32000.0));
  write_pcm16(path, pcm, 32000, 1);
  const auto w = dsp::load_audio(path, dsp::MelConfig{});
  CHECK(w.size() == 16000);
}

TEST_CASE("stereo input is averaged to mono") {
  const auto path = scratch("stereo.wav");
  std::vector<std::int16_t> pcm;
  for (int i = 0; i < 100; ++i) {
    pcm.push_back(16384);
    pcm.push_back(-16384);
  }
  write_pcm16(path, pcm, 16000, 2);
  const auto w = dsp::load_audio(path, dsp::MelConfig{});
  REQUIRE(w.size() == 100);
  for (float v : w) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("read_wav rejects what it cannot decode") {
  CHECK_THROWS_AS(dsp::read_wav(scratch("does_not_exist.wav")), Error);
  const auto junk = scratch("junk.wav");
  std::ofstream(junk) << "definitely not a RIFF file";
  try {
    dsp::read_wav(junk);
    FAIL("expected UnsupportedFormat");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnsupportedFormat);
  }
}

TEST_CASE("write_wav then read_wav round-trips within one LSB") {
  const auto path = scratch("rt.wav");
  const auto w = tone(440, 16000, 1600);
  dsp::write_wav(path, w, 16000);
  const auto back = dsp::read_wav(path);
  CHECK(back.sample_rate == 16000);
  CHECK(back.channels == 1);
  REQUIRE(back.samples.size() == w.size());
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(back.samples[i] - w[i]) <= 1.0 / 32767 + 1e-7);
}

TEST_CASE("clip_silence drops the silent half") {
  dsp::Waveform w(8000, 0.0f);
  const auto t = tone(440, 16000, 8000);
  w.insert(w.end(), t.begin(), t.end());
  const auto kept = dsp::clip_silence(w, 16000, dsp::SilenceConfig{40.0, 0.025});
  CHECK(std::abs(static_cast<int>(kept.size()) - 8000) <= 400);  // one 25 ms frame
  CHECK_THROWS_AS(dsp::clip_silence(dsp::Waveform(16000, 0.0f), 16000), Error);
}

TEST_CASE("mel_spectrogram shape") {
  const dsp::MelConfig cfg;
  const auto m = dsp::mel_spectrogram(tone(440, 16000, 16000), cfg);
  CHECK(m.n_mels == 128);
  CHECK(m.frames == 1 + 16000 / 32);
  CHECK(m.config == cfg);
}

TEST_CASE("mel filterbank rows cover increasing centers with unit area") {
  const dsp::MelConfig cfg;
  const auto fb = dsp::mel_filterbank(cfg);
  const int nf = cfg.n_freq();
  REQUIRE(fb.size() == static_cast<std::size_t>(cfg.n_mels) * nf);
  int last_peak = -1;
  for (int b = 0; b < cfg.n_mels; ++b) {
    const auto row = fb.begin() + static_cast<std::ptrdiff_t>(b) * nf;
    const int peak = static_cast<int>(std::max_element(row, row + nf) - row);
    CHECK(peak >= last_peak);
    last_peak = peak;
    for (int f = 0; f < nf; ++f) CHECK(row[f] >= 0.0);
  }
}

TEST_CASE("a tone lands in the mel bin holding its frequency") {
  const dsp::MelConfig cfg;
  const auto m = dsp::mel_spectrogram(tone(1000, 16000, 8000), cfg);
  const auto fb = dsp::mel_filterbank(cfg);
  const int nf = cfg.n_freq();
  const int fft_bin = static_cast<int>(std::lround(1000.0 * cfg.n_fft / cfg.sample_rate));
  int best = 0;
  for (int b = 1; b < cfg.n_mels; ++b)
    if (fb[static_cast<std::size_t>(b) * nf + fft_bin] > fb[static_cast<std::size_t>(best) * nf + fft_bin]) best = b;
  CHECK(std::abs(dominant_bin(m) - best) <= 1);
}

TEST_CASE("scaling stats use the nearest-rank percentile") {
  // Bin b holds the values b*1000 + {0..999} in a shuffled order.
  dsp::LogMel m;
  m.n_mels = 3;
  m.frames = 1000;
  m.values.resize(3000);
  std::mt19937_64 rng(11);
  for (int b = 0; b < 3; ++b) {
    std::vector<float> vals(1000);
    for (int i = 0; i < 1000; ++i) vals[i] = static_cast<float>(b * 1000 + i);
    std::shuffle(vals.begin(), vals.end(), rng);
    std::copy(vals.begin(), vals.end(), m.values.begin() + b * 1000);
  }
  const std::vector<dsp::LogMel> mels{m};
  const auto s = dsp::compute_scaling_stats(mels, 0.999);
  for (int b = 0; b < 3; ++b) {
    std::vector<float> sorted(m.values.begin() + b * 1000, m.values.begin() + (b + 1) * 1000);
    std::sort(sorted.begin(), sorted.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.999 * 1000)) - 1;
    CHECK(s.per_bin_max[b] == sorted[rank]);
    CHECK(s.per_bin_min[b] == s.per_bin_max[b] - 4.0f);
  }
  CHECK_THROWS_AS(dsp::compute_scaling_stats(std::vector<dsp::LogMel>{}), Error);
}

TEST_CASE("scale clips then maps affinely") {
  dsp::SpeakerScalingStats s;
  s.per_bin_max = {2.0f};
  s.per_bin_min = {-2.0f};
  dsp::MelMatrix m(1, 5);
  m.values = {5.0f, 2.0f, 0.0f, -1.0f, -9.0f};
  const auto out = dsp::scale(m, s);
  const std::vector<float> want{1.0f, 1.0f, 0.0f, -0.5f, -1.0f};
  for (int i = 0; i < 5; ++i) CHECK(out.values[i] == doctest::Approx(want[i]));
  const auto back = dsp::unscale(out, s);
  CHECK(back.values[0] == doctest::Approx(2.0));
  CHECK(back.values[3] == doctest::Approx(-1.0));
  dsp::MelMatrix wrong(2, 5);
  CHECK_THROWS_AS(dsp::scale(wrong, s), Error);
}

TEST_CASE("unscale(scale(x)) == clip(x) on random matrices") {
  std::mt19937_64 rng(12);
  std::normal_distribution<float> d(0.0f, 4.0f);
  for (int rep = 0; rep < 50; ++rep) {
    dsp::SpeakerScalingStats s;
    dsp::MelMatrix m(16, 20);
    for (int b = 0; b < 16; ++b) {
      s.per_bin_max.push_back(d(rng));
      s.per_bin_min.push_back(s.per_bin_max.back() - 4.0f);
    }
    for (auto& v : m.values) v = d(rng);
    const auto rt = dsp::unscale(dsp::scale(m, s), s);
    for (int b = 0; b < 16; ++b)
      for (int t = 0; t < 20; ++t) {
        const float clipped = std::clamp(m.at(b, t), s.per_bin_min[b], s.per_bin_max[b]);
        CHECK(std::abs(rt.at(b, t) - clipped) < 1e-5f * std::max(1.0f, std::abs(clipped)));
      }
  }
}

TEST_CASE("stats subset choice is seeded and bounded") {
  std::vector<std::string> files;
  for (int i = 0; i < 80; ++i) files.push_back("f" + std::to_string(i));
  const auto a = dsp::choose_stats_subset(files, 50, 3);
  const auto b = dsp::choose_stats_subset(files, 50, 3);
  const auto c = dsp::choose_stats_subset(files, 50, 4);
  CHECK(a.size() == 50);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(dsp::choose_stats_subset(files, 100, 3).size() == 80);
}

TEST_CASE("stats and mel cache files round-trip") {
  dsp::SpeakerScalingStats s;
  s.speaker_id = "spk";
  s.per_bin_max = {1.5f, -0.25f};
  s.per_bin_min = {-2.5f, -4.25f};
  s.source_files = {"a.wav"};
  s.seed = 9;
  dsp::save_stats(scratch("s.json"), s);
  const auto back = dsp::load_stats(scratch("s.json"));
  CHECK(back.per_bin_max == s.per_bin_max);
  CHECK(back.per_bin_min == s.per_bin_min);
  CHECK(back.source_files == s.source_files);
  CHECK(back.seed == 9);

  dsp::MelMatrix m(3, 4);
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = static_cast<float>(i) * 0.37f - 2.0f;
  dsp::write_mel_cache(scratch("m.melc"), m);
  const auto mb = dsp::read_mel_cache(scratch("m.melc"));
  CHECK(mb.n_mels == 3);
  CHECK(mb.frames == 4);
  CHECK(mb.values == m.values);
}

TEST_CASE("griffin-lim keeps a tone's dominant bin and improves with iterations") {
  dsp::MelConfig cfg;
  const auto w = tone(440, 16000, 4000);
  const auto mel = dsp::mel_spectrogram(w, cfg);
  const auto mag = dsp::mel_to_linear(mel, cfg);
  const auto one = dsp::griffin_lim(mag, cfg, 1);
  const auto many = dsp::griffin_lim(mag, cfg, 30);
  CHECK(dsp::spectral_distance(mag, many, cfg) < dsp::spectral_distance(mag, one, cfg));
  CHECK(std::abs(dominant_bin(dsp::mel_spectrogram(many, cfg)) - dominant_bin(mel)) <= 1);
}

TEST_CASE("MelConfig validation") {
  dsp::MelConfig c;
  CHECK_NOTHROW(c.validate());
  c.fmax = 9000.0;  // above Nyquist
  CHECK_THROWS_AS(c.validate(), Error);
}
