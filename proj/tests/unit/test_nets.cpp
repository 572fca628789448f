#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "vcgan/dsp/mel.hpp"
#include "vcgan/dsp/scaling.hpp"
#include "vcgan/error.hpp"
#include "vcgan/nets/checkpoint.hpp"
#include "vcgan/nets/model.hpp"

using namespace vcgan;
namespace fs = std::filesystem;

namespace {

dsp::MelMatrix random_window(int bins, int frames, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  dsp::MelMatrix m(bins, frames);
  for (auto& v : m.values) v = d(rng);
  return m;
}

nets::ArchConfig small_arch() {
  nets::ArchConfig a;
  a.fe_channels = {4, 4, 8, 1};
  a.disc_channels = {4, 4, 8, 8};
  return a;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "vcgan_unit_nets";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("default arch validates and shapes flow end to end") {
  const nets::ArchConfig arch;
  CHECK_NOTHROW(arch.validate());
  const auto params = nets::init_params(arch, 4, 1);
  const auto window = random_window(128, 64, 2);
  const auto emb = nets::fe_forward(params, window);
  CHECK(emb.values.shape == nn::Shape{1, 1, 8, 8});
  const auto out = nets::gen_forward(params, window, emb);
  CHECK(out.n_mels == 128);
  CHECK(out.frames == 64);
  for (float v : out.values) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
  for (int w : arch.patch_widths) {
    const auto probs = nets::disc_forward(params, random_window(128, w, 3), w);
    CHECK(probs.probs.size() == 8);
    double total = 0.0;
    for (double p : probs.probs) total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("discriminator head width is 2N") {
  const auto arch = small_arch();
  for (int n : {2, 3, 7}) {
    const auto params = nets::init_params(arch, n, 0);
    CHECK(params.n_classes() == 2 * n);
    CHECK(nets::disc_forward(params, random_window(128, 32, 1), 32).probs.size() == static_cast<std::size_t>(2 * n));
  }
}

TEST_CASE("forward errors") {
  const auto params = nets::init_params(small_arch(), 2, 0);
  CHECK_THROWS_AS(nets::fe_forward(params, random_window(128, 63, 0)), Error);
  CHECK_THROWS_AS(nets::fe_forward(params, random_window(64, 64, 0)), Error);
  try {
    nets::disc_forward(params, random_window(128, 48, 0), 48);
    FAIL("expected UnknownWidth");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnknownWidth);
  }
}

TEST_CASE("inconsistent architectures are rejected") {
  nets::ArchConfig a;
  a.strides[3] = {2, 2};  // 64 frames would end at 4, not 8
  CHECK_THROWS_AS(a.validate(), Error);
  CHECK_THROWS_AS(nets::init_params(a, 2, 0), Error);
  nets::ArchConfig b;
  b.disc_channels = std::vector<int>(7, 8);  // 2^7 > 32 frames
  CHECK_THROWS_AS(b.validate(), Error);
}

TEST_CASE("arch json round-trip") {
  auto a = small_arch();
  a.gated = {false, true, true, false};
  CHECK(nets::arch_from_json(nets::arch_to_json(a)) == a);
  CHECK(nets::arch_from_json(nets::arch_to_json(nets::ArchConfig::miniature())) == nets::ArchConfig::miniature());
}

TEST_CASE("init is deterministic per seed") {
  const auto arch = small_arch();
  const auto a = nets::init_params(arch, 3, 5), b = nets::init_params(arch, 3, 5), c = nets::init_params(arch, 3, 6);
  CHECK(nets::params_checksum(a) == nets::params_checksum(b));
  CHECK(nets::params_checksum(a) != nets::params_checksum(c));
  CHECK(a.all_finite());
}

TEST_CASE("time pooling makes the summaries shift invariant on a stationary tone") {
  dsp::MelConfig cfg;
  const int n = 16000;
  dsp::Waveform w(n);
  for (int i = 0; i < n; ++i) w[i] = static_cast<float>(0.4 * std::sin(2 * std::numbers::pi * 440.0 * i / 16000));
  const auto mel = dsp::mel_spectrogram(w, cfg);
  const std::vector<dsp::LogMel> one{mel};
  const auto scaled = dsp::scale(mel, dsp::compute_scaling_stats(one));
  const auto params = nets::init_params(small_arch(), 2, 9);
  const auto a = nets::fe_forward(params, scaled.crop(100, 64));
  const auto b = nets::fe_forward(params, scaled.crop(237, 64));
  for (std::size_t i = 0; i < a.f3_summary.numel(); ++i)
    CHECK(std::abs(a.f3_summary.data[i] - b.f3_summary.data[i]) < 1e-3);
  for (std::size_t i = 0; i < a.f4_summary.numel(); ++i)
    CHECK(std::abs(a.f4_summary.data[i] - b.f4_summary.data[i]) < 1e-3);
}

TEST_CASE("reflect_index mirrors without repeating the edge") {
  const std::vector<int> want{2, 1, 0, 1, 2, 3, 2, 1, 0};
  for (int p = -2; p <= 6; ++p) CHECK(nets::reflect_index(p, 4) == want[p + 2]);
  for (int p = -50; p < 50; ++p) {
    const int r = nets::reflect_index(p, 7);
    CHECK(r >= 0);
    CHECK(r < 7);
  }
  CHECK(nets::reflect_index(5, 1) == 0);
}

TEST_CASE("patch plans cover every width with valid indices") {
  std::mt19937_64 rng(3);
  const std::vector<int> widths{32, 64, 128};
  std::set<int> starts;
  for (int rep = 0; rep < 200; ++rep) {
    const auto plan = nets::plan_patches(64, widths, rng);
    REQUIRE(plan.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(plan[k].width == widths[k]);
      REQUIRE(plan[k].time_index.size() == static_cast<std::size_t>(widths[k]));
      for (int t : plan[k].time_index) {
        CHECK(t >= 0);
        CHECK(t < 64);
      }
    }
    starts.insert(plan[0].time_index[0]);
  }
  CHECK(starts.size() > 10);  // the 32-wide crop really moves
}

TEST_CASE("patch power threshold") {
  const std::vector<float> quiet(10, -1.0f), loud(10, 1.0f), half(10, -0.7f);  // (v+1)/2 = 0.15
  CHECK_FALSE(nets::patch_has_power(quiet, 0.15));
  CHECK(nets::patch_has_power(loud, 0.15));
  CHECK(nets::patch_has_power(half, 0.15 - 1e-6));
  CHECK_FALSE(nets::patch_has_power(half, 0.15 + 1e-6));

  std::mt19937_64 rng(1);
  dsp::MelMatrix silent(128, 64, -1.0f);
  CHECK(nets::extract_patches(silent, {32, 64, 128}, 0.15, rng).empty());
  dsp::MelMatrix mid(128, 64, 0.0f);
  const auto patches = nets::extract_patches(mid, {32, 64, 128}, 0.15, rng);
  REQUIRE(patches.size() == 3);
  CHECK(patches[2].values.frames == 128);
}

TEST_CASE("checkpoint round-trip is exact") {
  const auto arch = small_arch();
  nets::Checkpoint ck;
  ck.params = nets::init_params(arch, 3, 4);
  ck.step = 1234;
  ck.rng_state = "1 2 3";
  ck.meta = R"({"note":"x"})";
  ck.adam_gen.step = 7;
  ck.adam_gen.m["gen.up.u5.out.w"] = nn::Tensor<float>(ck.params.gen.at("gen.up.u5.out.w").shape, 0.25f);
  ck.adam_gen.v["gen.up.u5.out.w"] = nn::Tensor<float>(ck.params.gen.at("gen.up.u5.out.w").shape, 0.5f);
  const auto path = scratch(nets::checkpoint_name(1234));
  CHECK(path.filename() == "ckpt_1234.bin");
  nets::save_checkpoint(path, ck);
  const auto back = nets::load_checkpoint(path, arch, 3);
  CHECK(nets::params_checksum(back.params) == nets::params_checksum(ck.params));
  CHECK(back.step == 1234);
  CHECK(back.rng_state == "1 2 3");
  CHECK(back.meta == ck.meta);
  CHECK(back.adam_gen.step == 7);
  CHECK(back.adam_gen.m.at("gen.up.u5.out.w").data == ck.adam_gen.m.at("gen.up.u5.out.w").data);
  CHECK(back.adam_gen.v.at("gen.up.u5.out.w").data == ck.adam_gen.v.at("gen.up.u5.out.w").data);

  try {
    nets::load_checkpoint(path, arch, 4);
    FAIL("expected CheckpointMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kCheckpointMismatch);
  }
  CHECK_THROWS_AS(nets::load_checkpoint(scratch("missing.bin")), Error);
  std::ofstream(scratch("bad.bin")) << "VCCX garbage";
  try {
    nets::load_checkpoint(scratch("bad.bin"));
    FAIL("expected UnsupportedFormat");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnsupportedFormat);
  }
}

TEST_CASE("truncated checkpoint is rejected") {
  nets::Checkpoint ck;
  ck.params = nets::init_params(small_arch(), 2, 0);
  const auto path = scratch("trunc.bin");
  nets::save_checkpoint(path, ck);
  fs::resize_file(path, fs::file_size(path) - 16);
  CHECK_THROWS_AS(nets::load_checkpoint(path), Error);
}
