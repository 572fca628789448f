#include "vcgan/nets/arch.hpp"

#include <json.hpp>

#include "vcgan/error.hpp"

namespace vcgan::nets {

void ArchConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::kInconsistentArch, why); };
  if (n_mels < 1 || window < 1 || embed_h < 1 || embed_w < 1) fail("dimensions must be positive");
  if (kernel < 1 || kernel % 2 == 0) fail("kernel must be odd");
  for (int c : fe_channels)
    if (c < 1) fail("channel widths must be positive");
  if (fe_channels[3] != 1) fail("F4 must emit a single-channel embedding");
  int h = n_mels, w = window;
  for (const Stride& s : strides) {
    if (s.freq < 1 || s.freq > 2 || s.time < 1 || s.time > 2) fail("strides must be 1 or 2");
    if (h % s.freq != 0 || w % s.time != 0) fail("strides do not divide the feature map");
    h /= s.freq;
    w /= s.time;
  }
  if (h != embed_h || w != embed_w) {
    fail("downsampling maps " + std::to_string(n_mels) + "x" + std::to_string(window) + " to " + std::to_string(h) +
         "x" + std::to_string(w) + ", expected " + std::to_string(embed_h) + "x" + std::to_string(embed_w));
  }
  if (patch_widths.empty()) fail("need at least one discriminator patch width");
  const int down = 1 << disc_channels.size();
  if (n_mels % down != 0) fail("discriminator depth does not divide n_mels");
  for (int pw : patch_widths) {
    if (pw < 1 || pw % down != 0) fail("discriminator depth does not divide patch width " + std::to_string(pw));
  }
}

ArchConfig ArchConfig::miniature() {
  ArchConfig a;
  a.n_mels = 8;
  a.window = 8;
  a.embed_h = 2;
  a.embed_w = 2;
  a.fe_channels = {2, 3, 3, 1};
  a.strides = {{{2, 2}, {2, 2}, {1, 1}, {1, 1}}};
  a.disc_channels = {2, 3};
  a.patch_widths = {4, 8, 16};
  return a;
}

std::string arch_to_json(const ArchConfig& a) {
  nlohmann::json j;
  j["n_mels"] = a.n_mels;
  j["window"] = a.window;
  j["embed_h"] = a.embed_h;
  j["embed_w"] = a.embed_w;
  j["kernel"] = a.kernel;
  j["fe_channels"] = a.fe_channels;
  nlohmann::json strides = nlohmann::json::array();
  for (const auto& s : a.strides) strides.push_back({s.freq, s.time});
  j["strides"] = strides;
  j["gated"] = a.gated;
  j["disc_channels"] = a.disc_channels;
  j["patch_widths"] = a.patch_widths;
  j["leaky_slope"] = a.leaky_slope;
  return j.dump();
}

ArchConfig arch_from_json(const std::string& text) {
  ArchConfig a;
  try {
    const auto j = nlohmann::json::parse(text);
    a.n_mels = j.value("n_mels", a.n_mels);
    a.window = j.value("window", a.window);
    a.embed_h = j.value("embed_h", a.embed_h);
    a.embed_w = j.value("embed_w", a.embed_w);
    a.kernel = j.value("kernel", a.kernel);
    if (j.contains("fe_channels")) a.fe_channels = j["fe_channels"].get<std::array<int, 4>>();
    if (j.contains("strides")) {
      const auto& s = j["strides"];
      if (s.size() != 4) throw Error(ErrorCode::kInconsistentArch, "expected four strides");
      for (std::size_t i = 0; i < 4; ++i) a.strides[i] = {s[i][0].get<int>(), s[i][1].get<int>()};
    }
    if (j.contains("gated")) a.gated = j["gated"].get<std::array<bool, 4>>();
    a.disc_channels = j.value("disc_channels", a.disc_channels);
    a.patch_widths = j.value("patch_widths", a.patch_widths);
    a.leaky_slope = j.value("leaky_slope", a.leaky_slope);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kUnsupportedFormat, std::string("arch config: ") + e.what());
  }
  return a;
}

}  // namespace vcgan::nets
